#pragma once

#include "ctkrm/numerics.hpp"
#include "ctkrm/quadrature.hpp"
#include "ctkrm/signals.hpp"
#include "ctkrm/kernel_concepts.hpp"
#include "ctkrm/kernels.hpp"
#include "ctkrm/oracle.hpp"
#include "ctkrm/covariance.hpp"
#include "ctkrm/estimator.hpp"
#include "ctkrm/hyperopt.hpp"
#include "ctkrm/simulator.hpp"
#include "ctkrm/metrics.hpp"
#include "ctkrm/experiment.hpp"
#include "ctkrm/validation.hpp"
#include "ctkrm/io.hpp"
#include "ctkrm/commands.hpp"
