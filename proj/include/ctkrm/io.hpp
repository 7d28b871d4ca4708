#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ctkrm/covariance.hpp"
#include "ctkrm/hyperopt.hpp"
#include "ctkrm/metrics.hpp"
#include "ctkrm/signals.hpp"
#include "ctkrm/simulator.hpp"
#include "ctkrm/validation.hpp"

namespace ctkrm::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

// ---- CSV ---------------------------------------------------------------

/// Columns of equal length under a header row.
inline void write_columns(const fs::path& path, const std::vector<std::string>& names,
                          const std::vector<std::vector<double>>& cols, const std::string& comment = {}) {
  if (names.size() != cols.size()) throw std::invalid_argument("write_columns: names and columns differ in count");
  const std::size_t rows = cols.empty() ? 0 : cols.front().size();
  for (const auto& c : cols) {
    if (c.size() != rows) throw std::invalid_argument("write_columns: columns differ in length");
  }
  auto out = open_out(path);
  if (!comment.empty()) out << "# " << comment << '\n';
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << format_double(cols[j][i]);
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

struct Table {
  std::vector<std::string> comments;
  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;

  const std::vector<double>& column(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (names[j] == name) return cols[j];
    }
    throw IoError("missing CSV column '" + name + "'");
  }
};

inline Table read_columns(const fs::path& path) {
  auto in = open_in(path);
  Table t;
  std::string line;
  bool header = false;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      t.comments.push_back(line.substr(line.find_first_not_of("# ") == std::string::npos ? line.size()
                                                                                          : line.find_first_not_of("# ")));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!header) {
      t.names = cells;
      t.cols.assign(cells.size(), {});
      header = true;
      continue;
    }
    if (cells.size() != t.names.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.names.size()) +
                    " fields");
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      try {
        std::size_t used = 0;
        t.cols[j].push_back(std::stod(cells[j], &used));
        if (used != cells[j].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cells[j] + "'");
      }
    }
  }
  if (!header) throw IoError(path.string() + ": no header row");
  return t;
}

/// One column `value`; the comment line carries ts, intersample and past.
inline void write_signal(const fs::path& path, const SampledSignal& sig) {
  std::ostringstream c;
  c << "ts=" << format_double(sig.ts()) << " intersample=" << to_string(sig.intersample())
    << " past=" << to_string(sig.past());
  write_columns(path, {"value"}, {std::vector<double>(sig.samples().begin(), sig.samples().end())}, c.str());
}

inline SampledSignal read_signal(const fs::path& path) {
  const Table t = read_columns(path);
  double ts = 0.0;
  std::string is;
  std::string past;
  for (const auto& c : t.comments) {
    std::stringstream ss(c);
    std::string kv;
    while (ss >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      if (key == "ts") ts = std::stod(val);
      if (key == "intersample") is = val;
      if (key == "past") past = val;
    }
  }
  if (is.empty() || past.empty() || !(ts > 0.0)) {
    throw IoError(path.string() + ": signal header must carry ts, intersample and past");
  }
  return SampledSignal(t.column("value"), ts, parse_intersample(is), parse_past(past));
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// ---- JSON --------------------------------------------------------------

inline void write_json(const fs::path& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline json to_json(const HyperParams& hp) {
  return {{"alpha", hp.alpha}, {"beta", hp.beta}, {"lambda", hp.lambda}, {"sigma2", hp.sigma2}, {"alpha_t", hp.alpha_t}};
}

inline HyperParams hyperparams_from_json(const json& j) {
  HyperParams hp;
  hp.alpha = j.at("alpha").get<double>();
  hp.beta = j.at("beta").get<double>();
  hp.lambda = j.at("lambda").get<double>();
  hp.sigma2 = j.at("sigma2").get<double>();
  hp.alpha_t = j.value("alpha_t", 0.0);
  return hp;
}

inline json to_json(const DataBankSpec& s) {
  return {{"name", s.name},
          {"ts", s.ts},
          {"n", s.n},
          {"snr_db", s.snr_db},
          {"trials", s.trials},
          {"window_start", s.window_start},
          {"record_length", s.record_length},
          {"validation_length", s.validation_length},
          {"prbs_order", s.prbs_order},
          {"prbs_divider", s.prbs_divider},
          {"den_a3", s.den_a3}};
}

inline DataBankSpec bank_from_json(const json& j) {
  DataBankSpec s;
  const std::string name = j.value("name", std::string("custom"));
  if (name != "custom") s = databank_spec(name);
  s.name = name;
  s.ts = j.value("ts", s.ts);
  s.n = j.value("n", s.n);
  s.snr_db = j.value("snr_db", s.snr_db);
  s.trials = j.value("trials", s.trials);
  s.window_start = j.value("window_start", s.window_start);
  s.record_length = j.value("record_length", s.record_length);
  s.validation_length = j.value("validation_length", s.validation_length);
  s.prbs_order = j.value("prbs_order", s.prbs_order);
  s.prbs_divider = j.value("prbs_divider", s.prbs_divider);
  s.den_a3 = j.value("den_a3", s.den_a3);
  s.validate();
  return s;
}

inline json to_json(const Summary& s) {
  json j = {{"count", s.count}};
  j["mean"] = std::isfinite(s.mean) ? json(s.mean) : json(nullptr);
  j["std"] = std::isfinite(s.std) ? json(s.std) : json(nullptr);
  return j;
}

inline json to_json(const ValidationReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"combo", c.combo},
                      {"count", c.count},
                      {"worst_relative_error", c.worst},
                      {"worst_case", c.worst_case},
                      {"errors", c.errors},
                      {"pass", r.passed(c)}});
  }
  return {{"tolerance", r.tolerance}, {"pass", r.passed()}, {"checks", checks}};
}

}  // namespace ctkrm::io
