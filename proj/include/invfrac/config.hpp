#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>

#include "invfrac/continuation.hpp"
#include "invfrac/model.hpp"
#include "invfrac/solver.hpp"

namespace invfrac {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Which bifurcated branches a trace run follows.
enum class SideSelection { both, plus, minus };

inline const char* to_string(SideSelection s) {
  switch (s) {
    case SideSelection::both: return "both";
    case SideSelection::plus: return "plus";
    case SideSelection::minus: return "minus";
  }
  return "unknown";
}

struct RunConfig {
  ModelParams model;

  int n_elements = 100;
  int n_gauss = 4;

  double tolerance = 1e-7;
  int max_newton_iterations = 50;
  double feasibility_floor = kQuadFeasibilityFloor;
  int active_set_cap = 0;  // 0 -> twice the node count

  double step_initial = 0.01;
  double step_min = 1e-6;
  double step_max = 0.05;
  double lambda_min = 1.01;
  double lambda_max = 3.2;
  double tau0 = 0.01;
  double trivial_step = 0.01;
  double trivial_lambda_min = 1.05;
  int max_points = 20000;
  SideSelection sides = SideSelection::both;

  int n_max = 10;

  std::string out_dir = "out";
  bool write_csv = true;
  bool write_jsonl = true;
  int samples_per_element = 10;

  void validate() const {
    model.validate();
    if (n_elements < 2) throw ConfigError("config: mesh.n_elements must be >= 2");
    if (n_gauss < 4) throw ConfigError("config: mesh.n_gauss must be >= 4");
    if (!(tolerance > 0.0)) throw ConfigError("config: solver.tolerance must be positive");
    if (max_newton_iterations < 1)
      throw ConfigError("config: solver.max_newton_iterations must be >= 1");
    if (!(feasibility_floor < 0.0))
      throw ConfigError("config: solver.feasibility_floor must be negative");
    if (active_set_cap < 0) throw ConfigError("config: solver.active_set_cap must be >= 0");
    if (!(step_min > 0.0) || !(step_initial >= step_min) || !(step_max >= step_initial))
      throw ConfigError("config: continuation steps must satisfy 0 < min <= initial <= max");
    if (!(lambda_min > 0.0) || !(lambda_max > lambda_min))
      throw ConfigError("config: continuation stretch window is empty");
    if (!(tau0 > 0.0)) throw ConfigError("config: continuation.tau0 must be positive");
    if (!(trivial_step > 0.0))
      throw ConfigError("config: continuation.trivial_step must be positive");
    if (!(trivial_lambda_min > 0.0) || !(trivial_lambda_min < lambda_max))
      throw ConfigError("config: continuation.trivial_lambda_min out of range");
    if (max_points < 2) throw ConfigError("config: continuation.max_points must be >= 2");
    if (n_max < 1) throw ConfigError("config: analysis.n_max must be >= 1");
    if (out_dir.empty()) throw ConfigError("config: output.directory must be nonempty");
    if (!write_csv && !write_jsonl)
      throw ConfigError("config: output.formats must include csv or jsonl");
    if (samples_per_element < 2)
      throw ConfigError("config: output.samples_per_element must be >= 2");
  }

  SolverOptions solver_options() const {
    SolverOptions o;
    o.tolerance = tolerance;
    o.max_newton_iterations = max_newton_iterations;
    o.feasibility_floor = feasibility_floor;
    o.active_set_cap = active_set_cap;
    return o;
  }

  ContinuationOptions continuation_options() const {
    ContinuationOptions o;
    o.step_initial = step_initial;
    o.step_min = step_min;
    o.step_max = step_max;
    o.lambda_min = lambda_min;
    o.lambda_max = lambda_max;
    o.tau0 = tau0;
    o.trivial_step = trivial_step;
    o.max_points = max_points;
    o.solver = solver_options();
    return o;
  }
};

namespace detail {

// Shortest round-trip decimal form of a double.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline int parse_int(const std::string& v, const std::string& key) {
  int out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "mesh" && section != "solver" &&
          section != "continuation" && section != "analysis" && section != "output")
        throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                          section + "]");
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "model.epsilon") cfg.model.epsilon = detail::parse_double(val, qual);
    else if (qual == "model.beta") cfg.model.beta = detail::parse_double(val, qual);
    else if (qual == "model.k") cfg.model.k = detail::parse_double(val, qual);
    else if (qual == "mesh.n_elements") cfg.n_elements = detail::parse_int(val, qual);
    else if (qual == "mesh.n_gauss") cfg.n_gauss = detail::parse_int(val, qual);
    else if (qual == "solver.tolerance") cfg.tolerance = detail::parse_double(val, qual);
    else if (qual == "solver.max_newton_iterations")
      cfg.max_newton_iterations = detail::parse_int(val, qual);
    else if (qual == "solver.feasibility_floor")
      cfg.feasibility_floor = detail::parse_double(val, qual);
    else if (qual == "solver.active_set_cap") cfg.active_set_cap = detail::parse_int(val, qual);
    else if (qual == "continuation.step_initial")
      cfg.step_initial = detail::parse_double(val, qual);
    else if (qual == "continuation.step_min") cfg.step_min = detail::parse_double(val, qual);
    else if (qual == "continuation.step_max") cfg.step_max = detail::parse_double(val, qual);
    else if (qual == "continuation.lambda_min")
      cfg.lambda_min = detail::parse_double(val, qual);
    else if (qual == "continuation.lambda_max")
      cfg.lambda_max = detail::parse_double(val, qual);
    else if (qual == "continuation.tau0") cfg.tau0 = detail::parse_double(val, qual);
    else if (qual == "continuation.trivial_step")
      cfg.trivial_step = detail::parse_double(val, qual);
    else if (qual == "continuation.trivial_lambda_min")
      cfg.trivial_lambda_min = detail::parse_double(val, qual);
    else if (qual == "continuation.max_points") cfg.max_points = detail::parse_int(val, qual);
    else if (qual == "continuation.sides") {
      if (val == "both") cfg.sides = SideSelection::both;
      else if (val == "plus") cfg.sides = SideSelection::plus;
      else if (val == "minus") cfg.sides = SideSelection::minus;
      else throw ConfigError("config: continuation.sides must be both|plus|minus, got '" +
                             val + "'");
    } else if (qual == "analysis.n_max") cfg.n_max = detail::parse_int(val, qual);
    else if (qual == "output.directory") cfg.out_dir = val;
    else if (qual == "output.formats") {
      cfg.write_csv = val.find("csv") != std::string::npos;
      cfg.write_jsonl = val.find("jsonl") != std::string::npos;
      if (!cfg.write_csv && !cfg.write_jsonl)
        throw ConfigError("config: output.formats must list csv and/or jsonl, got '" + val +
                          "'");
    } else if (qual == "output.samples_per_element")
      cfg.samples_per_element = detail::parse_int(val, qual);
    else
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + qual +
                        "'");
  }
  cfg.validate();
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  using detail::fmt_double;
  std::ostringstream out;
  out << "[model]\n"
      << "epsilon = " << fmt_double(cfg.model.epsilon) << "\n"
      << "beta = " << fmt_double(cfg.model.beta) << "\n"
      << "k = " << fmt_double(cfg.model.k) << "\n\n"
      << "[mesh]\n"
      << "n_elements = " << cfg.n_elements << "\n"
      << "n_gauss = " << cfg.n_gauss << "\n\n"
      << "[solver]\n"
      << "tolerance = " << fmt_double(cfg.tolerance) << "\n"
      << "max_newton_iterations = " << cfg.max_newton_iterations << "\n"
      << "feasibility_floor = " << fmt_double(cfg.feasibility_floor) << "\n"
      << "active_set_cap = " << cfg.active_set_cap << "\n\n"
      << "[continuation]\n"
      << "step_initial = " << fmt_double(cfg.step_initial) << "\n"
      << "step_min = " << fmt_double(cfg.step_min) << "\n"
      << "step_max = " << fmt_double(cfg.step_max) << "\n"
      << "lambda_min = " << fmt_double(cfg.lambda_min) << "\n"
      << "lambda_max = " << fmt_double(cfg.lambda_max) << "\n"
      << "tau0 = " << fmt_double(cfg.tau0) << "\n"
      << "trivial_step = " << fmt_double(cfg.trivial_step) << "\n"
      << "trivial_lambda_min = " << fmt_double(cfg.trivial_lambda_min) << "\n"
      << "max_points = " << cfg.max_points << "\n"
      << "sides = " << to_string(cfg.sides) << "\n\n"
      << "[analysis]\n"
      << "n_max = " << cfg.n_max << "\n\n"
      << "[output]\n"
      << "directory = " << cfg.out_dir << "\n"
      << "formats = " << (cfg.write_csv && cfg.write_jsonl ? "csv,jsonl"
                          : cfg.write_csv                  ? "csv"
                                                           : "jsonl")
      << "\n"
      << "samples_per_element = " << cfg.samples_per_element << "\n";
  return out.str();
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace invfrac
