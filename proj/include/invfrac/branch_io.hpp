#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "invfrac/config.hpp"
#include "invfrac/continuation.hpp"
#include "invfrac/mesh.hpp"
#include "invfrac/postprocess.hpp"
#include "invfrac/state.hpp"

namespace invfrac {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline nlohmann::json number_or_null(double v) {
  if (std::isnan(v) || std::isinf(v)) return nullptr;
  return v;
}

inline double number_from(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json point_to_json(const BranchPoint& pt) {
  nlohmann::json j;
  j["lambda"] = pt.state.lambda;
  j["u"] = std::vector<double>(pt.state.u.data(), pt.state.u.data() + pt.state.u.size());
  j["up"] = std::vector<double>(pt.state.up.data(), pt.state.up.data() + pt.state.up.size());
  j["mu"] = std::vector<double>(pt.state.mu.data(), pt.state.mu.data() + pt.state.mu.size());
  j["active"] = pt.state.active.nodes;
  j["istar"] = pt.istar;
  j["sigma"] = detail::number_or_null(pt.sigma);
  j["sigma_at_fold"] = pt.sigma_at_fold;
  j["inertia"] = {pt.inertia.n_plus, pt.inertia.n_minus, pt.inertia.n_zero};
  j["stable"] = pt.stable;
  j["marginal"] = pt.marginal;
  j["healing"] = pt.healing;
  j["arclength"] = pt.arclength;
  j["lin_eigenvalue"] = detail::number_or_null(pt.lin_eigenvalue);
  j["lin_mode"] = pt.lin_mode;
  j["step_next"] = pt.step_next;
  j["successes"] = pt.successes;
  return j;
}

inline BranchPoint point_from_json(const nlohmann::json& j) {
  BranchPoint pt;
  pt.state.lambda = j.at("lambda").get<double>();
  const auto u = j.at("u").get<std::vector<double>>();
  const auto up = j.at("up").get<std::vector<double>>();
  const auto mu = j.at("mu").get<std::vector<double>>();
  pt.state.u = Eigen::Map<const Eigen::VectorXd>(u.data(), u.size());
  pt.state.up = Eigen::Map<const Eigen::VectorXd>(up.data(), up.size());
  pt.state.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), mu.size());
  pt.state.active.nodes = j.at("active").get<std::vector<int>>();
  pt.istar = j.at("istar").get<double>();
  pt.sigma = detail::number_from(j.at("sigma"));
  pt.sigma_at_fold = j.at("sigma_at_fold").get<bool>();
  const auto in = j.at("inertia");
  pt.inertia = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  pt.stable = j.at("stable").get<bool>();
  pt.marginal = j.at("marginal").get<bool>();
  pt.healing = j.at("healing").get<bool>();
  pt.arclength = j.at("arclength").get<double>();
  pt.lin_eigenvalue = detail::number_from(j.at("lin_eigenvalue"));
  pt.lin_mode = j.at("lin_mode").get<int>();
  pt.step_next = j.at("step_next").get<double>();
  pt.successes = j.at("successes").get<int>();
  return pt;
}

// One line per point, appended as soon as the point is accepted; an
// interrupted run leaves a readable prefix of the branch behind.
inline void append_point_jsonl(std::ofstream& out, const BranchPoint& pt) {
  out << point_to_json(pt).dump() << "\n";
  out.flush();
}

inline std::vector<BranchPoint> load_branch_points(const std::filesystem::path& path) {
  std::vector<BranchPoint> pts;
  std::ifstream in(path);
  if (!in) return pts;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    try {
      pts.push_back(point_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      // A torn final line from an interrupted run is dropped; anything else
      // earlier in the file is corruption.
      if (in.peek() != EOF)
        throw IoError("corrupt branch record in " + path.string() + ": " + e.what());
    }
  }
  return pts;
}

inline nlohmann::json origin_to_json(const BranchOrigin& o) {
  nlohmann::json j;
  j["kind"] = o.kind == BranchOrigin::Kind::trivial ? "trivial" : "pitchfork";
  j["mode"] = o.mode;
  j["side"] = o.side;
  j["lambda0"] = o.lambda0;
  return j;
}

inline BranchOrigin origin_from_json(const nlohmann::json& j) {
  BranchOrigin o;
  o.kind = j.at("kind").get<std::string>() == "trivial" ? BranchOrigin::Kind::trivial
                                                        : BranchOrigin::Kind::pitchfork;
  o.mode = j.at("mode").get<int>();
  o.side = j.at("side").get<int>();
  o.lambda0 = j.at("lambda0").get<double>();
  return o;
}

// Sidecar written once a branch has fully terminated; its presence marks the
// branch as complete for resume purposes.
struct BranchMeta {
  BranchOrigin origin;
  Termination termination = Termination::none;
  int n_points = 0;
};

inline void write_branch_meta(const std::filesystem::path& path, const BranchMeta& m) {
  nlohmann::json j;
  j["origin"] = origin_to_json(m.origin);
  j["termination"] = to_string(m.termination);
  j["n_points"] = m.n_points;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

inline std::optional<BranchMeta> load_branch_meta(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // half-written meta: treat the branch as incomplete
  }
  BranchMeta m;
  m.origin = origin_from_json(j.at("origin"));
  const std::string t = j.at("termination").get<std::string>();
  m.termination = t == "window_end"     ? Termination::window_end
                  : t == "step_failure" ? Termination::step_failure
                  : t == "point_cap"    ? Termination::point_cap
                                        : Termination::none;
  m.n_points = j.at("n_points").get<int>();
  return m;
}

// ---- CSV export ----------------------------------------------------------

namespace detail {

inline std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace detail

// Per-point branch table.  Points at and after the first healing event are
// excluded by default: once a node deactivates the branch has left the
// regime this model tracks, and the raw record stays available in the JSONL
// stream.
inline void write_branch_csv(const std::filesystem::path& path, const Mesh& mesh,
                             const Branch& branch, bool include_healing = false) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "index,lambda,istar,sigma,sigma_at_fold,n_plus,n_minus,n_zero,stable,marginal,"
         "healing,n_active,n_cracks,crack_positions,crack_widths,arclength\n";
  for (size_t i = 0; i < branch.points.size(); ++i) {
    const BranchPoint& pt = branch.points[i];
    if (pt.healing && !include_healing) break;
    const auto cracks = crack_census(mesh, pt.state);
    std::vector<std::string> pos, wid;
    for (const auto& c : cracks) {
      pos.push_back(detail::fmt_double(c.position));
      wid.push_back(detail::fmt_double(c.width));
    }
    out << i << ',' << detail::fmt_double(pt.state.lambda) << ','
        << detail::fmt_double(pt.istar) << ',' << detail::fmt_double(pt.sigma) << ','
        << (pt.sigma_at_fold ? 1 : 0) << ',' << pt.inertia.n_plus << ','
        << pt.inertia.n_minus << ',' << pt.inertia.n_zero << ',' << (pt.stable ? 1 : 0)
        << ',' << (pt.marginal ? 1 : 0) << ',' << (pt.healing ? 1 : 0) << ','
        << pt.state.active.size() << ',' << cracks.size() << ','
        << detail::join(pos, ';') << ',' << detail::join(wid, ';') << ','
        << detail::fmt_double(pt.arclength) << "\n";
  }
}

inline void write_roots_csv(const std::filesystem::path& path,
                            const std::vector<BifurcationRoot>& roots) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "mode,lambda,simplicity,simple,critical\n";
  for (const auto& r : roots)
    out << r.mode << ',' << detail::fmt_double(r.lambda) << ','
        << detail::fmt_double(r.simplicity) << ',' << (r.simple ? 1 : 0) << ','
        << (r.critical ? 1 : 0) << "\n";
}

// Instability chart: foundation stiffness required for mode n to bifurcate
// at each stretch, one row per (mode, lambda) sample.
inline void write_curves_csv(const std::filesystem::path& path, const ModelParams& p,
                             int n_max, double lambda_lo = 1.01, double lambda_hi = 4.0,
                             double step = 0.01) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "mode,lambda,k_required\n";
  const int count = static_cast<int>(std::round((lambda_hi - lambda_lo) / step));
  for (int n = 1; n <= n_max; ++n)
    for (int i = 0; i <= count; ++i) {
      const double lam = lambda_lo + i * step;
      out << n << ',' << detail::fmt_double(lam) << ','
          << detail::fmt_double(k_of_lambda(lam, n, p)) << "\n";
    }
}

inline void write_fields_csv(const std::filesystem::path& path, const FieldSample& f) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "s,u,y,H,x,f\n";
  for (size_t i = 0; i < f.s.size(); ++i)
    out << detail::fmt_double(f.s[i]) << ',' << detail::fmt_double(f.u[i]) << ','
        << detail::fmt_double(f.y[i]) << ',' << detail::fmt_double(f.H[i]) << ','
        << detail::fmt_double(f.x[i]) << ',' << detail::fmt_double(f.f[i]) << "\n";
}

}  // namespace invfrac
