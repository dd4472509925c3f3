#pragma once

#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "invfrac/branch_io.hpp"
#include "invfrac/characteristic.hpp"
#include "invfrac/config.hpp"
#include "invfrac/continuation.hpp"
#include "invfrac/mesh.hpp"
#include "invfrac/postprocess.hpp"
#include "invfrac/solver.hpp"

namespace invfrac {

struct PipelineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::filesystem::path branch_jsonl(const RunConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.out_dir) /
         (name == "trivial" ? "trivial.jsonl" : "branch_" + name + ".jsonl");
}

inline std::filesystem::path branch_metafile(const RunConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.out_dir) /
         (name == "trivial" ? "trivial.meta.json" : "branch_" + name + ".meta.json");
}

inline std::filesystem::path branch_csvfile(const RunConfig& cfg, const std::string& name) {
  return std::filesystem::path(cfg.out_dir) /
         (name == "trivial" ? "trivial.csv" : "branch_" + name + ".csv");
}

}  // namespace detail

// ---- analyze ---------------------------------------------------------------

struct AnalyzeResult {
  std::vector<BifurcationRoot> roots;
  std::optional<BifurcationRoot> critical;
};

inline AnalyzeResult run_analyze(const RunConfig& cfg) {
  cfg.validate();
  AnalyzeResult out;
  out.roots = find_roots(cfg.model, cfg.n_max);
  if (const BifurcationRoot* c = critical_root(out.roots)) out.critical = *c;
  std::filesystem::create_directories(cfg.out_dir);
  if (cfg.write_csv) {
    write_roots_csv(std::filesystem::path(cfg.out_dir) / "roots.csv", out.roots);
    write_curves_csv(std::filesystem::path(cfg.out_dir) / "curves.csv", cfg.model,
                     cfg.n_max);
  }
  return out;
}

// ---- trace -----------------------------------------------------------------

struct SideResult {
  int side = 0;
  bool traced = false;
  bool failed = false;          // branch switching or continuation threw
  std::string failure;
  Branch branch;
  CrossoverResult crossover;
};

struct TraceResult {
  std::vector<BifurcationRoot> roots;
  BifurcationRoot critical;
  Branch trivial;
  std::vector<SideResult> sides;
  bool any_failure = false;
};

namespace detail {

// Complete (or reuse) the homogeneous branch record on disk.
inline Branch trace_trivial_persisted(const RunConfig& cfg, const Mesh& mesh,
                                      bool resume) {
  const auto file = branch_jsonl(cfg, "trivial");
  const auto metafile = branch_metafile(cfg, "trivial");
  if (resume) {
    const auto meta = load_branch_meta(metafile);
    if (meta) {
      auto pts = load_branch_points(file);
      if (static_cast<int>(pts.size()) == meta->n_points && meta->n_points > 0) {
        Branch br;
        br.origin = meta->origin;
        br.termination = meta->termination;
        br.points = std::move(pts);
        return br;
      }
    }
  }
  Branch br = trace_trivial(mesh, cfg.model, cfg.trivial_lambda_min, cfg.lambda_max,
                            cfg.trivial_step, cfg.n_max);
  if (cfg.write_jsonl) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw IoError("cannot write " + file.string());
    for (const auto& pt : br.points) append_point_jsonl(out, pt);
    write_branch_meta(metafile, {br.origin, br.termination,
                                 static_cast<int>(br.points.size())});
  }
  return br;
}

// Trace one pitchfork side, resuming from an existing JSONL prefix when
// asked.  All decisions are deterministic, so a resumed run reproduces the
// uninterrupted file byte for byte.
inline SideResult trace_side_persisted(const RunConfig& cfg, const Mesh& mesh,
                                       const BifurcationRoot& root, int side,
                                       bool resume) {
  const std::string name = side > 0 ? "plus" : "minus";
  const auto file = branch_jsonl(cfg, name);
  const auto metafile = branch_metafile(cfg, name);
  const ContinuationOptions opts = cfg.continuation_options();

  SideResult res;
  res.side = side;
  res.traced = true;
  res.branch.origin.kind = BranchOrigin::Kind::pitchfork;
  res.branch.origin.mode = root.mode;
  res.branch.origin.side = side;
  res.branch.origin.lambda0 = root.lambda;

  try {
    if (resume) {
      const auto meta = load_branch_meta(metafile);
      if (meta) {
        auto pts = load_branch_points(file);
        if (static_cast<int>(pts.size()) == meta->n_points && meta->n_points > 0) {
          res.branch.origin = meta->origin;
          res.branch.termination = meta->termination;
          res.branch.points = std::move(pts);
          return res;
        }
      }
    }

    std::vector<BranchPoint> existing =
        resume ? load_branch_points(file) : std::vector<BranchPoint>{};

    // Rewrite the prefix rather than appending after it: an interrupted file
    // may end in a torn line that the loader dropped, and our own writer
    // reproduces the loaded lines byte for byte.
    std::ofstream out;
    if (cfg.write_jsonl) {
      out.open(file, std::ios::trunc);
      if (!out) throw IoError("cannot write " + file.string());
    }
    PointSink sink;
    if (cfg.write_jsonl) sink = [&out](const BranchPoint& pt) { append_point_jsonl(out, pt); };

    if (existing.empty()) {
      res.branch.points.push_back(branch_switch(mesh, cfg.model, root, side, opts));
      if (sink) sink(res.branch.points.front());
    } else {
      res.branch.points = std::move(existing);
      if (sink)
        for (const BranchPoint& pt : res.branch.points) sink(pt);
    }

    const Eigen::VectorXd x_prev =
        res.branch.points.size() >= 2
            ? detail::extended_vector(mesh,
                                      res.branch.points[res.branch.points.size() - 2].state)
            : detail::extended_vector(mesh, NodalState::trivial(mesh, root.lambda));
    trace_branch(mesh, cfg.model, res.branch, x_prev, opts, sink);

    if (cfg.write_jsonl)
      write_branch_meta(metafile, {res.branch.origin, res.branch.termination,
                                   static_cast<int>(res.branch.points.size())});
    if (res.branch.termination == Termination::step_failure) {
      res.failed = true;
      res.failure = "continuation stalled: step size underflowed";
    }
  } catch (const std::exception& e) {
    res.failed = true;
    res.failure = e.what();
  }
  return res;
}

}  // namespace detail

inline TraceResult run_trace(const RunConfig& cfg, bool resume = false) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const Mesh mesh(cfg.n_elements, cfg.n_gauss);

  TraceResult out;
  out.roots = find_roots(cfg.model, cfg.n_max);
  const BifurcationRoot* crit = critical_root(out.roots);
  if (!crit)
    throw PipelineError("no bifurcation point in the stretch window; nothing to trace");
  if (!crit->simple)
    throw NonGenericParameterError(
        "critical root of mode " + std::to_string(crit->mode) + " at lambda = " +
            std::to_string(crit->lambda) + " is not simple",
        crit->mode, crit->mode, crit->lambda, crit->lambda);
  out.critical = *crit;

  out.trivial = detail::trace_trivial_persisted(cfg, mesh, resume);
  fill_stress(out.trivial);

  std::vector<int> sides;
  if (cfg.sides != SideSelection::minus) sides.push_back(1);
  if (cfg.sides != SideSelection::plus) sides.push_back(-1);

  // The two sides are independent; trace them concurrently.
  std::vector<std::future<SideResult>> futs;
  for (int side : sides)
    futs.push_back(std::async(std::launch::async, [&, side] {
      return detail::trace_side_persisted(cfg, mesh, out.critical, side, resume);
    }));
  for (auto& f : futs) out.sides.push_back(f.get());

  for (auto& sr : out.sides) {
    if (sr.failed) {
      out.any_failure = true;
      continue;
    }
    fill_stress(sr.branch);
    sr.crossover = energy_crossover(out.trivial, sr.branch);
  }

  if (cfg.write_csv) {
    const std::filesystem::path dir(cfg.out_dir);
    write_roots_csv(dir / "roots.csv", out.roots);
    write_curves_csv(dir / "curves.csv", cfg.model, cfg.n_max);
    write_branch_csv(detail::branch_csvfile(cfg, "trivial"), mesh, out.trivial);
    for (const auto& sr : out.sides) {
      if (sr.failed) continue;
      write_branch_csv(detail::branch_csvfile(cfg, sr.side > 0 ? "plus" : "minus"), mesh,
                       sr.branch);
    }

    std::ofstream sum(dir / "summary.csv", std::ios::trunc);
    if (!sum) throw IoError("cannot write summary.csv");
    sum << "branch,side,mode,lambda_c,lambda_e,crossover_found,final_lambda,"
           "final_crack_count,final_crack_positions,termination,healing_flagged,failed\n";
    for (const auto& sr : out.sides) {
      const std::string name = sr.side > 0 ? "plus" : "minus";
      std::string final_lambda = "nan", crack_count = "0", crack_pos;
      std::string termination = to_string(sr.branch.termination);
      bool healing = false;
      if (!sr.branch.points.empty()) {
        // Final reported state: last point before any healing sets in.
        const BranchPoint* last = nullptr;
        for (const auto& pt : sr.branch.points) {
          if (pt.healing) {
            healing = true;
            break;
          }
          last = &pt;
        }
        if (last) {
          final_lambda = detail::fmt_double(last->state.lambda);
          const auto cracks = crack_census(mesh, last->state);
          crack_count = std::to_string(cracks.size());
          std::vector<std::string> pos;
          for (const auto& c : cracks) pos.push_back(detail::fmt_double(c.position));
          crack_pos = detail::join(pos, ';');
        }
      }
      sum << name << ',' << sr.side << ',' << out.critical.mode << ','
          << detail::fmt_double(out.critical.lambda) << ','
          << detail::fmt_double(sr.crossover.lambda) << ','
          << (sr.crossover.found ? 1 : 0) << ',' << final_lambda << ',' << crack_count
          << ',' << crack_pos << ',' << termination << ',' << (healing ? 1 : 0) << ','
          << (sr.failed ? 1 : 0) << "\n";
    }
  }

  // Record the resolved configuration next to the data.
  std::ofstream cfgout(std::filesystem::path(cfg.out_dir) / "run_config.ini",
                       std::ios::trunc);
  if (cfgout) cfgout << serialize_config(cfg);

  return out;
}

// ---- snapshot --------------------------------------------------------------

struct SnapshotSelector {
  std::optional<int> index;
  std::optional<double> at_lambda;
  std::optional<std::string> tag;  // "first-crack" or "final"
};

struct SnapshotResult {
  std::string branch;
  int index = -1;
  BranchPoint point;
  std::vector<Crack> census;
  std::filesystem::path fields_file;
  std::filesystem::path info_file;
};

inline SnapshotResult run_snapshot(const RunConfig& cfg, const std::string& branch_name,
                                   const SnapshotSelector& sel) {
  cfg.validate();
  if (branch_name != "trivial" && branch_name != "plus" && branch_name != "minus")
    throw PipelineError("snapshot: branch must be trivial, plus, or minus");
  const int given = (sel.index ? 1 : 0) + (sel.at_lambda ? 1 : 0) + (sel.tag ? 1 : 0);
  if (given != 1)
    throw PipelineError("snapshot: specify exactly one of --index, --at-lambda, --tag");

  const auto file = detail::branch_jsonl(cfg, branch_name);
  auto pts = load_branch_points(file);
  if (pts.empty())
    throw PipelineError("snapshot: no points in " + file.string() +
                        " (run the trace command first)");

  const Mesh mesh(cfg.n_elements, cfg.n_gauss);
  for (const auto& pt : pts)
    if (static_cast<int>(pt.state.u.size()) != mesh.n_nodes())
      throw PipelineError("snapshot: branch record does not match mesh.n_elements = " +
                          std::to_string(cfg.n_elements));

  int idx = -1;
  if (sel.index) {
    idx = *sel.index;
    if (idx < 0 || idx >= static_cast<int>(pts.size()))
      throw PipelineError("snapshot: index out of range 0.." +
                          std::to_string(pts.size() - 1));
  } else if (sel.at_lambda) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < pts.size(); ++i) {
      const double d = std::abs(pts[i].state.lambda - *sel.at_lambda);
      if (d < best) {
        best = d;
        idx = static_cast<int>(i);
      }
    }
  } else {
    const std::string& tag = *sel.tag;
    if (tag == "first-crack") {
      for (size_t i = 0; i < pts.size(); ++i)
        if (pts[i].state.active.size() > 0) {
          idx = static_cast<int>(i);
          break;
        }
      if (idx < 0) throw PipelineError("snapshot: branch has no cracked point");
    } else if (tag == "final") {
      for (size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].healing) break;
        idx = static_cast<int>(i);
      }
      if (idx < 0) throw PipelineError("snapshot: branch heals from its first point");
    } else {
      throw PipelineError("snapshot: unknown tag '" + tag +
                          "' (expected first-crack or final)");
    }
  }

  SnapshotResult res;
  res.branch = branch_name;
  res.index = idx;
  res.point = pts[idx];
  res.census = crack_census(mesh, res.point.state);

  const FieldSample fields = reconstruct_fields(mesh, res.point.state,
                                                cfg.samples_per_element,
                                                cfg.feasibility_floor);
  std::filesystem::create_directories(cfg.out_dir);
  const std::string stem = "snapshot_" + branch_name + "_" + std::to_string(idx);
  res.fields_file = std::filesystem::path(cfg.out_dir) / (stem + "_fields.csv");
  res.info_file = std::filesystem::path(cfg.out_dir) / (stem + ".json");
  write_fields_csv(res.fields_file, fields);

  nlohmann::json info;
  info["branch"] = branch_name;
  info["index"] = idx;
  info["point"] = point_to_json(res.point);
  info["cracks"] = nlohmann::json::array();
  for (const auto& c : res.census) {
    nlohmann::json cj;
    cj["node_first"] = c.node_first;
    cj["node_last"] = c.node_last;
    cj["position"] = c.position;
    cj["width"] = c.width;
    cj["end"] = c.end;
    info["cracks"].push_back(cj);
  }
  std::ofstream out(res.info_file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + res.info_file.string());
  out << info.dump(2) << "\n";
  return res;
}

// ---- stability report --------------------------------------------------------

struct StabilityFlip {
  std::string branch;
  int index_before = 0;
  double lambda_before = 0.0;
  double lambda_after = 0.0;
  bool to_stable = false;
};

struct StabilityReport {
  std::vector<StabilityFlip> flips;
  std::filesystem::path report_file;
  int n_points = 0;
};

inline StabilityReport run_stability_report(const RunConfig& cfg) {
  cfg.validate();
  StabilityReport rep;
  std::filesystem::create_directories(cfg.out_dir);
  rep.report_file = std::filesystem::path(cfg.out_dir) / "stability_report.csv";
  std::ofstream out(rep.report_file, std::ios::trunc);
  if (!out) throw IoError("cannot write " + rep.report_file.string());
  out << "branch,index,lambda,n_plus,n_minus,n_zero,n_active,stable,marginal,healing\n";

  bool any = false;
  for (const std::string name : {"trivial", "plus", "minus"}) {
    const auto pts = load_branch_points(detail::branch_jsonl(cfg, name));
    if (pts.empty()) continue;
    any = true;
    rep.n_points += static_cast<int>(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      const auto& pt = pts[i];
      out << name << ',' << i << ',' << detail::fmt_double(pt.state.lambda) << ','
          << pt.inertia.n_plus << ',' << pt.inertia.n_minus << ',' << pt.inertia.n_zero
          << ',' << pt.state.active.size() << ',' << (pt.stable ? 1 : 0) << ','
          << (pt.marginal ? 1 : 0) << ',' << (pt.healing ? 1 : 0) << "\n";
      if (i > 0 && pts[i].stable != pts[i - 1].stable)
        rep.flips.push_back({name, static_cast<int>(i - 1), pts[i - 1].state.lambda,
                             pts[i].state.lambda, pts[i].stable});
    }
  }
  if (!any)
    throw PipelineError("stability-report: no branch records in " + cfg.out_dir +
                        " (run the trace command first)");
  return rep;
}

}  // namespace invfrac
