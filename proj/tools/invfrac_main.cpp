// Command-line driver for the layer-fracture analysis pipeline:
//   analyze           linearized bifurcation analysis of the homogeneous state
//   trace             equilibrium branch continuation with branch switching
//   snapshot          field reconstruction and crack census of one solution
//   stability-report  per-point inertia table and stability flips
//
// Exit codes: 0 success, 2 non-generic parameters, 3 run failure,
// 4 invalid configuration.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "invfrac/config.hpp"
#include "invfrac/pipeline.hpp"

namespace {

struct CommonFlags {
  std::string config_file;
  std::string out_dir;
  std::optional<double> k, epsilon, beta;
  std::optional<int> n_elements, n_max;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "configuration file (INI format)");
  cmd->add_option("--out", f.out_dir, "output directory (overrides config)");
  cmd->add_option("--k", f.k, "foundation stiffness (overrides config)");
  cmd->add_option("--epsilon", f.epsilon, "interfacial modulus (overrides config)");
  cmd->add_option("--beta", f.beta, "stored-energy scale (overrides config)");
  cmd->add_option("--n-elements", f.n_elements, "mesh elements (overrides config)");
  cmd->add_option("--n-max", f.n_max, "highest mode number scanned (overrides config)");
}

invfrac::RunConfig resolve_config(const CommonFlags& f) {
  invfrac::RunConfig cfg;
  if (!f.config_file.empty()) cfg = invfrac::load_config_file(f.config_file);
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (f.k) cfg.model.k = *f.k;
  if (f.epsilon) cfg.model.epsilon = *f.epsilon;
  if (f.beta) cfg.model.beta = *f.beta;
  if (f.n_elements) cfg.n_elements = *f.n_elements;
  if (f.n_max) cfg.n_max = *f.n_max;
  cfg.validate();
  return cfg;
}

int do_analyze(const CommonFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto res = invfrac::run_analyze(cfg);
  std::printf("mode  lambda      simple  critical\n");
  for (const auto& r : res.roots)
    std::printf("%4d  %-10.6f  %-6s  %s\n", r.mode, r.lambda, r.simple ? "yes" : "no",
                r.critical ? "yes" : "");
  if (res.critical)
    std::printf("critical bifurcation: mode %d at lambda = %.6f\n", res.critical->mode,
                res.critical->lambda);
  else
    std::printf("no bifurcation of the homogeneous state in the scan window\n");
  if (cfg.write_csv)
    std::printf("wrote %s/roots.csv and %s/curves.csv\n", cfg.out_dir.c_str(),
                cfg.out_dir.c_str());
  return 0;
}

int do_trace(const CommonFlags& flags, bool resume, const std::string& sides) {
  auto cfg = resolve_config(flags);
  if (!sides.empty()) {
    if (sides == "both") cfg.sides = invfrac::SideSelection::both;
    else if (sides == "plus") cfg.sides = invfrac::SideSelection::plus;
    else if (sides == "minus") cfg.sides = invfrac::SideSelection::minus;
    else throw invfrac::ConfigError("--sides must be both|plus|minus");
  }
  const auto res = invfrac::run_trace(cfg, resume);
  std::printf("critical bifurcation: mode %d at lambda = %.6f\n", res.critical.mode,
              res.critical.lambda);
  std::printf("trivial branch: %zu points\n", res.trivial.points.size());
  for (const auto& sr : res.sides) {
    const char* name = sr.side > 0 ? "plus" : "minus";
    if (sr.failed) {
      std::printf("branch %-5s: FAILED (%s)\n", name, sr.failure.c_str());
      continue;
    }
    std::printf("branch %-5s: %zu points, termination %s", name, sr.branch.points.size(),
                invfrac::to_string(sr.branch.termination));
    if (sr.crossover.found)
      std::printf(", energy crossover at lambda = %.6f", sr.crossover.lambda);
    std::printf("\n");
  }
  std::printf("outputs in %s/\n", cfg.out_dir.c_str());
  return res.any_failure ? 3 : 0;
}

int do_snapshot(const CommonFlags& flags, const std::string& branch,
                const invfrac::SnapshotSelector& sel) {
  const auto cfg = resolve_config(flags);
  const auto res = invfrac::run_snapshot(cfg, branch, sel);
  std::printf("branch %s point %d: lambda = %.6f, I* = %.8f, %d active nodes\n",
              res.branch.c_str(), res.index, res.point.state.lambda, res.point.istar,
              res.point.state.active.size());
  for (const auto& c : res.census)
    std::printf("  crack at x = %.4f, width %.4f%s\n", c.position, c.width,
                c.end ? " (layer end)" : "");
  std::printf("wrote %s and %s\n", res.fields_file.string().c_str(),
              res.info_file.string().c_str());
  return 0;
}

int do_stability_report(const CommonFlags& flags) {
  const auto cfg = resolve_config(flags);
  const auto rep = invfrac::run_stability_report(cfg);
  std::printf("%d points tabulated in %s\n", rep.n_points,
              rep.report_file.string().c_str());
  for (const auto& f : rep.flips)
    std::printf("branch %s: %s between index %d (lambda %.6f) and %d (lambda %.6f)\n",
                f.branch.c_str(), f.to_stable ? "stabilizes" : "destabilizes",
                f.index_before, f.lambda_before, f.index_before + 1, f.lambda_after);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inverse-deformation fracture analysis of a constrained brittle layer"};
  app.require_subcommand(1);

  CommonFlags flags;
  bool resume = false;
  std::string sides;
  std::string branch = "plus";
  invfrac::SnapshotSelector sel;
  std::optional<int> sel_index;
  std::optional<double> sel_lambda;
  std::optional<std::string> sel_tag;

  auto* analyze = app.add_subcommand("analyze", "bifurcation analysis of the flat state");
  add_common(analyze, flags);

  auto* trace = app.add_subcommand("trace", "trace equilibrium branches");
  add_common(trace, flags);
  trace->add_flag("--resume", resume, "continue from existing branch records");
  trace->add_option("--sides", sides, "which pitchfork sides to trace: both|plus|minus");

  auto* snapshot = app.add_subcommand("snapshot", "export fields of one solution");
  add_common(snapshot, flags);
  snapshot->add_option("--branch", branch, "trivial|plus|minus (default plus)");
  snapshot->add_option("--index", sel_index, "point index along the branch");
  snapshot->add_option("--at-lambda", sel_lambda, "point closest to this stretch");
  snapshot->add_option("--tag", sel_tag, "named point: first-crack|final");

  auto* stab = app.add_subcommand("stability-report", "tabulate inertia and flips");
  add_common(stab, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return do_analyze(flags);
    if (trace->parsed()) return do_trace(flags, resume, sides);
    if (snapshot->parsed()) {
      sel.index = sel_index;
      sel.at_lambda = sel_lambda;
      sel.tag = sel_tag;
      return do_snapshot(flags, branch, sel);
    }
    if (stab->parsed()) return do_stability_report(flags);
  } catch (const invfrac::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const invfrac::NonGenericParameterError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
