#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "invfrac/continuation.hpp"

using namespace invfrac;

namespace {

ModelParams defaults() { return ModelParams{}; }

const BifurcationRoot& first_onset(const std::vector<BifurcationRoot>& roots) {
  const BifurcationRoot* crit = critical_root(roots);
  REQUIRE(crit != nullptr);
  return *crit;
}

}  // namespace

TEST_CASE("homogeneous branch: energy closed form and stability handover") {
  const ModelParams p = defaults();
  const Mesh mesh(60);
  const Branch br = trace_trivial(mesh, p, 1.05, 3.2, 0.01);
  REQUIRE(br.termination == Termination::window_end);
  REQUIRE(br.points.size() == 216);

  int flip = -1;
  for (size_t i = 0; i < br.points.size(); ++i) {
    const auto& pt = br.points[i];
    CHECK(pt.state.lambda == Catch::Approx(1.05 + 0.01 * i).margin(1e-12));
    const double expect = p.beta / 6.0 * std::pow(1.0 - 1.0 / pt.state.lambda, 2);
    CHECK(pt.istar == Catch::Approx(expect).margin(1e-10));
    if (flip < 0 && !pt.stable) flip = static_cast<int>(i);
  }
  REQUIRE(flip > 0);
  // The discrete handover brackets the analytic onset within one grid step.
  const double lc = 2.449032;
  CHECK(br.points[flip - 1].state.lambda <= lc + 1e-12);
  CHECK(br.points[flip].state.lambda >= lc - 0.01);
  CHECK(std::abs(br.points[flip].state.lambda - lc) <= 0.01 + 1e-9);
  // The analytic eigenvalue changes sign at the same index.
  CHECK(br.points[flip - 1].lin_eigenvalue > 0.0);
  CHECK(br.points[flip].lin_eigenvalue < 0.0);
  CHECK(br.points[flip].lin_mode == 3);
}

TEST_CASE("branch switch lands on a subcritical mode-correlated point") {
  const ModelParams p = defaults();
  const Mesh mesh(100);
  const auto roots = find_roots(p, 10);
  const BifurcationRoot& root = first_onset(roots);
  const ContinuationOptions opts;

  for (int side : {+1, -1}) {
    const BranchPoint pt = branch_switch(mesh, p, root, side, opts);
    CHECK(pt.state.lambda < root.lambda);            // subcritical
    CHECK(pt.state.lambda > root.lambda - 0.05);     // but nearby
    CHECK(std::abs(mode_correlation(mesh, pt.state, root.mode)) >= 0.99);
    // The amplitude functional is pinned at the seeded magnitude.
    const Eigen::VectorXd g = amplitude_functional(mesh, root.mode);
    CHECK(std::abs(g.dot(pack(mesh, pt.state))) == Catch::Approx(opts.tau0).margin(1e-10));
    CHECK_FALSE(pt.stable);
  }
}

TEST_CASE("branch switch on the two sides is related by reflection") {
  const ModelParams p = defaults();
  const Mesh mesh(80);
  const auto roots = find_roots(p, 10);
  const BifurcationRoot& root = first_onset(roots);  // mode 3, odd
  const BranchPoint plus = branch_switch(mesh, p, root, +1);
  const BranchPoint minus = branch_switch(mesh, p, root, -1);
  const NodalState mirrored = reflect(mesh, minus.state);
  CHECK(std::abs(plus.state.lambda - minus.state.lambda) <= 1e-9);
  CHECK((mirrored.u - plus.state.u).lpNorm<Eigen::Infinity>() <= 1e-7);
  CHECK((mirrored.up - plus.state.up).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("branch switch refuses a non-simple root") {
  const ModelParams p = defaults();
  const Mesh mesh(20);
  BifurcationRoot root;
  root.mode = 3;
  root.lambda = 2.449032;
  root.simple = false;
  CHECK_THROWS_AS(branch_switch(mesh, p, root, +1), std::invalid_argument);
  BifurcationRoot good = root;
  good.simple = true;
  CHECK_THROWS_AS(branch_switch(mesh, p, good, 2), std::invalid_argument);
}

TEST_CASE("pitchfork sides trace as exact mirror branches") {
  const ModelParams p = defaults();
  const Mesh mesh(50);
  const auto roots = find_roots(p, 10);
  const BifurcationRoot& root = first_onset(roots);
  ContinuationOptions opts;
  opts.lambda_max = 2.8;  // shortened window keeps the test fast
  const Branch plus = trace_pitchfork_branch(mesh, p, root, +1, opts);
  const Branch minus = trace_pitchfork_branch(mesh, p, root, -1, opts);
  REQUIRE(plus.termination == Termination::window_end);
  REQUIRE(minus.termination == Termination::window_end);
  REQUIRE(plus.points.size() == minus.points.size());
  for (size_t i = 0; i < plus.points.size(); ++i) {
    const auto& a = plus.points[i];
    const NodalState b = reflect(mesh, minus.points[i].state);
    CHECK(std::abs(a.state.lambda - b.lambda) <= 1e-6);
    CHECK((a.state.u - b.u).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK((a.state.up - b.up).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK(a.state.active.nodes == b.active.nodes);
    CHECK(a.istar == Catch::Approx(minus.points[i].istar).margin(1e-10));
    CHECK(a.stable == minus.points[i].stable);
  }
}

TEST_CASE("traced branch invariants: arclength, window, census stability") {
  const ModelParams p = defaults();
  const Mesh mesh(40);
  const auto roots = find_roots(p, 10);
  const BifurcationRoot& root = first_onset(roots);
  // On this coarse mesh the interior site has no node to open at, and the
  // branch closes into a loop of fracture episodes; a stretch window ending
  // inside the first unloading arm gives a clean finite trace through one
  // full episode (grazing onset, widening, fold, narrowing, unloading).
  ContinuationOptions opts;
  opts.lambda_min = 2.05;
  const Branch br = trace_pitchfork_branch(mesh, p, root, +1, opts);
  REQUIRE(br.termination == Termination::window_end);
  REQUIRE(br.points.size() >= 10);
  CHECK(br.points.back().state.lambda < opts.lambda_min);

  bool seen_active = false, seen_stable_fractured = false;
  for (size_t i = 0; i < br.points.size(); ++i) {
    const auto& pt = br.points[i];
    CHECK(std::isfinite(pt.istar));
    if (i > 0) CHECK(pt.arclength > br.points[i - 1].arclength);
    if (pt.state.active.size() > 0) seen_active = true;
    if (pt.stable && pt.state.active.size() > 0 && !pt.healing)
      seen_stable_fractured = true;
    if (pt.stable) {
      CHECK(pt.inertia.n_plus == mesh.dofs.n_dofs);
      CHECK(pt.inertia.n_minus == pt.state.active.size());
      CHECK(pt.inertia.n_zero == 0);
    }
  }
  CHECK(seen_active);
  CHECK(seen_stable_fractured);
}

TEST_CASE("trace_branch rejects an empty starting branch and honors the point cap") {
  const ModelParams p = defaults();
  const Mesh mesh(30);
  Branch empty;
  CHECK_THROWS_AS(trace_branch(mesh, p, empty, Eigen::VectorXd::Zero(mesh.dofs.n_dofs + 1)),
                  std::invalid_argument);

  const auto roots = find_roots(p, 10);
  const BifurcationRoot& root = first_onset(roots);
  ContinuationOptions opts;
  opts.max_points = 5;
  const Branch br = trace_pitchfork_branch(mesh, p, root, +1, opts);
  CHECK(br.termination == Termination::point_cap);
  CHECK(br.points.size() == 5);
}

TEST_CASE("point sink receives every accepted point in order") {
  const ModelParams p = defaults();
  const Mesh mesh(30);
  const auto roots = find_roots(p, 10);
  const BifurcationRoot& root = first_onset(roots);
  ContinuationOptions opts;
  opts.max_points = 12;
  std::vector<double> seen;
  const Branch br = trace_pitchfork_branch(mesh, p, root, +1, opts,
                                           [&](const BranchPoint& pt) {
                                             seen.push_back(pt.arclength);
                                           });
  REQUIRE(seen.size() == br.points.size());
  for (size_t i = 0; i < seen.size(); ++i)
    CHECK(seen[i] == br.points[i].arclength);
}

TEST_CASE("step control grows after repeated successes and respects the cap") {
  const ModelParams p = defaults();
  const Mesh mesh(30);
  const auto roots = find_roots(p, 10);
  const BifurcationRoot& root = first_onset(roots);
  const ContinuationOptions opts;
  const Branch br = trace_pitchfork_branch(mesh, p, root, +1, opts);
  double max_step = 0.0;
  for (const auto& pt : br.points) max_step = std::max(max_step, pt.step_next);
  CHECK(max_step > opts.step_initial);
  CHECK(max_step <= opts.step_max + 1e-15);
}
