#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "invfrac/assembly.hpp"
#include "invfrac/characteristic.hpp"
#include "invfrac/mesh.hpp"
#include "invfrac/model.hpp"
#include "invfrac/solver.hpp"
#include "invfrac/stability.hpp"
#include "invfrac/state.hpp"

namespace invfrac {

enum class Termination { none, window_end, step_failure, point_cap };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::none: return "none";
    case Termination::window_end: return "window_end";
    case Termination::step_failure: return "step_failure";
    case Termination::point_cap: return "point_cap";
  }
  return "unknown";
}

struct BranchPoint {
  NodalState state;
  double istar = 0.0;  // rescaled energy J / lambda^3
  double sigma = std::numeric_limits<double>::quiet_NaN();  // dI/dlambda, set later
  bool sigma_at_fold = false;
  Inertia inertia;
  bool stable = false;
  bool marginal = false;
  bool healing = false;       // an active node released relative to the previous point
  double arclength = 0.0;
  // Analytic mode data (trivial branch only): smallest linearized eigenvalue
  // and the mode attaining it.
  double lin_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  int lin_mode = 0;
  // Continuation bookkeeping carried so an interrupted trace resumes exactly.
  double step_next = 0.0;
  int successes = 0;
};

struct BranchOrigin {
  enum class Kind { trivial, pitchfork };
  Kind kind = Kind::trivial;
  int mode = 0;
  int side = 0;            // +1 or -1
  double lambda0 = 0.0;    // bifurcation stretch for pitchfork origins
};

struct Branch {
  BranchOrigin origin;
  Termination termination = Termination::none;
  std::vector<BranchPoint> points;
};

struct ContinuationOptions {
  double step_initial = 0.01;
  double step_min = 1e-6;
  double step_max = 0.05;
  int successes_to_grow = 5;  // consecutive accepted steps before doubling
  double lambda_min = 1.01;
  double lambda_max = 3.2;
  double tau0 = 0.01;         // seed amplitude for branch switching
  double trivial_step = 0.01;
  int max_points = 20000;
  SolverOptions solver;
};

struct ConsistencyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using PointSink = std::function<void(const BranchPoint&)>;

namespace detail {

inline Eigen::VectorXd extended_vector(const Mesh& mesh, const NodalState& s) {
  Eigen::VectorXd x(mesh.dofs.n_dofs + 1);
  x.head(mesh.dofs.n_dofs) = pack(mesh, s);
  x[mesh.dofs.n_dofs] = s.lambda;
  return x;
}

inline BranchPoint make_point(const Mesh& mesh, const ModelParams& p,
                              const NodalState& s, double h_floor) {
  BranchPoint pt;
  pt.state = s;
  pt.istar = assemble_scaled_energy(mesh, p, s, h_floor);
  const StabilityLabel lbl = classify(mesh, p, s);
  pt.inertia = lbl.kkt_inertia;
  pt.stable = lbl.stable;
  pt.marginal = lbl.marginal;
  return pt;
}

// A corrector that keeps pinning and releasing one and the same node is the
// signature of a grazing contact: the constraint touches down exactly at a
// fold, so on the border plane the free solution penetrates while the pinned
// one carries a negative multiplier.  Returns that node, or -1 if the move
// log shows anything else.
inline int grazing_node(const std::vector<ActiveSetMove>& moves) {
  constexpr int kTail = 6;
  const int n = static_cast<int>(moves.size());
  if (n < kTail) return -1;
  const int node = moves[n - 1].node;
  for (int i = n - kTail; i + 1 < n; ++i)
    if (moves[i].node != node || moves[i].added == moves[i + 1].added) return -1;
  return node;
}

}  // namespace detail

// Walk the homogeneous branch u = 0 over a stretch window on a fixed grid.
// Every point carries both the analytic mode eigenvalues and the discrete
// KKT signature; a disagreement farther than one grid step from a
// characteristic root is a consistency failure.
inline Branch trace_trivial(const Mesh& mesh, const ModelParams& p, double lambda_lo,
                            double lambda_hi, double step = 0.01, int n_max = 10) {
  if (!(lambda_lo > 0.0) || !(lambda_hi > lambda_lo) || !(step > 0.0))
    throw std::invalid_argument("trace_trivial: invalid stretch window");
  const auto roots = find_roots(p, n_max);

  Branch br;
  br.origin.kind = BranchOrigin::Kind::trivial;
  const int count = static_cast<int>(std::round((lambda_hi - lambda_lo) / step));
  br.points.reserve(count + 1);
  for (int i = 0; i <= count; ++i) {
    const double lam = lambda_lo + i * step;
    NodalState s = NodalState::trivial(mesh, lam);
    BranchPoint pt = detail::make_point(mesh, p, s, kQuadFeasibilityFloor);
    const TrivialStability ts = trivial_stability(lam, p, n_max);
    pt.lin_eigenvalue = ts.min_eigenvalue;
    pt.lin_mode = ts.weakest_mode;
    pt.arclength = lam - lambda_lo;
    pt.step_next = step;
    if (ts.stable != pt.stable && !pt.marginal) {
      double dist = std::numeric_limits<double>::infinity();
      for (const auto& r : roots) dist = std::min(dist, std::abs(lam - r.lambda));
      if (dist > step * (1.0 + 1e-9))
        throw ConsistencyError(
            "trivial branch: analytic and discrete stability disagree at lambda = " +
            std::to_string(lam) + ", " + std::to_string(dist) +
            " away from the nearest characteristic root");
    }
    br.points.push_back(std::move(pt));
  }
  br.termination = Termination::window_end;
  return br;
}

// First solution on a bifurcated branch.  Seeds the mode shape with signed
// amplitude tau0 and corrects with the mode-amplitude functional pinned, so
// the corrector can slide in lambda but cannot fall back onto the trivial
// branch.  The sign convention makes side = +1 the branch whose slope at
// s = 1 is most negative, i.e. the one that opens a crack at the right end.
inline BranchPoint branch_switch(const Mesh& mesh, const ModelParams& p,
                                 const BifurcationRoot& root, int side,
                                 const ContinuationOptions& opts = {}) {
  if (side != 1 && side != -1)
    throw std::invalid_argument("branch_switch: side must be +1 or -1");
  if (!root.simple)
    throw std::invalid_argument(
        "branch_switch: characteristic root of mode " + std::to_string(root.mode) +
        " at lambda = " + std::to_string(root.lambda) +
        " is not simple; branch switching is ill-posed there");

  const double c = side * (root.mode % 2 == 0 ? -1.0 : 1.0) * opts.tau0;
  const double npi = root.mode * std::numbers::pi;
  NodalState s = NodalState::trivial(mesh, root.lambda);
  for (int k = 0; k < mesh.n_nodes(); ++k) {
    const double sk = mesh.node_s(k);
    s.u[k] = c * std::sin(npi * sk);
    s.up[k] = c * npi * std::cos(npi * sk);
  }
  s.u[0] = 0.0;
  s.u[mesh.n_nodes() - 1] = 0.0;

  BorderRow border;
  border.g = amplitude_functional(mesh, root.mode);
  border.g_lambda = 0.0;
  border.target = border.g.dot(pack(mesh, s));
  active_set_solve(mesh, p, s, opts.solver, &border);

  BranchPoint pt = detail::make_point(mesh, p, s, opts.solver.feasibility_floor);
  pt.arclength = 0.0;
  pt.step_next = opts.step_initial;
  pt.successes = 0;
  return pt;
}

// Pseudo-arclength continuation.  Extends `branch` (which must already hold
// at least one point) until the stretch leaves the window, the step
// underflows, or the point cap is hit.  `x_prev` is the extended vector of
// the point before the last one (for a fresh pitchfork branch: the trivial
// state at the bifurcation stretch); it seeds the first secant direction.
// Each accepted point is handed to `sink` as soon as it exists.
inline void trace_branch(const Mesh& mesh, const ModelParams& p, Branch& branch,
                         Eigen::VectorXd x_prev, const ContinuationOptions& opts = {},
                         const PointSink& sink = {}) {
  if (branch.points.empty())
    throw std::invalid_argument("trace_branch: branch must contain a starting point");
  const int nd = mesh.dofs.n_dofs;

  double step = branch.points.back().step_next > 0.0 ? branch.points.back().step_next
                                                     : opts.step_initial;
  int successes = branch.points.back().successes;
  int turns = 0;

  if (branch.points.back().state.lambda > opts.lambda_max ||
      branch.points.back().state.lambda < opts.lambda_min) {
    branch.termination = Termination::window_end;
    return;
  }

  while (true) {
    if (static_cast<int>(branch.points.size()) >= opts.max_points) {
      branch.termination = Termination::point_cap;
      return;
    }
    const BranchPoint& cur = branch.points.back();
    const Eigen::VectorXd x_cur = detail::extended_vector(mesh, cur.state);
    Eigen::VectorXd t = x_cur - x_prev;
    const double tn = t.norm();
    if (tn == 0.0) {
      branch.termination = Termination::step_failure;
      return;
    }
    t /= tn;

    NodalState trial = cur.state;
    const Eigen::VectorXd x_pred = x_cur + step * t;
    unpack(mesh, x_pred.head(nd), trial);
    trial.lambda = x_pred[nd];

    BorderRow border;
    border.g = t.head(nd);
    border.g_lambda = t[nd];
    border.target = t.dot(x_cur) + step;

    bool ok = false;
    int graze = -1;
    try {
      active_set_solve(mesh, p, trial, opts.solver, &border);
      ok = true;
    } catch (const NewtonFailureError&) {
    } catch (const ActiveSetCycleError& e) {
      graze = detail::grazing_node(e.moves);
    } catch (const InfeasibleStateError&) {
    }

    double turn_step = 0.0;
    if (!ok && graze >= 0 && turns < 8) {
      // Grazing contact: the branch folds where the constraint at this node
      // touches down (or lifts off), so the valid continuation reverses the
      // stretch trend and leaves with the node's contact state flipped —
      // seeding it unchanged would just retrace the arriving arm.  Land on
      // the departing arm by a fixed-stretch solve, backing off the stretch
      // offset until the solution is a clean KKT point; if no offset works
      // this was not a fold after all.
      const double dir = t[nd] <= 0.0 ? 1.0 : -1.0;
      NodalState seed = cur.state;
      if (!seed.active.contains(graze)) {
        seed.active.insert(graze);
        const int pos = seed.active.index_of(graze);
        Eigen::VectorXd mu(seed.mu.size() + 1);
        for (int i = 0, j = 0; i < mu.size(); ++i)
          mu[i] = (i == pos) ? 0.0 : seed.mu[j++];
        seed.mu = mu;
      } else {
        const int pos = seed.active.index_of(graze);
        Eigen::VectorXd mu(seed.mu.size() - 1);
        for (int i = 0, j = 0; i < seed.mu.size(); ++i)
          if (i != pos) mu[j++] = seed.mu[i];
        seed.mu = mu;
        seed.active.erase(graze);
      }
      for (double dl = std::min(step, 0.01); dl >= opts.step_min; dl *= 0.5) {
        NodalState turn = seed;
        turn.lambda = cur.state.lambda + dir * dl;
        try {
          active_set_solve(mesh, p, turn, opts.solver, nullptr);
          // The solve gates feasibility relative to its seed, and the seed's
          // stretch jump may dip below the quadrature floor; this re-check
          // throws if the landed state is not feasible in its own right.
          assemble_scaled_energy(mesh, p, turn, opts.solver.feasibility_floor);
        } catch (const NewtonFailureError&) {
          continue;
        } catch (const ActiveSetCycleError&) {
          continue;
        } catch (const InfeasibleStateError&) {
          continue;
        }
        const KktDiagnostics kd = kkt_diagnostics(mesh, p, turn);
        if (kd.worst_feasibility < -opts.solver.sign_tolerance ||
            kd.worst_multiplier < -opts.solver.sign_tolerance)
          continue;
        trial = turn;
        turn_step = (detail::extended_vector(mesh, turn) - x_cur).norm();
        ok = true;
        ++turns;
        break;
      }
    }

    if (!ok) {
      successes = 0;
      step *= 0.5;
      if (step < opts.step_min) {
        branch.termination = Termination::step_failure;
        return;
      }
      continue;
    }

    BranchPoint np = detail::make_point(mesh, p, trial, opts.solver.feasibility_floor);
    for (int node : cur.state.active.nodes)
      if (!trial.active.contains(node)) np.healing = true;
    np.arclength = cur.arclength + (turn_step > 0.0 ? turn_step : step);
    if (turn_step > 0.0) successes = 0;
    if (++successes >= opts.successes_to_grow) {
      step = std::min(step * 2.0, opts.step_max);
      successes = 0;
    }
    np.step_next = step;
    np.successes = successes;

    branch.points.push_back(np);
    if (sink) sink(branch.points.back());
    x_prev = x_cur;

    if (np.state.lambda > opts.lambda_max || np.state.lambda < opts.lambda_min) {
      branch.termination = Termination::window_end;
      return;
    }
  }
}

// Convenience wrapper: switch onto the pitchfork branch emanating from a
// simple characteristic root and trace it through the stretch window.
inline Branch trace_pitchfork_branch(const Mesh& mesh, const ModelParams& p,
                                     const BifurcationRoot& root, int side,
                                     const ContinuationOptions& opts = {},
                                     const PointSink& sink = {}) {
  Branch br;
  br.origin.kind = BranchOrigin::Kind::pitchfork;
  br.origin.mode = root.mode;
  br.origin.side = side;
  br.origin.lambda0 = root.lambda;
  br.points.push_back(branch_switch(mesh, p, root, side, opts));
  if (sink) sink(br.points.front());
  const Eigen::VectorXd x0 =
      detail::extended_vector(mesh, NodalState::trivial(mesh, root.lambda));
  trace_branch(mesh, p, br, x0, opts, sink);
  return br;
}

}  // namespace invfrac
