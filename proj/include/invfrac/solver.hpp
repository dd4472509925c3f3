#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "invfrac/assembly.hpp"
#include "invfrac/mesh.hpp"
#include "invfrac/model.hpp"
#include "invfrac/state.hpp"

namespace invfrac {

struct SolverOptions {
  double tolerance = 1e-7;           // absolute inf-norm of the KKT residual
  int max_newton_iterations = 50;
  int max_halvings = 30;
  double feasibility_floor = kQuadFeasibilityFloor;
  double sign_tolerance = 1e-10;     // slack on multiplier / constraint signs
  int active_set_cap = 0;            // 0 -> twice the node count
  double lambda_floor = 0.05;        // trial stretches below this are rejected
};

// Extra scalar equation g . d + g_lambda * lambda = target appended to the
// KKT system; its presence makes lambda an unknown.
struct BorderRow {
  Eigen::VectorXd g;
  double g_lambda = 0.0;
  double target = 0.0;
};

struct ActiveSetMove {
  bool added;  // false -> removed
  int node;
};

struct SolveReport {
  bool converged = false;
  int newton_iterations = 0;  // summed over all active-set iterates
  int outer_iterations = 0;
  double residual_norm = std::numeric_limits<double>::quiet_NaN();
  std::vector<ActiveSetMove> moves;
};

struct NewtonFailureError : std::runtime_error {
  double residual_norm;
  int iterations;
  NewtonFailureError(const std::string& why, double rnorm, int iters)
      : std::runtime_error("Newton iteration failed: " + why + " (residual " +
                          std::to_string(rnorm) + " after " + std::to_string(iters) +
                          " iterations)"),
        residual_norm(rnorm), iterations(iters) {}
};

struct ActiveSetCycleError : std::runtime_error {
  std::vector<ActiveSetMove> moves;
  explicit ActiveSetCycleError(std::vector<ActiveSetMove> log)
      : std::runtime_error("active-set iteration exceeded its change cap (" +
                          std::to_string(log.size()) + " changes)"),
        moves(std::move(log)) {}
};

namespace detail {

// Newton iteration at a fixed active set.  Solves the symmetric system
//   [ G    A^T  r_l ] [dd ]     [ r + A^T nu ]
//   [ A    0    0   ] [dnu] = - [ A d + 1    ]
//   [ g^T  0    g_l ] [dl ]     [ border     ]
// where nu = -mu keeps the matrix symmetric; the last row/column exists only
// when a border row is supplied.  Returns the iteration count; throws
// NewtonFailureError when out of iterations or damping fails.
inline int newton_solve(const Mesh& mesh, const ModelParams& p, NodalState& s,
                        const SolverOptions& opts, const BorderRow* border) {
  const int nd = mesh.dofs.n_dofs;
  const int m = s.active.size();
  const int nb = border ? 1 : 0;
  const int n = nd + m + nb;

  Eigen::VectorXd d = pack(mesh, s);
  Eigen::VectorXd nu = -s.mu;
  double lambda = s.lambda;

  NodalState work = s;  // scratch state for residual/feasibility evaluation
  const auto sync_work = [&](const Eigen::VectorXd& dv, double lam) {
    unpack(mesh, dv, work);
    work.lambda = lam;
  };

  const Eigen::MatrixXd A = constraint_jacobian(mesh, s.active);

  const auto kkt_residual = [&](const Eigen::VectorXd& dv, const Eigen::VectorXd& nuv,
                                double lam) {
    sync_work(dv, lam);
    Eigen::VectorXd F(n);
    F.head(nd) = assemble_residual(mesh, p, work);
    if (m > 0) F.head(nd) += A.transpose() * nuv;
    for (int i = 0; i < m; ++i) F[nd + i] = dv[mesh.dofs.slope_dof[s.active.nodes[i]]] + 1.0;
    if (border) F[nd + m] = border->g.dot(dv) + border->g_lambda * lam - border->target;
    return F;
  };

  sync_work(d, lambda);
  double hmin_cur = min_inverse_stretch(mesh, work);

  int it = 0;
  Eigen::VectorXd F = kkt_residual(d, nu, lambda);
  while (true) {
    ++it;
    const double fnorm = F.lpNorm<Eigen::Infinity>();
    if (fnorm <= opts.tolerance) {
      // A solve entered from an infeasible seed may converge below the floor;
      // reject it so callers back off rather than accept such a state.
      if (hmin_cur < opts.feasibility_floor)
        throw NewtonFailureError("converged outside the feasibility floor", fnorm, it);
      unpack(mesh, d, s);
      s.lambda = lambda;
      s.mu = -nu;
      return it;
    }
    if (it > opts.max_newton_iterations)
      throw NewtonFailureError("iteration cap reached", fnorm, it - 1);

    sync_work(d, lambda);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    K.topLeftCorner(nd, nd) = assemble_tangent(mesh, p, work);
    if (m > 0) {
      K.block(0, nd, nd, m) = A.transpose();
      K.block(nd, 0, m, nd) = A;
    }
    if (border) {
      K.block(0, nd + m, nd, 1) = assemble_residual_dlambda(mesh, p, work);
      K.block(nd + m, 0, 1, nd) = border->g.transpose();
      K(nd + m, nd + m) = border->g_lambda;
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    Eigen::VectorXd step = lu.solve(-F);
    // One pass of iterative refinement keeps the constraint rows satisfied to
    // round-off, which the complementarity bound relies on.
    step += lu.solve(-F - K * step);

    // Backtrack until the trial stays in the feasible basin (quadrature
    // inverse stretch above the floor, or at least not worse than now).
    double alpha = 1.0;
    bool accepted = false;
    const double limit = std::min(opts.feasibility_floor, hmin_cur);
    for (int halve = 0; halve <= opts.max_halvings; ++halve) {
      const Eigen::VectorXd d_try = d + alpha * step.head(nd);
      const double lam_try = border ? lambda + alpha * step[nd + m] : lambda;
      if (lam_try > opts.lambda_floor) {
        sync_work(d_try, lam_try);
        const double hmin_try = min_inverse_stretch(mesh, work);
        if (hmin_try >= limit) {
          d = d_try;
          lambda = lam_try;
          if (m > 0) nu += alpha * step.segment(nd, m);
          hmin_cur = hmin_try;
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted)
      throw NewtonFailureError("damping could not find a feasible step", fnorm, it);
    F = kkt_residual(d, nu, lambda);
  }
}

}  // namespace detail

// Solve the constrained equilibrium problem by alternating Newton solves with
// single-node active-set updates: a penetrating inactive node is pinned, a
// negative multiplier releases its node.  Pinning takes priority: several
// nodes can reach contact within one continuation step, and releasing a
// freshly pinned node while its neighbours still penetrate cycles forever.
// At most one change per outer iterate; ties resolve to the lowest node index.
inline SolveReport active_set_solve(const Mesh& mesh, const ModelParams& p, NodalState& s,
                                    const SolverOptions& opts = {},
                                    const BorderRow* border = nullptr) {
  const int cap = opts.active_set_cap > 0 ? opts.active_set_cap : 2 * mesh.n_nodes();
  SolveReport rep;
  while (true) {
    ++rep.outer_iterations;
    rep.newton_iterations += detail::newton_solve(mesh, p, s, opts, border);

    // Pinning condition: every inactive node satisfies u' + 1 >= 0.
    int worst_node = -1;
    double worst = -opts.sign_tolerance;
    for (int k = 0; k < mesh.n_nodes(); ++k) {
      if (s.active.contains(k)) continue;
      const double v = s.up[k] + 1.0;
      if (v < worst) {
        worst = v;
        worst_node = k;
      }
    }
    if (worst_node >= 0) {
      s.active.insert(worst_node);
      const int pos = s.active.index_of(worst_node);
      Eigen::VectorXd mu(s.mu.size() + 1);
      for (int i = 0, j = 0; i < mu.size(); ++i)
        mu[i] = (i == pos) ? 0.0 : s.mu[j++];
      s.mu = mu;
      rep.moves.push_back({true, worst_node});
      if (static_cast<int>(rep.moves.size()) > cap) throw ActiveSetCycleError(rep.moves);
      continue;
    }

    // Release condition: every multiplier nonnegative (up to sign slack).
    worst_node = -1;
    worst = -opts.sign_tolerance;
    for (int i = 0; i < s.active.size(); ++i) {
      if (s.mu[i] < worst) {
        worst = s.mu[i];
        worst_node = s.active.nodes[i];
      }
    }
    if (worst_node >= 0) {
      const int pos = s.active.index_of(worst_node);
      Eigen::VectorXd mu(s.mu.size() - 1);
      for (int i = 0, j = 0; i < s.mu.size(); ++i)
        if (i != pos) mu[j++] = s.mu[i];
      s.mu = mu;
      s.active.erase(worst_node);
      rep.moves.push_back({false, worst_node});
      if (static_cast<int>(rep.moves.size()) > cap) throw ActiveSetCycleError(rep.moves);
      continue;
    }

    break;  // both sign conditions hold
  }

  // Record the final KKT residual for diagnostics.
  const Eigen::MatrixXd A = constraint_jacobian(mesh, s.active);
  Eigen::VectorXd F = assemble_residual(mesh, p, s);
  if (s.active.size() > 0) F -= A.transpose() * s.mu;
  rep.residual_norm = F.lpNorm<Eigen::Infinity>();
  rep.converged = true;
  return rep;
}

// Diagnostics bundle for the Karush-Kuhn-Tucker conditions at a state.
struct KktDiagnostics {
  double stationarity_norm;   // ||r - A^T mu||_inf
  double worst_feasibility;   // min over inactive nodes of u'_k + 1
  double worst_multiplier;    // min over active nodes of mu_k
  double complementarity;     // max |mu_k (u'_k + 1)| over active nodes
};

inline KktDiagnostics kkt_diagnostics(const Mesh& mesh, const ModelParams& p,
                                      const NodalState& s) {
  KktDiagnostics out{};
  Eigen::VectorXd F = assemble_residual(mesh, p, s);
  if (s.active.size() > 0)
    F -= constraint_jacobian(mesh, s.active).transpose() * s.mu;
  out.stationarity_norm = F.lpNorm<Eigen::Infinity>();
  out.worst_feasibility = std::numeric_limits<double>::infinity();
  out.worst_multiplier = std::numeric_limits<double>::infinity();
  out.complementarity = 0.0;
  for (int k = 0; k < mesh.n_nodes(); ++k) {
    if (s.active.contains(k)) continue;
    out.worst_feasibility = std::min(out.worst_feasibility, s.up[k] + 1.0);
  }
  for (int i = 0; i < s.active.size(); ++i) {
    out.worst_multiplier = std::min(out.worst_multiplier, s.mu[i]);
    out.complementarity = std::max(
        out.complementarity, std::abs(s.mu[i] * (s.up[s.active.nodes[i]] + 1.0)));
  }
  return out;
}

}  // namespace invfrac
