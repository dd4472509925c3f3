#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "invfrac/mesh.hpp"
#include "invfrac/model.hpp"
#include "invfrac/state.hpp"

namespace invfrac {

// Discrete states may dip below zero inverse stretch between nodes of a
// cracked element — the overshoot of a cubic element whose end slopes sit on
// the constraint scales with the element width — and the fracture energy is
// unbounded below for deeply negative stretch.  Dips beyond this floor
// indicate the iterate left the physically meaningful basin; the floor is
// deep enough not to block cracked elements on coarse meshes.  (The nodal
// constraint itself is exact; the floor only guards quadrature points.)
inline constexpr double kQuadFeasibilityFloor = -5e-2;

struct InfeasibleStateError : std::runtime_error {
  double h_min;
  InfeasibleStateError(double hmin, const std::string& where)
      : std::runtime_error("infeasible state in " + where + ": inverse stretch " +
                          std::to_string(hmin) + " at a quadrature point"),
        h_min(hmin) {}
};

namespace detail {

// Local DOF values [value-left, slope-left, value-right, slope-right] of
// element e taken from the nodal arrays (boundary zeros included).
inline std::array<double, 4> element_dofs(const NodalState& s, int e) {
  return {s.u[e], s.up[e], s.u[e + 1], s.up[e + 1]};
}

// Reduced global indices of the element's local DOFs, -1 where eliminated.
inline std::array<int, 4> element_indices(const Mesh& mesh, int e) {
  return {mesh.dofs.value_dof[e], mesh.dofs.slope_dof[e],
          mesh.dofs.value_dof[e + 1], mesh.dofs.slope_dof[e + 1]};
}

struct QuadState {
  double u, up, upp;
};

inline QuadState eval_at_quad(const Mesh& mesh, const std::array<double, 4>& de, int g) {
  const ShapeEval& sh = mesh.quad_shapes[g];
  QuadState q{0.0, 0.0, 0.0};
  for (int i = 0; i < 4; ++i) {
    q.u += sh.value[i] * de[i];
    q.up += sh.d1[i] * de[i];
    q.upp += sh.d2[i] * de[i];
  }
  return q;
}

}  // namespace detail

// Smallest inverse stretch over all quadrature points; the solver's damping
// uses this to keep iterates inside the feasible basin.
inline double min_inverse_stretch(const Mesh& mesh, const NodalState& s) {
  double hmin = std::numeric_limits<double>::infinity();
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto de = detail::element_dofs(s, e);
    for (int g = 0; g < mesh.n_gauss; ++g) {
      const double H = (1.0 + detail::eval_at_quad(mesh, de, g).up) / s.lambda;
      hmin = std::min(hmin, H);
    }
  }
  return hmin;
}

// Total potential of the layer/core system at fixed stretch:
//   J = int [ eps/2 u''^2 + lambda^4 Wstar((1+u')/lambda) + k lambda^5 / 2 u^2 ].
// The rescaled energy of interest is J / lambda^3.
inline double assemble_energy(const Mesh& mesh, const ModelParams& p, const NodalState& s,
                              double h_floor = kQuadFeasibilityFloor) {
  const double lam = s.lambda;
  const double lam4 = std::pow(lam, 4);
  const double lam5 = lam4 * lam;
  double J = 0.0;
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto de = detail::element_dofs(s, e);
    for (int g = 0; g < mesh.n_gauss; ++g) {
      const auto q = detail::eval_at_quad(mesh, de, g);
      const double H = (1.0 + q.up) / lam;
      if (H < h_floor) throw InfeasibleStateError(H, "assemble_energy");
      const double w = mesh.quad_weight(g);
      J += w * (0.5 * p.epsilon * q.upp * q.upp + lam4 * wstar_extended(H, 0, p) +
                0.5 * lam5 * p.k * q.u * q.u);
    }
  }
  return J;
}

// Rescaled energy J / lambda^3 (the quantity compared across branches).
inline double assemble_scaled_energy(const Mesh& mesh, const ModelParams& p,
                                     const NodalState& s,
                                     double h_floor = kQuadFeasibilityFloor) {
  return assemble_energy(mesh, p, s, h_floor) / std::pow(s.lambda, 3);
}

// First variation of J in the reduced DOFs.
inline Eigen::VectorXd assemble_residual(const Mesh& mesh, const ModelParams& p,
                                         const NodalState& s) {
  const double lam = s.lambda;
  const double lam3 = lam * lam * lam;
  const double lam5 = lam3 * lam * lam;
  Eigen::VectorXd r = Eigen::VectorXd::Zero(mesh.dofs.n_dofs);
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto de = detail::element_dofs(s, e);
    const auto idx = detail::element_indices(mesh, e);
    for (int g = 0; g < mesh.n_gauss; ++g) {
      const auto q = detail::eval_at_quad(mesh, de, g);
      const double H = (1.0 + q.up) / lam;
      const double w = mesh.quad_weight(g);
      const double c1 = w * lam3 * wstar_extended(H, 1, p);
      const double c2 = w * p.epsilon * q.upp;
      const double c0 = w * lam5 * p.k * q.u;
      const ShapeEval& sh = mesh.quad_shapes[g];
      for (int i = 0; i < 4; ++i) {
        if (idx[i] < 0) continue;
        r[idx[i]] += c2 * sh.d2[i] + c1 * sh.d1[i] + c0 * sh.value[i];
      }
    }
  }
  return r;
}

// Second variation of J (symmetric tangent).  Assembled from one expression
// per unordered pair, so the matrix is symmetric bitwise.
inline Eigen::MatrixXd assemble_tangent(const Mesh& mesh, const ModelParams& p,
                                        const NodalState& s) {
  const double lam = s.lambda;
  const double lam2 = lam * lam;
  const double lam5 = lam2 * lam2 * lam;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(mesh.dofs.n_dofs, mesh.dofs.n_dofs);
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto de = detail::element_dofs(s, e);
    const auto idx = detail::element_indices(mesh, e);
    for (int g = 0; g < mesh.n_gauss; ++g) {
      const auto q = detail::eval_at_quad(mesh, de, g);
      const double H = (1.0 + q.up) / lam;
      const double w = mesh.quad_weight(g);
      const double c11 = w * lam2 * wstar_extended(H, 2, p);
      const double c22 = w * p.epsilon;
      const double c00 = w * lam5 * p.k;
      const ShapeEval& sh = mesh.quad_shapes[g];
      for (int i = 0; i < 4; ++i) {
        if (idx[i] < 0) continue;
        for (int j = i; j < 4; ++j) {
          if (idx[j] < 0) continue;
          const double v = c22 * sh.d2[i] * sh.d2[j] + c11 * sh.d1[i] * sh.d1[j] +
                           c00 * sh.value[i] * sh.value[j];
          G(idx[i], idx[j]) += v;
          if (idx[i] != idx[j]) G(idx[j], idx[i]) += v;
        }
      }
    }
  }
  return G;
}

// Partial derivative of the residual with respect to lambda at fixed DOFs;
// needed by the continuation corrector.
inline Eigen::VectorXd assemble_residual_dlambda(const Mesh& mesh, const ModelParams& p,
                                                 const NodalState& s) {
  const double lam = s.lambda;
  const double lam2 = lam * lam;
  const double lam4 = lam2 * lam2;
  Eigen::VectorXd rl = Eigen::VectorXd::Zero(mesh.dofs.n_dofs);
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto de = detail::element_dofs(s, e);
    const auto idx = detail::element_indices(mesh, e);
    for (int g = 0; g < mesh.n_gauss; ++g) {
      const auto q = detail::eval_at_quad(mesh, de, g);
      const double H = (1.0 + q.up) / lam;
      const double w = mesh.quad_weight(g);
      // d/dlambda [lambda^3 Wstar'(H)] with H = (1+u')/lambda.
      const double c1 = w * (3.0 * lam2 * wstar_extended(H, 1, p) -
                             lam * wstar_extended(H, 2, p) * (1.0 + q.up));
      const double c0 = w * 5.0 * lam4 * p.k * q.u;
      const ShapeEval& sh = mesh.quad_shapes[g];
      for (int i = 0; i < 4; ++i) {
        if (idx[i] < 0) continue;
        rl[idx[i]] += c1 * sh.d1[i] + c0 * sh.value[i];
      }
    }
  }
  return rl;
}

// Jacobian of the active constraints u'_k + 1 = 0: one unit row per active
// node, hitting that node's slope DOF.
inline Eigen::MatrixXd constraint_jacobian(const Mesh& mesh, const ActiveSet& active) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(active.size(), mesh.dofs.n_dofs);
  for (int i = 0; i < active.size(); ++i)
    A(i, mesh.dofs.slope_dof[active.nodes[i]]) = 1.0;
  return A;
}

// Linear functional d -> 2 int u_h(s) sin(n pi s) ds on the reduced DOFs.
// Evaluates to the mode-n Fourier amplitude; the branch-switch corrector pins
// it to fix the phase and scale of the bifurcated solution.
inline Eigen::VectorXd amplitude_functional(const Mesh& mesh, int n) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(mesh.dofs.n_dofs);
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto idx = detail::element_indices(mesh, e);
    for (int gq = 0; gq < mesh.n_gauss; ++gq) {
      const double s = mesh.quad_s(e, gq);
      const double w = 2.0 * mesh.quad_weight(gq) * std::sin(n * std::numbers::pi * s);
      const ShapeEval& sh = mesh.quad_shapes[gq];
      for (int i = 0; i < 4; ++i)
        if (idx[i] >= 0) g[idx[i]] += w * sh.value[i];
    }
  }
  return g;
}

// Normalized correlation of the state with the mode-n sine shape,
// int u sin / sqrt(int u^2 * int sin^2).  Returns 0 for the zero state.
inline double mode_correlation(const Mesh& mesh, const NodalState& s, int n) {
  double inner = 0.0, norm2 = 0.0;
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto de = detail::element_dofs(s, e);
    for (int g = 0; g < mesh.n_gauss; ++g) {
      const auto q = detail::eval_at_quad(mesh, de, g);
      const double w = mesh.quad_weight(g);
      inner += w * q.u * std::sin(n * std::numbers::pi * mesh.quad_s(e, g));
      norm2 += w * q.u * q.u;
    }
  }
  if (norm2 <= 0.0) return 0.0;
  return inner / std::sqrt(norm2 * 0.5);
}

}  // namespace invfrac
