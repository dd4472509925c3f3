#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace invfrac {

// Gauss-Legendre rule mapped to the reference interval [0, 1].  Nodes are
// computed by Newton iteration on the Legendre polynomial, so any order is
// available; the assembly default of 4 points integrates every term of the
// energy density (degree <= 6 in the reference coordinate) exactly.
struct GaussRule {
  std::vector<double> points;   // in (0, 1)
  std::vector<double> weights;  // sum to 1

  static GaussRule make(int n) {
    if (n < 1 || n > 20)
      throw std::invalid_argument("GaussRule: order must be in [1, 20], got " +
                                  std::to_string(n));
    GaussRule rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
      // Standard initial guess on [-1, 1], then Newton on P_n(x) = 0.
      double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = x;
        for (int j = 2; j <= n; ++j) {
          const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1.0);
        const double dx = p1 / dp;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      // Map node and weight from [-1, 1] to [0, 1]; reverse order so points
      // come out ascending.
      rule.points[n - 1 - i] = 0.5 * (1.0 + x);
      rule.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
  }
};

// Values and s-derivatives of the four Hermite basis functions of one element
// at a reference point xi in [0, 1].  Ordering: [value-left, slope-left,
// value-right, slope-right].  Slope DOFs carry the physical derivative, so the
// slope shapes pick up factors of the element length h.
struct ShapeEval {
  std::array<double, 4> value;
  std::array<double, 4> d1;
  std::array<double, 4> d2;
};

inline ShapeEval hermite_shapes(double xi, double h) {
  ShapeEval s;
  const double xi2 = xi * xi, xi3 = xi2 * xi;
  s.value = {1.0 - 3.0 * xi2 + 2.0 * xi3, h * (xi - 2.0 * xi2 + xi3),
             3.0 * xi2 - 2.0 * xi3, h * (-xi2 + xi3)};
  s.d1 = {(-6.0 * xi + 6.0 * xi2) / h, 1.0 - 4.0 * xi + 3.0 * xi2,
          (6.0 * xi - 6.0 * xi2) / h, -2.0 * xi + 3.0 * xi2};
  s.d2 = {(-6.0 + 12.0 * xi) / (h * h), (-4.0 + 6.0 * xi) / h,
          (6.0 - 12.0 * xi) / (h * h), (-2.0 + 6.0 * xi) / h};
  return s;
}

// Map from nodal unknowns to the reduced solution vector.  Both endpoint
// values are pinned to zero and eliminated; slopes remain free everywhere, so
// a mesh with N elements carries 2N unknowns.
struct DofMap {
  int n_nodes = 0;
  int n_dofs = 0;
  std::vector<int> value_dof;  // -1 where eliminated
  std::vector<int> slope_dof;

  static DofMap reduced(int n_nodes) {
    DofMap m;
    m.n_nodes = n_nodes;
    m.value_dof.assign(n_nodes, -1);
    m.slope_dof.assign(n_nodes, -1);
    int next = 0;
    for (int k = 0; k < n_nodes; ++k) {
      const bool boundary = (k == 0 || k == n_nodes - 1);
      if (!boundary) m.value_dof[k] = next++;
      m.slope_dof[k] = next++;
    }
    m.n_dofs = next;
    return m;
  }
};

// Uniform mesh of the unit interval with cached quadrature data.  The mesh is
// uniform, so the shape evaluations at quadrature points are shared by all
// elements.
struct Mesh {
  int n_elements;
  int n_gauss;
  double h;
  GaussRule rule;
  std::vector<ShapeEval> quad_shapes;  // one per quadrature point
  DofMap dofs;

  explicit Mesh(int n_elements_, int n_gauss_ = 4)
      : n_elements(n_elements_), n_gauss(n_gauss_) {
    if (n_elements < 2)
      throw std::invalid_argument("Mesh: need at least 2 elements, got " +
                                  std::to_string(n_elements));
    if (n_gauss < 4)
      throw std::invalid_argument("Mesh: need at least 4 quadrature points, got " +
                                  std::to_string(n_gauss));
    h = 1.0 / n_elements;
    rule = GaussRule::make(n_gauss);
    quad_shapes.reserve(n_gauss);
    for (int g = 0; g < n_gauss; ++g)
      quad_shapes.push_back(hermite_shapes(rule.points[g], h));
    dofs = DofMap::reduced(n_elements + 1);
  }

  int n_nodes() const { return n_elements + 1; }
  double node_s(int k) const { return k * h; }
  // Physical coordinate of quadrature point g inside element e.
  double quad_s(int e, int g) const { return (e + rule.points[g]) * h; }
  double quad_weight(int g) const { return rule.weights[g] * h; }
};

}  // namespace invfrac
