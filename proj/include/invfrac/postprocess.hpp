#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "invfrac/assembly.hpp"
#include "invfrac/continuation.hpp"
#include "invfrac/mesh.hpp"
#include "invfrac/state.hpp"

namespace invfrac {

// Coincident stretches below this spacing are treated as a fold when
// differencing along a branch.
inline constexpr double kFoldSpacingTol = 1e-12;

// Fill sigma = dI/dlambda at every branch point by second-order differencing
// in the branch ordering.  Interior points use the non-uniform three-point
// formula; at folds (where lambda reverses or repeats) the symmetric
// difference ratio is used instead and the point is flagged.  Endpoints get
// one-sided second-order stencils.
inline void fill_stress(Branch& branch) {
  auto& pts = branch.points;
  const int n = static_cast<int>(pts.size());
  if (n < 3) {
    for (auto& pt : pts) pt.sigma = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const auto lam = [&](int i) { return pts[i].state.lambda; };
  const auto val = [&](int i) { return pts[i].istar; };

  for (int i = 1; i + 1 < n; ++i) {
    const double hm = lam(i) - lam(i - 1);
    const double hp = lam(i + 1) - lam(i);
    if (std::abs(hm) < kFoldSpacingTol || std::abs(hp) < kFoldSpacingTol ||
        (hm > 0.0) != (hp > 0.0)) {
      // Fold: lambda is not locally invertible, fall back to the chord slope
      // across the fold and mark the sample.
      const double dl = lam(i + 1) - lam(i - 1);
      pts[i].sigma = std::abs(dl) < kFoldSpacingTol
                         ? std::numeric_limits<double>::quiet_NaN()
                         : (val(i + 1) - val(i - 1)) / dl;
      pts[i].sigma_at_fold = true;
      continue;
    }
    pts[i].sigma = -hp / (hm * (hm + hp)) * val(i - 1) +
                   (hp - hm) / (hm * hp) * val(i) +
                   hm / (hp * (hm + hp)) * val(i + 1);
  }

  // One-sided second-order stencils at the ends, guarded against folds.
  const auto one_sided = [&](int i0, int i1, int i2) {
    const double h1 = lam(i1) - lam(i0);
    const double h2 = lam(i2) - lam(i1);
    if (std::abs(h1) < kFoldSpacingTol || std::abs(h2) < kFoldSpacingTol ||
        (h1 > 0.0) != (h2 > 0.0))
      return std::numeric_limits<double>::quiet_NaN();
    return -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * val(i0) +
           (h1 + h2) / (h1 * h2) * val(i1) - h1 / (h2 * (h1 + h2)) * val(i2);
  };
  pts[0].sigma = one_sided(0, 1, 2);
  pts[n - 1].sigma = one_sided(n - 1, n - 2, n - 3);
}

// Pointwise reconstruction of the physical fields of one solution: inverse
// stretch H over the deformed coordinate y, and the direct deformation
// y = f(x) as the generalized inverse of the reference map x = h(y).
struct FieldSample {
  std::vector<double> s;  // normalized deformed coordinate, dense grid
  std::vector<double> u;  // rescaled inverse deformation at s
  std::vector<double> y;  // deformed coordinate, y = lambda s
  std::vector<double> H;  // inverse stretch at y
  std::vector<double> x;  // reference coordinate grid
  std::vector<double> f;  // deformed position of reference point x
};

namespace detail {

// Hermite evaluation of u and u' at reference coordinate xi of element e.
inline void eval_element(const Mesh& mesh, const NodalState& st, int e, double xi,
                         double& u, double& up) {
  const ShapeEval sh = hermite_shapes(xi, mesh.h);
  const auto de = element_dofs(st, e);
  u = 0.0;
  up = 0.0;
  for (int i = 0; i < 4; ++i) {
    u += sh.value[i] * de[i];
    up += sh.d1[i] * de[i];
  }
}

// Reference position x = s + u(s) as a cubic inside element e.
inline double href_at(const Mesh& mesh, const NodalState& st, int e, double xi) {
  double u, up;
  eval_element(mesh, st, e, xi, u, up);
  return (e + xi) * mesh.h + u;
}

// Leftmost s in element e with s + u(s) >= x, assuming the element brackets x.
inline double invert_in_element(const Mesh& mesh, const NodalState& st, int e, double x,
                                int subsamples) {
  double lo = 0.0, hi = 1.0;
  double prev = href_at(mesh, st, e, 0.0);
  for (int j = 1; j <= subsamples; ++j) {
    const double xi = static_cast<double>(j) / subsamples;
    const double v = href_at(mesh, st, e, xi);
    if (prev < x && v >= x) {
      lo = static_cast<double>(j - 1) / subsamples;
      hi = xi;
      break;
    }
    prev = v;
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (href_at(mesh, st, e, mid) >= x)
      hi = mid;
    else
      lo = mid;
  }
  return (e + hi) * mesh.h;
}

}  // namespace detail

inline FieldSample reconstruct_fields(const Mesh& mesh, const NodalState& st,
                                      int samples_per_element = 10,
                                      double h_floor = kQuadFeasibilityFloor) {
  if (samples_per_element < 2)
    throw std::invalid_argument("reconstruct_fields: need at least 2 samples per element");
  const double lam = st.lambda;
  const int m = samples_per_element;
  const int n_pts = mesh.n_elements * m + 1;

  FieldSample out;
  out.s.reserve(n_pts);
  out.u.reserve(n_pts);
  out.y.reserve(n_pts);
  out.H.reserve(n_pts);
  for (int e = 0; e < mesh.n_elements; ++e) {
    const int last = (e == mesh.n_elements - 1) ? m : m - 1;
    for (int j = 0; j <= last; ++j) {
      const double xi = static_cast<double>(j) / m;
      double u, up;
      detail::eval_element(mesh, st, e, xi, u, up);
      const double H = (1.0 + up) / lam;
      if (H < h_floor) throw InfeasibleStateError(H, "reconstruct_fields");
      const double s = (e + xi) * mesh.h;
      out.s.push_back(s);
      out.u.push_back(u);
      out.y.push_back(lam * s);
      out.H.push_back(std::max(H, 0.0));
    }
  }

  // Generalized inverse f(x) = lambda * inf{ s : s + u(s) >= x }.  The nodal
  // reference positions are made monotone (discrete dips inside cracked
  // elements are round-level flats) and each x is inverted exactly on the
  // cubic of the bracketing element.
  std::vector<double> env(mesh.n_nodes());
  for (int k = 0; k < mesh.n_nodes(); ++k) {
    const double hk = mesh.node_s(k) + st.u[k];
    env[k] = (k == 0) ? hk : std::max(env[k - 1], hk);
  }
  out.x.resize(n_pts);
  out.f.resize(n_pts);
  for (int i = 0; i < n_pts; ++i) {
    const double x = static_cast<double>(i) / (n_pts - 1);
    double sstar;
    if (x <= env[0]) {
      sstar = 0.0;
    } else if (x >= env[mesh.n_nodes() - 1]) {
      sstar = 1.0;
    } else {
      int k = static_cast<int>(std::lower_bound(env.begin(), env.end(), x) - env.begin());
      sstar = detail::invert_in_element(mesh, st, k - 1, x, m);
    }
    out.x[i] = x;
    out.f[i] = lam * sstar;
  }
  return out;
}

// One fully opened region: a maximal run of consecutive active nodes.
struct Crack {
  int node_first = 0;
  int node_last = 0;
  double position = 0.0;  // reference coordinate x of the crack faces
  double width = 0.0;     // deformed length of the opened run
  bool end = false;       // touches a boundary of the layer
};

inline std::vector<Crack> crack_census(const Mesh& mesh, const NodalState& st) {
  std::vector<Crack> cracks;
  const auto& nodes = st.active.nodes;
  size_t i = 0;
  while (i < nodes.size()) {
    size_t j = i;
    while (j + 1 < nodes.size() && nodes[j + 1] == nodes[j] + 1) ++j;
    Crack c;
    c.node_first = nodes[i];
    c.node_last = nodes[j];
    double xsum = 0.0;
    for (size_t t = i; t <= j; ++t)
      xsum += mesh.node_s(nodes[t]) + st.u[nodes[t]];
    c.position = xsum / static_cast<double>(j - i + 1);
    c.width = st.lambda * (mesh.node_s(nodes[j]) - mesh.node_s(nodes[i]));
    c.end = (nodes[i] == 0) || (nodes[j] == mesh.n_nodes() - 1);
    cracks.push_back(c);
    i = j + 1;
  }
  return cracks;
}

// Stretch at which a fractured branch becomes energetically preferable to
// the homogeneous one, located on the stable segments of both.
struct CrossoverResult {
  bool found = false;
  bool degenerate = false;  // branches indistinguishable over the window
  double lambda = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct Curve {
  std::vector<double> lambda, value;
};

inline Curve stable_curve(const Branch& br) {
  Curve c;
  for (const auto& pt : br.points) {
    if (!pt.stable || pt.healing) continue;
    c.lambda.push_back(pt.state.lambda);
    c.value.push_back(pt.istar);
  }
  // Sort by stretch and drop duplicates closer than the fold tolerance.
  std::vector<int> order(c.lambda.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return c.lambda[a] < c.lambda[b]; });
  Curve s;
  for (int idx : order) {
    if (!s.lambda.empty() && c.lambda[idx] - s.lambda.back() < kFoldSpacingTol) continue;
    s.lambda.push_back(c.lambda[idx]);
    s.value.push_back(c.value[idx]);
  }
  return s;
}

inline double interp(const Curve& c, double lam) {
  const auto it = std::upper_bound(c.lambda.begin(), c.lambda.end(), lam);
  int hi = static_cast<int>(it - c.lambda.begin());
  hi = std::clamp(hi, 1, static_cast<int>(c.lambda.size()) - 1);
  const int lo = hi - 1;
  const double w = (lam - c.lambda[lo]) / (c.lambda[hi] - c.lambda[lo]);
  return c.value[lo] + w * (c.value[hi] - c.value[lo]);
}

}  // namespace detail

inline CrossoverResult energy_crossover(const Branch& reference, const Branch& other) {
  CrossoverResult out;
  const detail::Curve a = detail::stable_curve(reference);
  const detail::Curve b = detail::stable_curve(other);
  if (a.lambda.size() < 2 || b.lambda.size() < 2) return out;

  const double lo = std::max(a.lambda.front(), b.lambda.front());
  const double hi = std::min(a.lambda.back(), b.lambda.back());
  if (!(hi > lo)) return out;

  // Difference of the two interpolants on the merged sample set.
  std::vector<double> grid;
  for (double l : a.lambda)
    if (l >= lo && l <= hi) grid.push_back(l);
  for (double l : b.lambda)
    if (l >= lo && l <= hi) grid.push_back(l);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  if (grid.size() < 2) return out;

  std::vector<double> diff(grid.size());
  double max_abs = 0.0;
  for (size_t i = 0; i < grid.size(); ++i) {
    diff[i] = detail::interp(b, grid[i]) - detail::interp(a, grid[i]);
    max_abs = std::max(max_abs, std::abs(diff[i]));
  }
  if (max_abs < 1e-14) {
    out.degenerate = true;
    return out;
  }

  for (size_t i = 0; i + 1 < grid.size(); ++i) {
    if (diff[i] == 0.0) {
      out.found = true;
      out.lambda = grid[i];
      return out;
    }
    if ((diff[i] > 0.0) != (diff[i + 1] > 0.0)) {
      out.found = true;
      out.lambda = grid[i] - diff[i] * (grid[i + 1] - grid[i]) / (diff[i + 1] - diff[i]);
      return out;
    }
  }
  return out;
}

}  // namespace invfrac
