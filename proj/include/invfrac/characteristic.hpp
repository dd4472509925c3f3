#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "invfrac/model.hpp"

namespace invfrac {

// Roots of the characteristic equation closer than this (across different
// mode numbers) make the bifurcation analysis non-generic.
inline constexpr double kModeCoincidenceTol = 1e-8;
// A root is treated as simple when the lambda-derivative of the
// characteristic residual exceeds this.
inline constexpr double kSimplicityTol = 1e-8;
// Refined roots must satisfy |char_residual| below this.
inline constexpr double kRootResidualTol = 1e-10;

struct NonGenericParameterError : std::runtime_error {
  int mode_a, mode_b;
  double lambda_a, lambda_b;
  NonGenericParameterError(int na, int nb, double la, double lb)
      : std::runtime_error("non-generic parameters: characteristic roots of modes " +
                          std::to_string(na) + " and " + std::to_string(nb) +
                          " coincide at lambda = " + std::to_string(la)),
        mode_a(na), mode_b(nb), lambda_a(la), lambda_b(lb) {}
  NonGenericParameterError(const std::string& why, int na, int nb, double la, double lb)
      : std::runtime_error("non-generic parameters: " + why),
        mode_a(na), mode_b(nb), lambda_a(la), lambda_b(lb) {}
};

// Residual of the characteristic equation for sinusoidal perturbations of the
// homogeneous state:  eps (n pi)^4 + lambda^2 Wstar''(1/lambda) (n pi)^2
// + k lambda^5.  A root in lambda marks a candidate bifurcation of mode n.
inline double char_residual(double lambda, int n, const ModelParams& p) {
  if (!(lambda > 0.0))
    throw std::domain_error("char_residual: lambda must be positive");
  const double npi = n * std::numbers::pi;
  const double npi2 = npi * npi;
  return p.epsilon * npi2 * npi2 +
         lambda * lambda * wstar_extended(1.0 / lambda, 2, p) * npi2 +
         p.k * std::pow(lambda, 5);
}

// d/dlambda of char_residual.  Doubles as the simplicity measure: a root is
// simple exactly when the residual crosses zero with nonzero slope.
inline double char_residual_dlambda(double lambda, int n, const ModelParams& p) {
  const double npi = n * std::numbers::pi;
  const double npi2 = npi * npi;
  const double slope = 2.0 * lambda * wstar_extended(1.0 / lambda, 2, p) -
                       wstar_extended(1.0 / lambda, 3, p);
  return slope * npi2 + 5.0 * p.k * std::pow(lambda, 4);
}

// Foundation stiffness at which mode n bifurcates at stretch lambda: the
// characteristic equation solved for k.
inline double k_of_lambda(double lambda, int n, const ModelParams& p) {
  if (!(lambda > 0.0))
    throw std::domain_error("k_of_lambda: lambda must be positive");
  const double npi = n * std::numbers::pi;
  const double npi2 = npi * npi;
  const double lam5 = std::pow(lambda, 5);
  return -(p.epsilon * npi2 * npi2 +
           lambda * lambda * wstar_extended(1.0 / lambda, 2, p) * npi2) / lam5;
}

// Rescaled second-variation eigenvalue of the homogeneous state against the
// mode-n perturbation; positive means the mode is stable at this stretch.
inline double trivial_eigenvalue(double lambda, int n, const ModelParams& p) {
  return char_residual(lambda, n, p) / std::pow(lambda, 5);
}

struct TrivialStability {
  bool stable;        // all modes up to n_max have positive eigenvalue
  int weakest_mode;   // mode with the smallest eigenvalue
  double min_eigenvalue;
};

inline TrivialStability trivial_stability(double lambda, const ModelParams& p,
                                          int n_max = 10) {
  if (n_max < 1) throw std::invalid_argument("trivial_stability: n_max must be >= 1");
  TrivialStability out{true, 1, std::numeric_limits<double>::infinity()};
  for (int n = 1; n <= n_max; ++n) {
    const double sig = trivial_eigenvalue(lambda, n, p);
    if (sig < out.min_eigenvalue) {
      out.min_eigenvalue = sig;
      out.weakest_mode = n;
    }
  }
  out.stable = out.min_eigenvalue > 0.0;
  return out;
}

struct BifurcationRoot {
  int mode = 0;
  double lambda = 0.0;
  double simplicity = 0.0;  // slope of the characteristic residual at the root
  bool simple = false;
  bool critical = false;    // smallest lambda among all modes
};

struct SimplicityCheck {
  double value;
  bool simple;
};

inline SimplicityCheck simplicity_check(double lambda, int n, const ModelParams& p) {
  const double v = char_residual_dlambda(lambda, n, p);
  return {v, std::abs(v) > kSimplicityTol};
}

namespace detail {

// Refine a sign-changing bracket of char_residual with safeguarded Newton;
// falls back to bisection whenever the Newton step leaves the bracket.
inline double refine_char_root(double lo, double hi, int n, const ModelParams& p) {
  double flo = char_residual(lo, n, p);
  double fhi = char_residual(hi, n, p);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double f = char_residual(x, n, p);
    if (std::abs(f) <= kRootResidualTol) return x;
    // Maintain the bracket.
    if ((f > 0.0) == (flo > 0.0)) { lo = x; flo = f; } else { hi = x; fhi = f; }
    const double df = char_residual_dlambda(x, n, p);
    double xn = (df != 0.0) ? x - f / df : lo;
    if (!(xn > lo) || !(xn < hi)) xn = 0.5 * (lo + hi);
    if (xn == x) return x;  // interval exhausted at round-off
    x = xn;
  }
  return x;
}

}  // namespace detail

// Scan each mode's characteristic curve over the stretch window and collect
// all bifurcation stretches for the given foundation stiffness.  Results are
// ordered by (mode, lambda).  Throws NonGenericParameterError when roots of
// two different modes coincide within kModeCoincidenceTol.
inline std::vector<BifurcationRoot> find_roots(const ModelParams& p, int n_max = 10,
                                               double lambda_lo = 1.01,
                                               double lambda_hi = 10.0,
                                               double grid_step = 1e-3) {
  p.validate();
  if (n_max < 1) throw std::invalid_argument("find_roots: n_max must be >= 1");
  if (!(lambda_lo > 0.0) || !(lambda_hi > lambda_lo))
    throw std::invalid_argument("find_roots: invalid lambda window");

  std::vector<BifurcationRoot> roots;
  for (int n = 1; n <= n_max; ++n) {
    double prev_lambda = lambda_lo;
    double prev_f = char_residual(prev_lambda, n, p);
    const int steps = static_cast<int>(std::ceil((lambda_hi - lambda_lo) / grid_step));
    for (int i = 1; i <= steps; ++i) {
      const double lam = std::min(lambda_lo + i * grid_step, lambda_hi);
      const double f = char_residual(lam, n, p);
      if (prev_f == 0.0 || (prev_f > 0.0) != (f > 0.0)) {
        BifurcationRoot r;
        r.mode = n;
        r.lambda = detail::refine_char_root(prev_lambda, lam, n, p);
        const auto sc = simplicity_check(r.lambda, n, p);
        r.simplicity = sc.value;
        r.simple = sc.simple;
        roots.push_back(r);
      }
      prev_lambda = lam;
      prev_f = f;
    }
  }

  // Cross-mode coincidences make branch switching ill-posed.
  for (size_t i = 0; i < roots.size(); ++i)
    for (size_t j = i + 1; j < roots.size(); ++j)
      if (roots[i].mode != roots[j].mode &&
          std::abs(roots[i].lambda - roots[j].lambda) < kModeCoincidenceTol)
        throw NonGenericParameterError(roots[i].mode, roots[j].mode,
                                       roots[i].lambda, roots[j].lambda);

  if (!roots.empty()) {
    auto it = std::min_element(roots.begin(), roots.end(),
                               [](const BifurcationRoot& a, const BifurcationRoot& b) {
                                 return a.lambda < b.lambda;
                               });
    it->critical = true;
  }
  std::sort(roots.begin(), roots.end(),
            [](const BifurcationRoot& a, const BifurcationRoot& b) {
              return a.mode != b.mode ? a.mode < b.mode : a.lambda < b.lambda;
            });
  return roots;
}

// Convenience: the critical root (smallest bifurcation stretch), if any.
inline const BifurcationRoot* critical_root(const std::vector<BifurcationRoot>& roots) {
  for (const auto& r : roots)
    if (r.critical) return &r;
  return nullptr;
}

}  // namespace invfrac
