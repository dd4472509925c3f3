#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace invfrac {

// Slack below zero stretch that is treated as round-off and clamped rather
// than rejected.
inline constexpr double kZeroStretchSlack = 1e-12;

struct ModelParams {
  double epsilon = 0.03;  // interfacial (strain-gradient) modulus
  double beta = 3.0;      // stored-energy scale of the layer
  double k = 2.0;         // foundation stiffness of the elastic core

  void validate() const {
    if (!(epsilon > 0.0))
      throw std::invalid_argument("ModelParams: epsilon must be positive, got " +
                                  std::to_string(epsilon));
    if (!(beta > 0.0))
      throw std::invalid_argument("ModelParams: beta must be positive, got " +
                                  std::to_string(beta));
    if (!(k > 0.0))
      throw std::invalid_argument("ModelParams: k must be positive, got " +
                                  std::to_string(k));
  }
};

// Stored energy per unit reference length as a function of the direct stretch
// F > 0.  Quadratic in (1 - 1/F): a single well at F = 1, bounded as F -> inf.
inline double energy_direct(double F, const ModelParams& p) {
  if (!(F > 0.0))
    throw std::domain_error("energy_direct: stretch F must be positive, got " +
                            std::to_string(F));
  const double t = 1.0 - 1.0 / F;
  return p.beta / 6.0 * t * t;
}

// Energy density per unit deformed length in terms of the inverse stretch
// H = 1/F, extended by continuity to H = 0 (fully opened crack).  This is the
// cubic polynomial (beta/6) H (1-H)^2 with wells at H = 0 and H = 1, together
// with its derivatives.  No domain gate: quadrature and the characteristic
// equation evaluate it wherever the polynomial is needed.
inline double wstar_extended(double H, int order, const ModelParams& p) {
  switch (order) {
    case 0: {
      const double t = 1.0 - H;
      return p.beta / 6.0 * H * t * t;
    }
    case 1:
      return p.beta / 6.0 * (1.0 + H * (-4.0 + 3.0 * H));
    case 2:
      return p.beta / 3.0 * (3.0 * H - 2.0);
    case 3:
      return p.beta;
    default:
      throw std::invalid_argument("wstar_extended: derivative order must be 0..3, got " +
                                  std::to_string(order));
  }
}

// Gated evaluation of the inverse-form energy density.  Values of H below
// -kZeroStretchSlack indicate interpenetration and are rejected; values in
// [-kZeroStretchSlack, 0) are round-off from an active crack and clamp to 0.
inline double energy_inverse(double H, const ModelParams& p, int order = 0) {
  if (H < -kZeroStretchSlack)
    throw std::domain_error("energy_inverse: inverse stretch H = " + std::to_string(H) +
                            " is negative beyond round-off slack");
  return wstar_extended(H < 0.0 ? 0.0 : H, order, p);
}

}  // namespace invfrac
