#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "invfrac/assembly.hpp"
#include "invfrac/characteristic.hpp"
#include "invfrac/mesh.hpp"
#include "invfrac/model.hpp"
#include "invfrac/state.hpp"

using namespace invfrac;

namespace {

ModelParams defaults() { return ModelParams{}; }

// Interpolate an analytic profile (value + slope) onto the nodes.
template <class F, class G>
NodalState interpolate(const Mesh& mesh, double lambda, F&& u, G&& up) {
  NodalState s = NodalState::trivial(mesh, lambda);
  for (int k = 0; k < mesh.n_nodes(); ++k) {
    const double sk = mesh.node_s(k);
    s.u[k] = u(sk);
    s.up[k] = up(sk);
  }
  s.u[0] = 0.0;
  s.u[mesh.n_nodes() - 1] = 0.0;
  return s;
}

// Random smooth state (a short Fourier sum), kept well inside the feasible
// set: nodal values and slopes are consistent, so the interpolant cannot
// overshoot the constraint between nodes.
NodalState random_state(const Mesh& mesh, std::mt19937& rng) {
  std::uniform_real_distribution<double> lam(1.3, 2.5);
  std::uniform_real_distribution<double> amp(-0.02, 0.02);
  NodalState s = NodalState::trivial(mesh, lam(rng));
  double a[4];
  for (double& c : a) c = amp(rng);
  for (int k = 0; k < mesh.n_nodes(); ++k) {
    const double sk = mesh.node_s(k);
    double u = 0.0, up = 0.0;
    for (int n = 1; n <= 4; ++n) {
      const double npi = n * std::numbers::pi;
      u += a[n - 1] * std::sin(npi * sk);
      up += a[n - 1] * npi * std::cos(npi * sk);
    }
    s.u[k] = u;
    s.up[k] = up;
  }
  s.u[0] = 0.0;
  s.u[mesh.n_nodes() - 1] = 0.0;
  return s;
}

}  // namespace

TEST_CASE("hermite shapes: nodal interpolation and linear reproduction") {
  const double h = 0.1;
  // Value shapes are 1 at their own node, 0 at the other; slope shapes have
  // unit derivative at their own node.
  const ShapeEval at0 = hermite_shapes(0.0, h);
  const ShapeEval at1 = hermite_shapes(1.0, h);
  CHECK(at0.value[0] == Catch::Approx(1.0));
  CHECK(at0.value[2] == Catch::Approx(0.0).margin(1e-15));
  CHECK(at1.value[2] == Catch::Approx(1.0));
  CHECK(at0.d1[1] == Catch::Approx(1.0));
  CHECK(at1.d1[3] == Catch::Approx(1.0));
  CHECK(at0.d1[3] == Catch::Approx(0.0).margin(1e-13));

  // A linear field u = a + b s is reproduced exactly inside the element.
  const double a = 0.37, b = -1.21;
  const std::array<double, 4> de{a, b, a + b * h, b};
  for (double xi : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const ShapeEval sh = hermite_shapes(xi, h);
    double u = 0.0, up = 0.0, upp = 0.0;
    for (int i = 0; i < 4; ++i) {
      u += sh.value[i] * de[i];
      up += sh.d1[i] * de[i];
      upp += sh.d2[i] * de[i];
    }
    CHECK(u == Catch::Approx(a + b * xi * h).margin(1e-14));
    CHECK(up == Catch::Approx(b).margin(1e-12));
    CHECK(upp == Catch::Approx(0.0).margin(1e-10));
  }
}

TEST_CASE("gauss rule: weights sum to the interval and integrate degree 7") {
  const GaussRule r = GaussRule::make(4);
  double wsum = 0.0, m7 = 0.0;
  for (int g = 0; g < 4; ++g) {
    wsum += r.weights[g];
    m7 += r.weights[g] * std::pow(r.points[g], 7);
  }
  CHECK(wsum == Catch::Approx(1.0).margin(1e-14));
  CHECK(m7 == Catch::Approx(1.0 / 8.0).margin(1e-14));  // int_0^1 x^7 dx
}

TEST_CASE("dof map: boundary values eliminated, 2N reduced dofs") {
  const Mesh mesh(10);
  CHECK(mesh.dofs.n_dofs == 20);
  CHECK(mesh.dofs.value_dof[0] == -1);
  CHECK(mesh.dofs.value_dof[10] == -1);
  CHECK(mesh.dofs.slope_dof[0] == 0);
  CHECK(mesh.dofs.slope_dof[10] == 19);
  // pack/unpack round-trip restores the state exactly.
  std::mt19937 rng(7);
  NodalState s = random_state(mesh, rng);
  NodalState t = NodalState::trivial(mesh, s.lambda);
  unpack(mesh, pack(mesh, s), t);
  CHECK((t.u - s.u).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((t.up - s.up).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("energy of the homogeneous state matches the closed form") {
  const ModelParams p = defaults();
  const Mesh mesh(100);
  // I*[lambda, 0] = lambda Wstar(1/lambda) = (beta/6)(1 - 1/lambda)^2.
  for (double lam : {1.2, 1.7, 2.0, 2.8}) {
    const NodalState s = NodalState::trivial(mesh, lam);
    const double expect = p.beta / 6.0 * std::pow(1.0 - 1.0 / lam, 2);
    CHECK(assemble_scaled_energy(mesh, p, s) == Catch::Approx(expect).margin(1e-10));
  }
  // At lambda = 2, beta = 3 the value is exactly 1/8.
  CHECK(assemble_scaled_energy(mesh, p, NodalState::trivial(mesh, 2.0)) ==
        Catch::Approx(0.125).margin(1e-12));
}

TEST_CASE("residual vanishes on the homogeneous state") {
  const ModelParams p = defaults();
  const Mesh mesh(60);
  const Eigen::VectorXd r = assemble_residual(mesh, p, NodalState::trivial(mesh, 2.0));
  CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("quadrature energy matches a dense independent integration") {
  const ModelParams p = defaults();
  const Mesh mesh(8);
  const double lam = 1.8;
  const NodalState s = interpolate(
      mesh, lam, [](double x) { return 0.04 * std::sin(3 * std::numbers::pi * x); },
      [](double x) {
        return 0.04 * 3 * std::numbers::pi * std::cos(3 * std::numbers::pi * x);
      });

  // Composite Simpson on each element's cubic, dense enough to be an oracle.
  const double lam4 = std::pow(lam, 4), lam5 = lam4 * lam;
  double J = 0.0;
  const int m = 2000;
  for (int e = 0; e < mesh.n_elements; ++e) {
    const auto de = detail::element_dofs(s, e);
    auto f = [&](double xi) {
      const ShapeEval sh = hermite_shapes(xi, mesh.h);
      double u = 0, up = 0, upp = 0;
      for (int i = 0; i < 4; ++i) {
        u += sh.value[i] * de[i];
        up += sh.d1[i] * de[i];
        upp += sh.d2[i] * de[i];
      }
      return 0.5 * p.epsilon * upp * upp + lam4 * wstar_extended((1.0 + up) / lam, 0, p) +
             0.5 * lam5 * p.k * u * u;
    };
    double acc = f(0.0) + f(1.0);
    for (int j = 1; j < m; ++j) acc += (j % 2 ? 4.0 : 2.0) * f(static_cast<double>(j) / m);
    J += acc * mesh.h / (3.0 * m);
  }
  CHECK(assemble_energy(mesh, p, s) == Catch::Approx(J).margin(1e-12));
}

TEST_CASE("residual is the gradient of the energy (finite differences)") {
  const ModelParams p = defaults();
  const Mesh mesh(12);
  std::mt19937 rng(42);
  const double fd = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    NodalState s = random_state(mesh, rng);
    const Eigen::VectorXd r = assemble_residual(mesh, p, s);
    const Eigen::VectorXd d0 = pack(mesh, s);
    const double scale = std::max(1.0, r.lpNorm<Eigen::Infinity>());
    for (int i = 0; i < mesh.dofs.n_dofs; ++i) {
      Eigen::VectorXd d = d0;
      d[i] = d0[i] + fd;
      unpack(mesh, d, s);
      const double jp = assemble_energy(mesh, p, s);
      d[i] = d0[i] - fd;
      unpack(mesh, d, s);
      const double jm = assemble_energy(mesh, p, s);
      CHECK(std::abs((jp - jm) / (2 * fd) - r[i]) / scale <= 1e-5);
    }
    unpack(mesh, d0, s);
  }
}

TEST_CASE("tangent is the Jacobian of the residual (finite differences)") {
  const ModelParams p = defaults();
  const Mesh mesh(10);
  std::mt19937 rng(99);
  const double fd = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    NodalState s = random_state(mesh, rng);
    const Eigen::MatrixXd G = assemble_tangent(mesh, p, s);
    const Eigen::VectorXd d0 = pack(mesh, s);
    const double scale = std::max(1.0, G.cwiseAbs().maxCoeff());
    for (int i = 0; i < mesh.dofs.n_dofs; ++i) {
      Eigen::VectorXd d = d0;
      d[i] = d0[i] + fd;
      unpack(mesh, d, s);
      const Eigen::VectorXd rp = assemble_residual(mesh, p, s);
      d[i] = d0[i] - fd;
      unpack(mesh, d, s);
      const Eigen::VectorXd rm = assemble_residual(mesh, p, s);
      const Eigen::VectorXd col = (rp - rm) / (2 * fd);
      CHECK((col - G.col(i)).lpNorm<Eigen::Infinity>() / scale <= 1e-4);
    }
    unpack(mesh, d0, s);
  }
}

TEST_CASE("lambda-derivative of the residual (finite differences)") {
  const ModelParams p = defaults();
  const Mesh mesh(10);
  std::mt19937 rng(123);
  const double fd = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    NodalState s = random_state(mesh, rng);
    const Eigen::VectorXd rl = assemble_residual_dlambda(mesh, p, s);
    const double lam0 = s.lambda;
    s.lambda = lam0 + fd;
    const Eigen::VectorXd rp = assemble_residual(mesh, p, s);
    s.lambda = lam0 - fd;
    const Eigen::VectorXd rm = assemble_residual(mesh, p, s);
    s.lambda = lam0;
    const Eigen::VectorXd col = (rp - rm) / (2 * fd);
    const double scale = std::max(1.0, rl.lpNorm<Eigen::Infinity>());
    CHECK((col - rl).lpNorm<Eigen::Infinity>() / scale <= 1e-5);
  }
}

TEST_CASE("tangent is assembled bitwise symmetric") {
  const ModelParams p = defaults();
  const Mesh mesh(14);
  std::mt19937 rng(5);
  const NodalState s = random_state(mesh, rng);
  const Eigen::MatrixXd G = assemble_tangent(mesh, p, s);
  CHECK((G - G.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("second variation at the homogeneous state matches the dispersion relation") {
  const ModelParams p = defaults();
  const Mesh mesh(100);
  // For eta = sin(n pi s): eta' G eta = (eps (n pi)^4 + lambda^2 Wstar''(n pi)^2
  // + k lambda^5) / 2 = lambda^5 sigma_n / 2.
  for (int n : {1, 2, 3, 4}) {
    for (double lam : {1.5, 2.0, 2.6}) {
      const NodalState s = NodalState::trivial(mesh, lam);
      const Eigen::MatrixXd G = assemble_tangent(mesh, p, s);
      const double npi = n * std::numbers::pi;
      const NodalState eta = interpolate(
          mesh, lam, [&](double x) { return std::sin(npi * x); },
          [&](double x) { return npi * std::cos(npi * x); });
      const Eigen::VectorXd v = pack(mesh, eta);
      const double quad = v.dot(G * v);
      const double expect = 0.5 * std::pow(lam, 5) * trivial_eigenvalue(lam, n, p);
      CHECK(quad == Catch::Approx(expect).epsilon(0.01));
    }
  }
}

TEST_CASE("constraint jacobian has one unit entry per active node") {
  const Mesh mesh(10);
  ActiveSet active;
  active.insert(0);
  active.insert(4);
  active.insert(10);
  const Eigen::MatrixXd A = constraint_jacobian(mesh, active);
  REQUIRE(A.rows() == 3);
  REQUIRE(A.cols() == mesh.dofs.n_dofs);
  for (int r = 0; r < 3; ++r) {
    CHECK(A.row(r).sum() == 1.0);
    CHECK(A.row(r).cwiseAbs().sum() == 1.0);
    CHECK(A(r, mesh.dofs.slope_dof[active.nodes[r]]) == 1.0);
  }
}

TEST_CASE("amplitude functional recovers the seeded mode") {
  const Mesh mesh(60);
  for (int n : {2, 3, 5}) {
    const double npi = n * std::numbers::pi;
    const NodalState eta = interpolate(
        mesh, 2.0, [&](double x) { return std::sin(npi * x); },
        [&](double x) { return npi * std::cos(npi * x); });
    // g . d approximates 2 int u sin(n pi s) ds = 1 for u = sin(n pi s).
    const Eigen::VectorXd g = amplitude_functional(mesh, n);
    CHECK(g.dot(pack(mesh, eta)) == Catch::Approx(1.0).margin(1e-6));
    CHECK(mode_correlation(mesh, eta, n) == Catch::Approx(1.0).margin(1e-6));
    // Orthogonality against a different mode.
    const Eigen::VectorXd gother = amplitude_functional(mesh, n + 1);
    CHECK(gother.dot(pack(mesh, eta)) == Catch::Approx(0.0).margin(1e-6));
  }
}

TEST_CASE("null-lagrangian term integrates to zero under the boundary conditions") {
  // int u^2 u' ds telescopes to [u^3/3] = 0 whenever u vanishes at both ends;
  // the assembled quadrature reproduces that cancellation at round-off level.
  const Mesh mesh(10);
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const NodalState s = random_state(mesh, rng);
    double acc = 0.0;
    for (int e = 0; e < mesh.n_elements; ++e) {
      const auto de = detail::element_dofs(s, e);
      for (int g = 0; g < mesh.n_gauss; ++g) {
        const auto q = detail::eval_at_quad(mesh, de, g);
        acc += mesh.quad_weight(g) * q.u * q.u * q.up;
      }
    }
    CHECK(std::abs(acc) <= 1e-10);
  }
}

TEST_CASE("reflection leaves energy invariant and maps residuals consistently") {
  const ModelParams p = defaults();
  const Mesh mesh(16);
  std::mt19937 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const NodalState s = random_state(mesh, rng);
    const NodalState r = reflect(mesh, s);
    CHECK(assemble_energy(mesh, p, r) ==
          Catch::Approx(assemble_energy(mesh, p, s)).epsilon(1e-12));
    CHECK(assemble_residual(mesh, p, r).lpNorm<Eigen::Infinity>() ==
          Catch::Approx(assemble_residual(mesh, p, s).lpNorm<Eigen::Infinity>())
              .epsilon(1e-9));
  }
}

TEST_CASE("energy gate rejects states that cross the feasibility floor") {
  const ModelParams p = defaults();
  const Mesh mesh(10);
  NodalState s = NodalState::trivial(mesh, 2.0);
  // A value drop steeper than the element width with both end slopes on the
  // constraint makes the cubic dip far below it mid-element: at the midpoint
  // u' = 0.5 - 1.5 * 1.4 = -1.6, i.e. H = -0.3, well past the floor.
  s.up[0] = s.up[1] = -1.0;
  s.u[1] = -1.4 * mesh.h;
  CHECK_THROWS_AS(assemble_energy(mesh, p, s), InfeasibleStateError);
  CHECK(min_inverse_stretch(mesh, s) < kQuadFeasibilityFloor);
}

TEST_CASE("interpolated energy converges to the analytic value under refinement") {
  const ModelParams p = defaults();
  const double lam = 2.0;
  const double a = 0.01;
  const double pi = std::numbers::pi;
  // Dense Simpson on the analytic profile u = a sin(pi s).
  auto integrand = [&](double x) {
    const double up = a * pi * std::cos(pi * x);
    const double upp = -a * pi * pi * std::sin(pi * x);
    const double u = a * std::sin(pi * x);
    return 0.5 * p.epsilon * upp * upp +
           std::pow(lam, 4) * wstar_extended((1.0 + up) / lam, 0, p) +
           0.5 * std::pow(lam, 5) * p.k * u * u;
  };
  const int m = 20000;
  double acc = integrand(0.0) + integrand(1.0);
  for (int j = 1; j < m; ++j)
    acc += (j % 2 ? 4.0 : 2.0) * integrand(static_cast<double>(j) / m);
  const double exact = acc / (3.0 * m);

  double err_prev = 0.0;
  for (int n : {25, 50, 100}) {
    const Mesh mesh(n);
    const NodalState s = interpolate(
        mesh, lam, [&](double x) { return a * std::sin(pi * x); },
        [&](double x) { return a * pi * std::cos(pi * x); });
    const double err = std::abs(assemble_energy(mesh, p, s) - exact);
    if (n == 25) err_prev = err;
    if (n == 100) {
      CHECK(err <= 1e-6);
      CHECK(err < err_prev);
    }
  }
}
