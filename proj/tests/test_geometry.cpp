#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "iqs/core.hpp"
#include "iqs/geometry.hpp"
#include "iqs/rng.hpp"

using namespace iqs;

namespace {

CostMatrix random_costs(int n, RngStream& rng) {
  CostMatrix c(n);
  for (double& w : c.w) w = 0.2 + 5.0 * rng.uniform();
  return c;
}

QVec random_vec(int n, RngStream& rng, double lo = -1.0, double hi = 1.0) {
  QVec x(n * n);
  for (double& v : x) v = lo + (hi - lo) * rng.uniform();
  return x;
}

// The 2n cone generators: scaled row indicators then scaled column indicators.
std::vector<QVec> generators(const CostMatrix& c) {
  std::vector<QVec> g;
  for (int i = 0; i < c.n; ++i) {
    QVec v(c.n * c.n, 0.0);
    for (int j = 0; j < c.n; ++j) v[i * c.n + j] = 1.0 / c.at(i, j);
    g.push_back(v);
  }
  for (int j = 0; j < c.n; ++j) {
    QVec v(c.n * c.n, 0.0);
    for (int i = 0; i < c.n; ++i) v[i * c.n + j] = 1.0 / c.at(i, j);
    g.push_back(v);
  }
  return g;
}

// Best feasible candidate over every support set of the generators: for each
// subset solve the unconstrained weighted least squares, keep it only when
// the weights come out nonnegative. The optimum's own support always yields
// a feasible candidate, so the minimum over subsets is the true cone distance.
double brute_force_cone_residual(const QVec& x, const CostMatrix& c) {
  auto gens = generators(c);
  const int dim = c.n * c.n;
  Eigen::VectorXd target(dim);
  for (int k = 0; k < dim; ++k) target[k] = std::sqrt(c.w[k]) * x[k];
  double best = 0.0;
  for (int k = 0; k < dim; ++k) best += c.w[k] * x[k] * x[k];
  best = std::sqrt(best);  // empty support: nearest point is the apex
  for (int mask = 1; mask < (1 << (2 * c.n)); ++mask) {
    std::vector<int> support;
    for (int g = 0; g < 2 * c.n; ++g)
      if (mask & (1 << g)) support.push_back(g);
    Eigen::MatrixXd A(dim, static_cast<int>(support.size()));
    for (std::size_t col = 0; col < support.size(); ++col)
      for (int k = 0; k < dim; ++k) A(k, static_cast<int>(col)) = std::sqrt(c.w[k]) * gens[support[col]][k];
    Eigen::VectorXd w = A.completeOrthogonalDecomposition().solve(target);
    if ((w.array() < -1e-9).any()) continue;
    best = std::min(best, (A * w - target).norm());
  }
  return best;
}

}  // namespace

TEST_CASE("weighted inner product basics") {
  CostMatrix unit = CostMatrix::unit(2);
  QVec e11{1, 0, 0, 0}, e22{0, 0, 0, 1}, ones{1, 1, 1, 1};
  CHECK(c_inner(e11, e11, unit) == 1.0);
  CHECK(c_inner(e11, e22, unit) == 0.0);
  CHECK(c_inner(ones, ones, CostMatrix(2, {2, 10, 10, 2})) == 24.0);
  CHECK(c_norm(e11, CostMatrix(2, {4, 1, 1, 1})) == 2.0);
}

TEST_CASE("balanced-subspace basis is c-orthonormal") {
  RngStream rng(21, 0, RngLane::Aux);
  for (int n : {2, 3, 4}) {
    for (int trial = 0; trial < 10; ++trial) {
      CostMatrix c = random_costs(n, rng);
      SubspaceBasis basis = SubspaceBasis::build(c);
      REQUIRE(static_cast<int>(basis.f.size()) == 2 * n - 1);
      for (std::size_t a = 0; a < basis.f.size(); ++a)
        for (std::size_t b = 0; b <= a; ++b) {
          double want = a == b ? 1.0 : 0.0;
          CHECK(std::abs(c_inner(basis.f[a], basis.f[b], c) - want) < 1e-12);
        }
    }
  }
}

TEST_CASE("subspace projection splits orthogonally") {
  RngStream rng(22, 0, RngLane::Aux);
  for (int n : {2, 3}) {
    for (int trial = 0; trial < 5000; ++trial) {
      CostMatrix c = trial % 2 ? random_costs(n, rng) : CostMatrix::unit(n);
      QVec x = random_vec(n, rng, -3.0, 3.0);
      SplitVec split = project_subspace(x, c);
      for (int k = 0; k < n * n; ++k)
        CHECK(split.par[k] + split.perp[k] == doctest::Approx(x[k]).epsilon(1e-10));
      CHECK(std::abs(c_inner(split.par, split.perp, c)) < 1e-10);
      double lhs = c_norm(x, c) * c_norm(x, c);
      double rhs = c_norm(split.par, c) * c_norm(split.par, c) +
                   c_norm(split.perp, c) * c_norm(split.perp, c);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
      // projecting the balanced part again is a fixed point
      SplitVec again = project_subspace(split.par, c);
      CHECK(c_norm(again.perp, c) < 1e-10);
      for (int k = 0; k < n * n; ++k)
        CHECK(again.par[k] == doctest::Approx(split.par[k]).epsilon(1e-9).scale(1));
    }
  }
}

TEST_CASE("balanced vectors are projection fixed points") {
  CostMatrix c(2, {2, 10, 10, 2});
  QVec x(4);
  // x_ij = (w_i + wt_j)/c_ij lies in the balanced subspace by construction
  double w[2] = {1.0, 2.5}, wt[2] = {0.3, -0.7};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) x[i * 2 + j] = (w[i] + wt[j]) / c.at(i, j);
  SplitVec split = project_subspace(x, c);
  CHECK(c_norm(split.perp, c) < 1e-12);
}

TEST_CASE("unit coordinate keeps three quarters of its mass in the subspace") {
  CostMatrix unit = CostMatrix::unit(2);
  SplitVec split = project_subspace({1, 0, 0, 0}, unit);
  double par_sq = c_norm(split.par, unit) * c_norm(split.par, unit);
  CHECK(par_sq == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("cone projection on pinned inputs") {
  CostMatrix unit = CostMatrix::unit(2);
  ConeSplit flat = project_cone({2, 2, 2, 2}, unit);
  CHECK(c_norm(flat.perp, unit) < 1e-9);

  ConeSplit neg = project_cone({-1, -1, -1, -1}, unit);
  CHECK(c_norm(neg.par, unit) < 1e-9);
  for (int k = 0; k < 4; ++k) CHECK(neg.perp[k] == doctest::Approx(-1.0).epsilon(1e-9));
  for (double w : neg.gen_weights) CHECK(w >= 0.0);
}

TEST_CASE("cone residual dominates subspace residual") {
  RngStream rng(23, 0, RngLane::Aux);
  for (int trial = 0; trial < 300; ++trial) {
    CostMatrix c = trial % 2 ? random_costs(2, rng) : CostMatrix::unit(2);
    QVec x = random_vec(2, rng, trial % 3 ? -2.0 : 0.0, 4.0);
    ConeSplit cone = project_cone(x, c);
    SplitVec sub = project_subspace(x, c);
    CHECK(c_norm(cone.perp, c) >= c_norm(sub.perp, c) - 1e-9);
    for (double w : cone.gen_weights) CHECK(w >= -1e-12);
  }
}

TEST_CASE("cone projection matches support enumeration") {
  RngStream rng(24, 0, RngLane::Aux);
  for (int trial = 0; trial < 200; ++trial) {
    CostMatrix c = trial % 2 ? random_costs(2, rng) : CostMatrix::unit(2);
    QVec x = random_vec(2, rng, -2.0, 4.0);
    ConeSplit cone = project_cone(x, c);
    double want = brute_force_cone_residual(x, c);
    CHECK(c_norm(cone.perp, c) == doctest::Approx(want).epsilon(1e-7).scale(1));
  }
}

TEST_CASE("stationary backlog floor") {
  QVec sigma2(4, 0.2475);
  CostMatrix unit = CostMatrix::unit(2);
  CHECK(universal_lower_bound(sigma2, 0.1, 2, unit) == doctest::Approx(4.05).epsilon(1e-12));
  // doubling every cost doubles the floor
  CHECK(universal_lower_bound(sigma2, 0.1, 2, CostMatrix(2, 2.0)) ==
        doctest::Approx(8.10).epsilon(1e-12));
  // near-unloaded limit: only the variance term survives
  QVec s(4, 0.25);
  CHECK(universal_lower_bound(s, 1.0 - 1e-9, 2, unit) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK_THROWS_AS(universal_lower_bound(s, 1.0, 2, unit), std::invalid_argument);
}

TEST_CASE("balanced fractions of the coordinate directions") {
  CostMatrix unit = CostMatrix::unit(2);
  QVec zeta = zeta_2x2(unit);
  for (double z : zeta) CHECK(z == doctest::Approx(0.75).epsilon(1e-12));

  QVec zeta3 = zeta_general(CostMatrix::unit(3));
  for (double z : zeta3) CHECK(z == doctest::Approx(5.0 / 9.0).epsilon(1e-10));

  CostMatrix lopsided(2, {2, 10, 10, 2});
  QVec zl = zeta_2x2(lopsided);
  CHECK(zl[0] == doctest::Approx(11.0 / 6.0).epsilon(1e-12));  // 2 - 4/24

  CHECK_THROWS_AS(zeta_2x2(CostMatrix::unit(3)), std::invalid_argument);
}

TEST_CASE("closed form of the balanced fraction for two ports") {
  RngStream rng(25, 0, RngLane::Aux);
  for (int trial = 0; trial < 100; ++trial) {
    CostMatrix c = random_costs(2, rng);
    double total = c.w[0] + c.w[1] + c.w[2] + c.w[3];
    QVec zeta = zeta_2x2(c);
    for (int k = 0; k < 4; ++k) {
      CHECK(zeta[k] == doctest::Approx(c.w[k] - c.w[k] * c.w[k] / total).epsilon(1e-12));
      CHECK(zeta[k] >= 0.0);
      CHECK(zeta[k] <= c.w[k]);
    }
    // the balanced fraction zeta/c is invariant under uniform cost scaling
    CostMatrix doubled(2, {2 * c.w[0], 2 * c.w[1], 2 * c.w[2], 2 * c.w[3]});
    QVec zd = zeta_2x2(doubled);
    for (int k = 0; k < 4; ++k)
      CHECK(zd[k] / doubled.w[k] == doctest::Approx(zeta[k] / c.w[k]).epsilon(1e-12));
  }
}

TEST_CASE("two zeta constructions agree") {
  RngStream rng(26, 0, RngLane::Aux);
  for (int trial = 0; trial < 100; ++trial) {
    CostMatrix c = random_costs(2, rng);
    QVec a = zeta_2x2(c);
    QVec b = zeta_general(c);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
  }
}

TEST_CASE("zeta is equivariant under port relabeling") {
  RngStream rng(27, 0, RngLane::Aux);
  CostMatrix c = random_costs(3, rng);
  QVec z = zeta_general(c);
  // swap rows 0 and 1
  CostMatrix swapped(3);
  for (int j = 0; j < 3; ++j) {
    swapped.at(0, j) = c.at(1, j);
    swapped.at(1, j) = c.at(0, j);
    swapped.at(2, j) = c.at(2, j);
  }
  QVec zs = zeta_general(swapped);
  for (int j = 0; j < 3; ++j) {
    CHECK(zs[0 * 3 + j] == doctest::Approx(z[1 * 3 + j]).epsilon(1e-10));
    CHECK(zs[1 * 3 + j] == doctest::Approx(z[0 * 3 + j]).epsilon(1e-10));
    CHECK(zs[2 * 3 + j] == doctest::Approx(z[2 * 3 + j]).epsilon(1e-10));
  }
}

TEST_CASE("asymptotic backlog slope") {
  CostMatrix unit = CostMatrix::unit(2);
  QVec quarter(4, 0.25);
  CHECK(heavy_traffic_limit(quarter, unit) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(heavy_traffic_limit(QVec(4, 0.0), unit) == 0.0);
  CHECK(matrix_limit(QVec(4, 0.0), unit) == doctest::Approx(0.0));
}

TEST_CASE("basis route and matrix route to the slope agree") {
  RngStream rng(28, 0, RngLane::Aux);
  for (int n : {2, 3}) {
    for (int trial = 0; trial < 30; ++trial) {
      CostMatrix c = random_costs(n, rng);
      QVec sigma2 = random_vec(n, rng, 0.0, 1.0);
      double a = heavy_traffic_limit(sigma2, c);
      double b = matrix_limit(sigma2, c);
      CHECK(a == doctest::Approx(b).epsilon(1e-9));
    }
  }
}

TEST_CASE("loaded switch family") {
  HeavyTrafficFamily fam = HeavyTrafficFamily::uniform(2);
  CHECK(fam.nu == QVec{0.5, 0.5, 0.5, 0.5});
  fam.validate();
  ArrivalProcess arr = fam.arrivals_at(0.1);
  for (double m : arr.mean_matrix()) CHECK(m == doctest::Approx(0.45));
  for (double v : arr.variance_matrix()) CHECK(v == doctest::Approx(0.45 * 0.55));

  HeavyTrafficFamily bad;
  bad.n = 2;
  bad.nu = {0.6, 0.5, 0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  HeavyTrafficFamily zero;
  zero.n = 2;
  zero.nu = {1.0, 0.0, 0.0, 1.0};
  CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
}

TEST_CASE("drift diagnostic constants") {
  QVec nu(4, 0.5), lambda(4, 0.45), sigma2(4, 0.2475);
  CostMatrix unit = CostMatrix::unit(2);
  SscConstants k = ssc_constants(nu, sigma2, lambda, unit, 1);
  CHECK(k.nu_c_min == doctest::Approx(0.5));
  CHECK(k.eta == doctest::Approx(0.125));
  CHECK(k.kappa == doctest::Approx(4.0 * (4 * 0.6975 + 2.0) / 0.5).epsilon(1e-12));
  CHECK(k.dconst == doctest::Approx(2.0));
  CHECK(k.m_r(1) > 0.0);
  CHECK(k.m_r(2) > 0.0);
  CHECK(std::isfinite(k.m_r(2)));
}
