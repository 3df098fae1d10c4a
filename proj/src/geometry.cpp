#include "iqs/geometry.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace iqs {

namespace {

void check_shape(const QVec& x, const CostMatrix& c) {
  if (static_cast<int>(x.size()) != c.n * c.n)
    throw std::invalid_argument("vector does not match cost shape");
}

// Scaled row indicators then all but the last column indicator; spans the
// balanced subspace with dimension 2n-1.
std::vector<QVec> spanning_set(const CostMatrix& c) {
  const int n = c.n;
  std::vector<QVec> vs;
  for (int i = 0; i < n; ++i) {
    QVec v(n * n, 0.0);
    for (int j = 0; j < n; ++j) v[i * n + j] = 1.0 / c.at(i, j);
    vs.push_back(std::move(v));
  }
  for (int j = 0; j + 1 < n; ++j) {
    QVec v(n * n, 0.0);
    for (int i = 0; i < n; ++i) v[i * n + j] = 1.0 / c.at(i, j);
    vs.push_back(std::move(v));
  }
  return vs;
}

void axpy(QVec& y, double a, const QVec& x) {
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += a * x[k];
}

}  // namespace

double c_inner(const QVec& x, const QVec& y, const CostMatrix& c) {
  check_shape(x, c);
  check_shape(y, c);
  double acc = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) acc += c.w[k] * x[k] * y[k];
  return acc;
}

double c_norm(const QVec& x, const CostMatrix& c) { return std::sqrt(c_inner(x, x, c)); }

SubspaceBasis SubspaceBasis::build(const CostMatrix& c) {
  SubspaceBasis basis;
  basis.n = c.n;
  for (const QVec& v : spanning_set(c)) {
    QVec w = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const QVec& u : basis.f) axpy(w, -c_inner(w, u, c), u);
    double nrm = c_norm(w, c);
    if (nrm < 1e-10) throw std::runtime_error("balanced spanning set lost rank");
    for (double& x : w) x /= nrm;
    basis.f.push_back(std::move(w));
  }
  return basis;
}

SplitVec project_subspace(const QVec& x, const CostMatrix& c) {
  SubspaceBasis basis = SubspaceBasis::build(c);
  SplitVec out;
  out.par.assign(x.size(), 0.0);
  for (const QVec& f : basis.f) axpy(out.par, c_inner(x, f, c), f);
  out.perp = x;
  axpy(out.perp, -1.0, out.par);
  return out;
}

ConeSplit project_cone(const QVec& x, const CostMatrix& c) {
  check_shape(x, c);
  const int n = c.n;
  const double scale = std::max(1.0, c_norm(x, c));
  const double kkt_tol = 1e-10 * scale;
  QVec w(2 * n, 0.0);
  auto assemble = [&](const QVec& gw) {
    QVec y(n * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) y[i * n + j] = (gw[i] + gw[n + j]) / c.at(i, j);
    return y;
  };
  QVec resid = x;  // x - y(w), starts at w = 0
  const int max_iters = 200000;
  int it = 0;
  for (; it < max_iters; ++it) {
    // gradient of |x - y(w)|_c^2 in w: -2 row sums / -2 column sums of resid
    QVec g(2 * n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        g[i] -= 2.0 * resid[i * n + j];
        g[n + j] -= 2.0 * resid[i * n + j];
      }
    bool done = true;
    for (int k = 0; k < 2 * n; ++k) {
      if (w[k] > 0.0 ? std::abs(g[k]) > kkt_tol : g[k] < -kkt_tol) {
        done = false;
        break;
      }
    }
    if (done) break;
    QVec d(2 * n, 0.0);
    for (int k = 0; k < 2 * n; ++k)
      if (w[k] > 0.0 || g[k] < 0.0) d[k] = -g[k];
    QVec ydir = assemble(d);
    double denom = c_inner(ydir, ydir, c);
    if (denom <= 0.0) break;
    double t = c_inner(resid, ydir, c) / denom;
    int blocker = -1;
    for (int k = 0; k < 2 * n; ++k)
      if (d[k] < 0.0 && -w[k] / d[k] < t) {
        t = -w[k] / d[k];
        blocker = k;
      }
    if (t <= 0.0) {
      // a weight has decayed to numerical zero while its gradient still
      // points inward; pin it exactly and rebuild the direction instead of
      // stalling on an underflowed step
      if (blocker < 0) break;
      w[blocker] = 0.0;
      continue;
    }
    for (int k = 0; k < 2 * n; ++k) w[k] = std::max(0.0, w[k] + t * d[k]);
    if (blocker >= 0) w[blocker] = 0.0;  // land the clamped coordinate on the boundary
    QVec y = assemble(w);
    resid = x;
    axpy(resid, -1.0, y);
  }
  if (it >= max_iters) {
    std::ostringstream os;
    os << "cone projection did not reach KKT tolerance; |resid|_c=" << c_norm(resid, c);
    throw std::runtime_error(os.str());
  }
  ConeSplit out;
  out.par = assemble(w);
  out.perp = x;
  axpy(out.perp, -1.0, out.par);
  out.gen_weights = std::move(w);
  out.iterations = it;
  return out;
}

double universal_lower_bound(const QVec& sigma2, double eps, int n, const CostMatrix& c) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0,1)");
  check_shape(sigma2, c);
  double s = 0.0;
  for (double v : sigma2) s += v;
  double c_min = *std::min_element(c.w.begin(), c.w.end());
  return c_min * (s / (2.0 * eps) - n * (1.0 - eps) / 2.0);
}

QVec zeta_2x2(const CostMatrix& c) {
  if (c.n != 2) throw std::invalid_argument("explicit basis is for n == 2");
  const double c11 = c.at(0, 0), c12 = c.at(0, 1), c21 = c.at(1, 0), c22 = c.at(1, 1);
  const double sd = c11 + c22, sa = c12 + c21;
  QVec f1{std::sqrt(c11 * c22 / sd) / c11, 0.0, 0.0, -std::sqrt(c11 * c22 / sd) / c22};
  QVec f2{0.0, std::sqrt(c12 * c21 / sa) / c12, -std::sqrt(c12 * c21 / sa) / c21, 0.0};
  const double r3 = std::sqrt(sd * sa / (sd + sa));
  QVec f3{r3 / sd, r3 / sa, r3 / sa, r3 / sd};
  QVec z(4);
  for (int k = 0; k < 4; ++k) {
    QVec e(4, 0.0);
    e[k] = 1.0;
    double acc = 0.0;
    for (const QVec* f : {&f1, &f2, &f3}) {
      double p = c_inner(e, *f, c);
      acc += p * p;
    }
    z[k] = acc;
  }
  return z;
}

QVec zeta_general(const CostMatrix& c) {
  SubspaceBasis basis = SubspaceBasis::build(c);
  const int n = c.n;
  QVec z(n * n);
  for (int k = 0; k < n * n; ++k) {
    QVec e(n * n, 0.0);
    e[k] = 1.0;
    double acc = 0.0;
    for (const QVec& f : basis.f) {
      double p = c_inner(e, f, c);
      acc += p * p;
    }
    z[k] = acc;
    assert(z[k] <= c.w[k] + 1e-9);
  }
  return z;
}

double heavy_traffic_limit(const QVec& sigma2, const CostMatrix& c) {
  check_shape(sigma2, c);
  QVec z = zeta_general(c);
  double acc = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) acc += c.w[k] * sigma2[k] * z[k];
  return 0.5 * c.n * acc;
}

double matrix_limit(const QVec& sigma2, const CostMatrix& c) {
  check_shape(sigma2, c);
  const int n = c.n;
  const int m = n * n, nb = (n - 1) * (n - 1);
  // Coordinate order: interior block (i,j < n-1) row-major, then the rim.
  std::vector<int> coord;
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) coord.push_back(i * n + j);
  for (int i = 0; i + 1 < n; ++i) coord.push_back(i * n + (n - 1));
  for (int j = 0; j + 1 < n; ++j) coord.push_back((n - 1) * n + j);
  coord.push_back((n - 1) * n + (n - 1));
  std::vector<QVec> rows;
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j) {
      QVec b(m, 0.0);
      b[i * n + j] = 1.0;
      b[i * n + (n - 1)] = -1.0;
      b[(n - 1) * n + j] = -1.0;
      b[(n - 1) * n + (n - 1)] = 1.0;
      rows.push_back(std::move(b));
    }
  for (QVec& v : spanning_set(c)) rows.push_back(std::move(v));
  Eigen::MatrixXd G(m, m);
  for (int a = 0; a < m; ++a)
    for (int k = 0; k < m; ++k) G(a, k) = rows[a][coord[k]];
  Eigen::FullPivLU<Eigen::MatrixXd> lu(G);
  if (!lu.isInvertible()) {
    std::ostringstream os;
    os << "basis matrix is singular for costs [";
    for (int k = 0; k < m; ++k) os << (k ? ", " : "") << c.w[k];
    os << "]";
    throw std::runtime_error(os.str());
  }
  Eigen::MatrixXd ginv_t = lu.inverse().transpose();
  Eigen::MatrixXd gamma(nb, nb);
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b < nb; ++b) gamma(a, b) = c_inner(rows[a], rows[b], c);
  double acc = 0.0;
  for (int k = 0; k < m; ++k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    for (int p = 0; p < m; ++p)
      if (coord[p] == k) v(p) = 1.0;
    Eigen::VectorXd x = ginv_t * v;
    Eigen::VectorXd xb = x.head(nb);
    double perp_sq = xb.dot(gamma * xb);
    double zeta_k = c.w[k] - perp_sq;
    acc += c.w[k] * sigma2[k] * zeta_k;
  }
  return 0.5 * n * acc;
}

HeavyTrafficFamily HeavyTrafficFamily::uniform(int n) {
  HeavyTrafficFamily fam;
  fam.n = n;
  fam.nu.assign(static_cast<std::size_t>(n) * n, 1.0 / n);
  return fam;
}

void HeavyTrafficFamily::validate() const {
  if (n < 2 || static_cast<int>(nu.size()) != n * n)
    throw std::invalid_argument("family shape invalid");
  for (double v : nu)
    if (!(v > 0.0)) throw std::invalid_argument("face rates must be strictly positive");
  for (int i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (int j = 0; j < n; ++j) {
      row += nu[i * n + j];
      col += nu[j * n + i];
    }
    if (std::abs(row - 1.0) > 1e-12 || std::abs(col - 1.0) > 1e-12)
      throw std::invalid_argument("face rates must have unit row and column sums");
  }
}

ArrivalProcess HeavyTrafficFamily::arrivals_at(double eps) const {
  validate();
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0,1)");
  std::vector<double> rates(nu.size());
  for (std::size_t k = 0; k < nu.size(); ++k) rates[k] = (1.0 - eps) * nu[k];
  return ArrivalProcess::bernoulli(n, rates);
}

double SscConstants::m_r(int r) const {
  assert(r >= 1);
  double rr = r;
  double second = std::pow(std::sqrt(rr) * std::exp(1.0), 1.0 / rr) * 4.0 * dconst * (rr / std::exp(1.0)) *
                  (dconst + eta) / eta;
  return std::pow(2.0, 1.0 / rr) * std::max(2.0 * kappa, second);
}

SscConstants ssc_constants(const QVec& nu, const QVec& sigma2, const QVec& lambda,
                           const CostMatrix& c, int a_max) {
  check_shape(nu, c);
  check_shape(sigma2, c);
  check_shape(lambda, c);
  SscConstants out;
  out.nu_c_min = nu[0] / c.w[0];
  double drift_sum = 0.0, c_max = 0.0;
  for (std::size_t k = 0; k < nu.size(); ++k) {
    out.nu_c_min = std::min(out.nu_c_min, nu[k] / c.w[k]);
    drift_sum += c.w[k] * (lambda[k] + sigma2[k]);
    c_max = std::max(c_max, c.w[k]);
  }
  out.eta = out.nu_c_min / 4.0;
  out.kappa = 4.0 * (drift_sum + c.n * c_max) / out.nu_c_min;
  out.dconst = c.n * std::sqrt(c_max) * a_max;
  return out;
}

}  // namespace iqs
