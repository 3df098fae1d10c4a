#pragma once

#include <vector>

#include "iqs/core.hpp"

namespace iqs {

// Weighted geometry on queue-indexed vectors (row-major, length n*n) under
// <x,y>_c = sum c_ij x_ij y_ij. The "balanced" subspace is spanned by the
// scaled row indicators e^(i)_c (1/c_ij on row i) and column indicators
// (one column dropped; the all-port vector appears in both families), and
// the feasible cone restricts the 2n generator weights to be nonnegative.

using QVec = std::vector<double>;

double c_inner(const QVec& x, const QVec& y, const CostMatrix& c);
double c_norm(const QVec& x, const CostMatrix& c);

struct SubspaceBasis {
  int n = 0;
  std::vector<QVec> f;  // 2n-1 vectors, c-orthonormal

  // Modified Gram-Schmidt with a re-orthogonalization pass.
  static SubspaceBasis build(const CostMatrix& c);
};

struct SplitVec {
  QVec par, perp;
};

// x = par + perp with par in the balanced subspace and <par,perp>_c = 0.
SplitVec project_subspace(const QVec& x, const CostMatrix& c);

struct ConeSplit {
  QVec par, perp;
  QVec gen_weights;  // nonnegative row then column generator weights, 2n
  int iterations = 0;
};

// Nearest point of the cone in c-norm, solved as nonnegative least squares
// over the generator weights by projected gradient with exact line search,
// to KKT residual 1e-10. Throws on iteration-budget exhaustion.
ConeSplit project_cone(const QVec& x, const CostMatrix& c);

// Floor on the stationary weighted backlog of any feasible policy at load
// 1-eps: c_min (|sigma|^2/(2 eps) - n(1-eps)/2).
double universal_lower_bound(const QVec& sigma2, double eps, int n, const CostMatrix& c);

// Squared c-norm of each coordinate direction's balanced component.
QVec zeta_2x2(const CostMatrix& c);    // explicit three-vector basis, n == 2
QVec zeta_general(const CostMatrix& c);  // orthonormalized spanning set, any n

// Scaled stationary weighted backlog limit (n/2) <sigma^2, zeta>_c of the
// loaded switch family under weighted MaxWeight.
double heavy_traffic_limit(const QVec& sigma2, const CostMatrix& c);

// Same limit via the affine-basis change-of-coordinates route: difference
// directions B_ij = e_ij - e_in - e_nj + e_nn complete the balanced spanning
// set to a full basis; with coordinates ordered interior-block-first the
// basis matrix has a leading identity block, and the unbalanced mass of any
// v is the Gram quadratic form of its truncated coordinates x = G^{-T} v.
double matrix_limit(const QVec& sigma2, const CostMatrix& c);

// Loaded family of switches: rates (1-eps) nu with nu in the relative
// interior of the capacity face (all row and column sums one).
struct HeavyTrafficFamily {
  int n = 0;
  QVec nu;

  static HeavyTrafficFamily uniform(int n);
  void validate() const;  // throws unless row/col sums are 1 within 1e-12 and nu > 0
  ArrivalProcess arrivals_at(double eps) const;  // Bernoulli((1-eps) nu)
};

// Drift-argument constants reported as diagnostics next to collapse
// measurements; bounds are loose and never asserted against simulation.
struct SscConstants {
  double nu_c_min = 0;  // min nu_ij / c_ij
  double eta = 0;       // drift margin nu_c_min / 4
  double kappa = 0;     // drift threshold on the unbalanced weight
  double dconst = 0;    // one-step unbalanced increment bound n sqrt(c_max) A_max
  double m_r(int r) const;
};

SscConstants ssc_constants(const QVec& nu, const QVec& sigma2, const QVec& lambda,
                           const CostMatrix& c, int a_max);

}  // namespace iqs
