#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "iqs/core.hpp"

namespace iqs {

// Exact dynamic programming for the 2x2 switch. States are the four queue
// lengths (q11,q12,q21,q22), truncated to a dense box [0,qmax]^4. Successor
// coordinates that would leave the box are clamped to qmax; states within
// a_max of the top are "frontier" states and are excluded from verification
// and structure extraction so truncation cannot contaminate checked results.

using State4 = std::array<int, 4>;

struct DpInstance {
  CostMatrix cost;          // n == 2
  ArrivalProcess arrivals;  // n == 2, independent per-queue pmfs
  double beta = 0.0;        // discount in (0,1)

  void validate() const;
  double r_max() const;  // max over schedules of full-service reward
};

struct StateGrid {
  int qmax = 0;

  std::size_t size() const {
    auto d = static_cast<std::size_t>(qmax + 1);
    return d * d * d * d;
  }
  std::size_t index(const State4& q) const {
    auto d = static_cast<std::size_t>(qmax + 1);
    return ((static_cast<std::size_t>(q[0]) * d + q[1]) * d + q[2]) * d + q[3];
  }
  State4 coords(std::size_t idx) const {
    int d = qmax + 1;
    State4 q;
    q[3] = static_cast<int>(idx % d);
    idx /= d;
    q[2] = static_cast<int>(idx % d);
    idx /= d;
    q[1] = static_cast<int>(idx % d);
    idx /= d;
    q[0] = static_cast<int>(idx);
    return q;
  }
  bool frontier(const State4& q, int a_max) const {
    for (int x : q)
      if (x > qmax - a_max) return true;
    return false;
  }
};

struct TruncationError : std::runtime_error {
  explicit TruncationError(const std::string& what) : std::runtime_error(what) {}
};

// Value function in transmitted-weight (reward) form, produced by `sweeps`
// Bellman applications to the zero function, or by policy evaluation.
struct ValueFunction {
  StateGrid grid;
  double beta = 0.0;
  int sweeps = 0;
  std::vector<double> v;

  double at(const State4& q) const { return v[grid.index(q)]; }

  // Evaluate at an arbitrary (possibly off-grid) state. A value table built
  // from k sweeps satisfies V(q) = V(min(q, k)) coordinate-wise: a queue k or
  // more deep can neither empty nor change any service indicator within the
  // remaining horizon. When k fits inside the non-frontier box that clamp is
  // exact for every state; otherwise only non-frontier grid states are valid.
  double eval_extended(const State4& q, int a_max) const;
};

ValueFunction zero_value(int qmax, double beta);

// Deterministic per-state schedule choices; action indexes schedule_set(2)
// (0 = diagonal pairing, 1 = anti-diagonal). Canonical action is the lowest
// index attaining the maximum; tie_mask has bit s set for every schedule
// within relative tolerance of the best.
struct PolicyTable {
  StateGrid grid;
  double beta = 0.0;
  std::vector<std::uint8_t> action;
  std::vector<std::uint8_t> tie_mask;

  int action_at(const State4& q) const { return action[grid.index(q)]; }
  bool in_argmax(const State4& q, int sched) const {
    return (tie_mask[grid.index(q)] >> sched) & 1;
  }
};

// Relative tolerance shared by argmax-set construction and the inequality
// verifier: x beats y iff x > y + kRelTol * max(1, |x|, |y|).
inline constexpr double kRelTol = 1e-9;

struct BellmanScratch {
  std::vector<double> a, b;
};

// One synchronous Bellman sweep: out(q) = max_s r(q,s) + beta E[in((q-s)^+ + A)].
// The arrival expectation factors into four per-axis pmf convolutions, so the
// sweep is exact and deterministic; worker threads split the leading axis and
// every element is computed by the same scalar expression, making results
// bitwise identical for any thread count.
// Returns sup |out - in|.
double bellman_sweep(const DpInstance& inst, const ValueFunction& in, ValueFunction& out,
                     BellmanScratch& scratch, int threads);

ValueFunction bellman_iterate(const DpInstance& inst, const ValueFunction& in, int threads = 1);

struct ValueIterationOptions {
  int qmax = 30;
  int max_sweeps = 100000;
  double tol = 1e-9;  // stop when sup |V_{k+1} - V_k| < tol
  int threads = 1;
  // Called after every sweep with the current iterate (for snapshotting).
  std::function<void(const ValueFunction&)> observer;
};

struct ValueIterationResult {
  ValueFunction value;
  int sweeps = 0;
  double last_delta = std::numeric_limits<double>::infinity();
  bool converged = false;
};

ValueIterationResult value_iteration(const DpInstance& inst, const ValueIterationOptions& opt);

// Sup-norm halt threshold eps*(1-beta)^2/(2 beta^2): stopping once successive
// iterates differ by less guarantees the greedy policy's discounted value is
// within eps of optimal.
double stopping_threshold(double beta, double eps);

// Greedy one-step policy w.r.t. a value table, with argmax tie sets.
PolicyTable greedy_policy(const DpInstance& inst, const ValueFunction& vf, int threads = 1);

// Both action values r(q,s) + beta E[V((q-s)^+ + A)] at one state, evaluated
// by exact joint enumeration of arrivals through eval_extended.
std::array<double, 2> lookahead_values(const DpInstance& inst, const ValueFunction& vf,
                                       const State4& q);

// Fixed-policy discounted transmitted-weight value (iterated to sup-norm tol).
ValueFunction policy_value(const DpInstance& inst, const PolicyTable& policy, double tol,
                           int max_sweeps = 100000, int threads = 1);

// Convert a reward-form policy value to the discounted holding-cost objective
// via (1-beta) J = c.q0 + g - beta Jr(q0), g = beta/(1-beta) * sum c_ij lambda_ij.
double discounted_cost_of_policy(const DpInstance& inst, const ValueFunction& reward_value,
                                 const State4& q0);

// ---------------------------------------------------------------------------
// Structural verification

struct InequalityRow {
  std::string family;
  std::string variant;
  long long checked = 0;
  long long violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // min relative margin
  std::vector<std::pair<State4, double>> examples;                // worst offenders, <= 10
};

struct InequalityReport {
  std::vector<InequalityRow> rows;
  long long total_checked = 0;
  long long total_violations = 0;
  bool clean() const { return total_violations == 0; }
};

// Sweeps every structural inequality family over all states whose full
// reference stencil stays off the frontier. Violations are reported, not
// thrown. Families: discrete value monotonicity, full-service dominance in
// the interior region, weighted-priority exchange on the boundary (gated on
// the cost ordering), switching-curve exchange triples, per-axis concavity
// and pair supermodularity, and the general two-schedule exchange lemma.
InequalityReport verify_inequalities(const DpInstance& inst, const ValueFunction& vf);

// Same checks in exact rational arithmetic on a small grid: inputs are
// converted from their decimal representations, the value table is iterated
// `sweeps` times exactly, margins compare exactly against zero.
InequalityReport verify_inequalities_exact(const DpInstance& inst, int qmax, int sweeps);

// ---------------------------------------------------------------------------
// Boundary structure

// For each ordered pair of conflicting queues (mu, rho), the threshold curve
// over two-queue boundary states q = x e_mu + y e_rho: threshold[y] is the
// least x >= 1 whose argmax set contains the schedule serving mu (-1 if none
// below the safe box edge). Extraction verifies that serving a queue remains
// optimal as that queue grows or a conflicting queue shrinks, and throws on
// any monotonicity violation.
struct SwitchingCurve {
  struct Branch {
    int mu = 0, rho = 0;  // flat queue ids (0:11, 1:12, 2:21, 3:22)
    std::vector<int> threshold;
  };
  std::vector<Branch> branches;
  int safe_max = 0;
};

SwitchingCurve extract_switching_curve(const DpInstance& inst, const PolicyTable& policy);

// Exact rational value table (flattened, lexicographic order) after `sweeps`
// Bellman applications, converted to double; oracle for the floating sweep.
std::vector<double> exact_value_table(const DpInstance& inst, int qmax, int sweeps);

// ---------------------------------------------------------------------------
// Artifact io (versioned binary container with a JSON header)

struct SolvedValue {
  DpInstance instance;
  ValueFunction value;
};

void save_value(const std::string& path, const DpInstance& inst, const ValueFunction& vf);
SolvedValue load_value(const std::string& path);
void save_policy(const std::string& path, const DpInstance& inst, const PolicyTable& pt);
PolicyTable load_policy(const std::string& path, DpInstance* inst_out = nullptr);

inline State4 to_state4(const QueueState& q) {
  assert(q.n == 2);
  return {q.len[0], q.len[1], q.len[2], q.len[3]};
}
inline QueueState to_queue_state(const State4& q) {
  return QueueState(2, std::vector<int>(q.begin(), q.end()));
}

// Queue ids <-> (i,j) helpers shared by verification and curve extraction.
inline constexpr int kQueue11 = 0, kQueue12 = 1, kQueue21 = 2, kQueue22 = 3;
inline int queue_row(int id) { return id / 2; }
inline int queue_col(int id) { return id % 2; }
// Schedule containing a queue: diagonal serves 11,22; anti-diagonal 12,21.
inline int schedule_of_queue(int id) { return (id == kQueue11 || id == kQueue22) ? 0 : 1; }
// The two queues that can never share a schedule with `id` (same input or
// same output), and the one that always accompanies it.
std::array<int, 2> conflicting_queues(int id);
inline int partner_queue(int id) { return 3 - id; }

}  // namespace iqs
