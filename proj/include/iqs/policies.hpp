#pragma once

#include <vector>

#include "iqs/core.hpp"
#include "iqs/mdp.hpp"
#include "iqs/rng.hpp"

namespace iqs {

enum class RegionLabel { TrivialBoundary, Interior, CriticalBoundary };

// n == 2 only. The three labels partition the state space: full-reward states
// (some schedule transmits weight r_max) are Interior, otherwise states where
// one schedule covers every nonempty queue (zero state included) form the
// trivial boundary, and the rest the critical boundary.
RegionLabel classify_region(const QueueState& q, const CostMatrix& c);

double schedule_weight(const QueueState& q, const CostMatrix& c, const Schedule& s);

// Indices into schedule_set(n) attaining max_s sum c_ij q_ij s_ij, with
// kRelTol relative slack. Enumerates all n! schedules; n <= 8.
std::vector<int> maxweight_argmax_set(const QueueState& q, const CostMatrix& c);

// Weighted MaxWeight draw: uniform over the argmax set for n <= 8, exact
// assignment solver (deterministic maximizer) beyond.
Schedule maxweight_schedule(const QueueState& q, const CostMatrix& c, RngStream& rng);

// Exact maximum-weight perfect matching on an n x n row-major weight matrix.
Schedule max_weight_assignment(int n, const std::vector<double>& weight);

// Optimal 2x2 policy for unit costs and exchangeable arrivals: serve two
// packets whenever possible (larger total backlog first when both pairings
// qualify), cover everything nonempty on the easy boundary, otherwise serve
// the longest nonempty queue. All remaining ties are uniform.
Schedule symmetric_optimal_schedule(const QueueState& q, RngStream& rng);

// One-step greedy w.r.t. a value table:
// argmax_s r(q,s) + beta E[V((q-s)^+ + A)], arrival expectation enumerated
// exactly, ties uniform. Throws TruncationError when q cannot be evaluated
// without touching truncated table entries.
Schedule lookahead_schedule(const QueueState& q, const DpInstance& inst, const ValueFunction& vf,
                            RngStream& rng);

}  // namespace iqs
