#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iqs/core.hpp"
#include "iqs/geometry.hpp"
#include "iqs/mdp.hpp"
#include "iqs/rng.hpp"

namespace iqs {

// A scheduling rule packaged for the simulator: a report name plus a decision
// function. Tie-break randomness must come from the supplied stream, which is
// the policy lane, so the arrivals lane stays aligned across policies.
struct SimPolicy {
  std::string name;
  std::function<Schedule(const QueueState&, RngStream&)> act;
};

// Serve-the-heaviest matching under the given costs. Named "maxweight" when
// costs are uniform, "c-maxweight" otherwise.
SimPolicy make_maxweight_policy(const CostMatrix& cost);

// Two-port rule: clear what can be cleared, else favour the longer backlog.
// Requires n = 2, uniform costs, and identical per-queue arrival laws; throws
// std::invalid_argument otherwise.
SimPolicy make_symmetric_optimal_policy(const SwitchConfig& config);

// Greedy rule on top of a depth-limited backup of the stage reward, depth >= 1.
// depth = 1 is the myopic rule. Decisions are precomputed on the saturated box
// the backup can distinguish, so acting is a table lookup at any state.
SimPolicy make_lookahead_policy(const DpInstance& inst, int depth);

// Greedy rule read from a solved table, ties broken uniformly over the stored
// tie set. Visiting a state outside the table's box throws TruncationError.
SimPolicy make_table_policy(PolicyTable table);

struct SimSpec {
  SwitchConfig config;
  SimPolicy policy;
  QueueState q0;                  // default: start empty
  long long horizon = 0;          // total slots per replication
  long long warmup = 0;           // leading slots excluded from time averages
  double beta = 0.0;              // > 0 turns on the discounted accumulator
  std::uint64_t seed = 0;
  int replications = 100;
  int threads = 1;
  long long residual_stride = 0;  // sample projections every this many slots; 0 = off

  void validate() const;
};

// Per-replication outputs. Time averages cover slots [warmup, horizon); the
// discounted sum always starts at slot 0.
struct TraceStats {
  long long measured_slots = 0;
  double avg_weighted_backlog = 0;  // time average of sum_ij c_ij q_ij
  double avg_total_backlog = 0;     // time average of sum_ij q_ij
  std::vector<double> avg_queue;    // per-queue time averages, row-major
  double avg_unused_service = 0;    // crosspoints pointed at empty queues, per slot
  double discounted_weighted_cost = 0;
  long long residual_samples = 0;
  double avg_perp_cone = 0;         // mean sampled ||q - P_cone q||_c
  double avg_perp_cone_sq = 0;
  double avg_perp_subspace = 0;     // mean sampled ||q - P_span q||_c
  double avg_perp_subspace_sq = 0;
  int max_coordinate = 0;
};

TraceStats run_trace(const SimSpec& spec, int replication);

// All replications, optionally thread-parallel, reduced in replication order.
std::vector<TraceStats> run_traces(const SimSpec& spec);

struct SimEstimate {
  std::string statistic;
  int replications = 0;
  double mean = 0;
  double half_width95 = 0;  // Student-t, replications - 1 degrees of freedom
  std::vector<double> per_rep;
};

SimEstimate estimate_from(std::vector<double> per_rep, std::string statistic);

// Mean over replications of the post-warmup time-average weighted backlog.
// Refuses configurations whose arrival rates are not strictly admissible.
SimEstimate long_run_average(const SimSpec& spec);

// Mean over replications of sum_{t<horizon} beta^t sum_ij c_ij q_ij(t). A zero
// horizon is replaced by discounted_horizon(beta).
SimEstimate discounted_total(const SimSpec& spec);

// Smallest T with beta^T / (1 - beta) <= tail, so the truncated geometric
// tail is provably below the tail fraction of any bounded-cost scale.
long long discounted_horizon(double beta, double tail = 1e-3);

// Paired comparison (a - b)/b * 100 under common random numbers: same seed,
// horizons, and config, so both policies see identical arrival streams.
struct GapEstimate {
  double percent = 0;
  double half_width95 = 0;
  SimEstimate a, b;
};

GapEstimate compare_policies(const SimSpec& a, const SimSpec& b);

// One load point of a drift sweep toward saturation.
struct HtRow {
  double eps = 0;
  SimEstimate raw_weighted;       // time-average weighted backlog
  SimEstimate scaled_weighted;    // the same, scaled by eps
  double limit_prediction = 0;    // asymptotic slope at this load's variances
  double lower_bound = 0;         // policy-free floor on the unscaled mean
  SimEstimate unused;             // per-slot unused crosspoints (expect n*eps)
  SimEstimate perp_cone, perp_cone_sq;
  SimEstimate perp_subspace, perp_subspace_sq;
};

// Runs the policy at each load in eps_list on arrivals family.arrivals_at(eps).
// tmpl supplies costs, seeds, replication count, and (if nonzero) horizons;
// zero horizons get the default warmup max(1e4, 50/eps) and a 10x total run.
std::vector<HtRow> heavy_traffic_sweep(const HeavyTrafficFamily& family,
                                       const SimPolicy& policy,
                                       const SimSpec& tmpl,
                                       const std::vector<double>& eps_list);

}  // namespace iqs
