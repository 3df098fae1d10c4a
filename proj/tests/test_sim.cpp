#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "iqs/core.hpp"
#include "iqs/geometry.hpp"
#include "iqs/mdp.hpp"
#include "iqs/sim.hpp"

using namespace iqs;

namespace {

SwitchConfig symmetric_config(double rate) {
  return {2, CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, rate)};
}

SimSpec base_spec(double rate) {
  SimSpec spec;
  spec.config = symmetric_config(rate);
  spec.policy = make_maxweight_policy(spec.config.cost);
  spec.horizon = 1000;
  spec.warmup = 200;
  spec.seed = 99;
  spec.replications = 4;
  return spec;
}

bool same_trace(const TraceStats& a, const TraceStats& b) {
  return a.measured_slots == b.measured_slots &&
         a.avg_weighted_backlog == b.avg_weighted_backlog &&
         a.avg_total_backlog == b.avg_total_backlog && a.avg_queue == b.avg_queue &&
         a.avg_unused_service == b.avg_unused_service &&
         a.discounted_weighted_cost == b.discounted_weighted_cost &&
         a.residual_samples == b.residual_samples && a.avg_perp_cone == b.avg_perp_cone &&
         a.avg_perp_subspace == b.avg_perp_subspace && a.max_coordinate == b.max_coordinate;
}

}  // namespace

TEST_CASE("spec validation") {
  SimSpec spec = base_spec(0.3);
  spec.warmup = spec.horizon;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec(0.3);
  spec.replications = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec(0.3);
  spec.beta = 1.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec(0.3);
  spec.q0 = QueueState(3);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  base_spec(0.3).validate();
}

TEST_CASE("policy factory names and guards") {
  CHECK(make_maxweight_policy(CostMatrix::unit(2)).name == "maxweight");
  CHECK(make_maxweight_policy(CostMatrix(2, {2, 10, 10, 2})).name == "c-maxweight");

  CHECK_NOTHROW(make_symmetric_optimal_policy(symmetric_config(0.45)));
  SwitchConfig wrong_cost{2, CostMatrix(2, {1, 2, 2, 1}), ArrivalProcess::bernoulli_iid(2, 0.4)};
  CHECK_THROWS_AS(make_symmetric_optimal_policy(wrong_cost), std::invalid_argument);
  SwitchConfig skew{2, CostMatrix::unit(2), ArrivalProcess::bernoulli(2, {0.7, 0.2, 0.29, 0.5})};
  CHECK_THROWS_AS(make_symmetric_optimal_policy(skew), std::invalid_argument);
  SwitchConfig big{3, CostMatrix::unit(3), ArrivalProcess::bernoulli_iid(3, 0.3)};
  CHECK_THROWS_AS(make_symmetric_optimal_policy(big), std::invalid_argument);

  DpInstance inst{CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, 0.3), 0.9};
  CHECK_THROWS_AS(make_lookahead_policy(inst, 0), std::invalid_argument);
  CHECK(make_lookahead_policy(inst, 3).name == "lookahead:k=3");
}

TEST_CASE("deterministic drain from a fixed backlog") {
  SimSpec spec;
  spec.config = {2, CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, 0.0)};
  spec.policy = make_maxweight_policy(spec.config.cost);
  spec.q0 = QueueState(2, {5, 0, 0, 5});
  spec.horizon = 100;
  spec.warmup = 0;
  spec.seed = 7;
  TraceStats t = run_trace(spec, 0);
  CHECK(t.measured_slots == 100);
  // totals 10,8,6,4,2 then zero
  CHECK(t.avg_total_backlog == doctest::Approx(0.30).epsilon(1e-15));
  CHECK(t.avg_weighted_backlog == doctest::Approx(0.30).epsilon(1e-15));
  CHECK(t.max_coordinate == 5);
  CHECK(t.avg_queue[0] == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(t.avg_queue[3] == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(t.avg_queue[1] == 0.0);
  CHECK(t.avg_queue[2] == 0.0);
  // both crosspoints idle for the 95 empty slots
  CHECK(t.avg_unused_service == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("traces are reproducible") {
  SimSpec spec = base_spec(0.45);
  spec.residual_stride = 10;
  TraceStats a = run_trace(spec, 3);
  TraceStats b = run_trace(spec, 3);
  CHECK(same_trace(a, b));
  TraceStats c = run_trace(spec, 4);
  CHECK(!same_trace(a, c));  // different replication, different stream
}

TEST_CASE("replication scheduling does not affect results") {
  SimSpec spec = base_spec(0.45);
  spec.replications = 6;
  spec.threads = 1;
  auto seq = run_traces(spec);
  spec.threads = 3;
  auto par = run_traces(spec);
  REQUIRE(seq.size() == par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(same_trace(seq[i], par[i]));
}

TEST_CASE("confidence interval from a tiny hand sample") {
  SimEstimate est = estimate_from({1.0, 2.0, 3.0, 4.0}, "hand");
  CHECK(est.replications == 4);
  CHECK(est.mean == doctest::Approx(2.5));
  // sd sqrt(5/3), t quantile 3.182446 at 3 dof
  CHECK(est.half_width95 == doctest::Approx(2.054260).epsilon(1e-6));
  CHECK(est.per_rep.size() == 4);

  SimEstimate single = estimate_from({7.0}, "one");
  CHECK(single.mean == 7.0);
  CHECK(single.half_width95 == 0.0);

  SimEstimate flat = estimate_from({2.0, 2.0, 2.0}, "flat");
  CHECK(flat.half_width95 == 0.0);

  CHECK_THROWS_AS(estimate_from({}, "empty"), std::invalid_argument);
}

TEST_CASE("long-run averages refuse inadmissible rates") {
  SimSpec hot = base_spec(0.6);
  CHECK_THROWS_AS(long_run_average(hot), std::runtime_error);
  SimSpec critical = base_spec(0.5);
  CHECK_THROWS_AS(long_run_average(critical), std::runtime_error);
}

TEST_CASE("empty system stays empty") {
  SimSpec spec = base_spec(0.0);
  SimEstimate est = long_run_average(spec);
  CHECK(est.mean == 0.0);
  CHECK(est.half_width95 == 0.0);
}

TEST_CASE("discounted cost of a single draining packet is exactly one") {
  SimSpec spec;
  spec.config = {2, CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, 0.0)};
  spec.policy = make_maxweight_policy(spec.config.cost);
  spec.q0 = QueueState(2, {1, 0, 0, 0});
  spec.beta = 0.9;
  spec.seed = 5;
  spec.replications = 5;
  SimEstimate est = discounted_total(spec);
  CHECK(est.mean == 1.0);
  CHECK(est.half_width95 == 0.0);
}

TEST_CASE("discounted horizons cover the geometric tail") {
  CHECK(discounted_horizon(0.99) == 1146);
  CHECK(discounted_horizon(0.9) == 88);
  CHECK(discounted_horizon(0.99, 0.01) == 917);
  for (double beta : {0.8, 0.95, 0.99}) {
    long long T = discounted_horizon(beta);
    CHECK(std::pow(beta, static_cast<double>(T)) / (1 - beta) <= 1e-3);
    CHECK(std::pow(beta, static_cast<double>(T - 1)) / (1 - beta) > 1e-3);
  }
  CHECK_THROWS_AS(discounted_horizon(1.0), std::invalid_argument);
}

TEST_CASE("a policy compared against itself has zero gap and zero width") {
  SimSpec a = base_spec(0.45);
  a.replications = 6;
  SimSpec b = a;
  GapEstimate gap = compare_policies(a, b);
  CHECK(gap.percent == 0.0);
  CHECK(gap.half_width95 == 0.0);
  CHECK(gap.a.mean == gap.b.mean);
}

TEST_CASE("policy comparison requires a shared environment") {
  SimSpec a = base_spec(0.45);
  SimSpec b = a;
  b.seed = a.seed + 1;
  CHECK_THROWS_AS(compare_policies(a, b), std::invalid_argument);
  b = a;
  b.horizon = a.horizon * 2;
  CHECK_THROWS_AS(compare_policies(a, b), std::invalid_argument);
  b = a;
  b.config.arrivals = ArrivalProcess::bernoulli_iid(2, 0.3);
  CHECK_THROWS_AS(compare_policies(a, b), std::invalid_argument);
}

TEST_CASE("comparison detects a strictly better policy under shared arrivals") {
  SimSpec mw = base_spec(0.45);
  mw.horizon = 20000;
  mw.warmup = 4000;
  mw.replications = 10;
  mw.seed = 20260822;
  SimSpec opt = mw;
  opt.policy = make_symmetric_optimal_policy(opt.config);
  GapEstimate gap = compare_policies(mw, opt);
  CHECK(gap.percent > 0.0);  // serve-longest beats plain heaviest-matching
  CHECK(gap.percent < 30.0);
  CHECK(gap.half_width95 > 0.0);
}

TEST_CASE("depth-limited greedy policies cover the easy boundary") {
  DpInstance inst{CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, 0.45), 0.95};
  for (int depth : {1, 2, 5}) {
    SimPolicy pol = make_lookahead_policy(inst, depth);
    RngStream rng(31, 0, RngLane::Policy);
    for (auto len : {std::vector<int>{2, 0, 0, 0}, {0, 7, 0, 0}, {0, 0, 3, 0}}) {
      QueueState q(2, len);
      Schedule s = pol.act(q, rng);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          if (q.at(i, j) > 0) CHECK(s.serves(i, j));
    }
  }
}

TEST_CASE("table policies refuse states beyond their box") {
  DpInstance inst{CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, 0.0), 0.9};
  ValueIterationOptions opt;
  opt.qmax = 3;
  opt.tol = 1e-8;
  auto res = value_iteration(inst, opt);
  PolicyTable pt = greedy_policy(inst, res.value);

  SimSpec spec;
  spec.config = {2, CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, 0.0)};
  spec.policy = make_table_policy(pt);
  spec.q0 = QueueState(2, {9, 0, 0, 0});
  spec.horizon = 10;
  CHECK_THROWS_AS(run_trace(spec, 0), TruncationError);

  spec.q0 = QueueState(2, {3, 0, 0, 2});
  TraceStats t = run_trace(spec, 0);  // inside the box: drains fine
  CHECK(t.max_coordinate == 3);
}

TEST_CASE("residual projections are sampled on the stride") {
  SimSpec spec = base_spec(0.45);
  spec.horizon = 600;
  spec.warmup = 100;
  spec.residual_stride = 50;
  TraceStats t = run_trace(spec, 0);
  CHECK(t.residual_samples == 10);  // slots 100,150,...,550
  CHECK(t.avg_perp_cone >= t.avg_perp_subspace - 1e-12);
  CHECK(t.avg_perp_cone_sq >= 0.0);
  SimSpec off = base_spec(0.45);
  CHECK(run_trace(off, 0).residual_samples == 0);
}

TEST_CASE("load sweep emits one row per offset with analytic columns") {
  HeavyTrafficFamily fam = HeavyTrafficFamily::uniform(2);
  SimSpec tmpl;
  tmpl.config = {2, CostMatrix::unit(2), ArrivalProcess::bernoulli_iid(2, 0.25)};
  tmpl.horizon = 4000;
  tmpl.warmup = 800;
  tmpl.seed = 17;
  tmpl.replications = 4;
  tmpl.residual_stride = 100;
  std::vector<double> eps = {0.5, 0.3};
  SimPolicy mw = make_maxweight_policy(tmpl.config.cost);
  auto rows = heavy_traffic_sweep(fam, mw, tmpl, eps);
  REQUIRE(rows.size() == 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const HtRow& row = rows[i];
    CHECK(row.eps == eps[i]);
    CHECK(row.scaled_weighted.mean ==
          doctest::Approx(row.eps * row.raw_weighted.mean).epsilon(1e-12));
    double lam = (1 - row.eps) * 0.5;
    QVec sigma2(4, lam * (1 - lam));
    CHECK(row.limit_prediction ==
          doctest::Approx(heavy_traffic_limit(sigma2, tmpl.config.cost)).epsilon(1e-12));
    CHECK(row.lower_bound ==
          doctest::Approx(universal_lower_bound(sigma2, row.eps, 2, tmpl.config.cost))
              .epsilon(1e-12));
    CHECK(row.unused.mean >= 0.0);
    CHECK(row.unused.mean <= 2.0);
    CHECK(row.perp_cone.mean >= row.perp_subspace.mean - 1e-12);
    CHECK(row.perp_cone.replications == 4);
  }
  CHECK_THROWS_AS(heavy_traffic_sweep(fam, mw, tmpl, {1.5}), std::invalid_argument);
}
