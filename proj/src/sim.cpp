#include "iqs/sim.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include "iqs/policies.hpp"

namespace iqs {

namespace {

double weighted_backlog(const CostMatrix& c, const QueueState& q) {
  double s = 0.0;
  for (std::size_t k = 0; k < q.len.size(); ++k) s += c.w[k] * q.len[k];
  return s;
}

bool uniform_costs(const CostMatrix& c) {
  for (double w : c.w)
    if (w != 1.0) return false;
  return true;
}

Schedule pick_from_mask(std::uint8_t mask, RngStream& rng) {
  assert(mask >= 1 && mask <= 3);
  const auto& scheds = schedule_set(2);
  if (mask == 3) return scheds[rng.uniform_int(2)];
  return scheds[mask == 2 ? 1 : 0];
}

}  // namespace

SimPolicy make_maxweight_policy(const CostMatrix& cost) {
  if (cost.n < 2) throw std::invalid_argument("cost matrix must cover a real switch");
  for (double w : cost.w)
    if (!(w > 0)) throw std::invalid_argument("costs must be strictly positive");
  std::string name = uniform_costs(cost) ? "maxweight" : "c-maxweight";
  return {std::move(name), [cost](const QueueState& q, RngStream& rng) {
            return maxweight_schedule(q, cost, rng);
          }};
}

SimPolicy make_symmetric_optimal_policy(const SwitchConfig& config) {
  if (config.n != 2)
    throw std::invalid_argument("the two-port optimal rule is defined for n = 2 only");
  if (!uniform_costs(config.cost))
    throw std::invalid_argument("the two-port optimal rule needs uniform costs");
  for (int k = 1; k < 4; ++k)
    if (config.arrivals.entry[k].p != config.arrivals.entry[0].p)
      throw std::invalid_argument(
          "the two-port optimal rule needs identical arrival laws across queues");
  return {"symmetric-opt", [](const QueueState& q, RngStream& rng) {
            return symmetric_optimal_schedule(q, rng);
          }};
}

SimPolicy make_lookahead_policy(const DpInstance& inst, int depth) {
  if (depth < 1) throw std::invalid_argument("look-ahead depth must be >= 1");
  inst.validate();
  const int amax = inst.arrivals.a_max();

  // depth-1 backups saturate beyond depth-1 per coordinate, so a box reaching
  // depth-1+amax evaluates them exactly at any state.
  ValueFunction vf = zero_value(depth - 1 + amax, inst.beta);
  for (int k = 1; k < depth; ++k) vf = bellman_iterate(inst, vf);

  // Action values at q equal those at q clamped to depth, coordinate-wise:
  // precompute the argmax mask over that box once.
  StateGrid box{depth};
  std::vector<std::uint8_t> mask(box.size());
  for (std::size_t idx = 0; idx < box.size(); ++idx) {
    const auto w = lookahead_values(inst, vf, box.coords(idx));
    const double best = std::max(w[0], w[1]);
    const double thr = best - kRelTol * std::max(1.0, std::abs(best));
    mask[idx] = static_cast<std::uint8_t>((w[0] >= thr ? 1 : 0) | (w[1] >= thr ? 2 : 0));
  }

  return {"lookahead:k=" + std::to_string(depth),
          [box, cap = depth, mask = std::move(mask)](const QueueState& q, RngStream& rng) {
            assert(q.n == 2);
            State4 s;
            for (int k = 0; k < 4; ++k) s[k] = std::min(q.len[k], cap);
            return pick_from_mask(mask[box.index(s)], rng);
          }};
}

SimPolicy make_table_policy(PolicyTable table) {
  auto shared = std::make_shared<const PolicyTable>(std::move(table));
  return {"table", [shared](const QueueState& q, RngStream& rng) {
            assert(q.n == 2);
            State4 s;
            for (int k = 0; k < 4; ++k) {
              if (q.len[k] > shared->grid.qmax) {
                std::ostringstream msg;
                msg << "visited state " << to_string(q)
                    << " lies outside the policy table's box (qmax "
                    << shared->grid.qmax << ")";
                throw TruncationError(msg.str());
              }
              s[k] = q.len[k];
            }
            return pick_from_mask(shared->tie_mask[shared->grid.index(s)], rng);
          }};
}

void SimSpec::validate() const {
  if (config.n < 2) throw std::invalid_argument("switch size must be at least 2");
  if (config.cost.n != config.n ||
      static_cast<int>(config.cost.w.size()) != config.n * config.n)
    throw std::invalid_argument("cost shape does not match the switch size");
  if (config.arrivals.n != config.n)
    throw std::invalid_argument("arrival shape does not match the switch size");
  if (!policy.act) throw std::invalid_argument("no policy supplied");
  if (warmup < 0 || horizon <= warmup)
    throw std::invalid_argument("need horizon > warmup >= 0");
  if (replications < 1) throw std::invalid_argument("need at least one replication");
  if (beta < 0.0 || beta >= 1.0)
    throw std::invalid_argument("discount factor must lie in [0,1)");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (residual_stride < 0) throw std::invalid_argument("residual stride must be >= 0");
  if (q0.n != 0) {
    if (q0.n != config.n) throw std::invalid_argument("q0 shape mismatch");
    for (int x : q0.len)
      if (x < 0) throw std::invalid_argument("q0 must be nonnegative");
  }
}

TraceStats run_trace(const SimSpec& spec, int replication) {
  spec.validate();
  const int n = spec.config.n;
  const CostMatrix& cost = spec.config.cost;
  RngStream arrival_rng(spec.seed, static_cast<std::uint64_t>(replication),
                        RngLane::Arrivals);
  RngStream policy_rng(spec.seed, static_cast<std::uint64_t>(replication),
                       RngLane::Policy);

  QueueState q = spec.q0.n == 0 ? QueueState(n) : spec.q0;
  const long long measured = spec.horizon - spec.warmup;
  double sum_weighted = 0, sum_total = 0, sum_unused = 0;
  std::vector<double> sum_queue(n * n, 0.0);
  double betapow = 1.0, discounted = 0.0;
  double sum_pc = 0, sum_pc2 = 0, sum_ps = 0, sum_ps2 = 0;
  long long samples = 0;
  int max_coord = 0;
  QVec qd(n * n);

  for (long long t = 0; t < spec.horizon; ++t) {
    if (spec.beta > 0.0) {
      discounted += betapow * weighted_backlog(cost, q);
      betapow *= spec.beta;
    }
    for (int x : q.len) max_coord = std::max(max_coord, x);
    const bool measure = t >= spec.warmup;
    if (measure) {
      sum_weighted += weighted_backlog(cost, q);
      sum_total += q.total();
      for (int k = 0; k < n * n; ++k) sum_queue[k] += q.len[k];
      if (spec.residual_stride > 0 && (t - spec.warmup) % spec.residual_stride == 0) {
        for (int k = 0; k < n * n; ++k) qd[k] = q.len[k];
        const double pc = c_norm(project_cone(qd, cost).perp, cost);
        const double ps = c_norm(project_subspace(qd, cost).perp, cost);
        sum_pc += pc;
        sum_pc2 += pc * pc;
        sum_ps += ps;
        sum_ps2 += ps * ps;
        ++samples;
      }
    }
    const Schedule s = spec.policy.act(q, policy_rng);
    if (measure) sum_unused += unused_service(q, s);
    const ArrivalMatrix a = sample_arrivals(spec.config.arrivals, arrival_rng);
    q = step(q, s, a);
  }

  TraceStats out;
  out.measured_slots = measured;
  out.avg_weighted_backlog = sum_weighted / static_cast<double>(measured);
  out.avg_total_backlog = sum_total / static_cast<double>(measured);
  out.avg_queue.resize(n * n);
  for (int k = 0; k < n * n; ++k)
    out.avg_queue[k] = sum_queue[k] / static_cast<double>(measured);
  out.avg_unused_service = sum_unused / static_cast<double>(measured);
  out.discounted_weighted_cost = discounted;
  out.residual_samples = samples;
  if (samples > 0) {
    out.avg_perp_cone = sum_pc / static_cast<double>(samples);
    out.avg_perp_cone_sq = sum_pc2 / static_cast<double>(samples);
    out.avg_perp_subspace = sum_ps / static_cast<double>(samples);
    out.avg_perp_subspace_sq = sum_ps2 / static_cast<double>(samples);
  }
  out.max_coordinate = max_coord;
  return out;
}

std::vector<TraceStats> run_traces(const SimSpec& spec) {
  spec.validate();
  const int reps = spec.replications;
  std::vector<TraceStats> out(reps);
  const int workers = std::min(spec.threads, reps);
  if (workers <= 1) {
    for (int r = 0; r < reps; ++r) out[r] = run_trace(spec, r);
    return out;
  }
  // Work-stealing by index; slot r is written by whichever worker drew r, so
  // the reduced vector is identical to the sequential one.
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (int r; (r = next.fetch_add(1)) < reps;) out[r] = run_trace(spec, r);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

SimEstimate estimate_from(std::vector<double> per_rep, std::string statistic) {
  if (per_rep.empty()) throw std::invalid_argument("no replications to estimate from");
  SimEstimate est;
  est.statistic = std::move(statistic);
  est.replications = static_cast<int>(per_rep.size());
  double sum = 0;
  for (double v : per_rep) sum += v;
  est.mean = sum / static_cast<double>(per_rep.size());
  if (per_rep.size() >= 2) {
    double ss = 0;
    for (double v : per_rep) ss += (v - est.mean) * (v - est.mean);
    const double sd = std::sqrt(ss / static_cast<double>(per_rep.size() - 1));
    if (sd > 0) {
      boost::math::students_t_distribution<double> dist(
          static_cast<double>(per_rep.size() - 1));
      est.half_width95 =
          boost::math::quantile(dist, 0.975) * sd / std::sqrt(double(per_rep.size()));
    }
  }
  est.per_rep = std::move(per_rep);
  return est;
}

SimEstimate long_run_average(const SimSpec& spec) {
  spec.validate();
  const LoadReport load =
      check_admissible_rates(spec.config.n, spec.config.arrivals.mean_matrix());
  if (load.verdict != Stability::Stable) {
    std::ostringstream msg;
    msg << "arrival rates are not strictly admissible (max port load "
        << load.max_load << "); long-run averages would not converge";
    throw std::runtime_error(msg.str());
  }
  const auto traces = run_traces(spec);
  std::vector<double> v(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) v[i] = traces[i].avg_weighted_backlog;
  return estimate_from(std::move(v), "avg_weighted_backlog");
}

long long discounted_horizon(double beta, double tail) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0,1)");
  if (!(tail > 0.0 && tail < 1.0)) throw std::invalid_argument("tail must lie in (0,1)");
  const double t = std::log(tail * (1.0 - beta)) / std::log(beta);
  return std::max<long long>(1, static_cast<long long>(std::ceil(t)));
}

SimEstimate discounted_total(const SimSpec& spec) {
  if (!(spec.beta > 0.0 && spec.beta < 1.0))
    throw std::invalid_argument("discounted mode needs beta in (0,1)");
  SimSpec run = spec;
  run.warmup = 0;
  if (run.horizon == 0) run.horizon = discounted_horizon(run.beta);
  run.validate();
  if (std::pow(run.beta, static_cast<double>(run.horizon)) / (1.0 - run.beta) > 1e-2)
    throw std::invalid_argument(
        "horizon too short: the truncated discount tail is not negligible");
  const auto traces = run_traces(run);
  std::vector<double> v(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i)
    v[i] = traces[i].discounted_weighted_cost;
  return estimate_from(std::move(v), "discounted_weighted_cost");
}

GapEstimate compare_policies(const SimSpec& a, const SimSpec& b) {
  const bool same_arrivals = [&] {
    if (a.config.arrivals.n != b.config.arrivals.n) return false;
    for (std::size_t k = 0; k < a.config.arrivals.entry.size(); ++k)
      if (a.config.arrivals.entry[k].p != b.config.arrivals.entry[k].p) return false;
    return true;
  }();
  if (a.config.n != b.config.n || a.config.cost.w != b.config.cost.w ||
      !same_arrivals || a.seed != b.seed || a.horizon != b.horizon ||
      a.warmup != b.warmup || a.replications != b.replications || a.beta != b.beta ||
      !(a.q0 == b.q0))
    throw std::invalid_argument(
        "paired comparison requires identical configuration, seeds, and horizons");

  const bool discounted = a.beta > 0.0;
  SimEstimate ea = discounted ? discounted_total(a) : long_run_average(a);
  SimEstimate eb = discounted ? discounted_total(b) : long_run_average(b);

  std::vector<double> d(ea.per_rep.size());
  for (std::size_t r = 0; r < d.size(); ++r) d[r] = ea.per_rep[r] - eb.per_rep[r];
  const SimEstimate ed = estimate_from(std::move(d), "paired_difference");

  GapEstimate gap;
  gap.a = std::move(ea);
  gap.b = std::move(eb);
  const double base = gap.b.mean;
  if (base == 0.0) {
    if (ed.mean != 0.0 || ed.half_width95 != 0.0)
      throw std::runtime_error("baseline mean is zero; relative gap undefined");
    return gap;
  }
  gap.percent = 100.0 * ed.mean / base;
  gap.half_width95 = 100.0 * ed.half_width95 / std::abs(base);
  return gap;
}

std::vector<HtRow> heavy_traffic_sweep(const HeavyTrafficFamily& family,
                                       const SimPolicy& policy,
                                       const SimSpec& tmpl,
                                       const std::vector<double>& eps_list) {
  family.validate();
  if (tmpl.config.cost.n != family.n)
    throw std::invalid_argument("cost shape does not match the arrival family");

  std::vector<HtRow> rows;
  rows.reserve(eps_list.size());
  for (double eps : eps_list) {
    if (!(eps > 0.0 && eps < 1.0))
      throw std::invalid_argument("load offsets must lie in (0,1)");

    SimSpec spec = tmpl;
    spec.policy = policy;
    spec.config.n = family.n;
    spec.config.arrivals = family.arrivals_at(eps);
    if (spec.horizon == 0) {
      const long long w =
          std::max<long long>(10000, static_cast<long long>(std::ceil(50.0 / eps)));
      spec.warmup = w;
      spec.horizon = 10 * w;
    }
    const auto traces = run_traces(spec);

    const std::size_t reps = traces.size();
    std::vector<double> raw(reps), scaled(reps), unused(reps);
    std::vector<double> pc(reps), pc2(reps), ps(reps), ps2(reps);
    for (std::size_t i = 0; i < reps; ++i) {
      raw[i] = traces[i].avg_weighted_backlog;
      scaled[i] = eps * raw[i];
      unused[i] = traces[i].avg_unused_service;
      pc[i] = traces[i].avg_perp_cone;
      pc2[i] = traces[i].avg_perp_cone_sq;
      ps[i] = traces[i].avg_perp_subspace;
      ps2[i] = traces[i].avg_perp_subspace_sq;
    }

    HtRow row;
    row.eps = eps;
    row.raw_weighted = estimate_from(std::move(raw), "avg_weighted_backlog");
    row.scaled_weighted = estimate_from(std::move(scaled), "eps_avg_weighted_backlog");
    const QVec sigma2 = spec.config.arrivals.variance_matrix();
    row.limit_prediction = heavy_traffic_limit(sigma2, spec.config.cost);
    row.lower_bound = universal_lower_bound(sigma2, eps, family.n, spec.config.cost);
    row.unused = estimate_from(std::move(unused), "avg_unused_service");
    row.perp_cone = estimate_from(std::move(pc), "avg_perp_cone");
    row.perp_cone_sq = estimate_from(std::move(pc2), "avg_perp_cone_sq");
    row.perp_subspace = estimate_from(std::move(ps), "avg_perp_subspace");
    row.perp_subspace_sq = estimate_from(std::move(ps2), "avg_perp_subspace_sq");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace iqs
