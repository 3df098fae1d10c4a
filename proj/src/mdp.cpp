#include "iqs/mdp.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <thread>
#include <utility>

namespace iqs {

namespace {

// Split the leading state axis into contiguous slabs, one per worker. Every
// element is computed by the same scalar expression regardless of the split,
// so results are bitwise identical for any thread count.
template <class F>
void parallel_slabs(int d, int threads, F&& f) {
  threads = std::clamp(threads, 1, d);
  if (threads == 1) {
    f(0, d);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  int base = d / threads, rem = d % threads, lo = 0;
  for (int t = 0; t < threads; ++t) {
    int hi = lo + base + (t < rem ? 1 : 0);
    pool.emplace_back([&f, lo, hi] { f(lo, hi); });
    lo = hi;
  }
  for (auto& th : pool) th.join();
}

// One per-axis arrival convolution with edge clamping at qmax:
// out(x) = sum_a p[a] in(x with axis coordinate min(x_axis + a, qmax)).
void axis_pass(const double* in, double* out, int d, int axis, const std::vector<double>& p,
               int threads) {
  const long sd = d;
  const long strides[4] = {sd * sd * sd, sd * sd, sd, 1};
  const long stride = strides[axis];
  const int amax = static_cast<int>(p.size()) - 1;
  parallel_slabs(d, threads, [&](int lo, int hi) {
    for (int i0 = lo; i0 < hi; ++i0)
      for (int i1 = 0; i1 < d; ++i1)
        for (int i2 = 0; i2 < d; ++i2) {
          long row = ((static_cast<long>(i0) * d + i1) * d + i2) * d;
          for (int i3 = 0; i3 < d; ++i3) {
            long idx = row + i3;
            int x = axis == 0 ? i0 : axis == 1 ? i1 : axis == 2 ? i2 : i3;
            double acc = 0.0;
            if (x + amax < d) {
              for (int a = 0; a <= amax; ++a) acc += p[a] * in[idx + a * stride];
            } else {
              for (int a = 0; a <= amax; ++a)
                acc += p[a] * in[idx + static_cast<long>(std::min(x + a, d - 1) - x) * stride];
            }
            out[idx] = acc;
          }
        }
  });
}

// Leaves E[in(x + A)] as a function of x in scratch.b.
void arrival_expectation(const DpInstance& inst, const std::vector<double>& in,
                         BellmanScratch& scratch, int d, int threads) {
  std::size_t n = in.size();
  scratch.a.resize(n);
  scratch.b.resize(n);
  axis_pass(in.data(), scratch.a.data(), d, 0, inst.arrivals.at(0, 0).p, threads);
  axis_pass(scratch.a.data(), scratch.b.data(), d, 1, inst.arrivals.at(0, 1).p, threads);
  axis_pass(scratch.b.data(), scratch.a.data(), d, 2, inst.arrivals.at(1, 0).p, threads);
  axis_pass(scratch.a.data(), scratch.b.data(), d, 3, inst.arrivals.at(1, 1).p, threads);
}

struct ActionWeights {
  double w0, w1;  // diagonal, anti-diagonal
};

// Action values at one grid state given the arrival-expectation table.
inline ActionWeights action_weights(const double* ev, long idx, int i0, int i1, int i2, int i3,
                                    const long* strides, const double* c, double beta) {
  double r0 = (i0 > 0 ? c[0] : 0.0) + (i3 > 0 ? c[3] : 0.0);
  double r1 = (i1 > 0 ? c[1] : 0.0) + (i2 > 0 ? c[2] : 0.0);
  long g0 = idx - (i0 > 0 ? strides[0] : 0) - (i3 > 0 ? strides[3] : 0);
  long g1 = idx - (i1 > 0 ? strides[1] : 0) - (i2 > 0 ? strides[2] : 0);
  return {r0 + beta * ev[g0], r1 + beta * ev[g1]};
}

}  // namespace

void DpInstance::validate() const {
  if (cost.n != 2 || arrivals.n != 2)
    throw std::invalid_argument("dynamic programming requires a 2x2 switch");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("discount must lie in (0,1)");
  for (double c : cost.w)
    if (!(c > 0.0)) throw std::invalid_argument("costs must be positive");
}

double DpInstance::r_max() const {
  return std::max(cost.at(0, 0) + cost.at(1, 1), cost.at(0, 1) + cost.at(1, 0));
}

double ValueFunction::eval_extended(const State4& q, int a_max) const {
  int safe = grid.qmax - a_max;
  if (sweeps <= safe) {
    State4 cl;
    for (int k = 0; k < 4; ++k) cl[k] = std::min(q[k], sweeps);
    return v[grid.index(cl)];
  }
  for (int x : q)
    if (x > safe)
      throw TruncationError(
          "state outside the safe interior of a converged value table; "
          "enlarge qmax or evaluate a shallower table");
  return v[grid.index(q)];
}

ValueFunction zero_value(int qmax, double beta) {
  if (qmax < 1) throw std::invalid_argument("qmax must be at least 1");
  ValueFunction vf;
  vf.grid.qmax = qmax;
  vf.beta = beta;
  vf.sweeps = 0;
  vf.v.assign(vf.grid.size(), 0.0);
  return vf;
}

double bellman_sweep(const DpInstance& inst, const ValueFunction& in, ValueFunction& out,
                     BellmanScratch& scratch, int threads) {
  const int d = in.grid.qmax + 1;
  const long sd = d;
  const long strides[4] = {sd * sd * sd, sd * sd, sd, 1};
  out.grid = in.grid;
  out.beta = in.beta;
  out.sweeps = in.sweeps + 1;
  out.v.resize(in.v.size());
  arrival_expectation(inst, in.v, scratch, d, threads);
  const double* ev = scratch.b.data();
  const double* c = inst.cost.w.data();
  const double beta = inst.beta;
  const double* prev = in.v.data();
  double* next = out.v.data();
  std::vector<double> slab_delta(static_cast<std::size_t>(d), 0.0);
  parallel_slabs(d, threads, [&](int lo, int hi) {
    for (int i0 = lo; i0 < hi; ++i0) {
      double worst = 0.0;
      for (int i1 = 0; i1 < d; ++i1)
        for (int i2 = 0; i2 < d; ++i2) {
          long row = ((static_cast<long>(i0) * d + i1) * d + i2) * d;
          for (int i3 = 0; i3 < d; ++i3) {
            long idx = row + i3;
            auto [w0, w1] = action_weights(ev, idx, i0, i1, i2, i3, strides, c, beta);
            double val = std::max(w0, w1);
            next[idx] = val;
            worst = std::max(worst, std::abs(val - prev[idx]));
          }
        }
      slab_delta[i0] = std::max(slab_delta[i0], worst);
    }
  });
  return *std::max_element(slab_delta.begin(), slab_delta.end());
}

ValueFunction bellman_iterate(const DpInstance& inst, const ValueFunction& in, int threads) {
  ValueFunction out;
  BellmanScratch scratch;
  bellman_sweep(inst, in, out, scratch, threads);
  return out;
}

double stopping_threshold(double beta, double eps) {
  assert(beta > 0.0 && beta < 1.0);
  return eps * (1.0 - beta) * (1.0 - beta) / (2.0 * beta * beta);
}

ValueIterationResult value_iteration(const DpInstance& inst, const ValueIterationOptions& opt) {
  inst.validate();
  ValueFunction cur = zero_value(opt.qmax, inst.beta);
  ValueFunction next = cur;
  BellmanScratch scratch;
  ValueIterationResult res;
  for (int k = 1; k <= opt.max_sweeps; ++k) {
    double delta = bellman_sweep(inst, cur, next, scratch, opt.threads);
    std::swap(cur, next);
    res.sweeps = k;
    res.last_delta = delta;
    if (opt.observer) opt.observer(cur);
    if (delta < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.value = std::move(cur);
  return res;
}

PolicyTable greedy_policy(const DpInstance& inst, const ValueFunction& vf, int threads) {
  const int d = vf.grid.qmax + 1;
  const long sd = d;
  const long strides[4] = {sd * sd * sd, sd * sd, sd, 1};
  PolicyTable pt;
  pt.grid = vf.grid;
  pt.beta = inst.beta;
  pt.action.assign(vf.grid.size(), 0);
  pt.tie_mask.assign(vf.grid.size(), 0);
  BellmanScratch scratch;
  arrival_expectation(inst, vf.v, scratch, d, threads);
  const double* ev = scratch.b.data();
  const double* c = inst.cost.w.data();
  const double beta = inst.beta;
  parallel_slabs(d, threads, [&](int lo, int hi) {
    for (int i0 = lo; i0 < hi; ++i0)
      for (int i1 = 0; i1 < d; ++i1)
        for (int i2 = 0; i2 < d; ++i2) {
          long row = ((static_cast<long>(i0) * d + i1) * d + i2) * d;
          for (int i3 = 0; i3 < d; ++i3) {
            long idx = row + i3;
            auto [w0, w1] = action_weights(ev, idx, i0, i1, i2, i3, strides, c, beta);
            double best = std::max(w0, w1);
            double thr = best - kRelTol * std::max(1.0, std::abs(best));
            std::uint8_t mask = (w0 >= thr ? 1 : 0) | (w1 >= thr ? 2 : 0);
            pt.tie_mask[idx] = mask;
            pt.action[idx] = (mask & 1) ? 0 : 1;
          }
        }
  });
  return pt;
}

std::array<double, 2> lookahead_values(const DpInstance& inst, const ValueFunction& vf,
                                       const State4& q) {
  const int a_max = inst.arrivals.a_max();
  std::array<double, 2> w{};
  auto scheds = schedule_set(2);
  for (int s = 0; s < 2; ++s) {
    State4 after;
    double r = 0.0;
    for (int id = 0; id < 4; ++id) {
      bool served = scheds[s].serves(queue_row(id), queue_col(id)) && q[id] > 0;
      after[id] = q[id] - (served ? 1 : 0);
      if (served) r += inst.cost.w[id];
    }
    double acc = 0.0;
    const auto& p00 = inst.arrivals.at(0, 0).p;
    const auto& p01 = inst.arrivals.at(0, 1).p;
    const auto& p10 = inst.arrivals.at(1, 0).p;
    const auto& p11 = inst.arrivals.at(1, 1).p;
    for (std::size_t a0 = 0; a0 < p00.size(); ++a0)
      for (std::size_t a1 = 0; a1 < p01.size(); ++a1)
        for (std::size_t a2 = 0; a2 < p10.size(); ++a2)
          for (std::size_t a3 = 0; a3 < p11.size(); ++a3) {
            double pr = p00[a0] * p01[a1] * p10[a2] * p11[a3];
            if (pr == 0.0) continue;
            State4 x{after[0] + static_cast<int>(a0), after[1] + static_cast<int>(a1),
                     after[2] + static_cast<int>(a2), after[3] + static_cast<int>(a3)};
            acc += pr * vf.eval_extended(x, a_max);
          }
    w[s] = r + inst.beta * acc;
  }
  return w;
}

ValueFunction policy_value(const DpInstance& inst, const PolicyTable& policy, double tol,
                           int max_sweeps, int threads) {
  inst.validate();
  const int d = policy.grid.qmax + 1;
  const long sd = d;
  const long strides[4] = {sd * sd * sd, sd * sd, sd, 1};
  ValueFunction cur = zero_value(policy.grid.qmax, inst.beta);
  ValueFunction next = cur;
  BellmanScratch scratch;
  const double* c = inst.cost.w.data();
  const double beta = inst.beta;
  for (int k = 1; k <= max_sweeps; ++k) {
    arrival_expectation(inst, cur.v, scratch, d, threads);
    const double* ev = scratch.b.data();
    const double* prev = cur.v.data();
    double* out = next.v.data();
    std::vector<double> slab_delta(static_cast<std::size_t>(d), 0.0);
    parallel_slabs(d, threads, [&](int lo, int hi) {
      for (int i0 = lo; i0 < hi; ++i0) {
        double worst = 0.0;
        for (int i1 = 0; i1 < d; ++i1)
          for (int i2 = 0; i2 < d; ++i2) {
            long row = ((static_cast<long>(i0) * d + i1) * d + i2) * d;
            for (int i3 = 0; i3 < d; ++i3) {
              long idx = row + i3;
              auto [w0, w1] = action_weights(ev, idx, i0, i1, i2, i3, strides, c, beta);
              double val = policy.action[idx] == 0 ? w0 : w1;
              out[idx] = val;
              worst = std::max(worst, std::abs(val - prev[idx]));
            }
          }
        slab_delta[i0] = std::max(slab_delta[i0], worst);
      }
    });
    next.sweeps = k;
    std::swap(cur, next);
    if (*std::max_element(slab_delta.begin(), slab_delta.end()) < tol) break;
  }
  return cur;
}

double discounted_cost_of_policy(const DpInstance& inst, const ValueFunction& reward_value,
                                 const State4& q0) {
  std::vector<double> lambda = inst.arrivals.mean_matrix();
  double g = 0.0, cq0 = 0.0;
  for (int id = 0; id < 4; ++id) {
    g += inst.cost.w[id] * lambda[id];
    cq0 += inst.cost.w[id] * q0[id];
  }
  g *= inst.beta / (1.0 - inst.beta);
  double jr = reward_value.eval_extended(q0, inst.arrivals.a_max());
  return (cq0 + g - inst.beta * jr) / (1.0 - inst.beta);
}

std::array<int, 2> conflicting_queues(int id) {
  int r = queue_row(id), c = queue_col(id);
  return {r * 2 + (1 - c), (1 - r) * 2 + c};
}

}  // namespace iqs
