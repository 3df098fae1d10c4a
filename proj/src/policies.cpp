#include "iqs/policies.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace iqs {

namespace {

// Uniform draw from a set of schedule indices.
int pick_uniform(const std::vector<int>& set, RngStream& rng) {
  assert(!set.empty());
  if (set.size() == 1) return set[0];
  return set[rng.uniform_int(set.size())];
}

bool covers(const QueueState& q, const Schedule& s) {
  for (int i = 0; i < q.n; ++i)
    for (int j = 0; j < q.n; ++j)
      if (q.at(i, j) > 0 && !s.serves(i, j)) return false;
  return true;
}

}  // namespace

RegionLabel classify_region(const QueueState& q, const CostMatrix& c) {
  if (q.n != 2 || c.n != 2) throw std::invalid_argument("region labels are defined for n == 2");
  const auto& scheds = schedule_set(2);
  // Interior first: a state where full reward is attainable counts as interior
  // even when one schedule covers every nonempty queue (the two rules then
  // agree on the action anyway; the zero state still lands in the trivial
  // boundary because its best reward is 0 < r_max).
  double r_max = std::max(c.at(0, 0) + c.at(1, 1), c.at(0, 1) + c.at(1, 0));
  for (const Schedule& s : scheds)
    if (reward(q, s, c) == r_max) return RegionLabel::Interior;
  for (const Schedule& s : scheds)
    if (covers(q, s)) return RegionLabel::TrivialBoundary;
  return RegionLabel::CriticalBoundary;
}

double schedule_weight(const QueueState& q, const CostMatrix& c, const Schedule& s) {
  double w = 0.0;
  for (int i = 0; i < q.n; ++i) {
    int j = s.out_of[i];
    w += c.at(i, j) * q.at(i, j);
  }
  return w;
}

std::vector<int> maxweight_argmax_set(const QueueState& q, const CostMatrix& c) {
  assert(q.n == c.n && q.n <= 8);
  const auto& scheds = schedule_set(q.n);
  std::vector<double> w(scheds.size());
  double best = -1.0;
  for (std::size_t k = 0; k < scheds.size(); ++k) {
    w[k] = schedule_weight(q, c, scheds[k]);
    best = std::max(best, w[k]);
  }
  double thr = best - kRelTol * std::max(1.0, std::abs(best));
  std::vector<int> out;
  for (std::size_t k = 0; k < scheds.size(); ++k)
    if (w[k] >= thr) out.push_back(static_cast<int>(k));
  return out;
}

Schedule maxweight_schedule(const QueueState& q, const CostMatrix& c, RngStream& rng) {
  if (q.n != c.n) throw std::invalid_argument("queue and cost shapes differ");
  if (q.n <= 8) {
    auto set = maxweight_argmax_set(q, c);
    return schedule_set(q.n)[pick_uniform(set, rng)];
  }
  std::vector<double> weight(static_cast<std::size_t>(q.n) * q.n);
  for (int i = 0; i < q.n; ++i)
    for (int j = 0; j < q.n; ++j) weight[i * q.n + j] = c.at(i, j) * q.at(i, j);
  return max_weight_assignment(q.n, weight);
}

Schedule symmetric_optimal_schedule(const QueueState& q, RngStream& rng) {
  assert(q.n == 2);
  const auto& scheds = schedule_set(2);
  CostMatrix unit = CostMatrix::unit(2);
  switch (classify_region(q, unit)) {
    case RegionLabel::TrivialBoundary: {
      std::vector<int> covering;
      for (int s = 0; s < 2; ++s)
        if (covers(q, scheds[s])) covering.push_back(s);
      return scheds[pick_uniform(covering, rng)];
    }
    case RegionLabel::Interior: {
      // Schedules moving two packets; prefer the larger backlog when both do.
      std::vector<int> two;
      for (int s = 0; s < 2; ++s)
        if (reward(q, scheds[s], unit) == 2.0) two.push_back(s);
      if (two.size() == 1) return scheds[two[0]];
      double w0 = schedule_weight(q, unit, scheds[0]);
      double w1 = schedule_weight(q, unit, scheds[1]);
      if (w0 != w1) return scheds[w0 > w1 ? 0 : 1];
      return scheds[pick_uniform({0, 1}, rng)];
    }
    case RegionLabel::CriticalBoundary: {
      int longest = 0;
      for (int id = 0; id < 4; ++id) longest = std::max(longest, q.len[id]);
      std::vector<int> serving;
      for (int s = 0; s < 2; ++s)
        for (int id = 0; id < 4; ++id)
          if (q.len[id] == longest && schedule_of_queue(id) == s) {
            serving.push_back(s);
            break;
          }
      return scheds[pick_uniform(serving, rng)];
    }
  }
  throw std::logic_error("unreachable");
}

Schedule lookahead_schedule(const QueueState& q, const DpInstance& inst, const ValueFunction& vf,
                            RngStream& rng) {
  auto w = lookahead_values(inst, vf, to_state4(q));
  double best = std::max(w[0], w[1]);
  double thr = best - kRelTol * std::max(1.0, std::abs(best));
  std::vector<int> set;
  for (int s = 0; s < 2; ++s)
    if (w[s] >= thr) set.push_back(s);
  return schedule_set(2)[pick_uniform(set, rng)];
}

}  // namespace iqs
