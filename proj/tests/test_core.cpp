#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "iqs/core.hpp"
#include "iqs/rng.hpp"

using namespace iqs;

namespace {

ArrivalMatrix zero_arrivals(int n) { return ArrivalMatrix(n); }

bool is_permutation(const Schedule& s) {
  std::vector<int> seen(s.n(), 0);
  for (int j : s.out_of) {
    if (j < 0 || j >= s.n()) return false;
    ++seen[j];
  }
  return std::all_of(seen.begin(), seen.end(), [](int k) { return k == 1; });
}

}  // namespace

TEST_CASE("schedule enumeration is lexicographic and complete") {
  const auto& two = schedule_set(2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].out_of == std::vector<int>{0, 1});  // identity first
  CHECK(two[1].out_of == std::vector<int>{1, 0});

  auto three = enumerate_schedules(3);
  CHECK(three.size() == 6);
  for (const auto& s : three) CHECK(is_permutation(s));
  CHECK(std::is_sorted(three.begin(), three.end(), [](const Schedule& a, const Schedule& b) {
    return a.out_of < b.out_of;
  }));
  std::set<std::vector<int>> distinct;
  for (const auto& s : three) distinct.insert(s.out_of);
  CHECK(distinct.size() == 6);

  CHECK(enumerate_schedules(4).size() == 24);
  CHECK_THROWS_AS(enumerate_schedules(0), std::invalid_argument);
  CHECK_THROWS_AS(enumerate_schedules(9), std::invalid_argument);
}

TEST_CASE("one-slot dynamics") {
  const Schedule diag({0, 1});

  QueueState q(2, {1, 0, 0, 2});
  QueueState next = step(q, diag, zero_arrivals(2));
  CHECK(next.len == std::vector<int>{0, 0, 0, 1});

  QueueState empty(2);
  ArrivalMatrix ones(2);
  ones.count = {1, 1, 1, 1};
  CHECK(step(empty, diag, ones).len == std::vector<int>{1, 1, 1, 1});

  QueueState off(2, {0, 3, 2, 0});
  CHECK(step(off, diag, zero_arrivals(2)) == off);  // schedule hits only empty queues
}

TEST_CASE("dynamics stay nonnegative and conserve packets") {
  RngStream rng(77, 0, RngLane::Aux);
  auto arr = ArrivalProcess::bernoulli_iid(2, 0.5);
  for (int trial = 0; trial < 500; ++trial) {
    QueueState q(2);
    for (int& x : q.len) x = rng.uniform_int(4);
    const Schedule& s = schedule_set(2)[rng.uniform_int(2)];
    ArrivalMatrix a = sample_arrivals(arr, rng);
    int served = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        if (s.serves(i, j) && q.at(i, j) > 0) ++served;
    QueueState next = step(q, s, a);
    for (int x : next.len) CHECK(x >= 0);
    int added = 0;
    for (int x : a.count) added += x;
    CHECK(next.total() == q.total() + added - served);
  }
}

TEST_CASE("reward counts weighted transmissions from nonempty queues") {
  CostMatrix c(2, {2, 10, 10, 2});
  QueueState q(2, {0, 2, 3, 0});
  const Schedule diag({0, 1}), anti({1, 0});
  CHECK(reward(q, anti, c) == 20.0);
  CHECK(reward(q, diag, c) == 0.0);

  QueueState ones(2, 1);
  CostMatrix unit = CostMatrix::unit(2);
  CHECK(reward(ones, diag, unit) == 2.0);
  CHECK(reward(ones, anti, unit) == 2.0);

  QueueState empty(2);
  CHECK(reward(empty, diag, c) == 0.0);
  CHECK(reward(empty, anti, c) == 0.0);
}

TEST_CASE("unused service counts crosspoints aimed at empty queues") {
  const Schedule diag({0, 1}), anti({1, 0});
  QueueState q(2, {2, 0, 0, 0});
  CHECK(unused_service(q, diag) == 1);
  CHECK(unused_service(q, anti) == 2);
  CHECK(unused_service(QueueState(2), diag) == 2);
  CHECK(unused_service(QueueState(2, 1), diag) == 0);
}

TEST_CASE("bernoulli pmf moments") {
  QueuePmf p = QueuePmf::bernoulli(0.3);
  REQUIRE(p.p.size() == 2);
  CHECK(p.p[0] == doctest::Approx(0.7));
  CHECK(p.p[1] == doctest::Approx(0.3));
  CHECK(p.a_max() == 1);
  CHECK(p.mean() == doctest::Approx(0.3));
  CHECK(p.variance() == doctest::Approx(0.21));

  QueuePmf wide({0.5, 0.25, 0.25});
  CHECK(wide.a_max() == 2);
  CHECK(wide.mean() == doctest::Approx(0.75));
  CHECK(wide.variance() == doctest::Approx(0.6875));

  CHECK_THROWS_AS(QueuePmf({0.5, 0.4}), std::invalid_argument);   // mass off by 0.1
  CHECK_THROWS_AS(QueuePmf({1.2, -0.2}), std::invalid_argument);  // negative entry
}

TEST_CASE("arrival process aggregates per-queue laws") {
  auto arr = ArrivalProcess::bernoulli(2, {0.7, 0.2, 0.29, 0.5});
  CHECK(arr.a_max() == 1);
  auto mean = arr.mean_matrix();
  auto var = arr.variance_matrix();
  CHECK(mean[0] == doctest::Approx(0.7));
  CHECK(mean[3] == doctest::Approx(0.5));
  CHECK(var[1] == doctest::Approx(0.2 * 0.8));
  CHECK(var[2] == doctest::Approx(0.29 * 0.71));
}

TEST_CASE("degenerate arrival draws") {
  RngStream rng(1, 0, RngLane::Arrivals);
  auto none = ArrivalProcess::bernoulli_iid(2, 0.0);
  auto all = ArrivalProcess::bernoulli_iid(2, 1.0);
  for (int t = 0; t < 20; ++t) {
    CHECK(sample_arrivals(none, rng).count == std::vector<int>{0, 0, 0, 0});
    CHECK(sample_arrivals(all, rng).count == std::vector<int>{1, 1, 1, 1});
  }
}

TEST_CASE("arrival sampling hits the declared rate") {
  auto arr = ArrivalProcess::bernoulli_iid(2, 0.45);
  RngStream rng(20260822, 0, RngLane::Arrivals);
  const int draws = 1000000;
  long long total = 0;
  for (int t = 0; t < draws; ++t) {
    ArrivalMatrix a = sample_arrivals(arr, rng);
    total += a.count[0] + a.count[1] + a.count[2] + a.count[3];
  }
  double empirical = static_cast<double>(total) / (4.0 * draws);
  CHECK(std::abs(empirical - 0.45) < 0.002);
}

TEST_CASE("rate admissibility by port loads") {
  LoadReport stable = check_admissible_rates(2, {0.45, 0.45, 0.45, 0.45});
  CHECK(stable.verdict == Stability::Stable);
  CHECK(stable.max_load == doctest::Approx(0.9));
  for (double r : stable.row_load) CHECK(r == doctest::Approx(0.9));
  for (double r : stable.col_load) CHECK(r == doctest::Approx(0.9));

  CHECK(check_admissible_rates(2, {0.5, 0.5, 0.5, 0.5}).verdict == Stability::Critical);
  CHECK(check_admissible_rates(2, {0.7, 0.7, 0.1, 0.1}).verdict == Stability::Overloaded);

  LoadReport paperish = check_admissible_rates(2, {0.7, 0.2, 0.29, 0.5});
  CHECK(paperish.verdict == Stability::Stable);
  CHECK(paperish.max_load == doctest::Approx(0.99));

  CHECK_THROWS_AS(check_admissible_rates(2, {-0.1, 0.5, 0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and lane-separated") {
  RngStream a(42, 3, RngLane::Arrivals);
  RngStream b(42, 3, RngLane::Arrivals);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream arrivals(42, 3, RngLane::Arrivals);
  RngStream policy(42, 3, RngLane::Policy);
  RngStream other_rep(42, 4, RngLane::Arrivals);
  RngStream other_master(43, 3, RngLane::Arrivals);
  int equal_lane = 0, equal_rep = 0, equal_master = 0;
  for (int i = 0; i < 64; ++i) {
    std::uint64_t x = arrivals.next_u64();
    equal_lane += x == policy.next_u64();
    equal_rep += x == other_rep.next_u64();
    equal_master += x == other_master.next_u64();
  }
  CHECK(equal_lane == 0);
  CHECK(equal_rep == 0);
  CHECK(equal_master == 0);
}

TEST_CASE("rng primitive ranges") {
  RngStream rng(7, 0, RngLane::Aux);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 30000; ++i) {
    int k = rng.uniform_int(3);
    REQUIRE(k >= 0);
    REQUIRE(k < 3);
    ++counts[k];
  }
  for (int k : counts) CHECK(std::abs(k - 10000) < 500);
}
