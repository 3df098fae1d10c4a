#pragma once

#include <cassert>
#include <string>
#include <vector>

#include "iqs/rng.hpp"

namespace iqs {

// Queue lengths of an n x n input-queued switch, row-major: entry (i,j) is the
// virtual output queue at input i holding packets for output j.
struct QueueState {
  int n = 0;
  std::vector<int> len;

  QueueState() = default;
  explicit QueueState(int n_, int fill = 0) : n(n_), len(n_ * n_, fill) {}
  QueueState(int n_, std::vector<int> v) : n(n_), len(std::move(v)) {
    assert(static_cast<int>(len.size()) == n * n);
  }

  int at(int i, int j) const { return len[i * n + j]; }
  int& at(int i, int j) { return len[i * n + j]; }
  int total() const {
    int t = 0;
    for (int x : len) t += x;
    return t;
  }
  bool operator==(const QueueState& o) const { return n == o.n && len == o.len; }
};

// Packet arrivals for one slot, same layout as QueueState.
struct ArrivalMatrix {
  int n = 0;
  std::vector<int> count;

  ArrivalMatrix() = default;
  explicit ArrivalMatrix(int n_) : n(n_), count(n_ * n_, 0) {}
  int at(int i, int j) const { return count[i * n + j]; }
  int& at(int i, int j) { return count[i * n + j]; }
};

// Per-queue holding costs, all strictly positive.
struct CostMatrix {
  int n = 0;
  std::vector<double> w;

  CostMatrix() = default;
  explicit CostMatrix(int n_, double fill = 1.0) : n(n_), w(n_ * n_, fill) {}
  CostMatrix(int n_, std::vector<double> v) : n(n_), w(std::move(v)) {
    assert(static_cast<int>(w.size()) == n * n);
  }
  static CostMatrix unit(int n_) { return CostMatrix(n_, 1.0); }

  double at(int i, int j) const { return w[i * n + j]; }
  double& at(int i, int j) { return w[i * n + j]; }
};

// Crossbar schedule: a perfect matching stored as a permutation, input i is
// wired to output out_of[i]. Always connects every input to some output.
struct Schedule {
  std::vector<int> out_of;

  Schedule() = default;
  explicit Schedule(std::vector<int> p) : out_of(std::move(p)) {}
  int n() const { return static_cast<int>(out_of.size()); }
  bool serves(int i, int j) const { return out_of[i] == j; }
  bool operator==(const Schedule& o) const { return out_of == o.out_of; }
};

// Distribution of one queue's per-slot arrival count on support {0..a_max}.
struct QueuePmf {
  std::vector<double> p;  // p[a] = P(A = a)

  QueuePmf() = default;
  explicit QueuePmf(std::vector<double> probs);
  static QueuePmf bernoulli(double rate);

  int a_max() const { return static_cast<int>(p.size()) - 1; }
  double mean() const;
  double variance() const;
};

// Independent per-queue arrival distributions, i.i.d. across slots.
struct ArrivalProcess {
  int n = 0;
  std::vector<QueuePmf> entry;  // row-major

  ArrivalProcess() = default;
  ArrivalProcess(int n_, std::vector<QueuePmf> e) : n(n_), entry(std::move(e)) {
    assert(static_cast<int>(entry.size()) == n * n);
  }
  static ArrivalProcess bernoulli(int n, const std::vector<double>& rates);
  static ArrivalProcess bernoulli_iid(int n, double rate);

  const QueuePmf& at(int i, int j) const { return entry[i * n + j]; }
  int a_max() const;
  std::vector<double> mean_matrix() const;
  std::vector<double> variance_matrix() const;
};

struct SwitchConfig {
  int n = 0;
  CostMatrix cost;
  ArrivalProcess arrivals;
};

enum class Stability { Stable, Critical, Overloaded };

struct LoadReport {
  Stability verdict = Stability::Stable;
  std::vector<double> row_load, col_load;
  double max_load = 0.0;
};

// All n! schedules in lexicographic order of the permutation vector. Guarded
// to n <= 8; larger switches go through the assignment solver instead.
const std::vector<Schedule>& schedule_set(int n);
std::vector<Schedule> enumerate_schedules(int n);

// One slot of queue dynamics: serve (only nonempty queues drain), then admit
// arrivals: q' = (q - s)^+ + a.
QueueState step(const QueueState& q, const Schedule& s, const ArrivalMatrix& a);

// Weight of the packets actually transmitted: sum of c_ij over scheduled
// nonempty queues.
double reward(const QueueState& q, const Schedule& s, const CostMatrix& c);

// Crosspoints scheduled onto empty queues this slot.
int unused_service(const QueueState& q, const Schedule& s);

ArrivalMatrix sample_arrivals(const ArrivalProcess& arr, RngStream& rng);

// Row/column port loads of a rate matrix; stable iff all loads < 1.
LoadReport check_admissible_rates(int n, const std::vector<double>& lambda);

std::string to_string(const QueueState& q);
std::string to_string(const Schedule& s);

}  // namespace iqs
