#include "iqs/core.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace iqs {

QueuePmf::QueuePmf(std::vector<double> probs) : p(std::move(probs)) {
  if (p.empty()) throw std::invalid_argument("empty pmf");
  double sum = 0.0;
  for (double x : p) {
    if (x < 0.0) throw std::invalid_argument("negative pmf entry");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("pmf does not sum to 1");
}

QueuePmf QueuePmf::bernoulli(double rate) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("bernoulli rate outside [0,1]");
  return QueuePmf({1.0 - rate, rate});
}

double QueuePmf::mean() const {
  double m = 0.0;
  for (int a = 0; a < static_cast<int>(p.size()); ++a) m += a * p[a];
  return m;
}

double QueuePmf::variance() const {
  double m = mean(), m2 = 0.0;
  for (int a = 0; a < static_cast<int>(p.size()); ++a) m2 += double(a) * a * p[a];
  return m2 - m * m;
}

ArrivalProcess ArrivalProcess::bernoulli(int n, const std::vector<double>& rates) {
  if (static_cast<int>(rates.size()) != n * n) throw std::invalid_argument("rate matrix size");
  std::vector<QueuePmf> e;
  e.reserve(rates.size());
  for (double r : rates) e.push_back(QueuePmf::bernoulli(r));
  return ArrivalProcess(n, std::move(e));
}

ArrivalProcess ArrivalProcess::bernoulli_iid(int n, double rate) {
  return bernoulli(n, std::vector<double>(n * n, rate));
}

int ArrivalProcess::a_max() const {
  int m = 0;
  for (const auto& e : entry) m = std::max(m, e.a_max());
  return m;
}

std::vector<double> ArrivalProcess::mean_matrix() const {
  std::vector<double> m(entry.size());
  for (size_t k = 0; k < entry.size(); ++k) m[k] = entry[k].mean();
  return m;
}

std::vector<double> ArrivalProcess::variance_matrix() const {
  std::vector<double> m(entry.size());
  for (size_t k = 0; k < entry.size(); ++k) m[k] = entry[k].variance();
  return m;
}

std::vector<Schedule> enumerate_schedules(int n) {
  if (n < 2 || n > 8) throw std::invalid_argument("schedule enumeration supports 2 <= n <= 8");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<Schedule> out;
  do {
    out.emplace_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

const std::vector<Schedule>& schedule_set(int n) {
  static std::vector<Schedule> cache[9];
  static std::once_flag built[9];
  if (n < 2 || n > 8) throw std::invalid_argument("schedule enumeration supports 2 <= n <= 8");
  std::call_once(built[n], [n] { cache[n] = enumerate_schedules(n); });
  return cache[n];
}

QueueState step(const QueueState& q, const Schedule& s, const ArrivalMatrix& a) {
  assert(q.n == s.n() && q.n == a.n);
  QueueState next = q;
  for (int i = 0; i < q.n; ++i) {
    int j = s.out_of[i];
    if (next.at(i, j) > 0) --next.at(i, j);
  }
  for (int i = 0; i < q.n; ++i)
    for (int j = 0; j < q.n; ++j) next.at(i, j) += a.at(i, j);
  return next;
}

double reward(const QueueState& q, const Schedule& s, const CostMatrix& c) {
  assert(q.n == s.n() && q.n == c.n);
  double r = 0.0;
  for (int i = 0; i < q.n; ++i) {
    int j = s.out_of[i];
    if (q.at(i, j) > 0) r += c.at(i, j);
  }
  return r;
}

int unused_service(const QueueState& q, const Schedule& s) {
  assert(q.n == s.n());
  int u = 0;
  for (int i = 0; i < q.n; ++i)
    if (q.at(i, s.out_of[i]) == 0) ++u;
  return u;
}

ArrivalMatrix sample_arrivals(const ArrivalProcess& arr, RngStream& rng) {
  ArrivalMatrix a(arr.n);
  for (int k = 0; k < arr.n * arr.n; ++k) {
    const auto& pmf = arr.entry[k].p;
    double u = rng.uniform();
    int draw = static_cast<int>(pmf.size()) - 1;
    double cum = 0.0;
    for (int v = 0; v < static_cast<int>(pmf.size()); ++v) {
      cum += pmf[v];
      if (u < cum) {
        draw = v;
        break;
      }
    }
    a.count[k] = draw;
  }
  return a;
}

LoadReport check_admissible_rates(int n, const std::vector<double>& lambda) {
  if (static_cast<int>(lambda.size()) != n * n) throw std::invalid_argument("rate matrix size");
  for (double l : lambda)
    if (l < 0.0) throw std::invalid_argument("negative arrival rate");
  LoadReport rep;
  rep.row_load.assign(n, 0.0);
  rep.col_load.assign(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      rep.row_load[i] += lambda[i * n + j];
      rep.col_load[j] += lambda[i * n + j];
    }
  for (double l : rep.row_load) rep.max_load = std::max(rep.max_load, l);
  for (double l : rep.col_load) rep.max_load = std::max(rep.max_load, l);
  constexpr double kTol = 1e-12;
  if (rep.max_load > 1.0 + kTol)
    rep.verdict = Stability::Overloaded;
  else if (rep.max_load >= 1.0 - kTol)
    rep.verdict = Stability::Critical;
  else
    rep.verdict = Stability::Stable;
  return rep;
}

std::string to_string(const QueueState& q) {
  std::ostringstream os;
  os << "[";
  for (int i = 0; i < q.n; ++i) {
    os << (i ? " ; " : "");
    for (int j = 0; j < q.n; ++j) os << (j ? "," : "") << q.at(i, j);
  }
  os << "]";
  return os.str();
}

std::string to_string(const Schedule& s) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < s.n(); ++i) os << (i ? "," : "") << s.out_of[i];
  os << ")";
  return os.str();
}

}  // namespace iqs
