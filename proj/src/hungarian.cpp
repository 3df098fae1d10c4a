#include <cassert>
#include <limits>
#include <vector>

#include "iqs/policies.hpp"

namespace iqs {

// Potential-based shortest augmenting path assignment, O(n^3). Maximizes by
// minimizing negated weights; the returned matching is exact for real
// weights, with ties resolved deterministically by augmentation order.
Schedule max_weight_assignment(int n, const std::vector<double>& weight) {
  assert(static_cast<int>(weight.size()) == n * n);
  const double inf = std::numeric_limits<double>::infinity();
  auto cost = [&](int i, int j) { return -weight[(i - 1) * n + (j - 1)]; };  // 1-based
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);  // match[j] = row assigned to column j
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      int i0 = match[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out_of(n, -1);
  for (int j = 1; j <= n; ++j) out_of[match[j] - 1] = j - 1;
  return Schedule(std::move(out_of));
}

}  // namespace iqs
