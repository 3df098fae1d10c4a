#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>

#include <boost/multiprecision/cpp_int.hpp>

#include "iqs/mdp.hpp"

namespace iqs {

namespace {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

const char* queue_name(int id) {
  static const char* names[4] = {"q11", "q12", "q21", "q22"};
  return names[id];
}

// Reconstruct the decimal a double was produced from (15 significant digits
// round-trips every value used in configs) and convert exactly.
Rational rational_from_decimal(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", x);
  const char* s = buf;
  bool neg = *s == '-';
  if (neg || *s == '+') ++s;
  BigInt digits = 0;
  long frac_len = 0, exp10 = 0;
  for (; *s >= '0' && *s <= '9'; ++s) digits = digits * 10 + (*s - '0');
  if (*s == '.') {
    ++s;
    for (; *s >= '0' && *s <= '9'; ++s, ++frac_len) digits = digits * 10 + (*s - '0');
  }
  if (*s == 'e' || *s == 'E') exp10 = std::strtol(s + 1, nullptr, 10);
  Rational r(digits, 1);
  long shift = exp10 - frac_len;
  BigInt p10 = 1;
  for (long i = 0; i < std::labs(shift); ++i) p10 *= 10;
  if (shift >= 0)
    r *= Rational(p10, 1);
  else
    r /= Rational(p10, 1);
  if (neg) r = -r;
  return r;
}

template <class S>
struct Term {
  State4 off;
  S coef;
};

template <class S>
struct Pattern {
  std::string family, variant;
  S lhs_const, rhs_const;
  std::vector<Term<S>> lhs, rhs;
};

State4 add_off(std::initializer_list<State4> offs) {
  State4 out{0, 0, 0, 0};
  for (const auto& o : offs)
    for (int k = 0; k < 4; ++k) out[k] += o[k];
  return out;
}

// Every inequality family except the interior-dominance check fits the shape
//   const_L + sum a_i V(q + off_i) >= const_R + sum b_j V(q + off_j),
// swept over all q whose full stencil stays off the frontier.
template <class S>
std::vector<Pattern<S>> build_patterns(const std::array<S, 4>& c, const S& beta) {
  std::vector<Pattern<S>> pats;
  const S zero_s(0), one(1), two(2);
  const State4 zero{0, 0, 0, 0};
  State4 e[4];
  for (int i = 0; i < 4; ++i) {
    e[i] = zero;
    e[i][i] = 1;
  }
  auto pat = [&](std::string family, std::string variant) -> Pattern<S>& {
    pats.push_back(Pattern<S>{std::move(family), std::move(variant), zero_s, zero_s, {}, {}});
    return pats.back();
  };

  // Serving one more packet is worth at most its weight: beta V(q+e) <= beta V(q) + c.
  for (int i = 0; i < 4; ++i) {
    auto& p = pat("marginal_value_bound", queue_name(i));
    p.lhs_const = c[i];
    p.lhs.push_back({zero, beta});
    p.rhs.push_back({e[i], beta});
  }
  // Serving the two conflicting neighbors beats serving the queue itself,
  // valid under the cost ordering c_mu <= c_rho + c_om <= c_mu + c_nu.
  for (int mu = 0; mu < 4; ++mu) {
    auto [rho, om] = conflicting_queues(mu);
    int nu = partner_queue(mu);
    if (!(c[mu] <= c[rho] + c[om] && c[rho] + c[om] <= c[mu] + c[nu])) continue;
    auto& p = pat("weighted_priority", std::string("mu=") + queue_name(mu));
    p.lhs_const = c[rho] + c[om];
    p.rhs_const = c[mu];
    p.lhs.push_back({e[mu], beta});
    p.rhs.push_back({add_off({e[rho], e[om]}), beta});
  }
  // Exchange inequalities behind the switching-curve structure.
  for (int mu = 0; mu < 4; ++mu)
    for (int rho : conflicting_queues(mu)) {
      std::string v = std::string("mu=") + queue_name(mu) + " rho=" + queue_name(rho);
      auto& p = pat("curve_exchange_basic", v);
      p.lhs.push_back({add_off({e[mu], e[rho]}), one});
      p.lhs.push_back({e[mu], one});
      p.rhs.push_back({add_off({e[mu], e[mu]}), one});
      p.rhs.push_back({e[rho], one});
    }
  for (int mu = 0; mu < 4; ++mu) {
    int nu = partner_queue(mu);
    for (int rho : conflicting_queues(mu)) {
      std::string v = std::string("mu=") + queue_name(mu) + " rho=" + queue_name(rho);
      auto& p = pat("curve_exchange_partner", v);
      p.lhs.push_back({add_off({e[mu], e[rho]}), one});
      p.lhs.push_back({add_off({e[mu], e[nu]}), one});
      p.rhs.push_back({add_off({e[mu], e[mu], e[nu]}), one});
      p.rhs.push_back({e[rho], one});
    }
  }
  for (int mu = 0; mu < 4; ++mu) {
    auto [rho, om] = conflicting_queues(mu);
    auto& p = pat("curve_exchange_joint", std::string("mu=") + queue_name(mu));
    p.lhs.push_back({add_off({e[mu], e[rho], e[om]}), one});
    p.lhs.push_back({e[mu], one});
    p.rhs.push_back({add_off({e[mu], e[mu]}), one});
    p.rhs.push_back({add_off({e[rho], e[om]}), one});
  }
  // Auxiliary concavity/supermodularity along single queues and partner pairs.
  for (int mu = 0; mu < 4; ++mu) {
    auto& p = pat("axis_concavity", queue_name(mu));
    p.lhs.push_back({e[mu], two});
    p.rhs.push_back({zero, one});
    p.rhs.push_back({add_off({e[mu], e[mu]}), one});
  }
  for (int mu = 0; mu < 4; ++mu) {
    int nu = partner_queue(mu);
    auto& p = pat("partner_cross_concavity", std::string("mu=") + queue_name(mu));
    p.lhs.push_back({add_off({e[mu], e[nu]}), one});
    p.lhs.push_back({e[mu], one});
    p.rhs.push_back({add_off({e[mu], e[mu], e[nu]}), one});
    p.rhs.push_back({zero, one});
  }
  for (auto [mu, nu] : {std::pair{kQueue11, kQueue22}, std::pair{kQueue12, kQueue21}}) {
    auto& p = pat("partner_supermodularity",
                  std::string(queue_name(mu)) + "+" + queue_name(nu));
    p.lhs.push_back({add_off({e[mu], e[nu]}), one});
    p.lhs.push_back({zero, one});
    p.rhs.push_back({e[mu], one});
    p.rhs.push_back({e[nu], one});
  }
  // General exchange: x within the diagonal pair, y within the anti-diagonal
  // pair, and any split z + w = x + y. 81 quadruples.
  {
    auto subsets = [](int a, int b) {
      std::vector<State4> out;
      for (int m = 0; m < 4; ++m) {
        State4 v{0, 0, 0, 0};
        if (m & 1) v[a] = 1;
        if (m & 2) v[b] = 1;
        out.push_back(v);
      }
      return out;
    };
    for (const State4& x : subsets(kQueue11, kQueue22))
      for (const State4& y : subsets(kQueue12, kQueue21)) {
        State4 u = add_off({x, y});
        std::vector<int> supp;
        for (int k = 0; k < 4; ++k)
          if (u[k]) supp.push_back(k);
        for (int m = 0; m < (1 << supp.size()); ++m) {
          State4 z{0, 0, 0, 0};
          for (std::size_t b = 0; b < supp.size(); ++b)
            if (m & (1 << b)) z[supp[b]] = 1;
          State4 w;
          for (int k = 0; k < 4; ++k) w[k] = u[k] - z[k];
          auto& p = pat("schedule_exchange", "all quadruples");
          p.lhs.push_back({x, one});
          p.lhs.push_back({y, one});
          p.rhs.push_back({z, one});
          p.rhs.push_back({w, one});
        }
      }
  }
  return pats;
}

template <class S>
S eval_side(const std::vector<S>& v, std::size_t idx, const S& constant,
            const std::vector<Term<S>>& terms, const std::vector<long>& deltas) {
  S acc = constant;
  for (std::size_t t = 0; t < terms.size(); ++t) acc += terms[t].coef * v[idx + deltas[t]];
  return acc;
}

struct RowAccum {
  InequalityRow row;
};

// Relative margin and violation predicate differ between the floating sweep
// (tolerance kRelTol) and the exact sweep (strict zero).
template <class S>
void sweep_pattern(const std::vector<S>& v, int qmax, int a_max, const Pattern<S>& pat,
                   InequalityRow& row) {
  const long d = qmax + 1;
  const long strides[4] = {d * d * d, d * d, d, 1};
  int lim[4];
  for (int k = 0; k < 4; ++k) {
    int mx = 0;
    for (const auto& t : pat.lhs) mx = std::max(mx, t.off[k]);
    for (const auto& t : pat.rhs) mx = std::max(mx, t.off[k]);
    lim[k] = qmax - a_max - mx;
    if (lim[k] < 0) return;
  }
  auto flat = [&](const State4& off) {
    return off[0] * strides[0] + off[1] * strides[1] + off[2] * strides[2] + off[3];
  };
  std::vector<long> ld, rd;
  for (const auto& t : pat.lhs) ld.push_back(flat(t.off));
  for (const auto& t : pat.rhs) rd.push_back(flat(t.off));
  for (int i0 = 0; i0 <= lim[0]; ++i0)
    for (int i1 = 0; i1 <= lim[1]; ++i1)
      for (int i2 = 0; i2 <= lim[2]; ++i2) {
        long base = ((static_cast<long>(i0) * d + i1) * d + i2) * d;
        for (int i3 = 0; i3 <= lim[3]; ++i3) {
          std::size_t idx = static_cast<std::size_t>(base + i3);
          S lhs = eval_side(v, idx, pat.lhs_const, pat.lhs, ld);
          S rhs = eval_side(v, idx, pat.rhs_const, pat.rhs, rd);
          ++row.checked;
          double rel;
          bool bad;
          if constexpr (std::is_same_v<S, double>) {
            double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
            rel = (lhs - rhs) / scale;
            bad = rel < -kRelTol;
          } else {
            S margin = lhs - rhs;
            S scale = std::max({S(1), S(abs(lhs)), S(abs(rhs))});
            rel = static_cast<double>(S(margin / scale));
            bad = margin < 0;
          }
          row.worst_margin = std::min(row.worst_margin, rel);
          if (bad) {
            ++row.violations;
            if (row.examples.size() < 10)
              row.examples.push_back({State4{i0, i1, i2, i3}, rel});
          }
        }
      }
}

// Full-service dominance: on any state where some schedule collects the
// global maximum reward, that schedule beats every schedule serving only
// nonempty queues.
template <class S>
void sweep_interior(const std::vector<S>& v, int qmax, int a_max, const std::array<S, 4>& c,
                    const S& beta, InequalityRow& row) {
  const long d = qmax + 1;
  const long strides[4] = {d * d * d, d * d, d, 1};
  const S r_full[2] = {c[0] + c[3], c[1] + c[2]};
  const S r_max = std::max(r_full[0], r_full[1]);
  const int safe = qmax - a_max;
  const int served[2][2] = {{kQueue11, kQueue22}, {kQueue12, kQueue21}};
  for (int i0 = 0; i0 <= safe; ++i0)
    for (int i1 = 0; i1 <= safe; ++i1)
      for (int i2 = 0; i2 <= safe; ++i2)
        for (int i3 = 0; i3 <= safe; ++i3) {
          const int q[4] = {i0, i1, i2, i3};
          std::size_t idx = static_cast<std::size_t>(
              ((static_cast<long>(i0) * d + i1) * d + i2) * d + i3);
          S r[2];
          long gather[2];
          bool feasible[2];
          for (int s = 0; s < 2; ++s) {
            r[s] = S(0);
            gather[s] = static_cast<long>(idx);
            feasible[s] = true;
            for (int t = 0; t < 2; ++t) {
              int id = served[s][t];
              if (q[id] > 0) {
                r[s] += c[id];
                gather[s] -= strides[id];
              } else {
                feasible[s] = false;
              }
            }
          }
          for (int s = 0; s < 2; ++s) {
            if (!(r[s] == r_max)) continue;  // s attains the global maximum
            for (int sp = 0; sp < 2; ++sp) {
              if (!feasible[sp]) continue;  // requires s' <= q
              S lhs = r[s] + beta * v[gather[s]];
              S rhs = r[sp] + beta * v[gather[sp]];
              ++row.checked;
              double rel;
              bool bad;
              if constexpr (std::is_same_v<S, double>) {
                double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
                rel = (lhs - rhs) / scale;
                bad = rel < -kRelTol;
              } else {
                S margin = lhs - rhs;
                S scale = std::max({S(1), S(abs(lhs)), S(abs(rhs))});
                rel = static_cast<double>(S(margin / scale));
                bad = margin < 0;
              }
              row.worst_margin = std::min(row.worst_margin, rel);
              if (bad) {
                ++row.violations;
                if (row.examples.size() < 10)
                  row.examples.push_back({State4{i0, i1, i2, i3}, rel});
              }
            }
          }
        }
}

template <class S>
InequalityReport run_report(const std::vector<S>& v, int qmax, int a_max,
                            const std::array<S, 4>& c, const S& beta) {
  InequalityReport rep;
  auto pats = build_patterns<S>(c, beta);
  for (const auto& p : pats) {
    if (!rep.rows.empty() && rep.rows.back().family == p.family &&
        rep.rows.back().variant == p.variant) {
      sweep_pattern(v, qmax, a_max, p, rep.rows.back());
    } else {
      InequalityRow row;
      row.family = p.family;
      row.variant = p.variant;
      sweep_pattern(v, qmax, a_max, p, row);
      rep.rows.push_back(std::move(row));
    }
  }
  InequalityRow interior;
  interior.family = "full_service_dominance";
  interior.variant = "max-reward schedule vs any feasible schedule";
  sweep_interior(v, qmax, a_max, c, beta, interior);
  rep.rows.push_back(std::move(interior));
  for (const auto& r : rep.rows) {
    rep.total_checked += r.checked;
    rep.total_violations += r.violations;
  }
  return rep;
}

// Exact Bellman iteration by direct enumeration (16 arrival combinations per
// state and schedule); small grids only.
std::vector<Rational> exact_iterate(const DpInstance& inst, int qmax, int sweeps) {
  const long d = qmax + 1;
  const std::size_t n = static_cast<std::size_t>(d * d * d * d);
  std::array<Rational, 4> c;
  for (int i = 0; i < 4; ++i) c[i] = rational_from_decimal(inst.cost.w[i]);
  Rational beta = rational_from_decimal(inst.beta);
  std::array<std::vector<Rational>, 4> pmf;
  for (int i = 0; i < 4; ++i) {
    Rational total = 0;
    for (double pa : inst.arrivals.entry[i].p) {
      pmf[i].push_back(rational_from_decimal(pa));
      total += pmf[i].back();
    }
    if (total != 1) throw std::invalid_argument("pmf is not exactly rational-normalized");
  }
  const int served[2][2] = {{kQueue11, kQueue22}, {kQueue12, kQueue21}};
  std::vector<Rational> v(n, Rational(0)), next(n);
  for (int k = 0; k < sweeps; ++k) {
    for (long i0 = 0; i0 < d; ++i0)
      for (long i1 = 0; i1 < d; ++i1)
        for (long i2 = 0; i2 < d; ++i2)
          for (long i3 = 0; i3 < d; ++i3) {
            const int q[4] = {static_cast<int>(i0), static_cast<int>(i1), static_cast<int>(i2),
                              static_cast<int>(i3)};
            Rational best;
            bool first = true;
            for (int s = 0; s < 2; ++s) {
              Rational r = 0;
              int after[4] = {q[0], q[1], q[2], q[3]};
              for (int t = 0; t < 2; ++t) {
                int id = served[s][t];
                if (q[id] > 0) {
                  r += c[id];
                  after[id] -= 1;
                }
              }
              Rational ev = 0;
              for (std::size_t a0 = 0; a0 < pmf[0].size(); ++a0)
                for (std::size_t a1 = 0; a1 < pmf[1].size(); ++a1)
                  for (std::size_t a2 = 0; a2 < pmf[2].size(); ++a2)
                    for (std::size_t a3 = 0; a3 < pmf[3].size(); ++a3) {
                      Rational pr = pmf[0][a0] * pmf[1][a1] * pmf[2][a2] * pmf[3][a3];
                      if (pr == 0) continue;
                      long x0 = std::min<long>(after[0] + a0, qmax);
                      long x1 = std::min<long>(after[1] + a1, qmax);
                      long x2 = std::min<long>(after[2] + a2, qmax);
                      long x3 = std::min<long>(after[3] + a3, qmax);
                      ev += pr * v[((x0 * d + x1) * d + x2) * d + x3];
                    }
              Rational w = r + beta * ev;
              if (first || w > best) {
                best = w;
                first = false;
              }
            }
            next[((i0 * d + i1) * d + i2) * d + i3] = best;
          }
    std::swap(v, next);
  }
  return v;
}

}  // namespace

InequalityReport verify_inequalities(const DpInstance& inst, const ValueFunction& vf) {
  std::array<double, 4> c;
  std::copy(inst.cost.w.begin(), inst.cost.w.end(), c.begin());
  return run_report<double>(vf.v, vf.grid.qmax, inst.arrivals.a_max(), c, inst.beta);
}

InequalityReport verify_inequalities_exact(const DpInstance& inst, int qmax, int sweeps) {
  auto v = exact_iterate(inst, qmax, sweeps);
  std::array<Rational, 4> c;
  for (int i = 0; i < 4; ++i) c[i] = rational_from_decimal(inst.cost.w[i]);
  return run_report<Rational>(v, qmax, inst.arrivals.a_max(), c,
                              rational_from_decimal(inst.beta));
}

std::vector<double> exact_value_table(const DpInstance& inst, int qmax, int sweeps) {
  auto v = exact_iterate(inst, qmax, sweeps);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]);
  return out;
}

SwitchingCurve extract_switching_curve(const DpInstance& inst, const PolicyTable& policy) {
  const int a_max = inst.arrivals.a_max();
  const int safe = policy.grid.qmax - 2 * a_max;
  if (safe < 2) throw std::invalid_argument("grid too small to extract boundary structure");
  SwitchingCurve curve;
  curve.safe_max = safe;
  for (int mu = 0; mu < 4; ++mu)
    for (int rho : conflicting_queues(mu)) {
      SwitchingCurve::Branch br;
      br.mu = mu;
      br.rho = rho;
      const int smu = schedule_of_queue(mu);
      // member(x,y): the schedule containing mu is optimal at x e_mu + y e_rho
      auto member = [&](int x, int y) {
        State4 q{0, 0, 0, 0};
        q[mu] = x;
        q[rho] = y;
        return policy.in_argmax(q, smu);
      };
      for (int y = 0; y <= safe; ++y) {
        int thr = -1;
        for (int x = 1; x <= safe; ++x) {
          bool m = member(x, y);
          if (m && thr < 0) thr = x;
          if (!m && thr >= 0) {
            std::ostringstream os;
            os << "serving " << queue_name(mu) << " stops being optimal as it grows: ("
               << queue_name(mu) << "=" << x << ", " << queue_name(rho) << "=" << y << ")";
            throw std::runtime_error(os.str());
          }
          if (m && y > 0 && !member(x, y - 1)) {
            std::ostringstream os;
            os << "serving " << queue_name(mu) << " stops being optimal as " << queue_name(rho)
               << " shrinks: (" << queue_name(mu) << "=" << x << ", " << queue_name(rho) << "="
               << y - 1 << ")";
            throw std::runtime_error(os.str());
          }
        }
        br.threshold.push_back(thr);
      }
      curve.branches.push_back(std::move(br));
    }
  return curve;
}

}  // namespace iqs
