#include "stp/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <type_traits>

namespace stp {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Suffix sums over the atoms of a law: P{S > y} and P{S < y} in O(log N).
template <class P>
class TailTable {
 public:
  explicit TailTable(const LatticeLaw<P>& law) : overflow_(law.overflow()) {
    auto atoms = law.atoms();
    values_.reserve(atoms.size());
    for (const auto& a : atoms) values_.push_back(a.value);
    prefix_.assign(atoms.size() + 1, P(0));
    for (std::size_t i = 0; i < atoms.size(); ++i) prefix_[i + 1] = prefix_[i] + atoms[i].prob;
    suffix_.assign(atoms.size() + 1, overflow_);
    for (std::size_t i = atoms.size(); i-- > 0;) suffix_[i] = suffix_[i + 1] + atoms[i].prob;
  }
  // P{S >= y}
  P at_least(double y) const {
    auto it = std::lower_bound(values_.begin(), values_.end(), y,
                               [](std::uint64_t v, double t) { return static_cast<double>(v) < t; });
    return suffix_[static_cast<std::size_t>(it - values_.begin())];
  }
  // P{S <= y}
  P at_most(double y) const {
    auto it = std::upper_bound(values_.begin(), values_.end(), y,
                               [](double t, std::uint64_t v) { return t < static_cast<double>(v); });
    return prefix_[static_cast<std::size_t>(it - values_.begin())];
  }

 private:
  P overflow_;
  std::vector<std::uint64_t> values_;
  std::vector<P> prefix_, suffix_;
};

double frac_log2(double x) { return std::log2(dyadic_mantissa(x)); }

void require_period(std::uint64_t n, int m) {
  if (n < 1 || n > 8) throw DomainError("tail scan: n must lie in [1, 8]");
  if (m < 1 || m > 24) throw DomainError("tail scan: m must lie in [1, 24]");
}

}  // namespace

void ScanReport::finalize() {
  if (points.empty()) throw DomainError("scan report: no points");
  std::sort(points.begin(), points.end(), [](const ScanPoint& a, const ScanPoint& b) { return a.x < b.x; });
  sup_val = -std::numeric_limits<double>::infinity();
  inf_val = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    if (p.statistic > sup_val) {
      sup_val = p.statistic;
      sup_at = p.x;
    }
    if (p.statistic < inf_val) {
      inf_val = p.statistic;
      inf_at = p.x;
    }
  }
}

void write_scan_csv(std::ostream& out, const ScanReport& report) {
  for (const auto& [k, v] : report.meta) out << "# " << k << '=' << v << '\n';
  out << "# sup_val=" << fmt(report.sup_val) << "\n# sup_at=" << fmt(report.sup_at) << '\n';
  out << "# inf_val=" << fmt(report.inf_val) << "\n# inf_at=" << fmt(report.inf_at) << '\n';
  out << "x,statistic\n";
  for (const auto& p : report.points) out << fmt(p.x) << ',' << fmt(p.statistic) << '\n';
}

double h_fn(double x) {
  if (!(x >= 0.0)) throw DomainError("h: x must be non-negative");
  if (std::isinf(x)) return x;
  return (4.0 + x) * std::log1p(x / 4.0) - x;
}

double eta(int j, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("eta: gamma must lie in (0, 1]");
  return std::ldexp(1.0 / gamma, j);
}

double chernoff_bound(std::uint64_t n, int j, double x) {
  if (n < 1 || ceil_log2(n) + j < 1) throw DomainError("chernoff_bound: ceil(log2 n) + j must be >= 1");
  return std::exp(-h_fn(std::max(x, 0.0)) / eta(j, gamma_of(n)));
}

double cantelli_bound(std::uint64_t n, int j, double x) {
  if (!(x > 0.0)) throw DomainError("cantelli_bound: x must be positive");
  double e = eta(j, gamma_of(n));
  return 2.0 * e / (2.0 * e + x * x);
}

double a_nj(std::uint64_t n, int j) {
  int K = ceil_log2(n) + j;
  if (n < 1 || K < 1) throw DomainError("a_nj: ceil(log2 n) + j must be >= 1");
  double nn = static_cast<double>(n);
  return eta(j, gamma_of(n)) + (nn - 1.0) / nn * K / (1.0 - pow2(-K));
}

double mu1(int j, double gamma) {
  double e = eta(j, gamma);
  return e + std::log2(e);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

LatticeLaw<double> conditional_law(std::uint64_t n, int k, std::optional<std::uint64_t> cap) {
  auto law = max_sum_law<double>(n, k, cap);
  double q = law.atom_mass() + law.overflow();
  if (!(q > 0.0)) throw NumericError("conditional law: event has zero probability in double range");
  auto atoms = law.atoms();
  for (auto& a : atoms) a.prob /= q;
  return LatticeLaw<double>::from_atoms(std::move(atoms), Layout::dense, cap, law.overflow() / q, law.err() / q);
}

DistanceReport clt_distance(std::uint64_t n, int k, bool ties) {
  if (n < 2 || k < 1) throw DomainError("clt_distance: need n >= 2 and k >= 1");
  auto law = ties ? conditional_law(n, k) : cond_sum_law<double>(n, k);
  double mean = cond_sum_mean(n, k);
  double sd = std::sqrt(cond_sum_variance(n, k));
  KsOptions opt;
  opt.exhaustive_below = std::numeric_limits<std::size_t>::max();
  auto r = ks_distance(law, sd, mean, NormalCdf{}, opt);
  return {r.value, r.upper, r.allowance, r.at};
}

LargeMaxReport largemax_check(std::uint64_t n, int k, double eps) {
  if (n < 1 || k < 1) throw DomainError("largemax_check: n and k must be >= 1");
  if (!(eps > 0.0)) throw DomainError("largemax_check: eps must be positive");
  if (k > 60 || pow2(k) < 4.0 * static_cast<double>(n)) throw DomainError("largemax_check: need 4n <= 2^k <= 2^60");
  LargeMaxReport rep;
  double top = pow2(k);
  double nk = static_cast<double>(n) * k;
  rep.bound = 8.0 * static_cast<double>(n) / (eps * eps * top);
  double one_sided = (1.0 + eps) * top;
  double hi = one_sided + nk, lo = (1.0 - eps) * top + nk;
  auto cap = static_cast<std::uint64_t>(std::ceil(hi)) + 2;
  auto law = conditional_law(n, k, cap);
  TailTable<double> t(law);
  rep.exact = t.at_least(std::floor(one_sided) + 1.0);
  rep.centered = t.at_least(std::floor(hi) + 1.0) + t.at_most(std::ceil(lo) - 1.0);
  rep.err = law.err();
  return rep;
}

RemarkCenter largemax_center(std::uint64_t n, int j) {
  if (n < 2) throw DomainError("largemax_center: n must be >= 2");
  double L = std::log2(static_cast<double>(n)) + std::log2(std::log2(static_cast<double>(n)));
  RemarkCenter rc;
  rc.k = static_cast<int>(std::floor(L)) + j;
  if (rc.k < 1) throw DomainError("largemax_center: k must be >= 1");
  rc.centering = static_cast<double>(n) * rc.k / pow2(rc.k);
  rc.oscillating = pow2(-j) * std::exp2(L - std::floor(L));
  return rc;
}

namespace {

enum class Statistic { normalized, plain };

ScanReport period_scan(std::uint64_t n, int m, double delta, int points, Statistic stat) {
  require_period(n, m);
  if (points < 1) throw DomainError("tail scan: points must be positive");
  double g = gamma_of(n);
  double nn = static_cast<double>(n);
  double left = pow2(m) / g, right = pow2(m + 1) / g;
  SumTailOracle oracle(n, nn * right);
  auto value = [&](double x, double y) {
    double tail = oracle.tail(y).value;
    return stat == Statistic::plain ? x * tail : tail * (x / dyadic_mantissa(g * x));
  };
  auto admissible = [&](double x) { return x >= left && x < right && frac_log2(g * x) >= delta; };
  ScanReport rep;
  for (int i = 0; i < points; ++i) {
    double x = left * std::exp2(delta + (1.0 - delta) * i / points);
    if (admissible(x)) rep.points.push_back({x, value(x, nn * x)});
  }
  for (auto v : oracle.support()) {
    double xv = static_cast<double>(v) / nn;
    if (admissible(xv)) rep.points.push_back({xv, value(xv, static_cast<double>(v))});
    double below = std::nextafter(xv, 0.0);
    if (admissible(below)) rep.points.push_back({below, value(below, static_cast<double>(v) - 0.5)});
  }
  rep.meta = {{"n", std::to_string(n)}, {"m", std::to_string(m)}, {"gamma", fmt(g)}, {"delta", fmt(delta)},
              {"statistic", stat == Statistic::plain ? "x*P{S_n/n>x}" : "x*2^-frac(log2(gamma*x))*P{S_n/n>x}"}};
  rep.finalize();
  return rep;
}

}  // namespace

ScanReport tail_ratio_scan(std::uint64_t n, int m, double delta, int points) {
  if (!(delta > 0.0 && delta < 1.0)) throw DomainError("tail_ratio_scan: delta must lie in (0, 1)");
  return period_scan(n, m, delta, points, Statistic::normalized);
}

ScanReport tail_period_scan(std::uint64_t n, int m, int points) {
  return period_scan(n, m, 0.0, points, Statistic::plain);
}

double finer_limit(std::uint64_t n, double c) {
  if (n < 1) throw DomainError("finer_limit: n must be >= 1");
  if (n == 1) return 1.0;
  return 1.0 + sum_tail_exact(n - 1, static_cast<double>(n) * c).value;
}

FinerSup finer_sup(std::uint64_t n, int m, double c) {
  require_period(n, m);
  if (!(c > 1.0)) throw DomainError("finer_sup: c must exceed 1");
  double g = gamma_of(n);
  double nn = static_cast<double>(n);
  double left = pow2(m) / g + c, right = pow2(m + 1) / g;
  if (left >= right) throw DomainError("finer_sup: c exceeds the period");
  SumTailOracle oracle(n, nn * right);
  auto r = [&](double x, double y) { return oracle.tail(y).value * (x / dyadic_mantissa(g * x)); };
  FinerSup out;
  out.sup_val = -1.0;
  auto visit = [&](double x, double y) {
    if (x < left || x >= right) return;
    double v = r(x, y);
    if (v > out.sup_val) {
      out.sup_val = v;
      out.sup_at = x;
    }
  };
  visit(left, nn * left);
  for (double d = c / 64.0; left + d < right; d *= 1.125) visit(left + d, nn * (left + d));
  for (auto v : oracle.support()) {
    double xv = static_cast<double>(v) / nn;
    if (xv > left + 64.0 * c) break;
    visit(xv, static_cast<double>(v));
    visit(std::nextafter(xv, 0.0), static_cast<double>(v) - 0.5);
  }
  out.limit = finer_limit(n, c);
  return out;
}

double subexp_ratio(std::uint64_t n, double x) {
  if (!(x >= 2.0)) throw DomainError("subexp_ratio: x must be >= 2");
  if (n < 1 || n > 8) throw DomainError("subexp_ratio: n must lie in [1, 8]");
  return sum_tail_exact(n, x).value / pow2(-floor_log2(x));
}

ScanReport subexp_scan(std::uint64_t n, double x_max) {
  if (!(x_max >= 2.0)) throw DomainError("subexp_scan: x_max must be >= 2");
  if (n < 1 || n > 8) throw DomainError("subexp_scan: n must lie in [1, 8]");
  SumTailOracle oracle(n, x_max);
  std::vector<double> breaks;
  for (auto v : oracle.support()) {
    if (v >= 2 && static_cast<double>(v) <= x_max) breaks.push_back(static_cast<double>(v));
  }
  for (int e = 1; pow2(e) <= x_max; ++e) breaks.push_back(pow2(e));
  // left ends of the constant pieces just below each power of two
  for (int e = 2; pow2(e) <= x_max; ++e) breaks.push_back(pow2(e) - 1.0);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  ScanReport rep;
  for (double x : breaks) rep.points.push_back({x, oracle.tail(x).value / pow2(-floor_log2(x))});
  rep.meta = {{"n", std::to_string(n)}, {"x_max", fmt(x_max)}, {"statistic", "P{S_n>x}/P{X>x}"}};
  rep.finalize();
  return rep;
}

double merge_distance_max(std::uint64_t n) {
  if (n < 1) throw DomainError("merge_distance_max: n must be >= 1");
  int c = ceil_log2(n);
  double g = gamma_of(n);
  double best = 0.0;
  constexpr double kNegligible = 1e-15;
  for (int j = -64;; ++j) {
    double p = p_max(j, g);
    double q = c + j >= 1 ? q_max_exact(n, j).value : 0.0;
    best = std::max(best, std::fabs(q - p));
    // both sequences decrease from here on
    if (j > 0 && p < kNegligible && q < kNegligible) break;
  }
  return best;
}

DistanceReport merge_distance_cond(std::uint64_t n, int j, double tol, ConditionalForm form) {
  int c = ceil_log2(n);
  int k = c + j;
  if (n < 1 || k < 1) throw DomainError("merge_distance_cond: ceil(log2 n) + j must be >= 1");
  double g = gamma_of(n);
  double nn = static_cast<double>(n);
  double reach = 40.0 + (j > 0 ? 8.0 * eta(j, g) : 0.0);
  auto cap = static_cast<std::uint64_t>(std::ceil(nn * (c + reach)));
  auto law = conditional_law(n, k, cap);
  WjCdf G(j, g, tol, form);
  auto r = ks_distance(law, nn, nn * std::log2(nn), G);
  return {r.value, r.upper, r.allowance, r.at};
}

DistanceReport merge_distance_sum(std::uint64_t n, double tol, ConditionalForm form) {
  if (n < 1 || n > 1024) throw DomainError("merge_distance_sum: n must lie in [1, 1024]");
  double nn = static_cast<double>(n);
  double lg = std::log2(nn);
  constexpr double reach = 2000.0;
  auto cap = static_cast<std::uint64_t>(std::ceil(nn * (lg + reach)));
  auto law = sum_law<double>(n, cap);
  MixtureCdf G(gamma_of(n), tol, form);
  KsOptions opt;
  opt.max_overflow = 2e-3;
  auto r = ks_distance(law, nn, nn * lg, G, opt);
  return {r.value, r.upper, r.allowance, r.at};
}

double fig8_bound_curve(std::uint64_t n, double x, int j_lo, int j_hi) {
  if (j_lo > j_hi) throw DomainError("fig8_bound_curve: need j_lo <= j_hi");
  double g = gamma_of(n);
  KahanSum acc;
  for (int j = j_lo; j <= j_hi; ++j) {
    acc.add(std::exp(-h_fn(std::max(x - mu1(j, g), 0.0)) / eta(j, g)) * p_max(j, g));
  }
  return acc.value();
}

std::vector<ProbValue> sum_tail_normalized(std::uint64_t n, const std::vector<double>& xs) {
  if (n < 1) throw DomainError("sum_tail_normalized: n must be >= 1");
  if (xs.empty()) return {};
  double nn = static_cast<double>(n);
  double lg = std::log2(nn);
  double xmax = *std::max_element(xs.begin(), xs.end());
  auto cap = static_cast<std::uint64_t>(std::ceil(std::max(nn * (lg + xmax), 2.0 * nn))) + 2;
  auto law = sum_law<double>(n, cap);
  TailTable<double> t(law);
  std::vector<ProbValue> out;
  out.reserve(xs.size());
  for (double x : xs) {
    double y = nn * (lg + x);
    out.push_back(ProbValue::approx(y <= 0.0 ? 1.0 : t.at_least(y), law.err()));
  }
  return out;
}

namespace {

template <class P>
void check_domination(std::uint64_t n, int j, int k, int points, DominationReport& rep) {
  double nn = static_cast<double>(n);
  double g = gamma_of(n);
  double target = eta(j, g) * std::log(1e6);
  double lo = 0.0, hi = 1.0;
  while (h_fn(hi) < target) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (h_fn(mid) < target ? lo : hi) = mid;
  }
  double X = hi;
  double mean = static_cast<double>(n - 1) * truncated_moment(k, 1).value;
  auto cap = static_cast<std::uint64_t>(std::ceil(mean + nn * X)) + 2;
  LatticeLaw<P> law;
  if (n > 1) {
    Layout layout = std::is_same_v<P, Rational> ? Layout::sparse : Layout::dense;
    law = power_convolve(truncated_atom_law<P>(k, layout), n - 1, cap);
  }
  TailTable<P> t(law);
  double slack = law.err();
  for (int i = 0; i < points; ++i) {
    double x = X * i / std::max(points - 1, 1);
    double up = to_double(t.at_least(mean + nn * x));
    double down = to_double(t.at_most(mean - nn * x));
    double ch = chernoff_bound(n, j, x);
    double ca = x > 0.0 ? cantelli_bound(n, j, x) : 1.0;
    for (double e : {up, down}) {
      ++rep.checks;
      if (e - slack > ch) ++rep.chernoff_violations;
      if (e - slack > ca) ++rep.cantelli_violations;
      rep.worst_chernoff_ratio = std::max(rep.worst_chernoff_ratio, e / ch);
      rep.worst_cantelli_ratio = std::max(rep.worst_cantelli_ratio, e / ca);
    }
  }
}

}  // namespace

DominationReport bound_domination(std::uint64_t n, int j, int points) {
  int k = ceil_log2(n) + j;
  if (n < 1 || k < 1) throw DomainError("bound_domination: ceil(log2 n) + j must be >= 1");
  if (points < 1) throw DomainError("bound_domination: points must be positive");
  DominationReport rep;
  rep.exact = n <= 8;
  if (rep.exact) {
    check_domination<Rational>(n, j, k, points, rep);
  } else {
    check_domination<double>(n, j, k, points, rep);
  }
  return rep;
}

}  // namespace stp
