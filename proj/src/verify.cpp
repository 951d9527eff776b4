#include "stp/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "stp/asymptotics.hpp"
#include "stp/core.hpp"
#include "stp/figures.hpp"
#include "stp/montecarlo.hpp"
#include "stp/semistable.hpp"

namespace stp {

namespace {

constexpr std::uint64_t kSeed = 20240601;

std::string g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Check {
  std::string id;
  double limit;
  std::function<CheckResult(const VerifyOptions&)> body;
};

CheckResult table1_check(const VerifyOptions&) {
  const double table[] = {0.018, 0.117, 0.233, 0.239, 0.172, 0.104, 0.057, 0.03};
  CheckResult r;
  double worst = 0.0, sum = 0.0;
  for (int j = -2; j <= 5; ++j) {
    double p = p_max(j, 1.0);
    sum += p;
    worst = std::max(worst, std::fabs(p - table[j + 2]));
  }
  r.value = worst;
  r.tolerance = 1e-3;
  r.pass = worst <= 1e-3 && std::fabs(sum - 0.943) <= 1e-3;
  r.detail = "max |p_j - table| = " + g6(worst) + ", sum_{-2..5} p_j = " + g6(sum) + " (0.943 +- 0.001)";
  return r;
}

CheckResult subexp_check(const VerifyOptions&) {
  CheckResult r;
  double at = subexp_ratio(2, 16384.0), below = subexp_ratio(2, 16383.0);
  auto scan = subexp_scan(2, 65536.0);
  double near = std::numeric_limits<double>::infinity();
  for (const auto& p : scan.points) {
    double l = std::log2(p.x + 1.0);
    if (l >= 10.0 && l == std::floor(l)) near = std::min(near, p.statistic);
  }
  r.value = scan.sup_val;
  r.tolerance = 4.0;
  r.pass = at >= 3.99 && at <= 4.0 && below >= 2.0 && below <= 2.01 && scan.sup_val <= 4.0 && near <= 2.01;
  r.detail = "ratio(2^14) = " + g6(at) + " in [3.99, 4], ratio(2^14 - 1) = " + g6(below) +
             " in [2, 2.01], scan sup = " + g6(scan.sup_val) + " <= 4, min at 2^l - 1 = " + g6(near) + " <= 2.01";
  return r;
}

CheckResult max_merge_check(const VerifyOptions&) {
  CheckResult r;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  std::string vals;
  for (int e = 4; e <= 14; e += 2) {
    double v = std::ldexp(1.0, e) * merge_distance_max(std::uint64_t{1} << e);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    vals += (vals.empty() ? "" : ", ") + g6(v);
  }
  r.value = hi / lo;
  r.tolerance = 5.0;
  r.pass = r.value <= 5.0;
  r.detail = "n * distance for n = 2^4..2^14: " + vals + "; band ratio " + g6(r.value) + " <= 5";
  return r;
}

CheckResult mixture_check(const VerifyOptions& opt) {
  CheckResult r;
  double printed = 0.0, corrected = 0.0, err = 0.0;
  for (double g : {0.5, 0.75, 1.0}) {
    DirectCdf direct(g, opt.tol);
    MixtureCdf mp(g, opt.tol, ConditionalForm::printed);
    MixtureCdf mt(g, opt.tol, ConditionalForm::tie_corrected);
    for (int i = 0; i < 20; ++i) {
      double x = -2.0 + 42.0 * i / 19.0;
      auto d = direct.cdf(x);
      auto a = mp.cdf(x);
      auto b = mt.cdf(x);
      printed = std::max(printed, std::fabs(d.value - a.value));
      corrected = std::max(corrected, std::fabs(d.value - b.value));
      err = std::max(err, d.quad_err + std::max(a.quad_err, b.quad_err));
    }
  }
  r.value = printed;
  r.tolerance = 1e-3;
  r.pass = printed <= 1e-3;
  r.detail = "max |direct - mixture| with the printed conditional laws = " + g6(printed) +
             "; diagnostic with tie-corrected conditional laws = " + g6(corrected) + " (quadrature error <= " +
             g6(err) + ")";
  return r;
}

CheckResult cond_merge_check(const VerifyOptions&) {
  CheckResult r;
  std::vector<double> p, t;
  for (std::uint64_t n : {128ULL, 256ULL, 512ULL, 1024ULL}) {
    p.push_back(merge_distance_cond(n, 0).distance);
    t.push_back(merge_distance_cond(n, 0, 1e-7, ConditionalForm::tie_corrected).distance);
  }
  bool dec = std::is_sorted(p.rbegin(), p.rend()) && std::adjacent_find(p.begin(), p.end()) == p.end();
  r.value = p.back();
  r.tolerance = 0.06;
  r.pass = dec && p.back() <= 0.06;
  r.detail = "printed G_{0,1}: " + g6(p[0]) + ", " + g6(p[1]) + ", " + g6(p[2]) + ", " + g6(p[3]) +
             (dec ? " (decreasing)" : " (not decreasing)") + "; diagnostic tie-corrected: " + g6(t[0]) + ", " +
             g6(t[1]) + ", " + g6(t[2]) + ", " + g6(t[3]);
  return r;
}

CheckResult sum_merge_check(const VerifyOptions&) {
  CheckResult r;
  auto d6 = merge_distance_sum(64), d7 = merge_distance_sum(128), d8 = merge_distance_sum(256),
       d10 = merge_distance_sum(1024);
  auto t7 = merge_distance_sum(128, 1e-6, ConditionalForm::tie_corrected);
  r.value = d7.distance;
  r.tolerance = 0.08;
  r.pass = d7.distance <= 0.08 && d6.distance > d8.distance && d8.distance > d10.distance;
  r.detail = "n = 2^7: " + g6(d7.distance) + " (certified upper " + g6(d7.upper) + "); n = 2^6, 2^8, 2^10: " +
             g6(d6.distance) + ", " + g6(d8.distance) + ", " + g6(d10.distance) +
             "; diagnostic n = 2^7 against the tie-corrected mixture: " + g6(t7.distance);
  return r;
}

CheckResult clt_check(const VerifyOptions&) {
  CheckResult r;
  double a = clt_distance(1ULL << 8, 6).distance, b = clt_distance(1ULL << 10, 6).distance,
         c = clt_distance(1ULL << 12, 6).distance, big = clt_distance(1ULL << 6, 12).distance;
  r.value = c;
  r.tolerance = 0.02;
  r.pass = c <= 0.02 && big >= 0.1 && a > b && b > c;
  r.detail = "k = 6, n = 2^8, 2^10, 2^12: " + g6(a) + ", " + g6(b) + ", " + g6(c) + "; n = 2^6, k = 12: " + g6(big) +
             " >= 0.1";
  return r;
}

CheckResult largemax_check_run(const VerifyOptions&) {
  CheckResult r;
  auto m = largemax_check(128, 20, 0.5);
  r.value = m.exact;
  r.tolerance = m.bound;
  r.pass = m.exact > 0.0 && m.exact + m.err <= m.bound;
  r.detail = "P{S > 1.5 X^* | X^* = 2^20} = " + g6(m.exact) + " <= " + g6(m.bound) + ", centered two-sided " +
             g6(m.centered);
  return r;
}

CheckResult domination_check(const VerifyOptions&) {
  CheckResult r;
  std::size_t viol = 0, checks = 0;
  double wc = 0.0, wk = 0.0;
  for (std::uint64_t n : {8ULL, 128ULL}) {
    for (int j = -2; j <= 10; ++j) {
      auto d = bound_domination(n, j, 50);
      viol += d.chernoff_violations + d.cantelli_violations;
      checks += d.checks;
      wc = std::max(wc, d.worst_chernoff_ratio);
      wk = std::max(wk, d.worst_cantelli_ratio);
    }
  }
  r.value = static_cast<double>(viol);
  r.tolerance = 0.0;
  r.pass = viol == 0;
  r.detail = std::to_string(checks) + " tail comparisons (n = 8 rational, n = 128 double), " + std::to_string(viol) +
             " violations; largest tail/bound ratio Chernoff " + g6(wc) + ", Cantelli " + g6(wk);
  return r;
}

CheckResult tail_scan_check(const VerifyOptions&) {
  CheckResult r;
  auto s = tail_ratio_scan(4, 16, 0.1, 64);
  auto u = tail_period_scan(4, 16, 64);
  double dev = std::max(std::fabs(s.sup_val - 1.0), std::fabs(s.inf_val - 1.0));
  r.value = dev;
  r.tolerance = 0.02;
  bool sup_ok = u.sup_val >= 1.9 && u.sup_val <= 2.0, inf_ok = u.inf_val >= 1.0 && u.inf_val <= 1.05;
  r.pass = dev <= 0.02 && sup_ok && inf_ok;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", u.sup_val);
  r.detail = "restricted sup |r - 1| = " + g6(dev) + " <= 0.02; unrestricted sup = " + buf + " at x = " +
             g6(u.sup_at) + (sup_ok ? " in" : " NOT in") + " [1.9, 2.0], inf = " + g6(u.inf_val) +
             (inf_ok ? " in" : " NOT in") + " [1.0, 1.05]";
  return r;
}

CheckResult finer_check(const VerifyOptions&) {
  CheckResult r;
  auto f = finer_sup(2, 16, 2.0);
  r.value = f.sup_val;
  r.tolerance = 0.02;
  r.pass = std::fabs(f.sup_val - f.limit) <= 0.02 && std::fabs(f.limit - 1.25) <= 1e-15;
  r.detail = "sup = " + g6(f.sup_val) + ", limit = " + g6(f.limit);
  return r;
}

CheckResult semistable_tail_check(const VerifyOptions& opt) {
  CheckResult r;
  bool exact = true;
  for (int i = 5; i <= 10; ++i) {
    auto f = semistable_tail_functionals(i / 10.0);
    exact = exact && f.first == 1.0 && f.second == 2.0;
  }
  MixtureCdf G(1.0, opt.tol);
  double worst = 0.0;
  for (double x = 4.0; x <= 1024.0; x *= 2.0) {
    auto v = G.cdf(x);
    worst = std::max(worst, (1.0 - v.value + v.quad_err) * x / 32.0);
  }
  r.value = worst;
  r.tolerance = 1.0;
  r.pass = exact && worst <= 1.0;
  r.detail = std::string("tail functionals ") + (exact ? "exactly (1, 2)" : "NOT (1, 2)") +
             " for gamma = 0.5..1.0; max (1 - G_1(x)) x / 32 = " + g6(worst);
  return r;
}

CheckResult moments_check(const VerifyOptions& opt) {
  CheckResult r;
  double worst = 0.0, dens = 0.0;
  std::string parts;
  for (auto [j, g] : std::vector<std::pair<int, double>>{{0, 1.0}, {2, 1.0}, {0, 0.5}}) {
    auto q = moments_Wj_quadrature(j, g, std::min(opt.tol, 1e-9));
    auto m = moments_Wj(j, g);
    double em = std::fabs(q.mean - m.mean) / std::fabs(m.mean);
    double ev = std::fabs(q.variance - m.variance) / m.variance;
    worst = std::max({worst, em, ev});
    WjCdf G(j, g, std::min(opt.tol, 1e-8));
    double bound = std::sqrt(M_PI) / 4.0 * std::exp2(-j / 2.0) + 0.5;
    double top = 0.0;
    for (int i = 0; i <= 400; ++i) {
      auto p = G.pdf(q.lo + (q.hi - q.lo) * i / 400.0);
      top = std::max(top, p.value + p.quad_err);
    }
    dens = std::max(dens, top / bound);
    parts += "(" + std::to_string(j) + ", " + g6(g) + "): rel " + g6(std::max(em, ev)) + ", pdf sup/bound " +
             g6(top / bound) + "; ";
  }
  r.value = worst;
  r.tolerance = 1e-3;
  r.pass = worst <= 1e-3 && dens <= 1.0;
  r.detail = parts + "printed conditional laws";
  return r;
}

CheckResult mc_ks_check(const VerifyOptions& opt) {
  CheckResult r;
  auto sim = simulate({128, 100000, kSeed, 64}, opt.threads);
  double allowance = 0.0;
  double ks = ks_empirical(sim, &allowance);
  r.value = ks;
  r.tolerance = 0.01;
  r.pass = ks <= 0.01;
  r.detail = "KS(empirical, exact) over 1e5 replications, seed " + std::to_string(kSeed) + ", cap allowance " +
             g6(allowance);
  return r;
}

CheckResult mc_sidewave_check(const VerifyOptions& opt) {
  CheckResult r;
  auto sim = simulate({128, 100000, kSeed, 64}, opt.threads);
  auto s = sidewave_support(sim);
  r.value = s.frequency;
  r.tolerance = 0.99;
  r.pass = s.frequency >= 0.99;
  r.detail = "pooled share of X^* < S < 2X^* for k >= " + std::to_string(s.k_min) + ": " + g6(s.frequency) + " over " +
             std::to_string(s.samples) + " samples (exact law " + g6(s.exact) + "); per k:";
  for (auto [k, f] : s.per_k) r.detail += " " + std::to_string(k) + ":" + g6(f);
  return r;
}

CheckResult figures_check(const VerifyOptions& opt) {
  CheckResult r;
  FigureOptions fo;
  fo.threads = opt.threads;
  bool schema = true, same = true;
  std::string why;
  double excess = 0.0;
  for (const auto& name : figure_names()) {
    auto a = figure_csv(name, fo, opt.version);
    FigureOptions other = fo;
    other.threads = 1;
    auto b = figure_csv(name, other, opt.version);
    std::string w;
    if (!figure_schema_ok(name, a, &w)) {
      schema = false;
      why += " " + name + ": " + w;
    }
    same = same && a == b;
    if (name == "fig8") excess = fig8_worst_excess(a);
  }
  r.value = excess;
  r.tolerance = 0.0;
  r.pass = schema && same && excess <= 0.0;
  r.detail = std::string("schemas ") + (schema ? "valid" : "INVALID" + why) + ", bytes " +
             (same ? "identical on regeneration" : "DIFFER") +
             ", fig8 largest (exact tail - bound - truncated mass) = " + g6(excess);
  return r;
}

const std::vector<Check>& checks() {
  static const std::vector<Check> all{
      {"C1", 1, table1_check},         {"C2", 10, subexp_check},         {"C3", 10, max_merge_check},
      {"C4", 120, mixture_check},      {"C5", 300, cond_merge_check},    {"C6", 300, sum_merge_check},
      {"C7", 120, clt_check},          {"C8", 30, largemax_check_run},   {"C9", 120, domination_check},
      {"C10", 60, tail_scan_check},    {"C11", 60, finer_check},         {"C12", 120, semistable_tail_check},
      {"C13", 120, moments_check},     {"C14a", 60, mc_ks_check},        {"C14b", 60, mc_sidewave_check},
      {"C15", 300, figures_check},
  };
  return all;
}

}  // namespace

const std::vector<std::string>& check_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& c : checks()) v.push_back(c.id);
    return v;
  }();
  return ids;
}

std::vector<CheckResult> run_acceptance(const VerifyOptions& opt,
                                        const std::function<void(const CheckResult&)>& on_result) {
  if (opt.suite != "primary" && opt.suite != "all") throw DomainError("verify: unknown suite " + opt.suite);
  if (!(opt.tol > 0.0)) throw DomainError("verify: tol must be positive");
  for (const auto& id : opt.only) {
    if (std::find(check_ids().begin(), check_ids().end(), id) == check_ids().end()) {
      throw DomainError("verify: unknown check " + id);
    }
  }
  std::vector<CheckResult> out;
  for (const auto& c : checks()) {
    if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), c.id) == opt.only.end()) continue;
    auto t0 = std::chrono::steady_clock::now();
    CheckResult r;
    try {
      r = c.body(opt);
    } catch (const std::exception& e) {
      r.pass = false;
      r.value = std::numeric_limits<double>::quiet_NaN();
      r.detail = std::string("error: ") + e.what();
    }
    r.check_id = c.id;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.time_limit = c.limit;
    if (r.seconds > r.time_limit) {
      r.pass = false;
      r.detail += "; runtime " + g6(r.seconds) + " s over the " + g6(r.time_limit) + " s limit";
    }
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_check_line(const CheckResult& r) {
  char head[160];
  std::snprintf(head, sizeof head, "%-5s %s  value=%.6g tol=%.6g time=%.2fs/%gs  ", r.check_id.c_str(),
                r.pass ? "PASS" : "FAIL", r.value, r.tolerance, r.seconds, r.time_limit);
  return head + r.detail;
}

void write_verify_json(std::ostream& out, const std::vector<CheckResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json v = std::isfinite(r.value) ? nlohmann::json(r.value) : nlohmann::json(nullptr);
    arr.push_back({{"check_id", r.check_id},
                   {"status", r.pass ? "pass" : "fail"},
                   {"value", v},
                   {"tolerance", r.tolerance},
                   {"seconds", r.seconds},
                   {"time_limit", r.time_limit},
                   {"detail", r.detail}});
  }
  out << arr.dump(2) << '\n';
}

}  // namespace stp
