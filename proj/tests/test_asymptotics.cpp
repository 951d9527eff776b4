#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "stp/asymptotics.hpp"

using namespace stp;

namespace {

// 40-term Taylor series of Phi about 0.
double normal_cdf_series(double x) {
  double term = x, acc = 0.0;
  for (int k = 0; k < 40; ++k) {
    acc += term / (2 * k + 1);
    term *= -x * x / (2.0 * (k + 1));
  }
  return 0.5 + acc / std::sqrt(2.0 * M_PI);
}

// P{X_1 + X_2 > x} summing exponent pairs up to 60.
double two_game_tail(double x) {
  double acc = 0.0;
  for (int a = 1; a <= 60; ++a) {
    for (int b = 1; b <= 60; ++b) {
      if (std::ldexp(1.0, a) + std::ldexp(1.0, b) > x) acc += std::ldexp(1.0, -a - b);
    }
  }
  return acc;
}

// Brute force over three games with every exponent at most k and the maximum equal to k.
struct Three {
  Rational event, above, centered;
};
Three three_games(int k, const Rational& eps) {
  Three r;
  Rational top = pow2_rational(k);
  Rational hi = (1 + eps) * top + 3 * k, lo = (1 - eps) * top + 3 * k;
  for (int a = 1; a <= k; ++a) {
    for (int b = 1; b <= k; ++b) {
      for (int c = 1; c <= k; ++c) {
        if (std::max({a, b, c}) != k) continue;
        Rational p = pow2_rational(-a - b - c);
        Rational s = pow2_rational(a) + pow2_rational(b) + pow2_rational(c);
        r.event += p;
        if (s > (1 + eps) * top) r.above += p;
        if (s > hi || s < lo) r.centered += p;
      }
    }
  }
  return r;
}

}  // namespace

TEST_CASE("h and its sandwich") {
  CHECK(h_fn(0.0) == 0.0);
  CHECK(std::fabs(h_fn(4.0) - (8.0 * std::log(2.0) - 4.0)) <= 1e-14);
  CHECK(h_fn(4.0) >= 16.0 / 12.0);
  CHECK(h_fn(4.0) <= 4.0);
  double prev = -1.0;
  for (int i = 0; i < 100; ++i) {
    double x = 100.0 * i / 99.0;
    double h = h_fn(x);
    CHECK(x * x / (8.0 + x) <= h + 1e-12);
    CHECK(h <= x * x / 4.0 + 1e-12);
    CHECK(h > prev);
    prev = h;
  }
  CHECK_THROWS_AS(h_fn(-1e-9), DomainError);
}

TEST_CASE("eta, Chernoff and Cantelli") {
  CHECK(eta(0, 1.0) == 1.0);
  CHECK(eta(3, 1.0) == 8.0);
  CHECK(eta(0, 0.5) == 2.0);
  CHECK(chernoff_bound(8, 0, -3.0) == 1.0);
  CHECK(chernoff_bound(8, 0, 0.0) == 1.0);
  CHECK(std::fabs(chernoff_bound(8, 0, 4.0) - std::exp(-(8.0 * std::log(2.0) - 4.0))) <= 1e-15);
  CHECK(std::fabs(cantelli_bound(8, 0, 1.0) - 2.0 / 3.0) <= 1e-15);
  CHECK(std::fabs(cantelli_bound(8, 0, std::sqrt(2.0)) - 0.5) <= 1e-15);
  CHECK(cantelli_bound(8, 0, 1e9) < 1e-17);
  CHECK_THROWS_AS(cantelli_bound(8, 0, 0.0), DomainError);
  CHECK_THROWS_AS(chernoff_bound(8, -3, 1.0), DomainError);
}

TEST_CASE("a_nj") {
  CHECK(a_nj(1, 3) == 8.0);
  CHECK(std::fabs(a_nj(2, 0) - 2.0) <= 1e-15);
  for (std::uint64_t n : {1ULL << 6, 1ULL << 8, 1ULL << 10, 1ULL << 12, 1000ULL, 3000ULL}) {
    double lg = std::log2(static_cast<double>(n));
    double g = gamma_of(n);
    for (int j = -8; j <= 20; ++j) {
      if (!(j > -std::log2(lg) && j < lg)) continue;
      CHECK(std::fabs(a_nj(n, j) - lg - mu1(j, g)) <= 2.0 * lg * lg / static_cast<double>(n));
      CHECK(a_nj(n, j) <= eta(j, g) + std::log2(eta(j, g)) + lg + 1.0);
    }
  }
}

TEST_CASE("normal cdf against its Taylor series") {
  for (int i = 0; i < 20; ++i) {
    double x = -3.0 + 6.0 * i / 19.0;
    CHECK(std::fabs(normal_cdf(x) - normal_cdf_series(x)) <= 1e-12);
  }
  CHECK(normal_cdf(0.0) == 0.5);
}

TEST_CASE("conditional CLT dichotomy") {
  double small = clt_distance(1ULL << 12, 6).distance;
  double mid = clt_distance(1ULL << 10, 6).distance;
  double coarse = clt_distance(1ULL << 8, 6).distance;
  CHECK(small <= 0.02);
  CHECK(small < mid);
  CHECK(mid < coarse);
  CHECK(clt_distance(1ULL << 6, 12).distance >= 0.1);
  // with ties the displayed centering is off by about sqrt(2^k/n) standard deviations
  CHECK(clt_distance(1ULL << 12, 6, true).distance > small);
}

TEST_CASE("large maximum regime") {
  for (double eps : {0.1, 0.5, 2.0}) CHECK(largemax_check(1, 5, eps).exact == 0.0);
  auto r = largemax_check(128, 20, 0.5);
  CHECK(r.bound == 32.0 * 128.0 / std::ldexp(1.0, 20));
  CHECK(r.exact > 0.0);
  CHECK(r.exact <= r.bound);
  CHECK(r.centered <= r.bound);
  for (int k : {4, 5, 7}) {
    Rational eps(1, 4);
    auto o = three_games(k, eps);
    auto got = largemax_check(3, k, 0.25);
    CHECK(std::fabs(got.exact - Rational(o.above / o.event).get_d()) <= 1e-13);
    CHECK(std::fabs(got.centered - Rational(o.centered / o.event).get_d()) <= 1e-13);
  }
  CHECK_THROWS_AS(largemax_check(128, 8, 0.5), DomainError);
}

TEST_CASE("large maximum centering oscillates") {
  for (int j : {-1, 0, 2}) {
    double prev = 1e9;
    for (int e : {8, 16, 32, 60}) {
      std::uint64_t n = 1ULL << e;
      auto rc = largemax_center(n, j);
      double lg = std::log2(static_cast<double>(n));
      CHECK(std::fabs(rc.centering - rc.oscillating * rc.k / lg) <= 1e-12 * rc.centering);
      double gap = std::fabs(rc.centering / rc.oscillating - 1.0);
      CHECK(gap < prev);
      prev = gap;
    }
  }
}

TEST_CASE("tail ratio scans") {
  auto one = tail_ratio_scan(1, 12, 0.05, 64);
  for (const auto& p : one.points) CHECK(p.statistic == 1.0);
  auto r = tail_ratio_scan(4, 16, 0.1, 64);
  CHECK(std::fabs(r.sup_val - 1.0) <= 0.02);
  CHECK(std::fabs(r.inf_val - 1.0) <= 0.02);
  CHECK(r.points.size() >= 64);
  double coarse = tail_ratio_scan(4, 8, 0.1, 64).sup_val;
  CHECK(std::fabs(r.sup_val - 1.0) < std::fabs(coarse - 1.0));
  CHECK_THROWS_AS(tail_ratio_scan(4, 16, 0.0, 64), DomainError);

  auto u8 = tail_period_scan(4, 8, 64);
  auto u16 = tail_period_scan(4, 16, 64);
  CHECK(std::fabs(u16.sup_val - 2.0) < std::fabs(u8.sup_val - 2.0));
  CHECK(std::fabs(u16.sup_val - 2.0) <= 1e-4);
  CHECK(u16.inf_val >= 1.0);
  CHECK(u16.inf_val <= 1.05);
}

TEST_CASE("finer sup and its limit") {
  CHECK(finer_limit(2, 2.0) == 1.25);
  CHECK(finer_limit(2, 3.0) == 1.25);
  auto f = finer_sup(2, 16, 2.0);
  CHECK(f.limit == 1.25);
  CHECK(std::fabs(f.sup_val - 1.25) <= 0.02);
  for (std::uint64_t n : {2ULL, 3ULL, 5ULL}) {
    double prev = 2.0;
    for (double c = 1.05; c < 12.0; c += 0.15) {
      double l = finer_limit(n, c);
      CHECK(l <= prev);
      prev = l;
    }
  }
  // c = 2.3 is not an atom of S_2/3
  CHECK(finer_limit(3, 2.3) == finer_limit(3, 2.3 + 1e-9));
}

TEST_CASE("two-fold tail ratio") {
  CHECK(subexp_ratio(1, 1000.0) == 1.0);
  double at = subexp_ratio(2, 16384.0);
  CHECK(at >= 3.99);
  CHECK(at <= 4.0);
  CHECK(std::fabs(at - 4.0) <= std::ldexp(1.0, -11));
  double below = subexp_ratio(2, 16383.0);
  CHECK(below >= 2.0);
  CHECK(below <= 2.01);
  for (double x : {2.0, 3.0, 6.0, 100.0, 1023.0, 1024.0, 5000.0}) {
    CHECK(std::fabs(sum_tail_exact(2, x).value - two_game_tail(x)) <= 1e-15);
  }
  auto s = subexp_scan(2, 65536.0);
  CHECK(s.sup_val <= 4.0);
  CHECK(s.sup_val >= 3.99);
  for (const auto& p : s.points) CHECK(p.statistic >= 2.0);
}

TEST_CASE("merging of the maximum") {
  double d1 = merge_distance_max(1);
  double oracle = 0.0;
  for (int j = -20; j <= 70; ++j) {
    double q = j >= 1 ? std::ldexp(1.0, -j) : 0.0;
    oracle = std::max(oracle, std::fabs(q - p_max(j, 1.0)));
  }
  CHECK(std::fabs(d1 - oracle) <= 1e-15);
  CHECK(d1 <= 1.0);
  CHECK(merge_distance_max(1ULL << 12) < merge_distance_max(1ULL << 6));
  double a = 1024.0 * merge_distance_max(1ULL << 10), b = 64.0 * merge_distance_max(1ULL << 6);
  CHECK(std::max(a, b) / std::min(a, b) <= 3.0);
  double lo = 1e9, hi = 0.0;
  for (int e = 4; e <= 14; ++e) {
    double v = std::ldexp(1.0, e) * merge_distance_max(1ULL << e);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi / lo <= 5.0);
}

TEST_CASE("conditional merging") {
  std::vector<double> printed, corrected;
  for (std::uint64_t n : {128ULL, 256ULL, 512ULL, 1024ULL}) {
    printed.push_back(merge_distance_cond(n, 0).distance);
    corrected.push_back(merge_distance_cond(n, 0, 1e-7, ConditionalForm::tie_corrected).distance);
  }
  for (std::size_t i = 1; i < printed.size(); ++i) {
    CHECK(printed[i] < printed[i - 1]);
    CHECK(corrected[i] < corrected[i - 1]);
  }
  CHECK(corrected[0] <= 0.06);
  CHECK(corrected.back() <= 0.02);
  auto j2 = merge_distance_cond(128, 2);
  CHECK(std::isfinite(j2.distance));
  CHECK(j2.allowance <= 1e-6);
  CHECK(j2.upper >= j2.distance);
}

TEST_CASE("unconditional merging") {
  auto three = merge_distance_sum(3);
  CHECK(three.distance <= 1.0);
  auto d = merge_distance_sum(128);
  CHECK(d.distance <= 0.08);
  CHECK(d.upper <= 0.08);
}

TEST_CASE("tail of the normalized sum") {
  std::vector<double> xs{-1.0, -0.5, 0.0, 0.75, 3.0, 20.0};
  auto t = sum_tail_normalized(2, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double y = 2.0 * (1.0 + xs[i]);
    // P{S >= y} = P{S > y - 1} on the integer lattice
    CHECK(std::fabs(t[i].value - two_game_tail(std::ceil(y) - 1.0)) <= 1e-14);
  }
}

TEST_CASE("figure 8 bound curve") {
  double total = 0.0;
  for (int j = -2; j <= 11; ++j) total += p_max(j, 1.0);
  CHECK(std::fabs(fig8_bound_curve(128, -1e6, -2, 11) - total) <= 1e-14);
  double at0 = fig8_bound_curve(128, 0.0, -2, 11);
  CHECK(at0 > 0.0);
  CHECK(at0 < 1.0);
  std::vector<double> xs;
  for (int i = 0; i < 20; ++i) xs.push_back(-2.0 + 40.0 * i / 19.0);
  auto exact = sum_tail_normalized(128, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(exact[i].value - exact[i].err <= fig8_bound_curve(128, xs[i], -2, 11) + (1.0 - total));
  }
  CHECK_THROWS_AS(fig8_bound_curve(128, 0.0, 3, 2), DomainError);
}

TEST_CASE("Chernoff and Cantelli dominate the exact tails") {
  for (int j = -2; j <= 10; ++j) {
    auto r = bound_domination(8, j);
    CHECK(r.exact);
    CHECK(r.checks == 100);
    CHECK(r.chernoff_violations == 0);
    CHECK(r.cantelli_violations == 0);
  }
  for (int j : {-2, 0, 4, 10}) {
    auto r = bound_domination(128, j);
    CHECK(!r.exact);
    CHECK(r.chernoff_violations == 0);
    CHECK(r.cantelli_violations == 0);
  }
}

TEST_CASE("scan report plumbing") {
  ScanReport r;
  CHECK_THROWS_AS(r.finalize(), DomainError);
  r.points = {{2.0, 0.5}, {1.0, 3.0}, {3.0, -1.0}};
  r.meta = {{"n", "4"}};
  r.finalize();
  CHECK(r.sup_val == 3.0);
  CHECK(r.sup_at == 1.0);
  CHECK(r.inf_val == -1.0);
  CHECK(r.inf_at == 3.0);
  CHECK(r.points.front().x == 1.0);
  std::ostringstream os;
  write_scan_csv(os, r);
  CHECK(os.str().rfind("# n=4\n", 0) == 0);
  CHECK(os.str().find("x,statistic\n1,3\n2,0.5\n3,-1\n") != std::string::npos);
}
