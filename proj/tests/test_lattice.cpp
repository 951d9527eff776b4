#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "stp/lattice.hpp"

using namespace stp;

namespace {

// Law of S_n capped at `cap` by enumerating exponent tuples; any exponent above
// floor(log2 cap) forces the sum past the cap.
std::map<std::uint64_t, Rational> brute_sum_law(int n, std::uint64_t cap, int kmax = -1) {
  int M = 63 - std::countl_zero(cap);
  if (kmax > 0) M = std::min(M, kmax);
  std::map<std::uint64_t, Rational> out;
  Rational norm = kmax > 0 ? 1 - pow2_rational(-kmax) : Rational(1);
  std::function<void(int, std::uint64_t, Rational)> rec = [&](int left, std::uint64_t sum, Rational p) {
    if (left == 0) {
      if (sum <= cap) out[sum] += p;
      return;
    }
    for (int i = 1; i <= M; ++i) rec(left - 1, sum + (std::uint64_t{1} << i), p * pow2_rational(-i) / norm);
  };
  rec(n, 0, Rational(1));
  return out;
}

class StepCdf : public ContinuousCdf {
 public:
  InversionResult cdf(double x) const override { return {x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : 0.5 + 0.5 * x), 0.0}; }
};

class NormalLike : public ContinuousCdf {
 public:
  InversionResult cdf(double x) const override { return {0.5 * std::erfc(-x / std::sqrt(2.0)), 0.0}; }
};

}  // namespace

TEST_CASE("truncated_atom_law") {
  auto l1 = truncated_atom_law<Rational>(1);
  CHECK(l1.atom_count() == 1);
  CHECK(l1.prob(2) == 1);
  auto l2 = truncated_atom_law<Rational>(2);
  CHECK(l2.prob(2) == Rational(2, 3));
  CHECK(l2.prob(4) == Rational(1, 3));
  auto l3 = truncated_atom_law<Rational>(3);
  CHECK(l3.prob(2) == Rational(4, 7));
  CHECK(l3.prob(4) == Rational(2, 7));
  CHECK(l3.prob(8) == Rational(1, 7));
  CHECK(sgn(l3.overflow()) == 0);
}

TEST_CASE("convolve examples") {
  auto p2 = LatticeLaw<Rational>::point(2);
  auto s = convolve(p2, p2);
  CHECK(s.prob(4) == 1);
  auto x = stp_atom_law<Rational>(1 << 10);
  auto s2 = convolve(x, x);
  CHECK(s2.prob(6) == Rational(1, 4));
  auto s2c = convolve(x, x, std::uint64_t{4});
  CHECK(s2c.atom_count() == 1);
  CHECK(s2c.prob(4) == Rational(1, 4));
  CHECK(s2c.overflow() == Rational(3, 4));
}

TEST_CASE("power_convolve examples") {
  auto base = truncated_atom_law<Rational>(3);
  auto one = power_convolve(base, 1);
  CHECK(one.atoms().size() == base.atoms().size());
  auto five = power_convolve(truncated_atom_law<Rational>(1), 5);
  CHECK(five.prob(10) == 1);
  CHECK(power_convolve(truncated_atom_law<Rational>(2), 2).prob(8) == Rational(1, 9));
}

TEST_CASE("binary exponentiation equals naive iteration exactly") {
  for (Layout layout : {Layout::sparse, Layout::dense}) {
    auto base = truncated_atom_law<Rational>(5, layout);
    for (std::uint64_t m : {2ULL, 3ULL, 6ULL, 7ULL}) {
      for (std::optional<std::uint64_t> cap : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{60}}) {
        auto fast = power_convolve(base, m, cap);
        auto slow = power_convolve(base, m, cap, ConvMethod::iterate);
        auto fa = fast.atoms(), sa = slow.atoms();
        REQUIRE(fa.size() == sa.size());
        for (std::size_t i = 0; i < fa.size(); ++i) {
          CHECK(fa[i].value == sa[i].value);
          CHECK(fa[i].prob == sa[i].prob);
        }
        CHECK(fast.overflow() == slow.overflow());
        CHECK(fast.atom_mass() + fast.overflow() == 1);
      }
    }
  }
}

TEST_CASE("double FFT and iteration agree within the error budget") {
  auto base = truncated_atom_law<double>(9, Layout::dense);
  auto a = power_convolve(base, 40, std::uint64_t{6000}, ConvMethod::iterate);
  auto b = power_convolve(base, 40, std::uint64_t{6000}, ConvMethod::fft);
  double worst = 0.0;
  for (std::uint64_t v = 80; v <= 6000; v += 2) worst = std::max(worst, std::fabs(a.prob(v) - b.prob(v)));
  CHECK(worst <= a.err() + b.err() + 1e-14);
  CHECK(std::fabs(a.overflow() - b.overflow()) <= 1e-12);
  CHECK(std::fabs(b.atom_mass() + b.overflow() - 1.0) <= b.err() + 1e-12);
}

TEST_CASE("cond_sum_law") {
  auto a = cond_sum_law<Rational>(1, 3);
  CHECK(a.prob(8) == 1);
  auto b = cond_sum_law<Rational>(2, 1);
  CHECK(b.prob(4) == 1);
  auto c = cond_sum_law<Rational>(2, 2);
  Rational mean = 0;
  for (const auto& at : c.atoms()) mean += Rational(mpz_class(std::to_string(at.value))) * at.prob;
  CHECK(mean == cond_sum_mean_exact(2, 2));
}

TEST_CASE("cond_sum_law mean matches closed form") {
  for (auto [n, k] : {std::pair{20ULL, 5}, std::pair{64ULL, 6}, std::pair{100ULL, 4}}) {
    auto law = cond_sum_law<double>(n, k);
    CHECK(law.overflow() == 0.0);
    CHECK(law.mean_of_atoms() == doctest::Approx(cond_sum_mean(n, k)).epsilon(1e-12));
  }
  auto capped = cond_sum_law<double>(64, 7, std::uint64_t{2000});
  CHECK(capped.overflow() < 1e-9);
  CHECK(std::fabs(capped.mean_of_atoms() - cond_sum_mean(64, 7)) <= 1e-9 * cond_sum_mean(64, 7) + 2000 * capped.overflow());
}

TEST_CASE("sum_law examples and brute-force oracle") {
  auto s2 = sum_law<Rational>(2, 64);
  CHECK(s2.prob(4) == Rational(1, 4));
  CHECK(s2.prob(6) == Rational(1, 4));
  auto s3 = sum_law<Rational>(3, 64);
  CHECK(s3.prob(6) == Rational(1, 8));
  for (int n : {2, 3, 4}) {
    std::uint64_t cap = 200;
    auto law = sum_law<Rational>(n, cap);
    auto brute = brute_sum_law(n, cap);
    CHECK(law.atoms().size() == brute.size());
    Rational mass = 0;
    for (auto& [v, p] : brute) {
      CHECK(law.prob(v) == p);
      mass += p;
    }
    CHECK(law.overflow() == 1 - mass);
  }
}

TEST_CASE("sum_law routes agree") {
  for (std::uint64_t n : {2ULL, 3ULL, 5ULL, 8ULL}) {
    auto a = sum_law<Rational>(n, 1 << 9, SumRoute::direct);
    auto b = sum_law<Rational>(n, 1 << 9, SumRoute::by_maximum);
    auto aa = a.atoms();
    REQUIRE(aa.size() == b.atoms().size());
    for (const auto& at : aa) CHECK(b.prob(at.value) == at.prob);
    CHECK(a.overflow() == b.overflow());
  }
  for (std::uint64_t n : {9ULL, 12ULL, 16ULL}) {
    auto a = sum_law<double>(n, 1 << 12, SumRoute::direct);
    auto b = sum_law<double>(n, 1 << 12, SumRoute::by_maximum);
    double worst = 0.0;
    for (const auto& at : a.atoms()) worst = std::max(worst, std::fabs(b.prob(at.value) - at.prob));
    CHECK(worst <= 1e-12);
    CHECK(std::fabs(a.overflow() - b.overflow()) <= 1e-12);
  }
}

TEST_CASE("sum_tail_exact examples") {
  CHECK(*sum_tail_exact(1, 5).exact == Rational(1, 4));
  CHECK(*sum_tail_exact(2, 8).exact == Rational(7, 16));
  CHECK(*sum_tail_exact(2, 6).exact == Rational(1, 2));
  CHECK(sum_tail_exact(3, 5).value == 1.0);
}

TEST_CASE("sum_tail_exact reproduces two_fold_tail") {
  for (int ell = 1; ell <= 12; ++ell) {
    for (int k = 1; k <= ell; ++k) {
      double y = pow2(k) + pow2(ell);
      CHECK(*sum_tail_exact(2, y).exact == *two_fold_tail(k, ell).exact);
    }
  }
}

TEST_CASE("sum_tail_exact is non-increasing and flat between reachable sums") {
  SumTailOracle oracle(3, 300.0);
  Rational prev = 2;
  for (double y = 0.0; y <= 300.0; y += 0.5) {
    Rational t = *oracle.tail(y).exact;
    CHECK(t <= prev);
    prev = t;
  }
  auto brute = brute_sum_law(3, 1 << 12);
  for (double y : {7.0, 13.0, 40.5, 100.0, 257.0}) {
    Rational tail = 0;
    for (auto& [v, p] : brute) {
      if (static_cast<double>(v) > y) tail += p;
    }
    tail += 1 - [&] {
      Rational m = 0;
      for (auto& [v, p] : brute) m += p;
      return m;
    }();
    CHECK(*oracle.tail(y).exact == tail);
  }
}

TEST_CASE("dense oracle route for many summands") {
  SumTailOracle dense(12, 5000.0);
  auto law = sum_law<double>(12, 1 << 14);
  for (double y : {30.0, 100.0, 1000.0, 4999.0}) {
    double direct = law.tail(static_cast<std::uint64_t>(y));
    CHECK(dense.tail(y).value == doctest::Approx(direct).epsilon(1e-10));
  }
}

TEST_CASE("law CSV export") {
  std::ostringstream os;
  write_law_csv(os, convolve(stp_atom_law<Rational>(1 << 10), stp_atom_law<Rational>(1 << 10), std::uint64_t{4}));
  CHECK(os.str() == "value,prob\n4,0.25\n__overflow__,0.75\n");
}

TEST_CASE("ks_distance examples") {
  auto point = LatticeLaw<double>::point(0);
  StepCdf g;
  auto rep = ks_distance(point, 1.0, 0.0, g);
  CHECK(rep.value == doctest::Approx(0.5));
  CHECK(rep.upper == doctest::Approx(0.5));
}

TEST_CASE("ks_distance adaptive refinement matches exhaustive scan") {
  auto law = cond_sum_law<double>(400, 6);
  double mean = cond_sum_mean(400, 6), sd = std::sqrt(cond_sum_variance(400, 6));
  NormalLike phi;
  KsOptions full;
  full.exhaustive_below = 1 << 30;
  KsOptions adaptive;
  adaptive.exhaustive_below = 16;
  adaptive.slack = 1e-9;
  auto a = ks_distance(law, sd, mean, phi, full);
  auto b = ks_distance(law, sd, mean, phi, adaptive);
  CHECK(b.value == doctest::Approx(a.value).epsilon(1e-12));
  CHECK(b.upper >= a.value);
  CHECK(b.evaluations < a.evaluations);
}

TEST_CASE("ks_distance rejects caps with too much overflow") {
  auto law = sum_law<double>(16, 200);
  NormalLike phi;
  CHECK_THROWS_AS(ks_distance(law, 1.0, 0.0, phi), NumericError);
}

TEST_CASE("ks_versus_sample") {
  auto law = sum_law<double>(2, 1 << 12);
  std::vector<std::uint64_t> sample{4, 4, 6, 6};
  double allow = 0.0;
  double d = ks_versus_sample(law, sample, &allow);
  // F_emp(4) = 0.5 vs 0.25; F_emp(6) = 1 vs 0.5
  CHECK(d == doctest::Approx(0.5));
  CHECK(allow >= law.overflow());
}
