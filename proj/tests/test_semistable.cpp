#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "stp/semistable.hpp"

using namespace stp;
using cd = std::complex<double>;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Naive series for log phi_{j,gamma}, summing atoms down to k = -70 with no tail folding.
cd naive_log_phi_j(int j, double gamma, double t) {
  double x_top = std::ldexp(1.0, j) / gamma;
  cd acc(0.0, t * (x_top + std::log2(x_top)));
  for (int k = j; k >= -70; --k) {
    double x = std::ldexp(1.0, k) / gamma;
    double m = std::ldexp(gamma, -k) * (k == j ? 2.0 : 1.0);
    double h = std::sin(0.5 * t * x);
    acc += m * cd(-2.0 * h * h, std::sin(t * x) - t * x);
  }
  return acc;
}

double naive_u(double gamma) {
  double a = 0.0, b = 0.0;
  for (int k = 59; k >= 1; --k) a += gamma * gamma / (gamma * gamma + std::pow(4.0, k));
  for (int k = 59; k >= 0; --k) b += 1.0 / (1.0 + gamma * gamma * std::pow(4.0, k));
  return a - b;
}

}  // namespace

TEST_CASE("u_gamma") {
  CHECK(std::fabs(u_gamma(1.0) + 0.5) <= 1e-16);
  // at gamma = 1/2 the series telescope to -(4/5 + 1/2 + 1/5)
  CHECK(std::fabs(u_gamma(0.5) + 1.5) <= 1e-15);
  for (double g : {0.5, 0.6, 0.75, 0.9, 1.0}) {
    double u = u_gamma(g);
    CHECK(u < 0.0);
    CHECK(std::fabs(u - naive_u(g)) <= 1e-15);
  }
  CHECK(s_gamma(0.5) == 1.0);
}

TEST_CASE("levy series atoms") {
  auto c = levy_series_conditional(0, 1.0, -3);
  CHECK(c.atoms.back().location == 1.0);
  CHECK(c.atoms.back().mass == 2.0);
  CHECK(c.atoms[c.atoms.size() - 2].location == 0.5);
  CHECK(c.atoms[c.atoms.size() - 2].mass == 2.0);
  CHECK(c.drift == 1.0);
  auto u = levy_series_unconditional(1.0, -2, 4);
  for (const auto& a : u.atoms) {
    if (a.location == 2.0) CHECK(a.mass == 0.5);
  }
  CHECK(u.compensator == Compensator::bounded);
  for (int j = -4; j <= 8; ++j) {
    auto half = levy_series_conditional(j, 0.5, j - 20);
    auto one = levy_series_conditional(j + 1, 1.0, j - 19);
    REQUIRE(half.atoms.size() == one.atoms.size());
    for (std::size_t i = 0; i < half.atoms.size(); ++i) {
      CHECK(half.atoms[i].location == one.atoms[i].location);
      CHECK(half.atoms[i].mass == one.atoms[i].mass);
    }
    CHECK(half.drift == one.drift);
  }
}

TEST_CASE("charfn_Wj against the naive series") {
  for (int j : {-3, 0, 2, 5}) {
    for (double g : {0.5, 0.8, 1.0}) {
      for (double t : {-7.0, -0.3, 0.01, 0.5, 1.0, 3.0, 12.0}) {
        cd a = charfn_Wj(j, g, t);
        cd b = std::exp(naive_log_phi_j(j, g, t));
        CHECK(std::abs(a - b) <= 1e-10);
      }
    }
  }
  CHECK(charfn_Wj(3, 0.7, 0.0) == cd(1.0, 0.0));
  CHECK(std::abs(charfn_Wj(0, 1.0, 10.0)) <= std::exp(-20.0 / kPi));
}

TEST_CASE("charfn_Wj derivative at zero gives the mean") {
  for (int j : {-2, 0, 3}) {
    for (double g : {0.5, 1.0}) {
      double h = 1e-5;
      cd d = (charfn_Wj(j, g, h) - charfn_Wj(j, g, -h)) / (2.0 * h);
      CHECK(d.imag() == doctest::Approx(moments_Wj(j, g).mean).epsilon(1e-6));
    }
  }
}

TEST_CASE("characteristic functions are Hermitian and bounded") {
  for (double t = 0.01; t < 200.0; t *= 1.37) {
    for (double g : {0.5, 0.75, 1.0}) {
      cd w = charfn_W(g, t, 1e-12);
      CHECK(std::abs(w - std::conj(charfn_W(g, -t, 1e-12))) <= 1e-12);
      CHECK(std::abs(w) <= 1.0 + 1e-12);
      cd c = charfn_Wj(1, g, t);
      CHECK(std::abs(c - std::conj(charfn_Wj(1, g, -t))) <= 1e-12);
      CHECK(std::abs(c) <= 1.0 + 1e-12);
    }
  }
  CHECK(charfn_W(0.6, 0.0, 1e-9) == cd(1.0, 0.0));
}

TEST_CASE("mixture identity at the characteristic function level") {
  double worst_printed = 0.0;
  for (double g : {0.5, 0.75, 1.0}) {
    for (double t : {0.2, 1.0, 2.5, 7.0}) {
      cd mix(0.0, 0.0), printed(0.0, 0.0);
      for (int j = -8; j <= 60; ++j) {
        mix += p_max(j, g) * charfn_Wj(j, g, t, 1e-12, ConditionalForm::tie_corrected);
        printed += p_max(j, g) * charfn_Wj(j, g, t);
      }
      cd w = charfn_W(g, t, 1e-12);
      CHECK(std::abs(mix - w) <= 1e-9);
      worst_printed = std::max(worst_printed, std::abs(printed - w));
    }
  }
  // the doubled top atom breaks the identity
  CHECK(worst_printed > 1e-2);
}

TEST_CASE("tie-corrected conditional law: top count is zero-truncated Poisson") {
  // oracle: levels below j as the naive series, top level summed over counts r >= 1
  for (int j : {-1, 0, 2}) {
    for (double g : {0.5, 0.9}) {
      double xj = std::ldexp(1.0, j) / g, lam = std::ldexp(g, -j);
      Moments m = moments_Wj_tie_corrected(j, g);
      double en = lam / (1.0 - std::exp(-lam));
      double lin = m.mean - xj * en;
      for (double t : {0.3, 1.1, 4.0}) {
        cd below(0.0, t * lin);
        for (int k = j - 1; k >= -70; --k) {
          double x = std::ldexp(1.0, k) / g, h = std::sin(0.5 * t * x);
          below += std::ldexp(g, -k) * cd(-2.0 * h * h, std::sin(t * x) - t * x);
        }
        cd top(0.0, 0.0);
        double pr = std::exp(-lam) / (1.0 - std::exp(-lam));
        for (int r = 1; r < 80; ++r) {
          pr *= lam / r;
          top += pr * std::exp(cd(0.0, t * r * xj));
        }
        cd want = std::exp(below) * top;
        CHECK(std::abs(charfn_Wj(j, g, t, 1e-12, ConditionalForm::tie_corrected) - want) <= 1e-10);
      }
      double h = 1e-5;
      cd d = (charfn_Wj(j, g, h, 1e-12, ConditionalForm::tie_corrected) -
              charfn_Wj(j, g, -h, 1e-12, ConditionalForm::tie_corrected)) / (2.0 * h);
      CHECK(d.imag() == doctest::Approx(m.mean).epsilon(1e-6));
    }
  }
}

TEST_CASE("real_part_bound examples") {
  CHECK(real_part_bound(0, 1.0, 0.0) == 0.0);
  CHECK(real_part_bound(0, 1.0, kPi) == doctest::Approx(-2.0));
  CHECK(real_part_bound(0, 1.0, 1.0) == doctest::Approx(-16.0 / (kPi * kPi)));
}

TEST_CASE("certified real part bound holds on both branches") {
  for (int j : {-3, -1, 0, 2, 6}) {
    for (double g : {0.5, 0.7, 1.0}) {
      double t_star = kPi * g * std::ldexp(1.0, -j) / 2.0;
      bool quad = false, lin = false;
      for (double t = 1e-3; t < 300.0; t *= 1.21) {
        double re = std::log(std::abs(charfn_Wj(j, g, t)));
        CHECK(re <= real_part_bound_certified(j, g, t) + 1e-12);
        if (t > t_star) {
          lin = true;
          CHECK(re <= real_part_bound(j, g, t) + 1e-12);
        } else {
          quad = true;
        }
      }
      CHECK(quad);
      CHECK(lin);
    }
  }
}

TEST_CASE("printed quadratic constant is too strong at gamma = 1") {
  double re = std::log(std::abs(charfn_Wj(0, 1.0, 1.0)));
  CHECK(re > real_part_bound(0, 1.0, 1.0));
  CHECK(re <= real_part_bound_certified(0, 1.0, 1.0));
}

TEST_CASE("moments_Wj closed form") {
  CHECK(moments_Wj(0, 1.0).mean == 1.0);
  CHECK(moments_Wj(0, 1.0).variance == 3.0);
  CHECK(moments_Wj(2, 1.0).mean == 6.0);
  CHECK(moments_Wj(2, 1.0).variance == 12.0);
  CHECK(moments_Wj(0, 0.5).mean == 3.0);
  CHECK(moments_Wj(0, 0.5).variance == 6.0);
}

TEST_CASE("cdf_Wj basic properties") {
  CHECK(cdf_Wj(0, 1.0, -1e6, 1e-8).value <= 1e-8);
  CHECK(cdf_Wj(0, 1.0, 1e6, 1e-8).value >= 1.0 - 1e-8);
  WjCdf G(1, 0.8, 1e-8);
  double prev = -1.0;
  for (double x = -6.0; x <= 30.0; x += 0.25) {
    auto r = G.cdf(x);
    CHECK(r.quad_err >= 0.0);
    CHECK(r.value >= -r.quad_err);
    CHECK(r.value <= 1.0 + r.quad_err);
    CHECK(r.value >= prev - 2e-8);
    prev = r.value;
  }
}

TEST_CASE("G_{j,1/2} equals G_{j+1,1}") {
  for (int j : {-2, 0, 3}) {
    WjCdf a(j, 0.5, 1e-8), b(j + 1, 1.0, 1e-8);
    double mu = moments_Wj(j, 0.5).mean, sd = std::sqrt(moments_Wj(j, 0.5).variance);
    for (double z = -4.0; z <= 6.0; z += 0.5) {
      double x = mu + z * sd;
      CHECK(std::fabs(a.cdf(x).value - b.cdf(x).value) <= 2e-8);
    }
  }
}

TEST_CASE("cdf derivative matches pdf") {
  WjCdf G(0, 1.0, 1e-10);
  for (double x : {-2.0, -0.5, 0.0, 0.7, 1.0, 1.9, 2.5, 4.0, 6.0, 9.0}) {
    double h = 1e-3;
    auto up = G.cdf(x + h), dn = G.cdf(x - h);
    auto mid = G.cdf(x);
    auto d = G.pdf(x);
    // central difference of a smooth cdf; curvature term bounded by the spacing squared
    double fd = (up.value - dn.value) / (2.0 * h);
    double third = (G.pdf(x + h).value - 2.0 * d.value + G.pdf(x - h).value) / (h * h);
    double allowed = 10.0 * (d.quad_err + (up.quad_err + dn.quad_err) / (2.0 * h)) + std::fabs(third) * h * h / 6.0 + 1e-9;
    CHECK(std::fabs(fd - d.value) <= allowed);
    CHECK(mid.value >= dn.value - 2e-10);
  }
}

TEST_CASE("tie-corrected quadrature moments") {
  for (auto [j, g] : std::vector<std::pair<int, double>>{{0, 1.0}, {2, 0.75}, {-1, 0.5}}) {
    auto q = moments_Wj_quadrature(j, g, 1e-9, ConditionalForm::tie_corrected);
    auto m = moments_Wj_tie_corrected(j, g);
    CHECK(std::fabs(q.mass - 1.0) <= 1e-4);
    CHECK(std::fabs(q.mean - m.mean) <= 1e-4);
    CHECK(std::fabs(q.variance - m.variance) <= 1e-3 * m.variance);
  }
}

TEST_CASE("pdf quadrature moments and normalization") {
  for (auto [j, g] : std::vector<std::pair<int, double>>{{0, 1.0}, {2, 1.0}, {0, 0.5}, {-1, 0.75}}) {
    auto q = moments_Wj_quadrature(j, g, 1e-9);
    auto m = moments_Wj(j, g);
    CHECK(std::fabs(q.mass - 1.0) <= 1e-4);
    CHECK(std::fabs(q.mean - m.mean) <= 1e-4);
    CHECK(std::fabs(q.variance - m.variance) <= 1e-3 * m.variance);
  }
}

TEST_CASE("density bound") {
  for (int j : {-2, 0, 1, 3}) {
    for (double g : {0.5, 1.0}) {
      WjCdf G(j, g, 1e-8);
      double mu = moments_Wj(j, g).mean, sd = std::sqrt(moments_Wj(j, g).variance);
      double bound = std::sqrt(kPi) / 4.0 * std::pow(2.0, -j / 2.0) + 0.5;
      for (double z = -4.0; z <= 4.0; z += 0.1) {
        auto d = G.pdf(mu + z * sd);
        CHECK(d.value <= bound);
        CHECK(d.value >= -d.quad_err);
      }
    }
  }
}

TEST_CASE("mixture cdf basics") {
  MixtureCdf G(1.0, 1e-6);
  CHECK(G.cdf(-1e6).value <= 1e-6);
  CHECK(1.0 - G.cdf(64.0).value <= 0.5);
  double prev = G.cdf(-8.0).value, var = prev;
  for (double x = -7.5; x <= 1024.0; x += (x < 40.0 ? 0.5 : 16.0)) {
    double v = G.cdf(x).value;
    var += std::fabs(v - prev);
    prev = v;
  }
  var += 1.0 - prev;
  CHECK(std::fabs(var - 1.0) <= 1e-3);
}

TEST_CASE("tie-corrected mixture and direct inversion agree") {
  for (double g : {0.5, 0.75, 1.0}) {
    MixtureCdf M(g, 1e-6, ConditionalForm::tie_corrected);
    DirectCdf D(g, 1e-6);
    for (int i = 0; i < 20; ++i) {
      double x = -2.0 + i * 42.0 / 19.0;
      auto a = M.cdf(x), b = D.cdf(x);
      CHECK(std::fabs(a.value - b.value) <= 2e-6 + a.quad_err + b.quad_err);
    }
  }
  CHECK(cdf_W_direct(1.0, -1e6, 1e-6).value <= 1e-6);
}

TEST_CASE("direct cdf is monotone") {
  DirectCdf D(0.6, 1e-6);
  double prev = -1.0;
  for (int i = 0; i < 100; ++i) {
    double v = D.cdf(-4.0 + 0.3 * i).value;
    CHECK(v >= prev - 2e-6);
    prev = v;
  }
}

TEST_CASE("semistable tail functionals") {
  for (double g : {0.5, 0.6, 0.7, 0.8, 0.9, 1.0}) {
    auto [lo, hi] = semistable_tail_functionals(g);
    CHECK(lo == 1.0);
    CHECK(hi == 2.0);
  }
  for (double x = 1.0; x < 2.0; x += 0.0625) CHECK(x * levy_tail_mass(1.0, x) == x);
  // brute force over the atom family
  for (double g : {0.5, 0.8}) {
    for (double x : {0.3, 1.7, 5.0, 100.0}) {
      double mass = 0.0;
      for (int k = -10; k < 80; ++k) {
        if (std::ldexp(1.0, k) / g > x) mass += std::ldexp(g, -k);
      }
      CHECK(levy_tail_mass(g, x) == doctest::Approx(mass).epsilon(1e-14));
    }
  }
}
