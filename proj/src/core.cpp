#include "stp/core.hpp"

#include <algorithm>
#include <bit>
#include <cfloat>
#include <cmath>
#include <limits>

namespace stp {

namespace {

constexpr double kEps = DBL_EPSILON;

Rational rational_power(const Rational& base, std::uint64_t e) {
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), base.get_num_mpz_t(), e);
  mpz_pow_ui(den.get_mpz_t(), base.get_den_mpz_t(), e);
  Rational r(num, den);
  r.canonicalize();
  return r;
}

}  // namespace

ProbValue ProbValue::from_exact(const Rational& q) {
  ProbValue p;
  p.value = q.get_d();
  Rational diff = q - Rational(p.value);
  if (sgn(diff) != 0) {
    p.err = std::nextafter(std::fabs(diff.get_d()), std::numeric_limits<double>::infinity());
  }
  p.exact = q;
  return p;
}

ProbValue ProbValue::approx(double value, double err) {
  ProbValue p;
  p.value = std::clamp(value, 0.0, 1.0);
  p.err = err + std::fabs(p.value - value);
  return p;
}

StpParams StpParams::from_games(std::uint64_t n) {
  StpParams p;
  p.n = n;
  p.gamma = gamma_of(n);
  return p;
}

int StpParams::typical_exponent() const { return ceil_log2(n); }

int ceil_log2(std::uint64_t n) {
  if (n == 0) throw DomainError("ceil_log2: n must be positive");
  if (n == 1) return 0;
  return 64 - std::countl_zero(n - 1);
}

int floor_log2(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError("floor_log2: x must be finite and positive");
  return std::ilogb(x);
}

double dyadic_mantissa(double x) { return std::scalbn(x, -floor_log2(x)); }

double pow2(int e) { return std::ldexp(1.0, e); }

Rational pow2_rational(int e) {
  mpz_class one = 1;
  mpz_class p;
  mpz_mul_2exp(p.get_mpz_t(), one.get_mpz_t(), static_cast<mp_bitcnt_t>(std::abs(e)));
  return e >= 0 ? Rational(p) : Rational(one, p);
}

bool exact_mode(std::uint64_t n, int k) {
  return k >= 0 && n <= 64 && n * static_cast<std::uint64_t>(k) <= 64;
}

void KahanSum::add(double v) {
  double t = sum_ + v;
  if (std::fabs(sum_) >= std::fabs(v)) {
    comp_ += (sum_ - t) + v;
  } else {
    comp_ += (v - t) + sum_;
  }
  sum_ = t;
}

ProbValue stp_cdf(double x) {
  if (std::isnan(x)) throw DomainError("stp_cdf: x is NaN");
  if (x < 2.0) return ProbValue::from_exact(0);
  if (std::isinf(x)) return ProbValue::from_exact(1);
  int m = floor_log2(x);
  return ProbValue::from_exact(1 - pow2_rational(-m));
}

double gamma_of(std::uint64_t n) { return std::ldexp(static_cast<double>(n), -ceil_log2(n)); }

ProbValue truncated_cdf(int k, double x) {
  if (k < 1) throw DomainError("truncated_cdf: k must be >= 1");
  if (std::isnan(x)) throw DomainError("truncated_cdf: x is NaN");
  if (x < 2.0) return ProbValue::from_exact(0);
  if (x >= pow2(k)) return ProbValue::from_exact(1);
  int m = floor_log2(x);
  Rational num = pow2_rational(k) - pow2_rational(k - m);
  Rational den = pow2_rational(k) - 1;
  return ProbValue::from_exact(num / den);
}

Rational truncated_moment_exact(int k, int ell) {
  if (k < 1 || ell < 1) throw DomainError("truncated_moment: k and ell must be >= 1");
  Rational norm = 1 - pow2_rational(-k);
  if (ell == 1) return Rational(k) / norm;
  Rational r = pow2_rational(ell - 1) / (pow2_rational(ell - 1) - 1);
  return r * (pow2_rational((ell - 1) * k) - 1) / norm;
}

MomentValue truncated_moment(int k, int ell) {
  if (k < 1 || ell < 1) throw DomainError("truncated_moment: k and ell must be >= 1");
  MomentValue m;
  if (ell >= 2 && static_cast<long long>(ell - 1) * k > 1022) {
    m.overflow = true;
    m.value = std::numeric_limits<double>::infinity();
    return m;
  }
  m.value = truncated_moment_exact(k, ell).get_d();
  if (!std::isfinite(m.value)) m.overflow = true;
  return m;
}

double p_max(int j, double gamma) {
  if (!(gamma >= 0.5 && gamma <= 1.0)) throw DomainError("p_max: gamma must lie in [1/2, 1]");
  double a = std::ldexp(gamma, -j);
  return std::exp(-a) * -std::expm1(-a);
}

ProbValue max_cdf_exact(std::uint64_t n, int k) {
  if (n < 1 || k < 1) throw DomainError("max_cdf_exact: n and k must be >= 1");
  if (exact_mode(n, k)) return ProbValue::from_exact(rational_power(1 - pow2_rational(-k), n));
  double l = static_cast<double>(n) * std::log1p(-pow2(-k));
  double v = std::exp(l);
  return ProbValue::approx(v, v * (std::fabs(l) * 4.0 + 4.0) * kEps + DBL_TRUE_MIN);
}

ProbValue q_max_exact(std::uint64_t n, int j) {
  if (n < 1) throw DomainError("q_max_exact: n must be >= 1");
  int K = ceil_log2(n) + j;
  if (K <= 0) throw DomainError("q_max_exact: ceil(log2 n) + j must be >= 1");
  if (exact_mode(n, K)) {
    Rational a = rational_power(1 - pow2_rational(-K), n);
    Rational b = rational_power(1 - 2 * pow2_rational(-K), n);
    return ProbValue::from_exact(a - b);
  }
  double a = pow2(-K);
  double nn = static_cast<double>(n);
  double la = nn * std::log1p(-a);
  double big = std::exp(la);
  if (K == 1) return ProbValue::approx(big, big * (std::fabs(la) * 4.0 + 4.0) * kEps + DBL_TRUE_MIN);
  // (1-2a)/(1-a) = 1 - a/(1-a) avoids cancellation between the two powers
  double lr = nn * std::log1p(-a / (1.0 - a));
  double q = -big * std::expm1(lr);
  double rel = (std::fabs(la) + std::fabs(lr) + 6.0) * 4.0 * kEps;
  return ProbValue::approx(q, q * rel + DBL_TRUE_MIN);
}

double h_gamma_cdf(double gamma, double x) {
  if (!(gamma >= 0.5 && gamma <= 1.0)) throw DomainError("h_gamma_cdf: gamma must lie in [1/2, 1]");
  if (std::isnan(x)) throw DomainError("h_gamma_cdf: x is NaN");
  if (x <= 0.0) return 0.0;
  double y = gamma * x;
  if (std::isinf(y)) return 1.0;
  return std::exp(-std::ldexp(gamma, -floor_log2(y)));
}

ProbValue two_fold_tail(int k, int ell) {
  if (k > ell) std::swap(k, ell);
  if (k < 1) throw DomainError("two_fold_tail: exponents must be >= 1");
  if (exact_mode(2, ell)) {
    if (ell > k) {
      return ProbValue::from_exact(2 * pow2_rational(-ell) + 2 * pow2_rational(-(ell + k)) -
                                   4 * pow2_rational(-2 * ell));
    }
    return ProbValue::from_exact(2 * pow2_rational(-ell) - pow2_rational(-2 * ell));
  }
  double v = ell > k ? 2.0 * pow2(-ell) + 2.0 * pow2(-(ell + k)) - 4.0 * pow2(-2 * ell)
                     : 2.0 * pow2(-ell) - pow2(-2 * ell);
  return ProbValue::approx(v, 3.0 * kEps * v + DBL_TRUE_MIN);
}

Rational cond_sum_mean_exact(std::uint64_t n, int k) {
  if (n < 1 || k < 1) throw DomainError("cond_sum_mean: n and k must be >= 1");
  Rational tail = n > 1 ? Rational(mpz_class(std::to_string(n - 1))) * truncated_moment_exact(k, 1) : Rational(0);
  return pow2_rational(k) + tail;
}

double cond_sum_mean(std::uint64_t n, int k) {
  if (n < 1 || k < 1) throw DomainError("cond_sum_mean: n and k must be >= 1");
  return pow2(k) + static_cast<double>(n - 1) * k / (1.0 - pow2(-k));
}

double cond_sum_variance(std::uint64_t n, int k) {
  if (n < 1 || k < 1) throw DomainError("cond_sum_variance: n and k must be >= 1");
  if (k > 1000) throw NumericError("cond_sum_variance: k too large for double range");
  Rational m1 = truncated_moment_exact(k, 1);
  Rational var = truncated_moment_exact(k, 2) - m1 * m1;
  return static_cast<double>(n - 1) * var.get_d();
}

std::string to_string(const Rational& q) { return q.get_str(); }

}  // namespace stp
