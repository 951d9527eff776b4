#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace stp {

using Rational = mpq_class;

// Raised when an argument violates a documented precondition.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation cannot meet its accuracy contract
// (overflow, quadrature non-convergence, infeasible cap).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProbValue {
  double value = 0.0;
  double err = 0.0;  // bound on |value - true value|
  std::optional<Rational> exact;

  static ProbValue from_exact(const Rational& q);
  static ProbValue approx(double value, double err);
};

struct InversionResult {
  double value = 0.0;
  double quad_err = 0.0;
};

struct StpParams {
  std::uint64_t n = 1;
  double gamma = 1.0;
  int j = 0;
  int k = 1;

  static StpParams from_games(std::uint64_t n);
  int typical_exponent() const;  // ceil(log2 n)
};

// ceil(log2 n) for n >= 1, computed on the integer bits.
int ceil_log2(std::uint64_t n);

// floor(log2 x) for finite x > 0, read from the binary exponent.
int floor_log2(double x);

// 2^{frac(log2 x)} = x / 2^{floor(log2 x)} in [1, 2), exact.
double dyadic_mantissa(double x);

double pow2(int e);
Rational pow2_rational(int e);

// Arithmetic mode selector: rationals whenever n*k <= 64.
bool exact_mode(std::uint64_t n, int k);

// Neumaier compensated accumulator.
class KahanSum {
 public:
  void add(double v);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

ProbValue stp_cdf(double x);
double gamma_of(std::uint64_t n);
ProbValue truncated_cdf(int k, double x);

struct MomentValue {
  double value = 0.0;
  bool overflow = false;
};
MomentValue truncated_moment(int k, int ell);
Rational truncated_moment_exact(int k, int ell);

double p_max(int j, double gamma);

ProbValue max_cdf_exact(std::uint64_t n, int k);
ProbValue q_max_exact(std::uint64_t n, int j);

double h_gamma_cdf(double gamma, double x);

// Arguments may be given in either order; they are sorted so k <= ell.
ProbValue two_fold_tail(int k, int ell);

double cond_sum_mean(std::uint64_t n, int k);
Rational cond_sum_mean_exact(std::uint64_t n, int k);

// Variance of S_n given X_n^* = 2^k: (n-1) Var X^{(k)}.
double cond_sum_variance(std::uint64_t n, int k);

std::string to_string(const Rational& q);

}  // namespace stp
