#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "stp/core.hpp"
#include "stp/lattice.hpp"
#include "stp/semistable.hpp"

namespace stp {

struct ScanPoint {
  double x = 0.0;
  double statistic = 0.0;
};

struct ScanReport {
  std::vector<ScanPoint> points;  // ordered by x
  double sup_val = 0.0, inf_val = 0.0;
  double sup_at = 0.0, inf_at = 0.0;
  std::vector<std::pair<std::string, std::string>> meta;

  // Recomputes sup/inf from points; throws on an empty scan.
  void finalize();
};

// `# key=value` lines, then `x,statistic`.
void write_scan_csv(std::ostream& out, const ScanReport& report);

// (4 + x) ln(1 + x/4) - x
double h_fn(double x);
double eta(int j, double gamma);
double chernoff_bound(std::uint64_t n, int j, double x);
double cantelli_bound(std::uint64_t n, int j, double x);
double a_nj(std::uint64_t n, int j);
// 2^j/gamma + log2(2^j/gamma)
double mu1(int j, double gamma);

double normal_cdf(double x);

class NormalCdf : public ContinuousCdf {
 public:
  InversionResult cdf(double x) const override { return {normal_cdf(x), 0.0}; }
};

// Law of S_n given X_n^* = 2^k, ties at the maximum included, normalized.
// Mass above the cap is kept in overflow().
LatticeLaw<double> conditional_law(std::uint64_t n, int k, std::optional<std::uint64_t> cap = std::nullopt);

struct DistanceReport {
  double distance = 0.0;   // largest gap found
  double upper = 0.0;      // certified bound (quadrature error and cap allowance included)
  double allowance = 0.0;  // bound on the gap beyond the cap
  double at = 0.0;
};

// Standardized by 2^k + (n-1) E X^{(k)} and (n-1) Var X^{(k)}. The default law is
// 2^k + S_{n-1}^{(k)}, whose moments these are; ties = true uses conditional_law.
DistanceReport clt_distance(std::uint64_t n, int k, bool ties = false);

struct LargeMaxReport {
  double exact = 0.0;     // P{S_n > (1+eps) 2^k | X_n^* = 2^k}
  double centered = 0.0;  // P{|S_n/2^k - nk/2^k - 1| > eps | X_n^* = 2^k}
  double bound = 0.0;     // 8n/(eps^2 2^k)
  double err = 0.0;
};
LargeMaxReport largemax_check(std::uint64_t n, int k, double eps);

struct RemarkCenter {
  int k = 0;
  double centering = 0.0;  // n k / 2^k
  double oscillating = 0.0;  // 2^-j 2^{frac(log2 n + log2 log2 n)}
};
// k = floor(log2 n + log2 log2 n) + j; requires n >= 2.
RemarkCenter largemax_center(std::uint64_t n, int j);

// r(x) = P{S_n/n > x} x 2^-frac(log2(gamma_n x)) on one period with frac >= delta.
ScanReport tail_ratio_scan(std::uint64_t n, int m, double delta, int points);
// x P{S_n/n > x} over a whole period [2^m/gamma_n, 2^{m+1}/gamma_n).
ScanReport tail_period_scan(std::uint64_t n, int m, int points);

struct FinerSup {
  double sup_val = 0.0;
  double limit = 0.0;
  double sup_at = 0.0;
};
FinerSup finer_sup(std::uint64_t n, int m, double c);
double finer_limit(std::uint64_t n, double c);

double subexp_ratio(std::uint64_t n, double x);
// Ratio at every breakpoint of the two step functions in [2, x_max].
ScanReport subexp_scan(std::uint64_t n, double x_max);

double merge_distance_max(std::uint64_t n);

DistanceReport merge_distance_cond(std::uint64_t n, int j, double tol = 1e-7,
                                   ConditionalForm form = ConditionalForm::printed);
DistanceReport merge_distance_sum(std::uint64_t n, double tol = 1e-6,
                                  ConditionalForm form = ConditionalForm::printed);

double fig8_bound_curve(std::uint64_t n, double x, int j_lo, int j_hi);

// P{S_n/n - log2 n >= x} for each x, from one dense law.
std::vector<ProbValue> sum_tail_normalized(std::uint64_t n, const std::vector<double>& xs);

struct DominationReport {
  std::size_t checks = 0;
  std::size_t chernoff_violations = 0;
  std::size_t cantelli_violations = 0;
  double worst_chernoff_ratio = 0.0;  // max of exact tail / bound
  double worst_cantelli_ratio = 0.0;
  bool exact = false;
};
// Two-sided tails of (S_{n-1}^{(k)} - mean)/n with k = ceil(log2 n) + j on a
// grid of `points` values in [0, X], X where the Chernoff bound reaches 1e-6.
DominationReport bound_domination(std::uint64_t n, int j, int points = 50);

}  // namespace stp
