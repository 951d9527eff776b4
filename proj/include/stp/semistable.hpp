#pragma once

#include <complex>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "stp/core.hpp"
#include "stp/lattice.hpp"

namespace stp {

enum class Compensator { bounded, full };

// printed: top atom mass doubled, as in the source's Levy function L_{j,gamma}.
// tie_corrected: the limit of S_n/n - log2 n given the maximum, where the number of
// games at the top level is Poisson(gamma 2^-j) conditioned to be >= 1.
enum class ConditionalForm { printed, tie_corrected };

struct LevyAtom {
  double location = 0.0;
  double mass = 0.0;
};

struct LevyAtomSeries {
  double drift = 0.0;
  std::vector<LevyAtom> atoms;  // increasing locations
  Compensator compensator = Compensator::full;
  bool conditional = true;
  int j = 0;
  double gamma = 1.0;
};

double s_gamma(double gamma);
double u_gamma(double gamma);

// Atoms 2^k/gamma for k_lo <= k <= j.
LevyAtomSeries levy_series_conditional(int j, double gamma, int k_lo);
// Atoms 2^k/gamma for k_lo <= k <= k_hi of the doubly infinite family.
LevyAtomSeries levy_series_unconditional(double gamma, int k_lo, int k_hi);

std::complex<double> charfn_W(double gamma, double t, double tol = 1e-12);
std::complex<double> charfn_Wj(int j, double gamma, double t, double tol = 1e-12,
                                ConditionalForm form = ConditionalForm::printed);

// Piecewise bound on Re log phi_{j,gamma}(t) as printed in the source:
// -2|t|/pi above pi*gamma*2^-j/2, -(16/pi^2) 2^j t^2 below.
double real_part_bound(int j, double gamma, double t);
// Bound that is actually certified for every gamma in [1/2, 1]:
// the quadratic branch constant is 12/(pi^2 gamma).
double real_part_bound_certified(int j, double gamma, double t);

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};
Moments moments_Wj(int j, double gamma);

// Mean and variance of the tie-corrected conditional limit.
Moments moments_Wj_tie_corrected(int j, double gamma);

// Certified tail bounds for W_{j,gamma} from its moment generating function.
double wj_lower_tail_bound(int j, double gamma, double x, ConditionalForm form = ConditionalForm::printed);
double wj_upper_tail_bound(int j, double gamma, double x, ConditionalForm form = ConditionalForm::printed);

InversionResult cdf_Wj(int j, double gamma, double x, double tol = 1e-8,
                       ConditionalForm form = ConditionalForm::printed);
InversionResult pdf_Wj(int j, double gamma, double x, double tol = 1e-8,
                       ConditionalForm form = ConditionalForm::printed);
InversionResult cdf_W_mixture(double gamma, double x, double tol = 1e-6,
                              ConditionalForm form = ConditionalForm::printed);
InversionResult cdf_W_direct(double gamma, double x, double tol = 1e-6);

struct QuadratureMoments {
  double mass = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double lo = 0.0, hi = 0.0;  // integration window
};
QuadratureMoments moments_Wj_quadrature(int j, double gamma, double tol = 1e-9,
                                        ConditionalForm form = ConditionalForm::printed);

// -R_gamma(x): Levy mass of atoms strictly above x > 0.
double levy_tail_mass(double gamma, double x);
std::pair<double, double> semistable_tail_functionals(double gamma);

struct MixtureRange {
  int j_min = 0;
  int j_max = 0;
  double outside_mass = 0.0;
};
MixtureRange mixture_range(double gamma, double tol);

namespace detail {
class FourierInverter;
}

// Reusable evaluators; inverters are built lazily per |x| tier and shared
// between calls, so repeated evaluation (KS scans, tables) is cheap.
class WjCdf : public ContinuousCdf {
 public:
  WjCdf(int j, double gamma, double tol = 1e-8, ConditionalForm form = ConditionalForm::printed);
  InversionResult cdf(double x) const override;
  InversionResult pdf(double x) const;
  double upper_tail_bound(double x) const override;

 private:
  std::shared_ptr<detail::FourierInverter> inverter(double x) const;
  int j_;
  double gamma_, tol_;
  ConditionalForm form_;
  mutable std::mutex mu_;
  mutable std::map<int, std::shared_ptr<detail::FourierInverter>> cache_;
};

class MixtureCdf : public ContinuousCdf {
 public:
  explicit MixtureCdf(double gamma, double tol = 1e-6, ConditionalForm form = ConditionalForm::printed);
  InversionResult cdf(double x) const override;
  double upper_tail_bound(double x) const override;
  const MixtureRange& range() const { return range_; }

 private:
  double gamma_, tol_;
  ConditionalForm form_;
  MixtureRange range_;
  std::vector<std::unique_ptr<WjCdf>> parts_;
};

class DirectCdf : public ContinuousCdf {
 public:
  explicit DirectCdf(double gamma, double tol = 1e-6);
  InversionResult cdf(double x) const override;

 private:
  struct Tier;
  std::shared_ptr<Tier> tier(double x) const;
  double gamma_, tol_;
  mutable std::mutex mu_;
  mutable std::map<int, std::shared_ptr<Tier>> cache_;
};

// CSV rows `x,value,quad_err`.
void write_inversion_csv(std::ostream& out, const std::vector<double>& xs,
                         const std::vector<InversionResult>& values);

}  // namespace stp
