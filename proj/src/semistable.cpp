#include "stp/semistable.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <ostream>

#include "stp/quadrature.hpp"

namespace stp {

namespace {

using cd = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;
constexpr double kEps = 2.220446049250313e-16;
constexpr int kTaylorTerms = 14;
constexpr int kRenormEvery = 64;

void check_gamma(double gamma, const char* who) {
  if (!(gamma >= 0.5 && gamma <= 1.0)) throw DomainError(std::string(who) + ": gamma must lie in [1/2, 1]");
}

void check_tol(double tol, double floor, const char* who) {
  if (!(tol >= floor)) throw DomainError(std::string(who) + ": tolerance below supported floor");
}

double loc(int k, double gamma) { return std::ldexp(1.0, k) / gamma; }

// Sum over k <= k_hi of x_k^2 / (1 + x_k^2), x_k = 2^k / gamma.
double bounded_compensation_sum(double gamma, int k_hi) {
  KahanSum acc;
  for (int k = k_hi;; --k) {
    double x = loc(k, gamma);
    double term = x * x / (1.0 + x * x);
    acc.add(term);
    if (term < 1e-19) break;
  }
  return acc.value();
}

// Sum over k >= k_lo of 1 / (1 + x_k^2).
double upper_compensation_sum(double gamma, int k_lo) {
  KahanSum acc;
  for (int k = k_lo;; ++k) {
    double x = loc(k, gamma);
    double term = 1.0 / (1.0 + x * x);
    acc.add(term);
    if (term < 1e-19) break;
  }
  return acc.value();
}

// e^{y} - 1 for complex y, accurate for small |y|.
cd cexpm1(cd y) {
  if (std::abs(y) < 1e-4) return y * (1.0 + y / 2.0 + y * y / 6.0 + y * y * y / 24.0);
  return std::exp(y) - 1.0;
}

// log phi(t) = lin*it + sum_atoms m (e^{itx} - 1 - itx) + sum_{r>=2} coef_r (it)^r.
// The Taylor part folds every atom at or below tail_x.
struct Exponent {
  double lin = 0.0;
  std::vector<LevyAtom> atoms;
  double tail_x = 0.0;
  std::array<double, kTaylorTerms + 1> coef{};
  double x_top = 0.0;
  double spread = 0.0;  // sum of mass * location^2 over all atoms
  double explicit_mx = 0.0;
  // Optional factor E e^{itN zt_x}, N Poisson(zt_rate) conditioned to be >= 1.
  double zt_rate = 0.0, zt_x = 0.0;

  cd top_factor(double t) const {
    if (zt_rate == 0.0) return 1.0;
    cd y = zt_rate * std::polar(1.0, t * zt_x);
    return std::exp(-zt_rate) * cexpm1(y) / -std::expm1(-zt_rate);
  }

  cd phi(double t) const { return std::exp(log_phi(t)) * top_factor(t); }

  cd tail(double t) const {
    if (tail_x == 0.0) return 0.0;
    cd s(0.0, t);
    cd p = coef[kTaylorTerms];
    for (int r = kTaylorTerms - 1; r >= 2; --r) p = p * s + coef[r];
    return p * s * s;
  }

  cd log_phi(double t) const {
    cd acc(0.0, lin * t);
    for (const auto& a : atoms) {
      double th = t * a.location;
      double h = std::sin(0.5 * th);
      acc += a.mass * cd(-2.0 * h * h, std::sin(th) - th);
    }
    return acc + tail(t);
  }

  double re_bound(double t) const {
    double at = std::fabs(t);
    if (at >= kPi / (2.0 * x_top)) return -2.0 * at / kPi;
    return -(4.0 / (kPi * kPi)) * spread * t * t;
  }
};

void attach_tail(Exponent& e, double X) {
  e.tail_x = X;
  double fact = 1.0;
  for (int r = 1; r <= kTaylorTerms; ++r) {
    fact *= r;
    if (r < 2) continue;
    e.coef[r] = std::pow(X, r - 1) / (1.0 - std::ldexp(1.0, 1 - r)) / fact;
  }
}

// Lowest explicit index so that the folded atoms satisfy t_max * X <= 1/4.
int explicit_floor(double gamma, double t_max, int k_top) {
  int k = floor_log2(gamma / (4.0 * std::max(t_max, 1e-300))) + 1;
  return std::min(k, k_top);
}

Exponent conditional_exponent(int j, double gamma, double t_max) {
  Exponent e;
  e.x_top = loc(j, gamma);
  e.lin = e.x_top + std::log2(e.x_top);
  int kmin = explicit_floor(gamma, t_max, j);
  for (int k = kmin; k <= j; ++k) {
    double m = std::ldexp(gamma, -k) * (k == j ? 2.0 : 1.0);
    e.atoms.push_back({loc(k, gamma), m});
    e.explicit_mx += m * loc(k, gamma);
  }
  attach_tail(e, loc(kmin - 1, gamma));
  e.spread = 3.0 * e.x_top;
  return e;
}

// Levels below j as a compensated compound Poisson part, top level as a
// zero-truncated Poisson count; the drift follows from splitting the
// unconditional exponent on the event that the top occupied level is j.
Exponent tie_corrected_exponent(int j, double gamma, double t_max) {
  Exponent e;
  e.x_top = loc(j - 1, gamma);
  e.lin = s_gamma(gamma) + u_gamma(gamma) - upper_compensation_sum(gamma, j) + bounded_compensation_sum(gamma, j - 1);
  int kmin = explicit_floor(gamma, t_max, j - 1);
  for (int k = kmin; k <= j - 1; ++k) {
    e.atoms.push_back({loc(k, gamma), std::ldexp(gamma, -k)});
    e.explicit_mx += 1.0;
  }
  attach_tail(e, loc(kmin - 1, gamma));
  e.spread = 2.0 * e.x_top;
  e.zt_rate = std::ldexp(gamma, -j);
  e.zt_x = loc(j, gamma);
  return e;
}

Exponent wj_exponent(int j, double gamma, double t_max, ConditionalForm form) {
  return form == ConditionalForm::printed ? conditional_exponent(j, gamma, t_max) : tie_corrected_exponent(j, gamma, t_max);
}

// Unconditional exponent restricted to atoms k <= k_hi, compensator rewritten to the full form.
Exponent unconditional_exponent(double gamma, int k_hi, double t_max) {
  Exponent e;
  e.x_top = loc(k_hi, gamma);
  e.lin = s_gamma(gamma) + u_gamma(gamma) + bounded_compensation_sum(gamma, k_hi);
  int kmin = explicit_floor(gamma, t_max, k_hi);
  for (int k = kmin; k <= k_hi; ++k) {
    e.atoms.push_back({loc(k, gamma), std::ldexp(gamma, -k)});
    e.explicit_mx += 1.0;
  }
  attach_tail(e, loc(kmin - 1, gamma));
  e.spread = 2.0 * e.x_top;
  return e;
}

// Bound on (1/pi) * integral over [T, inf) of |phi|/t (cdf) or |phi| (pdf).
double truncation_bound(double T, double x_top, double spread, bool density) {
  double t_star = kPi / (2.0 * x_top);
  auto linear = [&](double a) {
    double e = std::exp(-2.0 * a / kPi);
    return density ? 0.5 * kPi * e : 0.5 * kPi / a * e;
  };
  double b;
  if (T >= t_star) {
    b = linear(T);
  } else {
    double c = 4.0 * spread / (kPi * kPi);
    double g = std::exp(-c * T * T);
    b = (density ? g / (2.0 * c * T) : g / (2.0 * c * T * T)) + linear(t_star);
  }
  return b / kPi;
}

double choose_T(double x_top, double spread, double tol) {
  double T = 1.0;
  while (std::max(truncation_bound(T, x_top, spread, false), truncation_bound(T, x_top, spread, true)) >= tol / 2.0) {
    T *= 1.05;
    if (T > 1e6) throw NumericError("inversion: no admissible truncation point");
  }
  return T;
}

}  // namespace

namespace detail {

class FourierInverter {
 public:
  FourierInverter(Exponent e, double T, double x_abs_max, double tol)
      : e_(std::move(e)), T_(T), xmax_(x_abs_max), tol_(tol) {
    double omega = xmax_ + std::fabs(e_.lin) + e_.x_top + e_.explicit_mx + e_.zt_x * (1.0 + e_.zt_rate) + 1.0;
    h0_ = std::min(kPi / (4.0 * omega), 0.5);
    trunc_cdf_ = truncation_bound(T_, e_.x_top, e_.spread, false);
    trunc_pdf_ = truncation_bound(T_, e_.x_top, e_.spread, true);
    level(1);
  }

  InversionResult cdf(double x) const { return evaluate(x, false); }
  InversionResult pdf(double x) const { return evaluate(x, true); }
  double x_abs_max() const { return xmax_; }

 private:
  struct Level {
    double h = 0.0;
    std::size_t panels = 0;
    std::vector<cd> psi;  // weight * phi(t) / t
    double abs_sum = 0.0;
  };

  static constexpr int kMaxLevel = 4;

  const Level& level(int i) const {
    std::lock_guard<std::mutex> lock(mu_);
    while (static_cast<int>(levels_.size()) <= i) levels_.push_back(build(2.0 * h0_ / std::ldexp(1.0, static_cast<int>(levels_.size()))));
    return levels_[i];
  }

  Level build(double h) const {
    const auto& gl = gauss_legendre16();
    Level L;
    L.h = h;
    L.panels = static_cast<std::size_t>(std::ceil(T_ / h));
    std::size_t N = 16 * L.panels;
    std::array<double, 16> a{}, w{};
    for (int q = 0; q < 16; ++q) {
      a[q] = 0.5 * h * (1.0 + gl.nodes[q]);
      w[q] = 0.5 * h * gl.weights[q];
    }
    std::vector<cd> z(N);
    for (std::size_t p = 0; p < L.panels; ++p) {
      for (int q = 0; q < 16; ++q) {
        double t = p * h + a[q];
        z[16 * p + q] = cd(0.0, e_.lin * t) + e_.tail(t);
      }
    }
    for (const auto& atom : e_.atoms) {
      double x = atom.location, m = atom.mass;
      cd R = std::polar(1.0, h * x);
      std::array<cd, 16> D;
      for (int q = 0; q < 16; ++q) D[q] = std::polar(1.0, a[q] * x);
      cd P(1.0, 0.0);
      for (std::size_t p = 0; p < L.panels; ++p) {
        if (p % kRenormEvery == 0) P = std::polar(1.0, static_cast<double>(p) * h * x);
        for (int q = 0; q < 16; ++q) {
          cd ph = P * D[q];
          double th = (p * h + a[q]) * x;
          z[16 * p + q] += m * cd(ph.real() - 1.0, ph.imag() - th);
        }
        P *= R;
      }
    }
    for (std::size_t p = 0; p < L.panels; ++p) {
      for (int q = 0; q < 16; ++q) {
        std::size_t i = 16 * p + q;
        double t = p * h + a[q];
        z[i] = w[q] * std::exp(z[i]) * e_.top_factor(t) / t;
        L.abs_sum += std::abs(z[i]) * std::max(1.0, t);
      }
    }
    L.psi = std::move(z);
    return L;
  }

  double integrate(const Level& L, double x, bool density) const {
    const auto& gl = gauss_legendre16();
    double h = L.h;
    std::array<cd, 16> C;
    std::array<double, 16> a{};
    for (int q = 0; q < 16; ++q) {
      a[q] = 0.5 * h * (1.0 + gl.nodes[q]);
      C[q] = std::polar(1.0, -a[q] * x);
    }
    cd R = std::polar(1.0, -h * x);
    cd E(1.0, 0.0);
    cd acc(0.0, 0.0);
    const cd* psi = L.psi.data();
    for (std::size_t p = 0; p < L.panels; ++p) {
      cd S(0.0, 0.0);
      if (!density) {
        for (int q = 0; q < 16; ++q) S += C[q] * psi[16 * p + q];
      } else {
        cd S2(0.0, 0.0);
        for (int q = 0; q < 16; ++q) {
          cd v = C[q] * psi[16 * p + q];
          S += v;
          S2 += v * a[q];
        }
        S = static_cast<double>(p) * h * S + S2;
      }
      acc += E * S;
      if ((p + 1) % kRenormEvery == 0) {
        E = std::polar(1.0, -static_cast<double>(p + 1) * h * x);
      } else {
        E *= R;
      }
    }
    return density ? acc.real() / kPi : 0.5 - acc.imag() / kPi;
  }

  InversionResult evaluate(double x, bool density) const {
    if (!(std::fabs(x) <= xmax_ * (1.0 + 1e-12))) throw DomainError("inversion: |x| beyond the prepared range");
    int i = 1;
    double prev = integrate(level(0), x, density);
    double cur = integrate(level(1), x, density);
    while (std::fabs(cur - prev) > tol_ / 10.0) {
      if (i == kMaxLevel) throw NumericError("inversion: quadrature refinement did not converge");
      ++i;
      prev = cur;
      cur = integrate(level(i), x, density);
    }
    const Level& L = level(i);
    double phase = 64.0 + std::fabs(e_.lin) * T_ + e_.explicit_mx * T_ + std::fabs(x) * L.h * kRenormEvery;
    double round = L.abs_sum / kPi * kEps * phase;
    double err = std::fabs(cur - prev) + (density ? trunc_pdf_ : trunc_cdf_) + round;
    return {cur, err};
  }

  Exponent e_;
  double T_, xmax_, tol_;
  double h0_ = 0.0, trunc_cdf_ = 0.0, trunc_pdf_ = 0.0;
  mutable std::mutex mu_;
  mutable std::deque<Level> levels_;
};

}  // namespace detail

namespace {

using detail::FourierInverter;

int tier_index(double x) {
  double ax = std::fabs(x);
  int e = 0;
  while (16.0 * std::ldexp(1.0, 2 * e) < ax) ++e;
  return e;
}

double tier_width(int e) { return 16.0 * std::ldexp(1.0, 2 * e); }

std::shared_ptr<FourierInverter> make_wj_inverter(int j, double gamma, double x_abs_max, double tol,
                                                  ConditionalForm form) {
  // |phi| of the tie-corrected form is bounded by the part below the top level
  double x_top = form == ConditionalForm::printed ? loc(j, gamma) : loc(j - 1, gamma);
  double spread = form == ConditionalForm::printed ? 3.0 * x_top : 2.0 * x_top;
  double T = choose_T(x_top, spread, tol);
  return std::make_shared<FourierInverter>(wj_exponent(j, gamma, T, form), T, x_abs_max, tol);
}

// sum_{k <= k_top} m_k (e^{lam x_k} - 1 - lam x_k) for lam > 0, bounded above;
// the top mass is multiplied by top_mult.
double mgf_exponent_upper(int k_top, double gamma, double lam, double top_mult) {
  double psi = 0.0;
  for (int k = k_top;; --k) {
    double xk = loc(k, gamma);
    double y = lam * xk;
    if (y < 1e-3) {
      psi += 0.5 * lam * lam * std::exp(y) * 2.0 * xk;
      break;
    }
    double m = std::ldexp(gamma, -k) * (k == k_top ? top_mult : 1.0);
    psi += m * (std::expm1(y) - y);
  }
  return psi;
}

}  // namespace

double s_gamma(double gamma) {
  check_gamma(gamma, "s_gamma");
  return -std::log2(gamma);
}

double u_gamma(double gamma) {
  check_gamma(gamma, "u_gamma");
  KahanSum acc;
  double g2 = gamma * gamma;
  for (int k = 1;; ++k) {
    double term = g2 / (g2 + std::ldexp(1.0, 2 * k));
    acc.add(term);
    if (term < 1e-17) break;
  }
  for (int k = 0;; ++k) {
    double term = 1.0 / (1.0 + g2 * std::ldexp(1.0, 2 * k));
    acc.add(-term);
    if (term < 1e-17) break;
  }
  return acc.value();
}

LevyAtomSeries levy_series_conditional(int j, double gamma, int k_lo) {
  check_gamma(gamma, "levy_series");
  LevyAtomSeries s;
  s.conditional = true;
  s.j = j;
  s.gamma = gamma;
  s.compensator = Compensator::full;
  s.drift = moments_Wj(j, gamma).mean;
  for (int k = k_lo; k <= j; ++k) s.atoms.push_back({loc(k, gamma), std::ldexp(gamma, -k) * (k == j ? 2.0 : 1.0)});
  return s;
}

LevyAtomSeries levy_series_unconditional(double gamma, int k_lo, int k_hi) {
  check_gamma(gamma, "levy_series");
  LevyAtomSeries s;
  s.conditional = false;
  s.gamma = gamma;
  s.compensator = Compensator::bounded;
  s.drift = s_gamma(gamma) + u_gamma(gamma);
  for (int k = k_lo; k <= k_hi; ++k) s.atoms.push_back({loc(k, gamma), std::ldexp(gamma, -k)});
  return s;
}

std::complex<double> charfn_W(double gamma, double t, double tol) {
  check_gamma(gamma, "charfn_W");
  if (!(tol > 0.0)) throw DomainError("charfn_W: tol must be positive");
  if (t == 0.0) return 1.0;
  double at = std::fabs(t);
  int kmax = 0;
  while (std::ldexp(gamma, -kmax) * 2.0 + at * gamma * gamma * std::ldexp(1.0, -2 * kmax) / 3.0 >= tol / 2.0) ++kmax;
  return std::exp(unconditional_exponent(gamma, kmax, at).log_phi(t));
}

std::complex<double> charfn_Wj(int j, double gamma, double t, double tol, ConditionalForm form) {
  check_gamma(gamma, "charfn_Wj");
  if (!(tol > 0.0)) throw DomainError("charfn_Wj: tol must be positive");
  if (t == 0.0) return 1.0;
  return wj_exponent(j, gamma, std::fabs(t), form).phi(t);
}

double real_part_bound(int j, double gamma, double t) {
  double at = std::fabs(t);
  if (at > kPi * gamma * std::ldexp(1.0, -j) / 2.0) return -2.0 * at / kPi;
  return -(16.0 / (kPi * kPi)) * std::ldexp(1.0, j) * t * t;
}

double real_part_bound_certified(int j, double gamma, double t) {
  double at = std::fabs(t);
  if (at > kPi * gamma * std::ldexp(1.0, -j) / 2.0) return -2.0 * at / kPi;
  return -(12.0 / (kPi * kPi * gamma)) * std::ldexp(1.0, j) * t * t;
}

Moments moments_Wj(int j, double gamma) {
  double x = loc(j, gamma);
  return {x + std::log2(x), 3.0 * x};
}

Moments moments_Wj_tie_corrected(int j, double gamma) {
  check_gamma(gamma, "moments_Wj_tie_corrected");
  double lam = std::ldexp(gamma, -j), x = loc(j, gamma);
  double keep = -std::expm1(-lam);
  double en = lam / keep, en2 = (lam + lam * lam) / keep;
  double lin = s_gamma(gamma) + u_gamma(gamma) - upper_compensation_sum(gamma, j) + bounded_compensation_sum(gamma, j - 1);
  return {lin + x * en, x + x * x * (en2 - en * en)};
}

double wj_lower_tail_bound(int j, double gamma, double x, ConditionalForm form) {
  double mean, var;
  if (form == ConditionalForm::printed) {
    Moments m = moments_Wj(j, gamma);
    mean = m.mean;
    var = m.variance;
  } else {
    // at least one game on the top level: W >= (part below the top) + x_j
    double xj = loc(j, gamma);
    mean = moments_Wj_tie_corrected(j, gamma).mean - xj * (std::ldexp(gamma, -j) / -std::expm1(-std::ldexp(gamma, -j)) - 1.0);
    var = xj;
  }
  if (x >= mean) return 1.0;
  double d = mean - x;
  return std::exp(-d * d / (2.0 * var));
}

double wj_upper_tail_bound(int j, double gamma, double x, ConditionalForm form) {
  bool printed = form == ConditionalForm::printed;
  Moments mom = printed ? moments_Wj(j, gamma) : moments_Wj_tie_corrected(j, gamma);
  if (x <= mom.mean) return 1.0;
  double x_top = loc(j, gamma);
  double rate = std::ldexp(gamma, -j);
  double lin = printed ? mom.mean : mom.mean - x_top * rate / -std::expm1(-rate);
  double best = 0.0;
  constexpr int kGrid = 240;
  double lo = std::log(1e-6 / x_top), hi = std::log(700.0 / x_top);
  for (int i = 0; i <= kGrid; ++i) {
    double lam = std::exp(lo + (hi - lo) * i / kGrid);
    double psi = lam * lin;
    if (printed) {
      psi += mgf_exponent_upper(j, gamma, lam, 2.0);
    } else {
      psi += mgf_exponent_upper(j - 1, gamma, lam, 1.0);
      double y = rate * std::exp(lam * x_top);
      if (!std::isfinite(y) || y > 1e300) break;
      double log_em1 = y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
      psi += -rate + log_em1 - std::log(-std::expm1(-rate));
    }
    best = std::min(best, psi - lam * x);
  }
  return std::min(1.0, std::exp(best) * (1.0 + 1e-9));
}

WjCdf::WjCdf(int j, double gamma, double tol, ConditionalForm form) : j_(j), gamma_(gamma), tol_(tol), form_(form) {
  check_gamma(gamma, "WjCdf");
  check_tol(tol, 1e-10, "WjCdf");
}

std::shared_ptr<FourierInverter> WjCdf::inverter(double x) const {
  int e = tier_index(x);
  std::lock_guard<std::mutex> lock(mu_);
  auto& slot = cache_[e];
  if (!slot) slot = make_wj_inverter(j_, gamma_, tier_width(e), tol_, form_);
  return slot;
}

InversionResult WjCdf::cdf(double x) const {
  double lb = wj_lower_tail_bound(j_, gamma_, x, form_);
  if (lb <= tol_ / 2.0) return {lb / 2.0, lb / 2.0};
  double ub = wj_upper_tail_bound(j_, gamma_, x, form_);
  if (ub <= tol_ / 2.0) return {1.0 - ub / 2.0, ub / 2.0};
  return inverter(x)->cdf(x);
}

InversionResult WjCdf::pdf(double x) const { return inverter(x)->pdf(x); }

double WjCdf::upper_tail_bound(double x) const { return wj_upper_tail_bound(j_, gamma_, x, form_); }

InversionResult cdf_Wj(int j, double gamma, double x, double tol, ConditionalForm form) {
  check_gamma(gamma, "cdf_Wj");
  check_tol(tol, 1e-8, "cdf_Wj");
  double lb = wj_lower_tail_bound(j, gamma, x, form);
  if (lb <= tol / 2.0) return {lb / 2.0, lb / 2.0};
  double ub = wj_upper_tail_bound(j, gamma, x, form);
  if (ub <= tol / 2.0) return {1.0 - ub / 2.0, ub / 2.0};
  return make_wj_inverter(j, gamma, std::fabs(x) + 1.0, tol, form)->cdf(x);
}

InversionResult pdf_Wj(int j, double gamma, double x, double tol, ConditionalForm form) {
  check_gamma(gamma, "pdf_Wj");
  check_tol(tol, 1e-8, "pdf_Wj");
  return make_wj_inverter(j, gamma, std::fabs(x) + 1.0, tol, form)->pdf(x);
}

QuadratureMoments moments_Wj_quadrature(int j, double gamma, double tol, ConditionalForm form) {
  WjCdf G(j, gamma, tol, form);
  Moments m = form == ConditionalForm::printed ? moments_Wj(j, gamma) : moments_Wj_tie_corrected(j, gamma);
  double sd = std::sqrt(m.variance);
  QuadratureMoments r;
  r.lo = m.mean - 8.0 * sd;
  while (wj_lower_tail_bound(j, gamma, r.lo, form) > 1e-14) r.lo -= sd;
  r.hi = m.mean + sd;
  while (wj_upper_tail_bound(j, gamma, r.hi, form) > 1e-13) r.hi += sd;
  const auto& gl = gauss_legendre16();
  double width = sd / 8.0;
  auto panels = static_cast<std::size_t>(std::ceil((r.hi - r.lo) / width));
  width = (r.hi - r.lo) / static_cast<double>(panels);
  KahanSum mass, first, second;
  for (std::size_t p = 0; p < panels; ++p) {
    double a = r.lo + p * width;
    for (int q = 0; q < 16; ++q) {
      double x = a + 0.5 * width * (1.0 + gl.nodes[q]);
      double w = 0.5 * width * gl.weights[q] * G.pdf(x).value;
      double d = x - m.mean;
      mass.add(w);
      first.add(w * d);
      second.add(w * d * d);
    }
  }
  r.mass = mass.value();
  double c1 = first.value() / r.mass;
  r.mean = m.mean + c1;
  r.variance = second.value() / r.mass - c1 * c1;
  return r;
}

MixtureRange mixture_range(double gamma, double tol) {
  check_gamma(gamma, "mixture_range");
  MixtureRange r;
  r.j_min = floor_log2(gamma / std::log(8.0 / tol)) - 1;
  r.j_max = static_cast<int>(std::ceil(std::log2(4.0 * gamma / tol)));
  KahanSum out;
  for (int j = r.j_min - 1; j > r.j_min - 200; --j) {
    double p = p_max(j, gamma);
    out.add(p);
    if (p < 1e-300) break;
  }
  out.add(std::ldexp(gamma, -r.j_max));
  r.outside_mass = out.value();
  return r;
}

MixtureCdf::MixtureCdf(double gamma, double tol, ConditionalForm form) : gamma_(gamma), tol_(tol), form_(form) {
  check_gamma(gamma, "MixtureCdf");
  check_tol(tol, 1e-8, "MixtureCdf");
  range_ = mixture_range(gamma, tol);
  int count = range_.j_max - range_.j_min + 1;
  for (int j = range_.j_min; j <= range_.j_max; ++j) parts_.push_back(std::make_unique<WjCdf>(j, gamma, tol / (2.0 * count), form));
}

InversionResult MixtureCdf::cdf(double x) const {
  KahanSum value;
  double err = range_.outside_mass / 2.0;
  value.add(range_.outside_mass / 2.0);
  for (int j = range_.j_min; j <= range_.j_max; ++j) {
    double p = p_max(j, gamma_);
    InversionResult r = parts_[j - range_.j_min]->cdf(x);
    value.add(p * r.value);
    err += p * r.quad_err;
  }
  return {value.value(), err};
}

double MixtureCdf::upper_tail_bound(double x) const {
  double acc = range_.outside_mass;
  for (int j = range_.j_min; j <= range_.j_max; ++j) acc += p_max(j, gamma_) * wj_upper_tail_bound(j, gamma_, x, form_);
  return std::min(1.0, acc);
}

InversionResult cdf_W_mixture(double gamma, double x, double tol, ConditionalForm form) {
  check_tol(tol, 1e-6, "cdf_W_mixture");
  return MixtureCdf(gamma, tol, form).cdf(x);
}

// W = W_s + J - c_b: W_s carries the atoms k <= k0, J is the compound Poisson
// sum of the larger atoms (rate Lambda), c_b their bounded compensator.
struct DirectCdf::Tier {
  double c_b = 0.0, lambda = 0.0, x_next = 0.0;
  double mean_s = 0.0, var_s = 0.0;
  std::shared_ptr<FourierInverter> inverter;

  double left_bound(double y) const {
    if (y >= mean_s) return 1.0;
    double d = mean_s - y;
    return std::exp(-d * d / (2.0 * var_s));
  }
};

DirectCdf::DirectCdf(double gamma, double tol) : gamma_(gamma), tol_(tol) {
  check_gamma(gamma, "DirectCdf");
  check_tol(tol, 1e-8, "DirectCdf");
}

std::shared_ptr<DirectCdf::Tier> DirectCdf::tier(double x) const {
  int e = tier_index(x);
  std::lock_guard<std::mutex> lock(mu_);
  auto& slot = cache_[e];
  if (slot) return slot;
  double X = tier_width(e);
  int k0 = 0;
  while (loc(k0 + 1, gamma_) < 4.0 * (X + 32.0)) ++k0;
  auto t = std::make_shared<Tier>();
  t->c_b = upper_compensation_sum(gamma_, k0 + 1);
  t->lambda = std::ldexp(gamma_, -k0);
  t->x_next = loc(k0 + 1, gamma_);
  double x_top = loc(k0, gamma_);
  double T = choose_T(x_top, 2.0 * x_top, tol_ / 2.0);
  Exponent ex = unconditional_exponent(gamma_, k0, T);
  t->mean_s = ex.lin;
  t->var_s = ex.spread;
  t->inverter = std::make_shared<FourierInverter>(std::move(ex), T, X + t->c_b + 1.0, tol_ / 2.0);
  slot = t;
  return t;
}

InversionResult DirectCdf::cdf(double x) const {
  auto base = tier(0.0);
  double lb = base->left_bound(x + base->c_b);
  if (lb <= tol_ / 2.0) return {lb / 2.0, lb / 2.0};
  auto t = tier(x);
  double y = x + t->c_b;
  InversionResult s = t->inverter->cdf(y);
  double keep = std::exp(-t->lambda);
  double delta = -std::expm1(-t->lambda) * t->left_bound(y - t->x_next);
  return {keep * s.value + delta / 2.0, keep * s.quad_err + delta / 2.0};
}

InversionResult cdf_W_direct(double gamma, double x, double tol) {
  check_tol(tol, 1e-6, "cdf_W_direct");
  return DirectCdf(gamma, tol).cdf(x);
}

double levy_tail_mass(double gamma, double x) {
  check_gamma(gamma, "levy_tail_mass");
  if (!(x > 0.0)) throw DomainError("levy_tail_mass: x must be positive");
  return std::ldexp(gamma, -floor_log2(gamma * x));
}

std::pair<double, double> semistable_tail_functionals(double gamma) {
  check_gamma(gamma, "semistable_tail_functionals");
  // In u = gamma x the functional x(-R(x)) reads u 2^{-floor(log2 u)}, with period [1, 2).
  double inf_val = 1.0 * pow2(-floor_log2(1.0));
  double sup_val = 2.0 * pow2(-floor_log2(std::nextafter(2.0, 0.0)));
  return {inf_val, sup_val};
}

void write_inversion_csv(std::ostream& out, const std::vector<double>& xs, const std::vector<InversionResult>& values) {
  if (xs.size() != values.size()) throw DomainError("write_inversion_csv: size mismatch");
  out << "x,value,quad_err\n";
  char buf[96];
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", xs[i], values[i].value, values[i].quad_err);
    out << buf;
  }
}

}  // namespace stp
