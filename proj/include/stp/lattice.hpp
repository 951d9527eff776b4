#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "stp/core.hpp"

namespace stp {

enum class Layout { dense, sparse };
enum class ConvMethod { automatic, iterate, fft };
enum class SumRoute { direct, by_maximum };

template <class P>
struct Atom {
  std::uint64_t value;
  P prob;
};

inline double to_double(double p) { return p; }
inline double to_double(const Rational& p) { return p.get_d(); }

// Law on the even non-negative integers. Dense storage keeps value = base + 2i;
// mass above the cap is lumped into overflow().
template <class P>
class LatticeLaw {
 public:
  LatticeLaw();  // point mass at 0

  static LatticeLaw point(std::uint64_t value, Layout layout = Layout::sparse);
  static LatticeLaw from_atoms(std::vector<Atom<P>> atoms, Layout layout,
                               std::optional<std::uint64_t> cap = std::nullopt, P overflow = P(0),
                               double err = 0.0);
  static LatticeLaw from_dense(std::uint64_t base, std::vector<P> probs,
                               std::optional<std::uint64_t> cap = std::nullopt, P overflow = P(0),
                               double err = 0.0);

  Layout layout() const { return layout_; }
  const std::optional<std::uint64_t>& cap() const { return cap_; }
  const P& overflow() const { return overflow_; }
  double err() const { return err_; }
  void add_err(double e) { err_ += e; }

  bool has_atoms() const;
  std::size_t atom_count() const;
  std::uint64_t min_value() const;
  std::uint64_t max_value() const;

  P prob(std::uint64_t value) const;
  P atom_mass() const;
  P cdf(std::uint64_t value) const;   // P{S <= value}
  P tail(std::uint64_t value) const;  // P{S > value}
  std::vector<Atom<P>> atoms() const;
  double mean_of_atoms() const;

  LatticeLaw shifted(std::uint64_t offset) const;
  LatticeLaw as_layout(Layout layout) const;
  LatticeLaw capped(std::uint64_t cap) const;

  std::uint64_t dense_base() const { return base_; }
  const std::vector<P>& dense_probs() const { return dense_; }
  const std::vector<Atom<P>>& sparse_atoms() const { return sparse_; }

 private:
  void trim();

  Layout layout_ = Layout::sparse;
  std::uint64_t base_ = 0;
  std::vector<P> dense_;
  std::vector<Atom<P>> sparse_;
  std::optional<std::uint64_t> cap_;
  P overflow_ = P(0);
  double err_ = 0.0;
};

// Sparse for few summands, dense otherwise.
Layout auto_layout(std::uint64_t summands);

template <class P>
LatticeLaw<P> truncated_atom_law(int k, Layout layout = Layout::sparse);

// Law of a single game with payouts above cap moved to overflow.
template <class P>
LatticeLaw<P> stp_atom_law(std::uint64_t cap, Layout layout = Layout::sparse);

template <class P>
LatticeLaw<P> convolve(const LatticeLaw<P>& a, const LatticeLaw<P>& b,
                       std::optional<std::uint64_t> cap = std::nullopt,
                       ConvMethod method = ConvMethod::automatic);

template <class P>
LatticeLaw<P> power_convolve(const LatticeLaw<P>& base, std::uint64_t m,
                             std::optional<std::uint64_t> cap = std::nullopt,
                             ConvMethod method = ConvMethod::automatic);

// Law of S_n given X_n^* = 2^k.
template <class P>
LatticeLaw<P> cond_sum_law(std::uint64_t n, int k, std::optional<std::uint64_t> cap = std::nullopt,
                           ConvMethod method = ConvMethod::automatic);

// Sub-probability law of S_n on the event X_n^* = 2^k, ties at the maximum included.
template <class P>
LatticeLaw<P> max_sum_law(std::uint64_t n, int k, std::optional<std::uint64_t> cap = std::nullopt);

template <class P>
LatticeLaw<P> sum_law(std::uint64_t n, std::uint64_t cap, SumRoute route = SumRoute::direct);

// P{S_n > y} for all y up to y_max from one truncated law.
class SumTailOracle {
 public:
  SumTailOracle(std::uint64_t n, double y_max);
  ProbValue tail(double y) const;
  std::uint64_t n() const { return n_; }
  double y_max() const { return y_max_; }
  // Reachable values of the truncated sum, ascending.
  std::vector<std::uint64_t> support() const;

 private:
  std::uint64_t n_;
  double y_max_;
  int K_ = 0;
  bool exact_ = false;
  std::vector<std::uint64_t> values_;
  std::vector<Rational> suffix_exact_;
  std::vector<double> suffix_;
  Rational weight_exact_;
  double weight_ = 1.0;
  double err_ = 0.0;
};

ProbValue sum_tail_exact(std::uint64_t n, double y);

template <class P>
void write_law_csv(std::ostream& out, const LatticeLaw<P>& law);

class ContinuousCdf {
 public:
  virtual ~ContinuousCdf() = default;
  virtual InversionResult cdf(double x) const = 0;
  // Certified bound on 1 - G(x); 1 when nothing better is known.
  virtual double upper_tail_bound(double) const { return 1.0; }
};

struct KsOptions {
  double max_overflow = 1e-4;
  double slack = 1e-4;
  std::size_t exhaustive_below = 4096;
  std::size_t initial_points = 96;
};

struct KsReport {
  double value = 0.0;      // largest gap found at evaluated atoms
  double upper = 0.0;      // certified bound including quadrature error and cap allowance
  double allowance = 0.0;  // bound on the gap beyond the cap
  double at = 0.0;
  double quad_err = 0.0;
  std::size_t evaluations = 0;
};

// sup_x |P{(S - shift)/scale <= x} - G(x)|.
template <class P>
KsReport ks_distance(const LatticeLaw<P>& law, double scale, double shift, const ContinuousCdf& G,
                     const KsOptions& options = {});

// Two-sample style sup |F_emp - F_law| over the lattice; samples above the cap count as overflow.
double ks_versus_sample(const LatticeLaw<double>& law, std::vector<std::uint64_t> samples,
                        double* allowance = nullptr);

}  // namespace stp
