#include "stp/lattice.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <numeric>

namespace stp {

namespace {

constexpr double kEps = DBL_EPSILON;

bool is_zero(double p) { return p == 0.0; }
bool is_zero(const Rational& p) { return sgn(p) == 0; }

template <class P>
struct Accumulator;

template <>
struct Accumulator<double> {
  KahanSum sum;
  void add(double v) { sum.add(v); }
  double value() const { return sum.value(); }
};

template <>
struct Accumulator<Rational> {
  Rational sum = 0;
  void add(const Rational& v) { sum += v; }
  Rational value() const { return sum; }
};

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
  std::uint64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw NumericError("lattice value exceeds 64-bit range; supply a cap");
  return r;
}

Rational rational_power(const Rational& base, std::uint64_t e) {
  mpz_class num, den;
  mpz_pow_ui(num.get_mpz_t(), base.get_num_mpz_t(), e);
  mpz_pow_ui(den.get_mpz_t(), base.get_den_mpz_t(), e);
  Rational r(num, den);
  r.canonicalize();
  return r;
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

// Full linear convolution; *err receives a bound on the summed absolute error.
std::vector<double> fft_convolve(const std::vector<double>& a, const std::vector<double>& b, double* err) {
  std::size_t L = a.size() + b.size() - 1;
  std::size_t N = 1;
  while (N < L) N <<= 1;
  std::size_t H = N / 2 + 1;
  double* buf = fftw_alloc_real(N);
  fftw_complex* fa = fftw_alloc_complex(H);
  fftw_complex* fb = fftw_alloc_complex(H);
  fftw_plan fwd_a, fwd_b, inv;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fwd_a = fftw_plan_dft_r2c_1d(static_cast<int>(N), buf, fa, FFTW_ESTIMATE);
    fwd_b = fftw_plan_dft_r2c_1d(static_cast<int>(N), buf, fb, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(N), fa, buf, FFTW_ESTIMATE);
  }
  std::fill(buf, buf + N, 0.0);
  std::copy(a.begin(), a.end(), buf);
  fftw_execute(fwd_a);
  std::fill(buf, buf + N, 0.0);
  std::copy(b.begin(), b.end(), buf);
  fftw_execute(fwd_b);
  for (std::size_t i = 0; i < H; ++i) {
    double re = fa[i][0] * fb[i][0] - fa[i][1] * fb[i][1];
    double im = fa[i][0] * fb[i][1] + fa[i][1] * fb[i][0];
    fa[i][0] = re;
    fa[i][1] = im;
  }
  fftw_execute(inv);
  std::vector<double> out(L);
  double scale = 1.0 / static_cast<double>(N);
  double clipped = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    double v = buf[i] * scale;
    if (v < 0.0) {
      clipped += -v;
      v = 0.0;
    }
    out[i] = v;
  }
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_a);
    fftw_destroy_plan(fwd_b);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(fa);
  fftw_free(fb);
  double na = std::sqrt(std::inner_product(a.begin(), a.end(), a.begin(), 0.0));
  double nb = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
  double lg = std::log2(static_cast<double>(N));
  *err = 5.0 * kEps * lg * std::sqrt(static_cast<double>(N)) * na * nb * std::sqrt(static_cast<double>(L)) + clipped;
  return out;
}

template <class P>
std::vector<P> dense_of(const LatticeLaw<P>& law) {
  if (law.layout() == Layout::dense) return law.dense_probs();
  return law.as_layout(Layout::dense).dense_probs();
}

}  // namespace

Layout auto_layout(std::uint64_t summands) { return summands <= 8 ? Layout::sparse : Layout::dense; }

template <class P>
LatticeLaw<P>::LatticeLaw() {
  sparse_.push_back({0, P(1)});
}

template <class P>
LatticeLaw<P> LatticeLaw<P>::point(std::uint64_t value, Layout layout) {
  return from_atoms({{value, P(1)}}, layout);
}

template <class P>
LatticeLaw<P> LatticeLaw<P>::from_atoms(std::vector<Atom<P>> atoms, Layout layout,
                                        std::optional<std::uint64_t> cap, P overflow, double err) {
  std::sort(atoms.begin(), atoms.end(), [](const Atom<P>& x, const Atom<P>& y) { return x.value < y.value; });
  LatticeLaw law;
  law.sparse_.clear();
  law.layout_ = Layout::sparse;
  law.cap_ = cap;
  law.overflow_ = overflow;
  law.err_ = err;
  for (auto& a : atoms) {
    if (a.value % 2 != 0) throw DomainError("lattice atoms must be even integers");
    if (cap && a.value > *cap) {
      law.overflow_ += a.prob;
      continue;
    }
    if (!law.sparse_.empty() && law.sparse_.back().value == a.value) {
      law.sparse_.back().prob += a.prob;
    } else {
      law.sparse_.push_back(a);
    }
  }
  law.trim();
  return layout == Layout::dense ? law.as_layout(Layout::dense) : law;
}

template <class P>
LatticeLaw<P> LatticeLaw<P>::from_dense(std::uint64_t base, std::vector<P> probs, std::optional<std::uint64_t> cap,
                                        P overflow, double err) {
  if (base % 2 != 0) throw DomainError("lattice base must be even");
  LatticeLaw law;
  law.sparse_.clear();
  law.layout_ = Layout::dense;
  law.base_ = base;
  law.dense_ = std::move(probs);
  law.cap_ = cap;
  law.overflow_ = overflow;
  law.err_ = err;
  if (cap && !law.dense_.empty()) {
    std::size_t keep = *cap < base ? 0 : std::min<std::size_t>(law.dense_.size(), (*cap - base) / 2 + 1);
    for (std::size_t i = keep; i < law.dense_.size(); ++i) law.overflow_ += law.dense_[i];
    law.dense_.resize(keep);
  }
  law.trim();
  return law;
}

template <class P>
void LatticeLaw<P>::trim() {
  if (layout_ == Layout::sparse) {
    sparse_.erase(std::remove_if(sparse_.begin(), sparse_.end(), [](const Atom<P>& a) { return is_zero(a.prob); }),
                  sparse_.end());
    return;
  }
  std::size_t lead = 0;
  while (lead < dense_.size() && is_zero(dense_[lead])) ++lead;
  if (lead == dense_.size()) {
    dense_.clear();
    base_ = 0;
    return;
  }
  std::size_t last = dense_.size();
  while (is_zero(dense_[last - 1])) --last;
  if (lead > 0 || last < dense_.size()) {
    dense_ = std::vector<P>(dense_.begin() + static_cast<std::ptrdiff_t>(lead),
                            dense_.begin() + static_cast<std::ptrdiff_t>(last));
    base_ += 2 * lead;
  }
}

template <class P>
bool LatticeLaw<P>::has_atoms() const {
  return layout_ == Layout::dense ? !dense_.empty() : !sparse_.empty();
}

template <class P>
std::size_t LatticeLaw<P>::atom_count() const {
  if (layout_ == Layout::sparse) return sparse_.size();
  return static_cast<std::size_t>(std::count_if(dense_.begin(), dense_.end(), [](const P& p) { return !is_zero(p); }));
}

template <class P>
std::uint64_t LatticeLaw<P>::min_value() const {
  if (!has_atoms()) throw DomainError("law has no atoms below its cap");
  return layout_ == Layout::dense ? base_ : sparse_.front().value;
}

template <class P>
std::uint64_t LatticeLaw<P>::max_value() const {
  if (!has_atoms()) throw DomainError("law has no atoms below its cap");
  return layout_ == Layout::dense ? base_ + 2 * (dense_.size() - 1) : sparse_.back().value;
}

template <class P>
P LatticeLaw<P>::prob(std::uint64_t value) const {
  if (layout_ == Layout::dense) {
    if (dense_.empty() || value < base_ || (value - base_) % 2 != 0) return P(0);
    std::size_t i = (value - base_) / 2;
    return i < dense_.size() ? dense_[i] : P(0);
  }
  auto it = std::lower_bound(sparse_.begin(), sparse_.end(), value,
                             [](const Atom<P>& a, std::uint64_t v) { return a.value < v; });
  return it != sparse_.end() && it->value == value ? it->prob : P(0);
}

template <class P>
P LatticeLaw<P>::atom_mass() const {
  Accumulator<P> acc;
  if (layout_ == Layout::dense) {
    for (const auto& p : dense_) acc.add(p);
  } else {
    for (const auto& a : sparse_) acc.add(a.prob);
  }
  return acc.value();
}

template <class P>
P LatticeLaw<P>::cdf(std::uint64_t value) const {
  if (cap_ && value > *cap_) throw DomainError("cdf queried above the cap");
  Accumulator<P> acc;
  if (layout_ == Layout::dense) {
    for (std::size_t i = 0; i < dense_.size() && base_ + 2 * i <= value; ++i) acc.add(dense_[i]);
  } else {
    for (const auto& a : sparse_) {
      if (a.value > value) break;
      acc.add(a.prob);
    }
  }
  return acc.value();
}

template <class P>
P LatticeLaw<P>::tail(std::uint64_t value) const {
  if (cap_ && value > *cap_) throw DomainError("tail queried above the cap");
  Accumulator<P> acc;
  acc.add(overflow_);
  if (layout_ == Layout::dense) {
    for (std::size_t i = dense_.size(); i-- > 0 && base_ + 2 * i > value;) acc.add(dense_[i]);
  } else {
    for (auto it = sparse_.rbegin(); it != sparse_.rend() && it->value > value; ++it) acc.add(it->prob);
  }
  return acc.value();
}

template <class P>
std::vector<Atom<P>> LatticeLaw<P>::atoms() const {
  if (layout_ == Layout::sparse) return sparse_;
  std::vector<Atom<P>> out;
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    if (!is_zero(dense_[i])) out.push_back({base_ + 2 * i, dense_[i]});
  }
  return out;
}

template <class P>
double LatticeLaw<P>::mean_of_atoms() const {
  KahanSum acc;
  if (layout_ == Layout::dense) {
    for (std::size_t i = 0; i < dense_.size(); ++i) {
      acc.add(static_cast<double>(base_ + 2 * i) * to_double(dense_[i]));
    }
  } else {
    for (const auto& a : sparse_) acc.add(static_cast<double>(a.value) * to_double(a.prob));
  }
  return acc.value();
}

template <class P>
LatticeLaw<P> LatticeLaw<P>::shifted(std::uint64_t offset) const {
  if (offset % 2 != 0) throw DomainError("shift must be even");
  LatticeLaw law = *this;
  if (law.cap_) law.cap_ = checked_add(*law.cap_, offset);
  if (layout_ == Layout::dense) {
    if (!law.dense_.empty()) law.base_ = checked_add(law.base_, offset);
  } else {
    for (auto& a : law.sparse_) a.value = checked_add(a.value, offset);
  }
  return law;
}

template <class P>
LatticeLaw<P> LatticeLaw<P>::as_layout(Layout layout) const {
  if (layout == layout_) return *this;
  LatticeLaw law;
  law.sparse_.clear();
  law.layout_ = layout;
  law.cap_ = cap_;
  law.overflow_ = overflow_;
  law.err_ = err_;
  if (layout == Layout::sparse) {
    law.sparse_ = atoms();
    return law;
  }
  if (!sparse_.empty()) {
    law.base_ = sparse_.front().value;
    law.dense_.assign((sparse_.back().value - law.base_) / 2 + 1, P(0));
    for (const auto& a : sparse_) law.dense_[(a.value - law.base_) / 2] = a.prob;
  }
  return law;
}

template <class P>
LatticeLaw<P> LatticeLaw<P>::capped(std::uint64_t cap) const {
  if (cap_ && *cap_ <= cap) return *this;
  LatticeLaw law = *this;
  law.cap_ = cap;
  if (!has_atoms() || max_value() <= cap) return law;
  if (layout_ == Layout::dense) {
    std::size_t keep = cap < base_ ? 0 : (cap - base_) / 2 + 1;
    Accumulator<P> acc;
    acc.add(law.overflow_);
    for (std::size_t i = keep; i < law.dense_.size(); ++i) acc.add(law.dense_[i]);
    law.overflow_ = acc.value();
    law.dense_.resize(keep);
  } else {
    Accumulator<P> acc;
    acc.add(law.overflow_);
    while (!law.sparse_.empty() && law.sparse_.back().value > cap) {
      acc.add(law.sparse_.back().prob);
      law.sparse_.pop_back();
    }
    law.overflow_ = acc.value();
  }
  law.trim();
  return law;
}

template <class P>
LatticeLaw<P> truncated_atom_law(int k, Layout layout) {
  if (k < 1 || k > 62) throw DomainError("truncated_atom_law: k must lie in [1, 62]");
  std::vector<Atom<P>> atoms;
  double err = 0.0;
  for (int i = 1; i <= k; ++i) {
    if constexpr (std::is_same_v<P, Rational>) {
      atoms.push_back({std::uint64_t{1} << i, pow2_rational(k - i) / (pow2_rational(k) - 1)});
    } else {
      atoms.push_back({std::uint64_t{1} << i, pow2(k - i) / (pow2(k) - 1.0)});
      err += kEps;
    }
  }
  return LatticeLaw<P>::from_atoms(std::move(atoms), layout, std::nullopt, P(0), err);
}

template <class P>
LatticeLaw<P> stp_atom_law(std::uint64_t cap, Layout layout) {
  if (cap < 2) throw DomainError("stp_atom_law: cap must be >= 2");
  int m = 63 - std::countl_zero(cap);
  m = std::min(m, 62);
  std::vector<Atom<P>> atoms;
  for (int i = 1; i <= m; ++i) {
    if constexpr (std::is_same_v<P, Rational>) {
      atoms.push_back({std::uint64_t{1} << i, pow2_rational(-i)});
    } else {
      atoms.push_back({std::uint64_t{1} << i, pow2(-i)});
    }
  }
  P overflow;
  if constexpr (std::is_same_v<P, Rational>) {
    overflow = pow2_rational(-m);
  } else {
    overflow = pow2(-m);
  }
  return LatticeLaw<P>::from_atoms(std::move(atoms), layout, cap, overflow, 0.0);
}

template <class P>
LatticeLaw<P> convolve(const LatticeLaw<P>& a, const LatticeLaw<P>& b, std::optional<std::uint64_t> cap,
                       ConvMethod method) {
  std::optional<std::uint64_t> c = cap;
  auto tighten = [&](std::uint64_t v) { c = c ? std::min(*c, v) : v; };
  if (a.cap() && b.has_atoms()) tighten(checked_add(*a.cap(), b.min_value()));
  if (b.cap() && a.has_atoms()) tighten(checked_add(*b.cap(), a.min_value()));

  P mass_a = a.atom_mass();
  P mass_b = b.atom_mass();
  P overflow = a.overflow() + mass_a * b.overflow();
  double err = a.err() + b.err();
  Layout out_layout =
      a.layout() == Layout::sparse && b.layout() == Layout::sparse ? Layout::sparse : Layout::dense;

  if (!a.has_atoms() || !b.has_atoms() || (c && *c < a.min_value() + b.min_value())) {
    overflow += mass_a * mass_b;
    return LatticeLaw<P>::from_atoms({}, out_layout, c, overflow, err);
  }

  std::uint64_t lo = a.min_value() + b.min_value();
  std::uint64_t hi = c ? std::min(*c, a.max_value() + b.max_value()) : checked_add(a.max_value(), b.max_value());

  if (out_layout == Layout::sparse) {
    std::map<std::uint64_t, P> acc;
    Accumulator<P> spill;
    for (const auto& x : a.sparse_atoms()) {
      for (const auto& y : b.sparse_atoms()) {
        std::uint64_t v = x.value + y.value;
        P p = x.prob * y.prob;
        if (v > hi) {
          spill.add(p);
        } else {
          acc[v] += p;
        }
      }
    }
    overflow += spill.value();
    std::vector<Atom<P>> atoms;
    atoms.reserve(acc.size());
    for (auto& [v, p] : acc) atoms.push_back({v, p});
    if constexpr (std::is_same_v<P, double>) err += 2.0 * kEps * static_cast<double>(a.atom_count());
    return LatticeLaw<P>::from_atoms(std::move(atoms), Layout::sparse, c, overflow, err);
  }

  std::size_t len = static_cast<std::size_t>((hi - lo) / 2 + 1);
  bool a_small = a.atom_count() <= b.atom_count();
  const LatticeLaw<P>& s = a_small ? a : b;
  const LatticeLaw<P>& g = a_small ? b : a;
  std::vector<P> gd = dense_of(g);
  std::uint64_t gbase = g.min_value();

  bool use_fft = false;
  if constexpr (std::is_same_v<P, double>) {
    if (method == ConvMethod::fft && s.layout() == Layout::dense) {
      use_fft = true;
    } else if (method == ConvMethod::automatic && s.atom_count() > 64) {
      std::vector<double>::size_type sl = (s.max_value() - s.min_value()) / 2 + 1;
      double N = std::exp2(std::ceil(std::log2(static_cast<double>(sl + gd.size()))));
      double cost_fft = 12.0 * N * std::log2(N);
      double cost_iter = static_cast<double>(s.atom_count()) * static_cast<double>(std::min(gd.size(), len));
      use_fft = cost_fft < cost_iter;
    }
  }

  Accumulator<P> spill;
  std::vector<P> out(len, P(0));
  if constexpr (std::is_same_v<P, double>) {
    if (use_fft) {
      std::vector<double> sd = dense_of(s);
      double fft_err = 0.0;
      std::vector<double> full = fft_convolve(sd, gd, &fft_err);
      std::size_t keep = std::min(len, full.size());
      std::copy(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(keep), out.begin());
      for (std::size_t i = keep; i < full.size(); ++i) spill.add(full[i]);
      err += fft_err;
      overflow += spill.value();
      return LatticeLaw<P>::from_dense(lo, std::move(out), c, overflow, err);
    }
  }

  // suffix[i] = mass of g at indices >= i
  std::vector<P> suffix(gd.size() + 1, P(0));
  for (std::size_t i = gd.size(); i-- > 0;) suffix[i] = suffix[i + 1] + gd[i];
  std::size_t terms = 0;
  auto add_atom = [&](std::uint64_t v, const P& p) {
    std::size_t off = static_cast<std::size_t>((v + gbase - lo) / 2);
    if (off >= len) {
      spill.add(p * suffix[0]);
      return;
    }
    std::size_t cnt = std::min(gd.size(), len - off);
    P* dst = out.data() + off;
    const P* src = gd.data();
    for (std::size_t i = 0; i < cnt; ++i) dst[i] += p * src[i];
    if (cnt < gd.size()) spill.add(p * suffix[cnt]);
    ++terms;
  };
  if (s.layout() == Layout::dense) {
    const auto& sd = s.dense_probs();
    for (std::size_t i = 0; i < sd.size(); ++i) {
      if (!is_zero(sd[i])) add_atom(s.dense_base() + 2 * i, sd[i]);
    }
  } else {
    for (const auto& x : s.sparse_atoms()) add_atom(x.value, x.prob);
  }
  if constexpr (std::is_same_v<P, double>) err += 2.0 * kEps * static_cast<double>(terms + 1);
  overflow += spill.value();
  return LatticeLaw<P>::from_dense(lo, std::move(out), c, overflow, err);
}

template <class P>
LatticeLaw<P> power_convolve(const LatticeLaw<P>& base, std::uint64_t m, std::optional<std::uint64_t> cap,
                             ConvMethod method) {
  if (m == 0) return LatticeLaw<P>::point(0, base.layout());
  LatticeLaw<P> p = cap ? base.capped(*cap) : base;
  if (method == ConvMethod::iterate) {
    LatticeLaw<P> result = p;
    for (std::uint64_t i = 1; i < m; ++i) result = convolve(result, p, cap, ConvMethod::iterate);
    return result;
  }
  std::optional<LatticeLaw<P>> result;
  while (true) {
    if (m & 1) result = result ? convolve(*result, p, cap, method) : p;
    m >>= 1;
    if (m == 0) break;
    p = convolve(p, p, cap, method);
  }
  return *result;
}

template <class P>
LatticeLaw<P> cond_sum_law(std::uint64_t n, int k, std::optional<std::uint64_t> cap, ConvMethod method) {
  if (n < 1 || k < 1) throw DomainError("cond_sum_law: n and k must be >= 1");
  std::uint64_t top = std::uint64_t{1} << k;
  Layout layout = auto_layout(n);
  if (cap && *cap < top) return LatticeLaw<P>::from_atoms({}, layout, cap, P(1), 0.0);
  std::optional<std::uint64_t> inner;
  if (cap) inner = *cap - top;
  LatticeLaw<P> rest = power_convolve(truncated_atom_law<P>(k, layout), n - 1, inner, method);
  LatticeLaw<P> law = rest.as_layout(layout).shifted(top);
  return cap ? law.capped(*cap) : law;
}

template <class P>
LatticeLaw<P> max_sum_law(std::uint64_t n, int k, std::optional<std::uint64_t> cap) {
  if (n < 1 || k < 1 || k > 62) throw DomainError("max_sum_law: need n >= 1 and 1 <= k <= 62");
  Layout layout = auto_layout(n);
  std::uint64_t top = std::uint64_t{1} << k;
  // r games tie at the maximum 2^k, the other n - r stay below it
  std::optional<LatticeLaw<P>> base;
  if (k >= 2) base = truncated_atom_law<P>(k - 1, layout);
  std::vector<P> weight(n + 1, P(0));
  double err = 0.0;
  std::uint64_t r_lo = base ? 1 : n, r_hi = n;
  if constexpr (std::is_same_v<P, Rational>) {
    Rational binom = 1;
    for (std::uint64_t r = 1; r <= n; ++r) {
      binom = binom * Rational(static_cast<unsigned long>(n - r + 1)) / Rational(static_cast<unsigned long>(r));
      if (r < r_lo) continue;
      weight[r] = binom * rational_power(pow2_rational(-k), r) * rational_power(1 - pow2_rational(1 - k), n - r);
    }
  } else {
    double lq = base ? std::log1p(-pow2(1 - k)) : 0.0;
    std::vector<double> suffix(n + 2, 0.0);
    for (std::uint64_t r = r_lo; r <= n; ++r) {
      double lw = std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0) -
                  static_cast<double>(k) * static_cast<double>(r) * M_LN2;
      if (n > r) lw += static_cast<double>(n - r) * lq;
      weight[r] = std::exp(lw);
      err += 8.0 * kEps * (std::fabs(lw) + 1.0) * weight[r];
    }
    for (std::uint64_t r = n; r >= r_lo; --r) suffix[r] = suffix[r + 1] + weight[r];
    // drop the far tail of tie counts; its mass goes to the error budget
    while (r_hi > r_lo && suffix[r_hi] <= 1e-18 * suffix[r_lo]) --r_hi;
    err += suffix[r_hi + 1];
  }
  std::vector<Atom<P>> atoms;
  Accumulator<P> overflow;
  std::optional<LatticeLaw<P>> cur;
  if (base) cur = power_convolve(*base, n - r_hi, cap);
  for (std::uint64_t r = r_hi; r >= r_lo; --r) {
    const P& w = weight[r];
    std::uint64_t shift = r * top;
    if (shift / r != top) throw NumericError("max_sum_law: value exceeds 64-bit range");
    LatticeLaw<P> part = cur ? *cur : LatticeLaw<P>::point(0, layout);
    if (r > r_lo && cur) cur = convolve(*cur, *base, cap);
    err += to_double(w) * part.err();
    if (cap && shift > *cap) {
      overflow.add(w);
      continue;
    }
    overflow.add(w * part.overflow());
    for (const auto& a : part.atoms()) {
      std::uint64_t v = a.value + shift;
      if (cap && v > *cap) {
        overflow.add(w * a.prob);
      } else {
        atoms.push_back({v, w * a.prob});
      }
    }
    if (r == r_lo) break;
  }
  return LatticeLaw<P>::from_atoms(std::move(atoms), layout, cap, overflow.value(), err);
}

template <class P>
LatticeLaw<P> sum_law(std::uint64_t n, std::uint64_t cap, SumRoute route) {
  if (n < 1) throw DomainError("sum_law: n must be >= 1");
  if (cap < 2 * n) throw DomainError("sum_law: cap must be >= 2n");
  Layout layout = auto_layout(n);
  if (route == SumRoute::direct) {
    return power_convolve(stp_atom_law<P>(cap, layout), n, cap).as_layout(layout);
  }
  int m = std::min(63 - std::countl_zero(cap), 62);
  std::map<std::uint64_t, P> acc;
  Accumulator<P> overflow;
  double err = 0.0;
  for (int K = 1; K <= m; ++K) {
    LatticeLaw<P> part = max_sum_law<P>(n, K, cap);
    err += part.err();
    overflow.add(part.overflow());
    for (const auto& a : part.atoms()) acc[a.value] += a.prob;
  }
  if constexpr (std::is_same_v<P, Rational>) {
    overflow.add(1 - rational_power(1 - pow2_rational(-m), n));
  } else {
    ProbValue below = max_cdf_exact(n, m);
    // 1 - (1 - 2^-m)^n without cancellation
    overflow.add(-std::expm1(static_cast<double>(n) * std::log1p(-pow2(-m))));
    err += below.err + 8.0 * kEps * static_cast<double>(acc.size());
  }
  std::vector<Atom<P>> atoms;
  atoms.reserve(acc.size());
  for (auto& [v, p] : acc) atoms.push_back({v, p});
  return LatticeLaw<P>::from_atoms(std::move(atoms), layout, cap, overflow.value(), err);
}

SumTailOracle::SumTailOracle(std::uint64_t n, double y_max) : n_(n), y_max_(y_max) {
  if (n < 1) throw DomainError("sum tail: n must be >= 1");
  if (std::isnan(y_max)) throw DomainError("sum tail: y is NaN");
  if (y_max >= 9.2e18) throw NumericError("sum tail: threshold exceeds 64-bit lattice");
  if (y_max < 2.0 * static_cast<double>(n)) return;
  K_ = std::min(floor_log2(y_max), 62);
  auto cap = static_cast<std::uint64_t>(std::floor(y_max));
  exact_ = n <= 8;
  if (exact_) {
    auto law = power_convolve(truncated_atom_law<Rational>(K_, Layout::sparse), n, cap);
    const auto& atoms = law.sparse_atoms();
    values_.reserve(atoms.size());
    suffix_exact_.assign(atoms.size() + 1, law.overflow());
    for (std::size_t i = atoms.size(); i-- > 0;) suffix_exact_[i] = suffix_exact_[i + 1] + atoms[i].prob;
    for (const auto& a : atoms) values_.push_back(a.value);
    weight_exact_ = rational_power(1 - pow2_rational(-K_), n);
  } else {
    auto law = power_convolve(truncated_atom_law<double>(K_, Layout::dense), n, cap);
    auto atoms = law.atoms();
    suffix_.assign(atoms.size() + 1, law.overflow());
    KahanSum acc;
    acc.add(law.overflow());
    for (std::size_t i = atoms.size(); i-- > 0;) {
      acc.add(atoms[i].prob);
      suffix_[i] = acc.value();
    }
    for (const auto& a : atoms) values_.push_back(a.value);
    weight_ = std::exp(static_cast<double>(n) * std::log1p(-pow2(-K_)));
    err_ = law.err() + 8.0 * kEps;
  }
}

ProbValue SumTailOracle::tail(double y) const {
  if (std::isnan(y)) throw DomainError("sum tail: y is NaN");
  if (y < 2.0 * static_cast<double>(n_)) return ProbValue::from_exact(1);
  if (y > y_max_) throw DomainError("sum tail: y above the oracle range");
  auto s = static_cast<std::uint64_t>(std::floor(y));
  std::size_t idx = static_cast<std::size_t>(std::upper_bound(values_.begin(), values_.end(), s) - values_.begin());
  if (exact_) return ProbValue::from_exact(weight_exact_ * suffix_exact_[idx] + (1 - weight_exact_));
  double rest = -std::expm1(static_cast<double>(n_) * std::log1p(-pow2(-K_)));
  return ProbValue::approx(weight_ * suffix_[idx] + rest, err_ + 4.0 * kEps);
}

std::vector<std::uint64_t> SumTailOracle::support() const { return values_; }

ProbValue sum_tail_exact(std::uint64_t n, double y) { return SumTailOracle(n, y).tail(y); }

template <class P>
void write_law_csv(std::ostream& out, const LatticeLaw<P>& law) {
  char buf[64];
  out << "value,prob\n";
  for (const auto& a : law.atoms()) {
    std::snprintf(buf, sizeof buf, "%.17g", to_double(a.prob));
    out << a.value << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g", to_double(law.overflow()));
  out << "__overflow__," << buf << '\n';
}

template <class P>
KsReport ks_distance(const LatticeLaw<P>& law, double scale, double shift, const ContinuousCdf& G,
                     const KsOptions& options) {
  if (!(scale > 0.0)) throw DomainError("ks_distance: scale must be positive");
  double ov = to_double(law.overflow());
  if (law.cap() && ov > options.max_overflow) {
    throw NumericError("ks_distance: overflow mass above the cap exceeds the requested precision");
  }
  KsReport rep;
  auto atoms = law.atoms();
  std::size_t N = atoms.size();
  if (N == 0) throw DomainError("ks_distance: law has no atoms");
  std::vector<double> xs(N), F(N), Fprev(N);
  KahanSum acc;
  for (std::size_t i = 0; i < N; ++i) {
    xs[i] = (static_cast<double>(atoms[i].value) - shift) / scale;
    Fprev[i] = acc.value();
    acc.add(to_double(atoms[i].prob));
    F[i] = acc.value();
  }
  std::vector<double> g(N, 0.0), ge(N, 0.0);
  std::vector<char> done(N, 0);
  double lower = -1.0;
  double upper_pts = 0.0;
  auto evaluate = [&](std::size_t i) {
    if (done[i]) return;
    InversionResult r = G.cdf(xs[i]);
    g[i] = r.value;
    ge[i] = r.quad_err;
    done[i] = 1;
    ++rep.evaluations;
    double gap = std::max(std::fabs(F[i] - g[i]), std::fabs(Fprev[i] - g[i]));
    if (gap > lower) {
      lower = gap;
      rep.at = xs[i];
    }
    upper_pts = std::max(upper_pts, gap + ge[i]);
    rep.quad_err = std::max(rep.quad_err, ge[i]);
  };

  std::vector<std::size_t> idx;
  if (N <= options.exhaustive_below) {
    for (std::size_t i = 0; i < N; ++i) evaluate(i);
  } else {
    std::vector<std::size_t> seed{0, N - 1};
    std::size_t q = options.initial_points;
    for (std::size_t t = 1; t < q; ++t) {
      double level = static_cast<double>(t) / static_cast<double>(q);
      seed.push_back(static_cast<std::size_t>(std::lower_bound(F.begin(), F.end(), level) - F.begin()));
      seed.push_back(t * (N - 1) / q);
    }
    for (auto i : seed) evaluate(std::min(i, N - 1));
    for (std::size_t i = 0; i < N; ++i) {
      if (done[i]) idx.push_back(i);
    }
    while (true) {
      std::vector<std::size_t> fresh;
      for (std::size_t t = 0; t + 1 < idx.size(); ++t) {
        std::size_t a = idx[t], b = idx[t + 1];
        if (b <= a + 1) continue;
        double ub = std::max(F[b - 1] - (g[a] - ge[a]), (g[b] + ge[b]) - F[a]);
        if (ub > lower + options.slack) fresh.push_back(a + (b - a) / 2);
      }
      if (fresh.empty()) break;
      for (auto i : fresh) evaluate(i);
      std::vector<std::size_t> merged;
      merged.reserve(idx.size() + fresh.size());
      std::merge(idx.begin(), idx.end(), fresh.begin(), fresh.end(), std::back_inserter(merged));
      idx.swap(merged);
    }
  }
  double upper = upper_pts;
  for (std::size_t t = 0; t + 1 < idx.size(); ++t) {
    std::size_t a = idx[t], b = idx[t + 1];
    if (b <= a + 1) continue;
    upper = std::max(upper, std::max(F[b - 1] - (g[a] - ge[a]), (g[b] + ge[b]) - F[a]));
  }
  if (law.cap()) {
    double x_cap = (static_cast<double>(*law.cap()) - shift) / scale;
    InversionResult r = G.cdf(x_cap);
    ++rep.evaluations;
    double g_tail = std::min(1.0 - r.value + r.quad_err, G.upper_tail_bound(x_cap));
    rep.allowance = std::max(ov, std::max(0.0, g_tail));
    // between the last atom and the cap F is flat at F[N-1]
    double flat = std::max(F[N - 1] - (g[N - 1] - ge[N - 1]), r.value + r.quad_err - F[N - 1]);
    upper = std::max(upper, std::max(flat, rep.allowance));
  }
  rep.value = lower;
  rep.upper = upper + law.err();
  return rep;
}

double ks_versus_sample(const LatticeLaw<double>& law, std::vector<std::uint64_t> samples, double* allowance) {
  if (samples.empty()) throw DomainError("ks_versus_sample: no samples");
  std::sort(samples.begin(), samples.end());
  auto atoms = law.atoms();
  double total = static_cast<double>(samples.size());
  std::uint64_t limit = law.cap() ? *law.cap() : std::numeric_limits<std::uint64_t>::max();
  std::size_t i = 0, s = 0;
  KahanSum F;
  double best = 0.0;
  while (i < atoms.size() || (s < samples.size() && samples[s] <= limit)) {
    std::uint64_t v = std::numeric_limits<std::uint64_t>::max();
    if (i < atoms.size()) v = atoms[i].value;
    if (s < samples.size() && samples[s] <= limit) v = std::min(v, samples[s]);
    while (i < atoms.size() && atoms[i].value == v) F.add(atoms[i++].prob);
    while (s < samples.size() && samples[s] == v) ++s;
    best = std::max(best, std::fabs(static_cast<double>(s) / total - F.value()));
  }
  if (allowance) {
    double above = 1.0 - static_cast<double>(s) / total;
    *allowance = law.cap() ? std::max(law.overflow(), above) + law.err() : law.err();
  }
  return best;
}

template class LatticeLaw<double>;
template class LatticeLaw<Rational>;

#define STP_INSTANTIATE(P)                                                                                       \
  template LatticeLaw<P> truncated_atom_law<P>(int, Layout);                                                     \
  template LatticeLaw<P> stp_atom_law<P>(std::uint64_t, Layout);                                                 \
  template LatticeLaw<P> convolve<P>(const LatticeLaw<P>&, const LatticeLaw<P>&, std::optional<std::uint64_t>,   \
                                     ConvMethod);                                                                \
  template LatticeLaw<P> power_convolve<P>(const LatticeLaw<P>&, std::uint64_t, std::optional<std::uint64_t>,    \
                                           ConvMethod);                                                          \
  template LatticeLaw<P> cond_sum_law<P>(std::uint64_t, int, std::optional<std::uint64_t>, ConvMethod);          \
  template LatticeLaw<P> sum_law<P>(std::uint64_t, std::uint64_t, SumRoute);                                     \
  template LatticeLaw<P> max_sum_law<P>(std::uint64_t, int, std::optional<std::uint64_t>);                       \
  template void write_law_csv<P>(std::ostream&, const LatticeLaw<P>&);                                           \
  template KsReport ks_distance<P>(const LatticeLaw<P>&, double, double, const ContinuousCdf&, const KsOptions&);

STP_INSTANTIATE(double)
STP_INSTANTIATE(Rational)

#undef STP_INSTANTIATE

}  // namespace stp
