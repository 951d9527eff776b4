#include "stp/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <new>
#include <ostream>
#include <thread>

#include "stp/asymptotics.hpp"

namespace stp {

namespace {

constexpr std::uint64_t kBlock = 1024;

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t block_seed(std::uint64_t seed, std::uint64_t block) {
  std::uint64_t s = block;
  std::uint64_t mixed = seed ^ splitmix64(s);
  return splitmix64(mixed);
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  for (auto& w : s_) w = splitmix64(seed);
}

std::uint64_t Xoshiro256::next() {
  std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

int sample_exponent(Xoshiro256& rng) {
  std::uint64_t w;
  do {
    w = rng.next();
  } while (w == 0);
  return 1 + std::countr_zero(w);
}

std::uint64_t sample_game(Xoshiro256& rng) {
  int k = sample_exponent(rng);
  return k >= 64 ? 0 : std::uint64_t{1} << k;
}

unsigned worker_count() {
  if (const char* env = std::getenv("STP_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

SimResult simulate(const SimConfig& cfg, unsigned threads) {
  if (cfg.n < 1 || cfg.reps < 1) throw DomainError("simulate: n and reps must be >= 1");
  if (cfg.bins < 1) throw DomainError("simulate: bins must be >= 1");
  SimResult r;
  r.config = cfg;
  try {
    r.sum.assign(cfg.reps, 0);
    r.max_exp.assign(cfg.reps, 0);
    r.overflowed.assign(cfg.reps, 0);
  } catch (const std::bad_alloc&) {
    throw NumericError("simulate: not enough memory for the requested replications");
  }
  std::uint64_t blocks = (cfg.reps + kBlock - 1) / kBlock;
  std::atomic<std::uint64_t> next{0};
  auto work = [&] {
    for (std::uint64_t b; (b = next.fetch_add(1)) < blocks;) {
      Xoshiro256 rng(block_seed(cfg.seed, b));
      std::uint64_t end = std::min(cfg.reps, (b + 1) * kBlock);
      for (std::uint64_t i = b * kBlock; i < end; ++i) {
        std::uint64_t s = 0;
        int top = 0;
        bool over = false;
        for (std::uint64_t g = 0; g < cfg.n; ++g) {
          int k = sample_exponent(rng);
          top = std::max(top, k);
          if (k >= 64 || __builtin_add_overflow(s, std::uint64_t{1} << (k & 63), &s)) over = true;
        }
        r.sum[i] = over ? std::numeric_limits<std::uint64_t>::max() : s;
        r.max_exp[i] = top;
        r.overflowed[i] = over;
      }
    }
  };
  unsigned w = threads ? threads : worker_count();
  w = static_cast<unsigned>(std::min<std::uint64_t>(w, blocks));
  if (w <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < w; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  r.overflow = static_cast<std::uint64_t>(std::count(r.overflowed.begin(), r.overflowed.end(), 1));
  return r;
}

void write_simulation_csv(std::ostream& out, const SimResult& r) {
  out << "# seed=" << r.config.seed << ",n=" << r.config.n << ",reps=" << r.config.reps
      << ",overflow=" << r.overflow << '\n';
  out << "rep,sum,max\n";
  for (std::size_t i = 0; i < r.sum.size(); ++i) {
    out << i << ',';
    if (r.overflowed[i]) {
      out << "overflow,";
    } else {
      out << r.sum[i] << ',';
    }
    if (r.max_exp[i] >= 64) {
      out << "overflow\n";
    } else {
      out << (std::uint64_t{1} << r.max_exp[i]) << '\n';
    }
  }
}

Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi) {
  if (values.empty()) throw DomainError("histogram: no values");
  if (bins < 1) throw DomainError("histogram: bins must be >= 1");
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) throw DomainError("histogram: range must be finite and non-empty");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  double w = (hi - lo) / bins;
  for (double v : values) {
    if (!(v >= lo && v <= hi)) {
      ++h.outside;
      continue;
    }
    auto b = static_cast<std::size_t>(std::min<double>(std::floor((v - lo) / w), bins - 1));
    ++h.counts[b];
    ++h.total;
  }
  h.density.assign(h.counts.size(), 0.0);
  if (h.total > 0) {
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      h.density[i] = static_cast<double>(h.counts[i]) / (static_cast<double>(h.total) * w);
    }
  }
  return h;
}

void write_histogram_csv(std::ostream& out, const Histogram& h, const std::string& header) {
  if (!header.empty()) out << header;
  out << "bin_left,bin_right,count,density\n";
  char buf[128];
  double w = h.width();
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    double left = h.lo + w * static_cast<double>(i);
    double right = i + 1 == h.counts.size() ? h.hi : h.lo + w * static_cast<double>(i + 1);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%llu,%.17g\n", left, right,
                  static_cast<unsigned long long>(h.counts[i]), h.density[i]);
    out << buf;
  }
}

std::vector<double> log2_sums(const SimResult& r) {
  std::vector<double> v;
  v.reserve(r.sum.size());
  for (std::size_t i = 0; i < r.sum.size(); ++i) {
    if (!r.overflowed[i]) v.push_back(std::log2(static_cast<double>(r.sum[i])));
  }
  return v;
}

std::vector<ConditionalHistogram> conditional_histograms(const SimResult& r, const std::vector<int>& k_list,
                                                         int bins) {
  std::uint64_t n = r.config.n;
  double nn = static_cast<double>(n);
  std::vector<ConditionalHistogram> out;
  for (int k : k_list) {
    if (k < 1 || k > 62) throw DomainError("conditional_histograms: k must lie in [1, 62]");
    ConditionalHistogram c;
    c.k = k;
    std::vector<double> sums, logs;
    std::uint64_t inside = 0;
    for (std::size_t i = 0; i < r.sum.size(); ++i) {
      if (r.max_exp[i] != k || r.overflowed[i]) continue;
      double s = static_cast<double>(r.sum[i]);
      sums.push_back(s);
      logs.push_back(std::log2(s));
      if (n > 1 && r.sum[i] < (std::uint64_t{2} << k)) ++inside;
    }
    c.count = sums.size();
    c.flagged = c.count < 50;
    c.frequency = static_cast<double>(c.count) / static_cast<double>(r.sum.size());
    c.formula_mean = cond_sum_mean(n, k);
    c.formula_variance = cond_sum_variance(n, k);
    if (k <= 40 && nn * std::ldexp(1.0, k) <= std::ldexp(1.0, 26)) {
      auto law = conditional_law(n, k);
      c.exact_mean = law.mean_of_atoms();
      KahanSum v;
      for (const auto& a : law.atoms()) {
        double d = static_cast<double>(a.value) - c.exact_mean;
        v.add(a.prob * d * d);
      }
      c.exact_variance = v.value();
    } else {
      c.exact_mean = std::numeric_limits<double>::quiet_NaN();
      c.exact_variance = std::numeric_limits<double>::quiet_NaN();
    }
    double lo_log = std::log2(std::ldexp(1.0, k) + 2.0 * (nn - 1.0));
    double hi_log = static_cast<double>(k) + std::log2(nn);
    if (!(hi_log > lo_log)) hi_log = lo_log + 1.0;
    double sd = std::sqrt(c.formula_variance);
    double lo_s = std::max(std::ldexp(1.0, k) + 2.0 * (nn - 1.0), c.formula_mean - 5.0 * sd);
    double hi_s = std::max(c.formula_mean + 5.0 * sd, lo_s + 2.0);
    if (!sums.empty()) {
      c.log2_hist = histogram(logs, bins, lo_log, hi_log);
      c.sum_hist = histogram(sums, bins, lo_s, hi_s);
      KahanSum m1;
      for (double s : sums) m1.add(s);
      c.sample_mean = m1.value() / static_cast<double>(c.count);
      KahanSum m2, m3;
      for (double s : sums) {
        double d = s - c.sample_mean;
        m2.add(d * d);
        m3.add(d * d * d);
      }
      double var = m2.value() / static_cast<double>(c.count);
      c.sample_variance = c.count > 1 ? m2.value() / static_cast<double>(c.count - 1) : 0.0;
      c.sample_skewness = var > 0.0 ? m3.value() / static_cast<double>(c.count) / std::pow(var, 1.5) : 0.0;
      c.support_frequency = static_cast<double>(inside) / static_cast<double>(c.count);
    }
    out.push_back(std::move(c));
  }
  return out;
}

int sidewave_threshold(std::uint64_t n) {
  if (n < 2) throw DomainError("sidewave_threshold: n must be >= 2");
  double lg = std::log2(static_cast<double>(n));
  return static_cast<int>(std::ceil(lg + std::log2(lg) + 1.0));
}

namespace {

double sidewave_given(std::uint64_t n, int k, const SumTailOracle* rest) {
  if (n == 1) return 0.0;
  double y = std::ldexp(1.0, k) - 2.0;
  double below = 1.0 - (rest ? rest->tail(y) : sum_tail_exact(n - 1, y)).value;
  double top = max_cdf_exact(n, k).value - (k > 1 ? max_cdf_exact(n, k - 1).value : 0.0);
  // n P{X_1 = 2^k} P{S_{n-1} <= 2^k - 2}; the sum bound forces the others below 2^k
  double event = static_cast<double>(n) * std::ldexp(1.0, -k) * below;
  return std::min(1.0, event / top);
}

}  // namespace

double sidewave_exact(std::uint64_t n, int k) {
  if (n < 1 || k < 1) throw DomainError("sidewave_exact: n and k must be >= 1");
  return sidewave_given(n, k, nullptr);
}

SidewaveReport sidewave_support(const SimResult& r) {
  std::uint64_t n = r.config.n;
  SidewaveReport rep;
  rep.k_min = sidewave_threshold(n);
  std::uint64_t inside = 0;
  std::vector<std::uint64_t> cnt(65, 0), in(65, 0);
  for (std::size_t i = 0; i < r.sum.size(); ++i) {
    int k = r.max_exp[i];
    if (k < rep.k_min || r.overflowed[i]) continue;
    ++rep.samples;
    ++cnt[k];
    if (r.sum[i] < (std::uint64_t{2} << k)) {
      ++inside;
      ++in[k];
    }
  }
  rep.frequency = rep.samples ? static_cast<double>(inside) / static_cast<double>(rep.samples) : 0.0;
  for (int k = rep.k_min; k < 64; ++k) {
    if (cnt[k] >= 50) rep.per_k.emplace_back(k, static_cast<double>(in[k]) / static_cast<double>(cnt[k]));
  }
  // the per-k share increases in k; levels above k_hi get the k_hi value
  int k_hi = std::min(rep.k_min + 8, 40);
  SumTailOracle rest(n - 1, std::ldexp(1.0, k_hi));
  KahanSum num;
  double last = 0.0;
  for (int k = rep.k_min; k <= k_hi; ++k) {
    double q = max_cdf_exact(n, k).value - max_cdf_exact(n, k - 1).value;
    last = sidewave_given(n, k, &rest);
    num.add(q * last);
  }
  double mass = 1.0 - max_cdf_exact(n, rep.k_min - 1).value;
  double above = 1.0 - max_cdf_exact(n, k_hi).value;
  rep.exact = mass > 0.0 ? (num.value() + above * last) / mass : 0.0;
  return rep;
}

double ks_empirical(const SimResult& r, double* allowance) {
  std::uint64_t n = r.config.n;
  if (n > 1024) throw DomainError("ks_empirical: n must be <= 1024 for the dense exact law");
  double nn = static_cast<double>(n);
  auto cap = static_cast<std::uint64_t>(std::ceil(nn * (std::log2(nn) + 2000.0))) + 2;
  auto law = sum_law<double>(n, cap);
  std::vector<std::uint64_t> samples;
  samples.reserve(r.sum.size());
  for (std::size_t i = 0; i < r.sum.size(); ++i) {
    samples.push_back(r.overflowed[i] ? std::numeric_limits<std::uint64_t>::max() : r.sum[i]);
  }
  return ks_versus_sample(law, std::move(samples), allowance);
}

}  // namespace stp
