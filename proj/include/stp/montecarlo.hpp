#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stp/lattice.hpp"

namespace stp {

std::uint64_t splitmix64(std::uint64_t& state);

// xoshiro256** seeded through splitmix64.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);
  std::uint64_t next();

 private:
  std::uint64_t s_[4];
};

// Exponent K of one game, P{K = k} = 2^-k: one plus the trailing zeros of a
// nonzero uniform word. K = 64 is the overflow event.
int sample_exponent(Xoshiro256& rng);
// 2^K; returns 0 on the overflow event.
std::uint64_t sample_game(Xoshiro256& rng);

struct SimConfig {
  std::uint64_t n = 1;
  std::uint64_t reps = 1;
  std::uint64_t seed = 0;
  int bins = 64;
};

struct SimResult {
  SimConfig config;
  std::vector<std::uint64_t> sum;
  std::vector<int> max_exp;       // log2 of the maximum
  std::uint64_t overflow = 0;     // replications with a payout or sum beyond 64 bits
  std::vector<char> overflowed;   // per replication
};

// Worker count from STP_THREADS, else hardware concurrency.
unsigned worker_count();

// Replications run in fixed blocks with seeds derived from (seed, block), so the
// output does not depend on the number of workers.
SimResult simulate(const SimConfig& cfg, unsigned threads = 0);

void write_simulation_csv(std::ostream& out, const SimResult& r);

struct Histogram {
  double lo = 0.0, hi = 0.0;
  std::vector<std::uint64_t> counts;
  std::vector<double> density;  // count / (total * width)
  std::uint64_t total = 0;      // values inside [lo, hi]
  std::uint64_t outside = 0;
  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
};

// Equal-width bins on [lo, hi]; the last bin is closed.
Histogram histogram(const std::vector<double>& values, int bins, double lo, double hi);

void write_histogram_csv(std::ostream& out, const Histogram& h, const std::string& header = "");

// log2 S over the non-overflowed replications.
std::vector<double> log2_sums(const SimResult& r);

struct ConditionalHistogram {
  int k = 0;
  std::uint64_t count = 0;
  bool flagged = false;  // fewer than 50 samples
  Histogram log2_hist;   // log2 S_n within the partition
  Histogram sum_hist;    // S_n within the partition
  double sample_mean = 0.0, sample_variance = 0.0, sample_skewness = 0.0;
  double frequency = 0.0;
  double support_frequency = 0.0;  // share with X^* < S < 2 X^*
  // Gaussian overlays: displayed moments and the exact tie-inclusive conditional law.
  double formula_mean = 0.0, formula_variance = 0.0;
  double exact_mean = 0.0, exact_variance = 0.0;
};

std::vector<ConditionalHistogram> conditional_histograms(const SimResult& r, const std::vector<int>& k_list,
                                                         int bins);

// Smallest k with k >= log2 n + log2 log2 n + 1.
int sidewave_threshold(std::uint64_t n);

struct SidewaveReport {
  int k_min = 0;
  std::uint64_t samples = 0;
  double frequency = 0.0;     // pooled share with X^* < S < 2 X^*
  double exact = 0.0;         // the same share under the exact law (levels past k_min + 8 at their lower bound)
  std::vector<std::pair<int, double>> per_k;  // empirical, k with >= 50 samples
};
SidewaveReport sidewave_support(const SimResult& r);

// P{X^* < S_n < 2 X^* | X^* = 2^k} from the exact conditional law.
double sidewave_exact(std::uint64_t n, int k);

// KS distance between the empirical law of S_n and the exact law.
double ks_empirical(const SimResult& r, double* allowance = nullptr);

}  // namespace stp
