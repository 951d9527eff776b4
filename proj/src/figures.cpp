#include "stp/figures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>

#include "stp/asymptotics.hpp"
#include "stp/core.hpp"
#include "stp/montecarlo.hpp"

namespace stp {

namespace {

constexpr double kLogLo = 7.0, kLogHi = 20.0;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string provenance(const std::string& name, const FigureOptions& opt, const std::string& version) {
  std::ostringstream os;
  os << "# provenance: command=figures " << name << ", version=" << version << ", seed=" << opt.seed
     << ", reps=" << opt.reps << ", bins=" << opt.bins << ", gamma=" << num(opt.gamma) << '\n';
  return os.str();
}

void histogram_rows(std::ostream& os, const std::string& prefix, const Histogram& h, double weight_total = 0.0) {
  double w = h.width();
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    double left = h.lo + w * static_cast<double>(i);
    double right = i + 1 == h.counts.size() ? h.hi : h.lo + w * static_cast<double>(i + 1);
    os << prefix << num(left) << ',' << num(right) << ',' << h.counts[i] << ',' << num(h.density[i]);
    if (weight_total > 0.0) os << ',' << num(static_cast<double>(h.counts[i]) / (weight_total * w));
    os << '\n';
  }
}

SimResult run(std::uint64_t n, const FigureOptions& opt) {
  return simulate({n, opt.reps, opt.seed + n, opt.bins}, opt.threads);
}

std::string fig1(const FigureOptions& opt) {
  std::ostringstream os;
  os << "# log2 S_n histograms, n = 64 and 128\n" << figure_columns("fig1") << '\n';
  for (std::uint64_t n : {64ULL, 128ULL}) {
    auto h = histogram(log2_sums(run(n, opt)), opt.bins, kLogLo, kLogHi);
    histogram_rows(os, std::to_string(n) + ",", h);
  }
  return os.str();
}

std::string fig2(const FigureOptions& opt) {
  std::ostringstream os;
  os << "# log2 S_n histograms, n = round(2^(6+eta))\n" << figure_columns("fig2") << '\n';
  for (double e : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    auto n = static_cast<std::uint64_t>(std::llround(std::exp2(6.0 + e)));
    auto h = histogram(log2_sums(run(n, opt)), opt.bins, kLogLo, kLogHi);
    histogram_rows(os, num(e) + "," + std::to_string(n) + ",", h);
  }
  return os.str();
}

std::string fig3(const FigureOptions& opt) {
  constexpr std::uint64_t n = 128;
  auto r = run(n, opt);
  std::ostringstream os;
  os << "# log2 S_n histogram components given X_n^* = 2^k, n = 128\n";
  std::ostringstream rows;
  for (int k = 5; k <= 11; ++k) {
    std::vector<double> logs;
    for (std::size_t i = 0; i < r.sum.size(); ++i) {
      if (r.max_exp[i] == k && !r.overflowed[i]) logs.push_back(std::log2(static_cast<double>(r.sum[i])));
    }
    os << "# k=" << k << " count=" << logs.size() << (logs.size() < 50 ? " flagged" : "") << '\n';
    if (logs.size() < 50) continue;
    auto h = histogram(logs, opt.bins, kLogLo, kLogHi);
    histogram_rows(rows, std::to_string(k) + ",", h, static_cast<double>(r.sum.size()));
  }
  os << figure_columns("fig3") << '\n' << rows.str();
  return os.str();
}

std::string figx2(const FigureOptions& opt) {
  constexpr std::uint64_t n = 128;
  constexpr int k = 10;
  auto r = run(n, opt);
  auto c = conditional_histograms(r, {k}, 60).front();
  std::ostringstream os;
  os << "# S_n histogram given X_n^* = 2^10, n = 128, with moment-matched Gaussian densities\n";
  os << "# count=" << c.count << (c.flagged ? " flagged" : "") << " skewness=" << num(c.sample_skewness) << '\n';
  os << "# formula_mean=" << num(c.formula_mean) << " formula_variance=" << num(c.formula_variance) << '\n';
  os << "# exact_mean=" << num(c.exact_mean) << " exact_variance=" << num(c.exact_variance) << '\n';
  os << figure_columns("figx2") << '\n';
  auto gauss = [](double x, double m, double v) {
    return std::exp(-(x - m) * (x - m) / (2.0 * v)) / std::sqrt(2.0 * M_PI * v);
  };
  const Histogram& h = c.sum_hist;
  double w = h.width();
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    double left = h.lo + w * static_cast<double>(i);
    double right = i + 1 == h.counts.size() ? h.hi : h.lo + w * static_cast<double>(i + 1);
    double mid = 0.5 * (left + right);
    os << num(left) << ',' << num(right) << ',' << h.counts[i] << ',' << num(h.density[i]) << ','
       << num(gauss(mid, c.formula_mean, c.formula_variance)) << ',' << num(gauss(mid, c.exact_mean, c.exact_variance))
       << '\n';
  }
  return os.str();
}

std::string fig8() {
  constexpr std::uint64_t n = 128;
  constexpr int j_lo = -2, j_hi = 11;
  double kept = 0.0;
  for (int j = j_lo; j <= j_hi; ++j) kept += p_max(j, gamma_of(n));
  std::vector<double> xs;
  for (int i = 0; i <= 128; ++i) xs.push_back(-2.0 + 0.25 * i);
  auto tails = sum_tail_normalized(n, xs);
  std::ostringstream os;
  os << "# P{S_n/n - log2 n >= x} and its bound, n = 128, j in [-2, 11]\n";
  os << "# truncated_mass=" << num(1.0 - kept) << '\n';
  os << figure_columns("fig8") << '\n';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << num(xs[i]) << ',' << num(tails[i].value) << ',' << num(tails[i].err) << ','
       << num(fig8_bound_curve(n, xs[i], j_lo, j_hi)) << '\n';
  }
  return os.str();
}

std::string table1(const FigureOptions& opt) {
  std::ostringstream os;
  double sum = 0.0;
  for (int j = -2; j <= 5; ++j) sum += p_max(j, opt.gamma);
  os << "# limit law of log2 X_n^* - ceil(log2 n) along gamma\n# sum_-2_5=" << num(sum) << '\n';
  os << figure_columns("table1") << '\n';
  for (int j = -2; j <= 5; ++j) os << j << ',' << num(p_max(j, opt.gamma)) << '\n';
  return os.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

const std::vector<std::string>& figure_names() {
  static const std::vector<std::string> names{"fig1", "fig2", "fig3", "figx2", "fig8", "table1"};
  return names;
}

const std::string& figure_columns(const std::string& name) {
  static const std::map<std::string, std::string> cols{
      {"fig1", "n,bin_left,bin_right,count,density"},
      {"fig2", "eta,n,bin_left,bin_right,count,density"},
      {"fig3", "k,bin_left,bin_right,count,density,weighted_density"},
      {"figx2", "bin_left,bin_right,count,density,gaussian_formula,gaussian_exact"},
      {"fig8", "x,exact_tail,exact_err,bound"},
      {"table1", "j,p"},
  };
  auto it = cols.find(name);
  if (it == cols.end()) throw DomainError("unknown figure: " + name);
  return it->second;
}

std::string figure_csv(const std::string& name, const FigureOptions& opt, const std::string& version) {
  if (opt.reps < 1 || opt.bins < 1) throw DomainError("figures: reps and bins must be >= 1");
  std::string body;
  if (name == "fig1") {
    body = fig1(opt);
  } else if (name == "fig2") {
    body = fig2(opt);
  } else if (name == "fig3") {
    body = fig3(opt);
  } else if (name == "figx2") {
    body = figx2(opt);
  } else if (name == "fig8") {
    body = fig8();
  } else if (name == "table1") {
    body = table1(opt);
  } else {
    throw DomainError("unknown figure: " + name);
  }
  return provenance(name, opt, version) + body;
}

bool figure_schema_ok(const std::string& name, const std::string& csv, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line.rfind("# provenance: command=figures " + name, 0) != 0) {
    return fail("missing provenance line");
  }
  while (std::getline(is, line) && !line.empty() && line[0] == '#') {
  }
  const std::string& header = figure_columns(name);
  if (line != header) return fail("header mismatch: " + line);
  std::size_t fields = split(header, ',').size();
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    auto parts = split(line, ',');
    if (parts.size() != fields) return fail("field count mismatch: " + line);
    for (const auto& p : parts) {
      char* end = nullptr;
      std::strtod(p.c_str(), &end);
      if (p.empty() || *end != '\0') return fail("non-numeric field: " + line);
    }
    ++rows;
  }
  if (rows == 0) return fail("no data rows");
  return true;
}

double fig8_worst_excess(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  double truncated = 0.0;
  double worst = -1.0;
  bool data = false;
  while (std::getline(is, line)) {
    if (line.rfind("# truncated_mass=", 0) == 0) truncated = std::strtod(line.c_str() + 17, nullptr);
    if (line == figure_columns("fig8")) {
      data = true;
      continue;
    }
    if (!data || line.empty() || line[0] == '#') continue;
    auto f = split(line, ',');
    double excess = std::strtod(f[1].c_str(), nullptr) - std::strtod(f[2].c_str(), nullptr) -
                    std::strtod(f[3].c_str(), nullptr) - truncated;
    worst = std::max(worst, excess);
  }
  return worst;
}

}  // namespace stp
