#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "stp/asymptotics.hpp"
#include "stp/core.hpp"
#include "stp/figures.hpp"
#include "stp/lattice.hpp"
#include "stp/montecarlo.hpp"
#include "stp/semistable.hpp"
#include "stp/verify.hpp"

#ifndef STP_VERSION
#define STP_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace stp;

namespace {

enum Exit { kPass = 0, kCheckFailed = 1, kUsage = 2, kNumeric = 3 };

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Writes through a temporary file in the same directory, then renames.
void write_atomic(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("out_dir not writable: " + path.parent_path().string());
    out << body;
    out.flush();
    if (!out) throw DomainError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
  std::cout << "wrote " << path.string() << '\n';
}

std::string header(const std::string& command) {
  return "# provenance: command=" + command + ", version=" STP_VERSION "\n";
}

ConditionalForm parse_form(const std::string& s) {
  return s == "tie_corrected" ? ConditionalForm::tie_corrected : ConditionalForm::printed;
}

std::vector<double> grid(double lo, double hi, int points) {
  if (points < 1) throw DomainError("points must be >= 1");
  if (points == 1) return {lo};
  std::vector<double> xs;
  for (int i = 0; i < points; ++i) xs.push_back(lo + (hi - lo) * i / (points - 1));
  return xs;
}

struct Common {
  std::string out_dir = ".";
  double tol = 1e-6;
  unsigned threads = 0;
};

struct ExactArgs {
  std::uint64_t n = 1;
  std::string law = "sum";
  int k = 1;
  std::uint64_t cap = 0;
  std::vector<double> ys;
};

struct SemistableArgs {
  double gamma = 1.0;
  std::optional<int> j;
  std::string what = "cdf";
  std::string form = "printed";
  bool direct = false;
  double x_min = -2.0, x_max = 40.0;
  int points = 50;
};

struct MergeArgs {
  std::string kind = "max";
  std::vector<std::uint64_t> n_list{64, 128, 256};
  int j = 0;
  std::string form = "printed";
  std::optional<double> max_distance;
};

struct TailArgs {
  std::string mode = "ratio";
  std::uint64_t n = 4;
  int m = 16;
  double delta = 0.1;
  double c = 2.0;
  double x_max = 65536.0;
  int points = 64;
  std::optional<double> max_dev;
};

struct BoundsArgs {
  std::uint64_t n = 128;
  std::vector<int> j_list{-2, -1, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int points = 50;
  double x_max = 10.0;
};

struct SimulateArgs {
  std::uint64_t n = 128;
  std::uint64_t reps = 100000;
  std::uint64_t seed = 20240601;
  int bins = 130;
  double lo = 7.0, hi = 20.0;
};

struct FiguresArgs {
  std::vector<std::string> names;
  FigureOptions opt;
};

struct VerifyArgs {
  std::string suite = "primary";
  std::vector<std::string> only;
  std::string json = "verify.json";
};

int run_exact(const ExactArgs& a, const Common& c) {
  std::ostringstream os;
  os << header("exact") << "# n=" << a.n << ", law=" << a.law;
  std::string name;
  if (a.law == "max") {
    os << "\nj,q,err\n";
    int top = ceil_log2(a.n);
    for (int j = -top; j <= 20; ++j) {
      auto q = q_max_exact(a.n, j);
      os << j << ',' << num(q.value) << ',' << num(q.err) << '\n';
    }
    name = "exact_max_n" + std::to_string(a.n) + ".csv";
  } else if (a.law == "tail") {
    if (a.ys.empty()) throw DomainError("exact --law tail needs --y-list");
    os << "\ny,tail,err\n";
    for (double y : a.ys) {
      auto t = sum_tail_exact(a.n, y);
      os << num(y) << ',' << num(t.value) << ',' << num(t.err) << '\n';
    }
    name = "exact_tail_n" + std::to_string(a.n) + ".csv";
  } else {
    std::optional<std::uint64_t> cap;
    if (a.cap > 0) cap = a.cap;
    LatticeLaw<double> law;
    if (a.law == "sum") {
      if (!cap) throw DomainError("exact --law sum needs --cap");
      law = sum_law<double>(a.n, *cap);
    } else if (a.law == "cond") {
      law = cond_sum_law<double>(a.n, a.k, cap);
    } else {
      law = conditional_law(a.n, a.k, cap);
    }
    if (a.law != "sum") os << ", k=" << a.k;
    os << ", overflow=" << num(law.overflow()) << ", err=" << num(law.err()) << '\n';
    write_law_csv(os, law);
    name = "exact_" + a.law + "_n" + std::to_string(a.n) + (a.law == "sum" ? "" : "_k" + std::to_string(a.k)) + ".csv";
  }
  write_atomic(fs::path(c.out_dir) / name, os.str());
  return kPass;
}

int run_semistable(const SemistableArgs& a, const Common& c) {
  auto form = parse_form(a.form);
  auto xs = grid(a.x_min, a.x_max, a.points);
  std::vector<InversionResult> vals;
  std::string name;
  if (a.j) {
    WjCdf G(*a.j, a.gamma, c.tol, form);
    for (double x : xs) vals.push_back(a.what == "pdf" ? G.pdf(x) : G.cdf(x));
    name = "semistable_" + a.what + "_j" + std::to_string(*a.j) + ".csv";
  } else {
    if (a.what == "pdf") throw DomainError("semistable --what pdf needs --j");
    if (a.direct) {
      DirectCdf G(a.gamma, c.tol);
      for (double x : xs) vals.push_back(G.cdf(x));
    } else {
      MixtureCdf G(a.gamma, c.tol, form);
      for (double x : xs) vals.push_back(G.cdf(x));
    }
    name = std::string("semistable_cdf_") + (a.direct ? "direct" : "mixture") + ".csv";
  }
  std::ostringstream os;
  os << header("semistable") << "# gamma=" << num(a.gamma) << ", what=" << a.what << ", form=" << a.form
     << ", tol=" << num(c.tol) << '\n';
  write_inversion_csv(os, xs, vals);
  write_atomic(fs::path(c.out_dir) / name, os.str());
  return kPass;
}

int run_merge(const MergeArgs& a, const Common& c) {
  auto form = parse_form(a.form);
  std::ostringstream os;
  os << header("merge") << "# kind=" << a.kind << ", form=" << a.form << ", tol=" << num(c.tol);
  if (a.kind == "cond") os << ", j=" << a.j;
  os << "\nn,distance,upper,allowance,n_times_distance\n";
  bool ok = true;
  for (std::uint64_t n : a.n_list) {
    DistanceReport r;
    if (a.kind == "max") {
      r.distance = r.upper = merge_distance_max(n);
    } else if (a.kind == "cond") {
      r = merge_distance_cond(n, a.j, c.tol, form);
    } else {
      r = merge_distance_sum(n, c.tol, form);
    }
    os << n << ',' << num(r.distance) << ',' << num(r.upper) << ',' << num(r.allowance) << ','
       << num(static_cast<double>(n) * r.distance) << '\n';
    std::cout << "n=" << n << " distance=" << r.distance << " upper=" << r.upper << '\n';
    if (a.max_distance && r.distance > *a.max_distance) ok = false;
  }
  write_atomic(fs::path(c.out_dir) / ("merge_" + a.kind + ".csv"), os.str());
  return ok ? kPass : kCheckFailed;
}

int run_tail(const TailArgs& a, const Common& c) {
  ScanReport r;
  if (a.mode == "ratio") {
    r = tail_ratio_scan(a.n, a.m, a.delta, a.points);
  } else if (a.mode == "period") {
    r = tail_period_scan(a.n, a.m, a.points);
  } else if (a.mode == "subexp") {
    r = subexp_scan(a.n, a.x_max);
  } else {
    auto f = finer_sup(a.n, a.m, a.c);
    r.points = {{f.sup_at, f.sup_val}};
    r.meta = {{"mode", "finer"}, {"c", num(a.c)}, {"limit", num(f.limit)}};
    r.finalize();
  }
  double dev = std::max(std::fabs(r.sup_val - 1.0), std::fabs(r.inf_val - 1.0));
  std::ostringstream os;
  os << header("tail") << "# n=" << a.n << ", m=" << a.m << ", mode=" << a.mode << '\n';
  write_scan_csv(os, r);
  write_atomic(fs::path(c.out_dir) / ("tail_" + a.mode + "_n" + std::to_string(a.n) + ".csv"), os.str());
  std::cout << "sup=" << num(r.sup_val) << " at " << num(r.sup_at) << "\ninf=" << num(r.inf_val) << " at "
            << num(r.inf_at) << "\nsup|r-1|=" << num(dev) << '\n';
  return a.max_dev && dev > *a.max_dev ? kCheckFailed : kPass;
}

int run_bounds(const BoundsArgs& a, const Common& c) {
  std::ostringstream rep, curves;
  rep << header("bounds") << "# n=" << a.n << ", points=" << a.points << '\n'
      << "j,checks,chernoff_violations,cantelli_violations,worst_chernoff_ratio,worst_cantelli_ratio,exact\n";
  curves << header("bounds") << "# n=" << a.n << "\nj,x,chernoff,cantelli\n";
  std::size_t violations = 0;
  for (int j : a.j_list) {
    auto d = bound_domination(a.n, j, a.points);
    violations += d.chernoff_violations + d.cantelli_violations;
    rep << j << ',' << d.checks << ',' << d.chernoff_violations << ',' << d.cantelli_violations << ','
        << num(d.worst_chernoff_ratio) << ',' << num(d.worst_cantelli_ratio) << ',' << (d.exact ? 1 : 0) << '\n';
    for (double x : grid(a.x_max / a.points, a.x_max, a.points)) {
      curves << j << ',' << num(x) << ',' << num(chernoff_bound(a.n, j, x)) << ','
             << num(cantelli_bound(a.n, j, x)) << '\n';
    }
  }
  std::string suffix = "_n" + std::to_string(a.n) + ".csv";
  write_atomic(fs::path(c.out_dir) / ("bounds_domination" + suffix), rep.str());
  write_atomic(fs::path(c.out_dir) / ("bounds_curves" + suffix), curves.str());
  std::cout << "violations=" << violations << '\n';
  return violations == 0 ? kPass : kCheckFailed;
}

int run_simulate(const SimulateArgs& a, const Common& c) {
  auto r = simulate({a.n, a.reps, a.seed, a.bins}, c.threads);
  std::ostringstream raw, hist;
  raw << header("simulate");
  write_simulation_csv(raw, r);
  std::string prov = header("simulate") + "# seed=" + std::to_string(a.seed) + ",n=" + std::to_string(a.n) +
                     ",reps=" + std::to_string(a.reps) + ",overflow=" + std::to_string(r.overflow) +
                     ",scale=log2\n";
  write_histogram_csv(hist, histogram(log2_sums(r), a.bins, a.lo, a.hi), prov);
  std::string suffix = "_n" + std::to_string(a.n) + ".csv";
  write_atomic(fs::path(c.out_dir) / ("simulate" + suffix), raw.str());
  write_atomic(fs::path(c.out_dir) / ("histogram" + suffix), hist.str());
  std::cout << "overflow=" << r.overflow << '\n';
  return kPass;
}

int run_figures(FiguresArgs a, const Common& c) {
  a.opt.threads = c.threads;
  std::vector<std::string> names = a.names;
  if (names.empty() || (names.size() == 1 && names[0] == "all")) names = figure_names();
  for (const auto& name : names) {
    figure_columns(name);  // rejects unknown names before any work
  }
  for (const auto& name : names) {
    write_atomic(fs::path(c.out_dir) / (name + ".csv"), figure_csv(name, a.opt, STP_VERSION));
  }
  return kPass;
}

int run_verify(const VerifyArgs& a, const Common& c) {
  VerifyOptions opt;
  opt.suite = a.suite;
  opt.tol = c.tol;
  opt.only = a.only;
  opt.threads = c.threads;
  opt.version = STP_VERSION;
  auto results = run_acceptance(opt, [](const CheckResult& r) { std::cout << format_check_line(r) << std::endl; });
  std::ostringstream os;
  write_verify_json(os, results);
  write_atomic(fs::path(c.out_dir) / a.json, os.str());
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.pass;
  std::cout << results.size() - failed << "/" << results.size() << " checks passed\n";
  return failed == 0 ? kPass : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"St. Petersburg sums: exact laws, semistable limits, bounds and simulation"};
  app.set_version_flag("--version", STP_VERSION);
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool tol, bool threads) {
    sub->add_option("--out-dir", common.out_dir, "directory for output files")->capture_default_str();
    if (tol) {
      sub->add_option("--tol", common.tol, "numerical tolerance")
          ->capture_default_str()
          ->check(CLI::PositiveNumber);
    }
    if (threads) sub->add_option("--threads", common.threads, "worker threads (0: STP_THREADS or hardware)");
  };

  ExactArgs ex;
  auto* exact = app.add_subcommand("exact", "exact laws and tails of S_n to CSV");
  exact->add_option("--n", ex.n, "number of games")->required()->check(CLI::PositiveNumber);
  exact->add_option("--law", ex.law, "sum, cond (given the maximum), ties (tie-inclusive), max, tail")
      ->check(CLI::IsMember({"sum", "cond", "ties", "max", "tail"}))
      ->capture_default_str();
  exact->add_option("--k", ex.k, "exponent of the maximum")->check(CLI::PositiveNumber);
  exact->add_option("--cap", ex.cap, "largest value kept on the lattice");
  exact->add_option("--y-list", ex.ys, "thresholds for --law tail")->delimiter(',');
  add_common(exact, false, false);

  SemistableArgs ss;
  auto* semi = app.add_subcommand("semistable", "tables of G_gamma, G_{j,gamma} and g_{j,gamma}");
  semi->add_option("--gamma", ss.gamma)->check(CLI::Range(0.5, 1.0))->capture_default_str();
  semi->add_option("--j", ss.j, "conditional component; omit for the unconditional law");
  semi->add_option("--what", ss.what)->check(CLI::IsMember({"cdf", "pdf"}))->capture_default_str();
  semi->add_option("--form", ss.form)->check(CLI::IsMember({"printed", "tie_corrected"}))->capture_default_str();
  semi->add_flag("--direct", ss.direct, "invert the unconditional characteristic function directly");
  semi->add_option("--x-min", ss.x_min)->capture_default_str();
  semi->add_option("--x-max", ss.x_max)->capture_default_str();
  semi->add_option("--points", ss.points)->check(CLI::PositiveNumber)->capture_default_str();
  add_common(semi, true, false);

  MergeArgs mg;
  auto* merge = app.add_subcommand("merge", "merging distances across a list of n");
  merge->add_option("--kind", mg.kind)->check(CLI::IsMember({"max", "cond", "sum"}))->capture_default_str();
  merge->add_option("--n-list", mg.n_list)->delimiter(',')->capture_default_str();
  merge->add_option("--j", mg.j, "offset of the maximum for --kind cond")->capture_default_str();
  merge->add_option("--form", mg.form)->check(CLI::IsMember({"printed", "tie_corrected"}))->capture_default_str();
  merge->add_option("--max-distance", mg.max_distance, "fail if any distance exceeds this");
  add_common(merge, true, false);

  TailArgs tl;
  auto* tail = app.add_subcommand("tail", "tail-ratio scans of S_n/n");
  tail->add_option("--mode", tl.mode)->check(CLI::IsMember({"ratio", "period", "finer", "subexp"}))->capture_default_str();
  tail->add_option("--n", tl.n)->check(CLI::PositiveNumber)->capture_default_str();
  tail->add_option("--m", tl.m, "period index")->capture_default_str();
  tail->add_option("--delta", tl.delta, "excluded fraction of each period")->capture_default_str();
  tail->add_option("--c", tl.c, "scale factor for --mode finer")->capture_default_str();
  tail->add_option("--x-max", tl.x_max, "upper end for --mode subexp")->capture_default_str();
  tail->add_option("--points", tl.points)->check(CLI::PositiveNumber)->capture_default_str();
  tail->add_option("--max-dev", tl.max_dev, "fail if sup |statistic - 1| exceeds this");
  add_common(tail, false, false);

  BoundsArgs bd;
  auto* bounds = app.add_subcommand("bounds", "Chernoff and Cantelli curves with domination reports");
  bounds->add_option("--n", bd.n)->check(CLI::PositiveNumber)->capture_default_str();
  bounds->add_option("--j-list", bd.j_list)->delimiter(',')->capture_default_str();
  bounds->add_option("--points", bd.points)->check(CLI::PositiveNumber)->capture_default_str();
  bounds->add_option("--x-max", bd.x_max, "right end of the curve grid")->capture_default_str();
  add_common(bounds, false, false);

  SimulateArgs sm;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo sums and log2 histograms");
  sim->add_option("--n", sm.n)->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--reps", sm.reps)->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--seed", sm.seed)->capture_default_str();
  sim->add_option("--bins", sm.bins)->check(CLI::PositiveNumber)->capture_default_str();
  sim->add_option("--lo", sm.lo, "histogram range in log2 scale")->capture_default_str();
  sim->add_option("--hi", sm.hi)->capture_default_str();
  add_common(sim, false, true);

  FiguresArgs fg;
  auto* figs = app.add_subcommand("figures", "figure and table data files");
  figs->add_option("names", fg.names, "fig1 fig2 fig3 figx2 fig8 table1, or all");
  figs->add_option("--seed", fg.opt.seed)->capture_default_str();
  figs->add_option("--reps", fg.opt.reps)->check(CLI::PositiveNumber)->capture_default_str();
  figs->add_option("--bins", fg.opt.bins)->check(CLI::PositiveNumber)->capture_default_str();
  figs->add_option("--gamma", fg.opt.gamma)->check(CLI::Range(0.5, 1.0))->capture_default_str();
  add_common(figs, false, true);

  VerifyArgs vf;
  auto* verify = app.add_subcommand("verify", "acceptance suite with a JSON summary");
  verify->add_option("--suite", vf.suite)->check(CLI::IsMember({"primary", "all"}))->capture_default_str();
  verify->add_option("--only", vf.only, "check ids, e.g. C1,C7")->delimiter(',');
  verify->add_option("--json", vf.json, "summary file name inside --out-dir")->capture_default_str();
  add_common(verify, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*exact) return run_exact(ex, common);
    if (*semi) return run_semistable(ss, common);
    if (*merge) return run_merge(mg, common);
    if (*tail) return run_tail(tl, common);
    if (*bounds) return run_bounds(bd, common);
    if (*sim) return run_simulate(sm, common);
    if (*figs) return run_figures(fg, common);
    if (*verify) return run_verify(vf, common);
  } catch (const DomainError& e) {
    std::cerr << "precondition violated: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumeric;
  }
  return kUsage;
}
