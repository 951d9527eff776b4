#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace stp {

struct CheckResult {
  std::string check_id;
  bool pass = false;
  double value = 0.0;      // headline statistic
  double tolerance = 0.0;  // threshold it is compared with
  std::string detail;      // every sub-check and diagnostic
  double seconds = 0.0;
  double time_limit = 0.0;
};

struct VerifyOptions {
  std::string suite = "primary";
  double tol = 1e-6;  // inversion tolerance for the semistable checks
  std::vector<std::string> only;  // check ids; empty runs all
  unsigned threads = 0;
  std::string version = "dev";
};

const std::vector<std::string>& check_ids();

// Runs the acceptance checks in order, reporting each as it finishes.
std::vector<CheckResult> run_acceptance(const VerifyOptions& opt,
                                        const std::function<void(const CheckResult&)>& on_result = {});

std::string format_check_line(const CheckResult& r);

// [{"check_id", "status", "value", "tolerance", ...}]
void write_verify_json(std::ostream& out, const std::vector<CheckResult>& results);

}  // namespace stp
