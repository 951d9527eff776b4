#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stp {

struct FigureOptions {
  std::uint64_t seed = 20240601;
  std::uint64_t reps = 100000;
  int bins = 130;       // log2-scale histograms on [7, 20] (fig1, fig2, fig3)
  double gamma = 1.0;   // table1
  unsigned threads = 0;
};

// fig1, fig2, fig3, figx2, fig8, table1
const std::vector<std::string>& figure_names();

// CSV body for one figure, starting with a `# provenance:` line.
std::string figure_csv(const std::string& name, const FigureOptions& opt, const std::string& version);

// Header row expected for each figure.
const std::string& figure_columns(const std::string& name);

// Checks the provenance line, the column header and the field count of every row.
bool figure_schema_ok(const std::string& name, const std::string& csv, std::string* why = nullptr);

// fig8 rows: largest exact_tail - exact_err - bound - truncated_mass (<= 0 means dominated).
double fig8_worst_excess(const std::string& csv);

}  // namespace stp
