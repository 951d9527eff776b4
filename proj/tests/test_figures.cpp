#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "stp/core.hpp"
#include "stp/figures.hpp"
#include "stp/verify.hpp"

using namespace stp;

namespace {

FigureOptions small() {
  FigureOptions o;
  o.reps = 4000;
  o.bins = 40;
  return o;
}

}  // namespace

TEST_CASE("every figure matches its schema") {
  for (const auto& name : figure_names()) {
    std::string why;
    auto csv = figure_csv(name, small(), "test");
    CHECK_MESSAGE(figure_schema_ok(name, csv, &why), name << ": " << why);
    CHECK(csv.rfind("# provenance: command=figures " + name + ", version=test, seed=", 0) == 0);
  }
  CHECK_THROWS_AS(figure_csv("fig9", small(), "test"), DomainError);
  CHECK_FALSE(figure_schema_ok("table1", "j,p\n0,1\n"));
  CHECK_FALSE(figure_schema_ok("table1", "# provenance: command=figures table1\nj,p\n0,x\n"));
}

TEST_CASE("figures are deterministic given the seed") {
  auto o = small();
  CHECK(figure_csv("fig1", o, "v") == figure_csv("fig1", o, "v"));
  o.threads = 3;
  CHECK(figure_csv("fig3", o, "v") == figure_csv("fig3", small(), "v"));
  o.seed += 1;
  CHECK(figure_csv("fig1", o, "v") != figure_csv("fig1", small(), "v"));
}

TEST_CASE("table1 rows") {
  const double table[] = {0.018, 0.117, 0.233, 0.239, 0.172, 0.104, 0.057, 0.03};
  std::istringstream is(figure_csv("table1", small(), "v"));
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line == "j,p") continue;
    int j = std::stoi(line.substr(0, line.find(',')));
    double p = std::stod(line.substr(line.find(',') + 1));
    CHECK(std::fabs(p - table[j + 2]) <= 1e-3);
    ++rows;
  }
  CHECK(rows == 8);
}

TEST_CASE("fig8 bound dominates the exact tail") {
  CHECK(fig8_worst_excess(figure_csv("fig8", small(), "v")) <= 0.0);
}

TEST_CASE("verify plumbing") {
  CHECK(check_ids().front() == "C1");
  VerifyOptions opt;
  opt.only = {"C2"};
  auto rs = run_acceptance(opt);
  REQUIRE(rs.size() == 1);
  CHECK(rs[0].pass);
  std::ostringstream os;
  write_verify_json(os, rs);
  CHECK(os.str().find("\"check_id\": \"C2\"") != std::string::npos);
  CHECK(os.str().find("\"status\": \"pass\"") != std::string::npos);
  opt.only = {"C99"};
  CHECK_THROWS_AS(run_acceptance(opt), DomainError);
  opt.only = {};
  opt.tol = 0.0;
  CHECK_THROWS_AS(run_acceptance(opt), DomainError);
}
