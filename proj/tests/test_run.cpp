#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "thinwall/run.hpp"

using namespace thinwall;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
  RunConfig c = parse_config(std::string(
      "problem = custom\ndomain.extent = 2, 1\ndomain.cells = 4, 2\nbc.fixed = xmin\nload.face = xmax\n"
      "load.force = 0, -1\nmesh.initial_level = 6\nconstraint.volume_fraction = 0.4\n"
      "optimizer.max_iterations = 25\nmesh.cadence = 5\nprojection.stage_length = 10\n"));
  c.output_directory.clear();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& tag) {
  fs::path p = fs::path(::testing::TempDir()) / ("thinwall_run_" + tag);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Run, LogHasOneRowPerIterationWithinBudget) {
  RunConfig c = small_config();
  auto r = run(c);
  ASSERT_FALSE(r.log.empty());
  EXPECT_LE(static_cast<int>(r.log.size()), c.limits.max_iterations);
  for (std::size_t i = 0; i < r.log.size(); ++i) EXPECT_EQ(r.log[i].iteration, static_cast<int>(i));
  EXPECT_EQ(r.log.back().elements, r.mesh.num_elements());
  EXPECT_NE(r.reason, TerminationStatus::proceed);
  EXPECT_EQ(r.state.mesh_version(), r.mesh.version());
  EXPECT_FALSE(r.remesh_iterations.empty());
}

TEST(Run, DesignStaysInBox) {
  RunConfig c = small_config();
  c.init_perturbation = 0.5;
  c.seed = 3;
  auto r = run(c);
  EXPECT_GE(r.state.phi.values.minCoeff(), -1.0);
  EXPECT_LE(r.state.phi.values.maxCoeff(), 1.0);
  for (const auto& row : r.log) {
    EXPECT_TRUE(std::isfinite(row.F));
    EXPECT_GE(row.max_rho_bar, 0.0);
  }
}

TEST(Run, IdenticalConfigsGiveIdenticalRuns) {
  RunConfig c = small_config();
  c.init_perturbation = 0.2;
  c.seed = 11;
  auto a = run(c), b = run(c);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].F, b.log[i].F);
    EXPECT_EQ(a.log[i].g1, b.log[i].g1);
    EXPECT_EQ(a.log[i].g2, b.log[i].g2);
    EXPECT_EQ(a.log[i].max_rho_bar, b.log[i].max_rho_bar);
    EXPECT_EQ(a.log[i].elements, b.log[i].elements);
  }
  EXPECT_EQ(a.state.phi.values, b.state.phi.values);
  EXPECT_EQ(a.state.rho_bar.values, b.state.rho_bar.values);
}

TEST(Run, SeedChangesThePerturbedStart) {
  RunConfig c = small_config();
  c.init_perturbation = 0.2;
  c.limits.max_iterations = 1;
  c.seed = 1;
  auto a = run(c);
  c.seed = 2;
  auto b = run(c);
  EXPECT_NE(a.state.phi.values, b.state.phi.values);
}

TEST(Run, WritesLogSnapshotsAndStatus) {
  RunConfig c = small_config();
  c.limits.max_iterations = 12;
  auto dir = scratch("artifacts");
  c.output_directory = dir.string();
  auto r = run(c);
  auto log = slurp(dir / "log.csv");
  std::istringstream lines(log);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "iter,F,g1,g2,max_rhobar,elements,seconds");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(r.log.size()));
  EXPECT_TRUE(fs::exists(dir / "design_0000.vtk"));
  EXPECT_TRUE(fs::exists(dir / "design_0010.vtk"));
  EXPECT_TRUE(fs::exists(dir / "design_0011.vtk"));  // final
  EXPECT_EQ(slurp(dir / "status.txt"), std::string(to_string(r.reason)) + "\n");
  auto final_vtk = read_vtk_summary((dir / "design_0011.vtk").string());
  EXPECT_EQ(final_vtk.cells, r.mesh.num_elements());
  for (const auto& a : r.artifacts) EXPECT_TRUE(fs::exists(a)) << a;
  fs::remove_all(dir);
}

TEST(Run, FailureLeavesFlushedLogAndRecord) {
  RunConfig c = small_config();
  auto dir = scratch("failure");
  c.output_directory = dir.string();
  auto observer = [](const LogRow& row) {
    if (row.iteration == 3) throw Error(ErrorKind::convergence_failure, "injected");
  };
  try {
    run(c, observer);
    FAIL() << "run did not propagate the error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::convergence_failure);
  }
  auto status = slurp(dir / "status.txt");
  EXPECT_EQ(status.rfind("failed at iteration 3", 0), 0u) << status;
  EXPECT_NE(status.find("injected"), std::string::npos);
  std::istringstream lines(slurp(dir / "log.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 4);
  fs::remove_all(dir);
}

TEST(Run, InvalidConfigRejectedBeforeWork) {
  RunConfig c = small_config();
  c.volume_fraction = 1.5;
  EXPECT_THROW(run(c), Error);
}

TEST(Run, UnconstrainedRunKeepsVolumeFeasible) {
  RunConfig c = small_config();
  c.enable_max = false;
  c.limits.max_iterations = 40;
  auto r = run(c);
  EXPECT_LE(r.log.back().g1, 1e-3);
}
