#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "thinwall/config.hpp"
#include "thinwall/problems.hpp"
#include "thinwall/vtk.hpp"

using namespace thinwall;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::invalid_spec;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  RunConfig c;
  EXPECT_NO_THROW(validate(c));
  EXPECT_EQ(parse_config(std::string("")), c);
}

TEST(Config, ParsesKeysAndComments) {
  auto c = parse_config(std::string(
      "# comment\nproblem = custom\ndomain.extent = 2, 1\ndomain.cells = 4,2  # trailing\n"
      "bc.fixed = xmin\nload.face = xmax\nload.force = 0, -1\nconstraint.beta = 0.8\nmesh.max_level = 5\n"));
  EXPECT_EQ(c.problem, "custom");
  EXPECT_EQ(c.extent, (std::vector<double>{2.0, 1.0}));
  EXPECT_EQ(c.cells, (std::vector<int>{4, 2}));
  EXPECT_DOUBLE_EQ(c.beta, 0.8);
  ASSERT_TRUE(c.max_level.has_value());
  EXPECT_EQ(*c.max_level, 5);
}

TEST(Config, MinSizeNotBelowMaxRejectedWithInvariant) {
  std::string text = "feature.min_diameter = 0.2\nfeature.max_diameter = 0.1\n";
  EXPECT_EQ(kind_of([&] { parse_config(text); }), ErrorKind::config_invariant);
  EXPECT_NE(message_of([&] { parse_config(text); }).find("min_diameter < feature.max_diameter"), std::string::npos);
  EXPECT_EQ(kind_of([&] { parse_config(std::string("feature.min_diameter = 0.1\nfeature.max_diameter = 0.1\n")); }),
            ErrorKind::config_invariant);
}

TEST(Config, ParseErrorsCarryLineNumbers) {
  auto msg = message_of([] { parse_config(std::string("seed = 1\n\nno.such.key = 3\n")); });
  EXPECT_NE(msg.find(":3:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("no.such.key"), std::string::npos);
  EXPECT_EQ(kind_of([] { parse_config(std::string("seed = 1\nseed = 2\n")); }), ErrorKind::parse_error);
  EXPECT_EQ(kind_of([] { parse_config(std::string("constraint.beta = abc\n")); }), ErrorKind::parse_error);
  EXPECT_EQ(kind_of([] { parse_config(std::string("just a line\n")); }), ErrorKind::parse_error);
}

TEST(Config, InvariantViolations) {
  for (const char* text : {"constraint.beta = 0.97\nconstraint.bandwidth = 0.05\n", "constraint.volume_fraction = 1\n",
                           "problem = banana\n", "optimizer.max_iterations = 0\n", "problem = custom\n"})
    EXPECT_EQ(kind_of([&] { parse_config(std::string(text)); }), ErrorKind::config_invariant) << text;
}

TEST(Config, SerializeRoundTrips) {
  RunConfig c;
  c.problem = "twisted_ball";
  c.min_diameter = 0.1 / 3.0;
  c.volume_fraction = 0.123456789012345;
  c.schedule.sharpness_max = 48;
  c.adapt = false;
  c.seed = 7;
  c.max_level = 6;
  c.solver = SolverMethod::direct;
  c.load_window_lo = {0.1, 0.2, 0.3};
  c.load_window_hi = {0.4, 0.5, 0.6};
  EXPECT_EQ(parse_config(serialize(c)), c);
  EXPECT_EQ(parse_config(serialize(RunConfig{})), RunConfig{});
  EXPECT_NE(config_reference().find("constraint.beta"), std::string::npos);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([] { load_config("/nonexistent/dir/run.cfg"); }), ErrorKind::io_error);
}

TEST(Problems, CantileverDefaults) {
  RunConfig c;
  auto s = make_problem(c);
  EXPECT_EQ(s.dimension, 2);
  EXPECT_FALSE(s.approximate);
  EXPECT_DOUBLE_EQ(finest_cell_size(s), 1.0 / 36.0);
  auto m = initial_mesh(s);
  EXPECT_EQ(m.num_elements(), 5184);
  EXPECT_NEAR(m.lumped_mass().sum(), 2.0, 1e-12);
  auto f = feature_sizes(c, s);
  EXPECT_NEAR(f.min_diameter, 4.0 / 36.0, 1e-15);
  EXPECT_NEAR(f.max_diameter, 8.0 / 36.0, 1e-15);
  // Unit total load on the right edge, all downward.
  auto loads = assemble_loads(m, s.elasticity);
  double fy = 0.0, fx = 0.0;
  for (Index i = 0; i < m.num_nodes(); ++i) {
    fx += loads[2 * i];
    fy += loads[2 * i + 1];
  }
  EXPECT_NEAR(fy, -1.0, 1e-12);
  EXPECT_NEAR(fx, 0.0, 1e-14);
}

TEST(Problems, ThreeDimensionalSetupsCarryUnitLoad) {
  for (const char* name : {"sheared_beam", "twisted_ball", "multi_cube"}) {
    RunConfig c;
    c.problem = name;
    c.initial_level = 0;
    auto s = make_problem(c);
    EXPECT_EQ(s.dimension, 3);
    EXPECT_TRUE(s.approximate);
    auto m = initial_mesh(s);
    auto f = assemble_loads(m, s.elasticity);
    double total = 0.0;
    for (Index i = 0; i < m.num_nodes(); ++i) total += Eigen::Vector3d(f[3 * i], f[3 * i + 1], f[3 * i + 2]).norm();
    EXPECT_GT(total, 0.0) << name;
    // Supports prevent rigid motion: the full-density system is SPD.
    auto sys = assemble_elasticity(m, m.make_field(1.0), s.elasticity);
    EXPECT_NO_THROW(solve(sys, 1e-10, {SolverMethod::direct})) << name;
  }
}

TEST(Problems, TwistedBallTorqueHasNoNetForce) {
  RunConfig c;
  c.problem = "twisted_ball";
  c.initial_level = 0;
  auto s = make_problem(c);
  auto m = initial_mesh(s);
  auto f = assemble_loads(m, s.elasticity);
  Eigen::Vector3d net = Eigen::Vector3d::Zero();
  double torque = 0.0;
  for (Index i = 0; i < m.num_nodes(); ++i) {
    Eigen::Vector3d fi(f[3 * i], f[3 * i + 1], f[3 * i + 2]);
    net += fi;
    torque += (m.node(i)[0] - 0.5) * fi[1] - (m.node(i)[1] - 0.5) * fi[0];
  }
  EXPECT_LT(net.norm(), 1e-12);
  EXPECT_GT(torque, 0.0);
}

TEST(Problems, FeatureSizesChecked) {
  RunConfig c;
  c.min_diameter = 0.5;
  c.max_diameter = 1.5;  // not below the unit height
  auto s = make_problem(c);
  EXPECT_EQ(kind_of([&] { feature_sizes(c, s); }), ErrorKind::config_invariant);
}

TEST(Problems, CustomProblem) {
  auto c = parse_config(std::string(
      "problem = custom\ndomain.extent = 1, 1\ndomain.cells = 2, 2\nbc.fixed = ymin\nload.face = ymax\n"
      "load.force = 0.5, 0\nmesh.initial_level = 2\n"));
  auto s = make_problem(c);
  auto m = initial_mesh(s);
  EXPECT_EQ(m.num_elements(), 32);
  auto f = assemble_loads(m, s.elasticity);
  double fx = 0.0;
  for (Index i = 0; i < m.num_nodes(); ++i) fx += f[2 * i];
  EXPECT_NEAR(fx, 0.5, 1e-13);
}

namespace {

struct VtkFixture : ::testing::Test {
  SimplicialMesh mesh = build_structured(Box{{0, 0, 0}, {1, 1, 0}}, 2, {4, 4});
  FeatureSizeSpec sizes{0.25, 0.5};
  FilterPair filters{mesh, sizes};
  DesignState state;
  ElementIndicator w;

  void SetUp() override {
    Eigen::VectorXd x(mesh.num_nodes());
    for (Index i = 0; i < mesh.num_nodes(); ++i) x[i] = std::sin(3.0 * mesh.node(i)[0]) - 0.3;
    state = forward(mesh, mesh.make_field(x), filters, 2.0, 8.0);
    w = error_indicator(mesh, state.rho, 0.5);
  }
  std::string temp(const std::string& tag) const { return ::testing::TempDir() + "thinwall_" + tag + ".vtk"; }
};

}  // namespace

TEST_F(VtkFixture, ArraysAndCountsRoundTrip) {
  auto path = temp("a");
  export_vtk(mesh, state, w, path);
  auto s = read_vtk_summary(path);
  EXPECT_EQ(s.points, mesh.num_nodes());
  EXPECT_EQ(s.cells, mesh.num_elements());
  EXPECT_EQ(s.cell_types.at(5), mesh.num_elements());
  EXPECT_EQ(s.point_arrays, (std::vector<std::string>{"phi", "phi_tilde", "rho", "rho_tilde", "rho_bar"}));
  EXPECT_EQ(s.cell_arrays, (std::vector<std::string>{"w"}));
  EXPECT_DOUBLE_EQ(s.ranges.at("rho_bar").second, state.rho_bar.values.maxCoeff());
  std::remove(path.c_str());
}

TEST_F(VtkFixture, OutputIsByteIdentical) {
  EXPECT_EQ(vtk_text(mesh, state, w), vtk_text(mesh, state, w));
  auto a = temp("b1"), b = temp("b2");
  export_vtk(mesh, state, w, a);
  export_vtk(mesh, state, w, b);
  std::ifstream fa(a), fb(b);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  EXPECT_EQ(sa.str(), sb.str());
  std::remove(a.c_str());
  std::remove(b.c_str());
}

TEST_F(VtkFixture, TetrahedraUseType10) {
  SimplicialMesh m3 = build_structured(Box{{0, 0, 0}, {1, 1, 1}}, 3, {2, 2, 2});
  FilterPair f3(m3, sizes);
  auto st = forward(m3, m3.make_field(0.1), f3, 2.0, 8.0);
  auto w3 = error_indicator(m3, st.rho, 0.5);
  auto path = temp("c");
  export_vtk(m3, st, w3, path);
  auto s = read_vtk_summary(path);
  EXPECT_EQ(s.cell_types.at(10), m3.num_elements());
  std::remove(path.c_str());
}

TEST_F(VtkFixture, Failures) {
  auto msg = message_of([&] { export_vtk(mesh, state, w, "/nonexistent/dir/x.vtk"); });
  EXPECT_NE(msg.find("/nonexistent/dir/x.vtk"), std::string::npos);
  EXPECT_EQ(kind_of([&] { export_vtk(mesh, state, w, "/nonexistent/dir/x.vtk"); }), ErrorKind::io_error);
  SimplicialMesh other = build_structured(Box{{0, 0, 0}, {1, 1, 0}}, 2, {4, 4});
  EXPECT_EQ(kind_of([&] { vtk_text(other, state, w); }), ErrorKind::stale_state);
  auto path = temp("bad");
  std::ofstream(path) << "hello\n";
  EXPECT_EQ(kind_of([&] { read_vtk_summary(path); }), ErrorKind::parse_error);
  std::remove(path.c_str());
}
