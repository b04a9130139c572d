#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "thinwall/objectives.hpp"

using namespace thinwall;

namespace {

Box unit_box(double x = 1.0, double y = 1.0) {
  Box b;
  b.hi = {x, y, 0.0};
  return b;
}

ElasticityProblem cantilever() {
  ElasticityProblem pb;
  pb.dirichlet.push_back({{"xmin", {}}, {true, true, true}});
  LoadCondition load;
  load.on = {"xmax", [](const Point& c) { return c[1] < 0.5; }};
  load.traction = {0.0, -1.0, 0.0};
  load.total = 1.0;
  pb.loads.push_back(load);
  return pb;
}

ConstraintSpec spec_for(const SimplicialMesh& m, double beta = 0.9, double h = 0.05) {
  ConstraintSpec s;
  s.volume_fraction = 0.5;
  s.beta = beta;
  s.bandwidth = h;
  s.domain_volume = m.total_volume();
  s.violation_bound = 1e-3 * s.domain_volume;
  return s;
}

Eigen::VectorXd random_design(const SimplicialMesh& m, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(m.num_nodes());
  for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

double rel_max_error(const Eigen::VectorXd& a, const Eigen::VectorXd& ref) {
  return (a - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Volume, Examples) {
  auto m = build_structured(unit_box(2, 1), 2, {6, 3});
  auto s = spec_for(m);
  EXPECT_NEAR(eval_volume(m.make_field(0.0), m, s).value, -0.5, 1e-15);
  EXPECT_NEAR(eval_volume(m.make_field(1.0), m, s).value, 0.5, 1e-15);
  EXPECT_NEAR(eval_volume(m.make_field(0.5), m, s).value, 0.0, 1e-15);
  auto g = eval_volume(m.make_field(0.3), m, s).gradient;
  EXPECT_NEAR(g.sum(), 1.0, 1e-14);
  EXPECT_LT((g - m.lumped_mass() / s.domain_volume).norm(), 1e-15);
}

TEST(Volume, LinearFieldIntegratesExactly) {
  auto m = build_structured(unit_box(2, 1), 2, {5, 4});
  auto s = spec_for(m);
  Eigen::VectorXd x(m.num_nodes());
  for (Index i = 0; i < x.size(); ++i) x[i] = 0.5 * m.node(i)[0];  // mean 0.5
  EXPECT_NEAR(eval_volume(m.make_field(x), m, s).value, 0.0, 1e-14);
}

TEST(MaxSize, Examples) {
  auto m = build_structured(unit_box(2, 1), 2, {6, 3});
  auto s = spec_for(m);
  auto below = eval_maxsize(m.make_field(s.beta - 2 * s.bandwidth), m, s);
  EXPECT_EQ(below.value, -s.violation_bound);
  EXPECT_EQ(below.gradient.cwiseAbs().maxCoeff(), 0.0);
  auto full = eval_maxsize(m.make_field(1.0), m, s);
  EXPECT_NEAR(full.value, s.domain_volume * std::pow(1.0 / s.beta, s.penalty_exponent) - s.violation_bound, 1e-13);
}

TEST(MaxSize, GradientMatchesFiniteDifferences) {
  auto m = build_structured(unit_box(), 2, {6, 6});
  auto s = spec_for(m, 0.6, 0.2);
  s.penalty_exponent = 3.0;
  Eigen::VectorXd x = random_design(m, 8, 0.3, 1.0);
  auto g = eval_maxsize(m.make_field(x), m, s).gradient;
  Eigen::VectorXd fd(x.size());
  const double d = 1e-6;
  for (Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd p = x, q = x;
    p[i] += d;
    q[i] -= d;
    fd[i] = (eval_maxsize(m.make_field(p), m, s).value - eval_maxsize(m.make_field(q), m, s).value) / (2 * d);
  }
  EXPECT_LT(rel_max_error(g, fd), 1e-6);
}

TEST(MaxSize, InflationNeverDecreases) {
  auto m = build_structured(unit_box(), 2, {8, 8});
  auto s = spec_for(m);
  for (unsigned seed = 0; seed < 5; ++seed) {
    Eigen::VectorXd x = random_design(m, seed, 0.7, 1.0);
    double base = eval_maxsize(m.make_field(x), m, s).value;
    for (double delta : {1e-4, 0.01, 0.1}) {
      Eigen::VectorXd y = (x.array() + delta).min(1.0);
      EXPECT_GE(eval_maxsize(m.make_field(y), m, s).value, base);
    }
  }
}

TEST(Compliance, LoadFreeIsZero) {
  auto m = build_structured(unit_box(), 2, {4, 4});
  ElasticityProblem pb = cantilever();
  pb.loads.clear();
  auto c = eval_compliance(pb, m, m.make_field(0.5), 1e-10);
  EXPECT_EQ(c.value, 0.0);
  EXPECT_EQ(c.gradient.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Compliance, EulerRelationForUniformDensity) {
  auto m = build_structured(unit_box(2, 1), 2, {8, 4});
  ElasticityProblem pb = cantilever();
  pb.rho_min = 0.0;
  const double c = 0.4;
  auto f = eval_compliance(pb, m, m.make_field(c), 1e-12, {SolverMethod::direct});
  double element_sum = 0.0;
  for (double g : f.element_gradient) element_sum += g;
  EXPECT_NEAR(element_sum * c, -pb.simp_penalty * f.value, 1e-10 * f.value);
  EXPECT_NEAR(f.gradient.sum() * c, -pb.simp_penalty * f.value, 1e-10 * f.value);
}

TEST(Compliance, GradientMatchesFiniteDifferences) {
  auto m = build_structured(unit_box(2, 1), 2, {8, 4});
  ElasticityProblem pb = cantilever();
  Eigen::VectorXd rho = random_design(m, 21, 0.1, 1.0);
  auto f = eval_compliance(pb, m, m.make_field(rho), 1e-13, {SolverMethod::direct});
  Eigen::VectorXd fd(rho.size());
  const double d = 1e-6;
  for (Index i = 0; i < rho.size(); ++i) {
    Eigen::VectorXd p = rho, q = rho;
    p[i] += d;
    q[i] -= d;
    fd[i] = (eval_compliance(pb, m, m.make_field(p), 1e-13, {SolverMethod::direct}).value -
             eval_compliance(pb, m, m.make_field(q), 1e-13, {SolverMethod::direct}).value) /
            (2 * d);
  }
  EXPECT_LT(rel_max_error(f.gradient, fd), 1e-4);
}

class Composite : public ::testing::Test {
 protected:
  void SetUp() override {
    mesh = build_structured(unit_box(), 2, {8, 8});
    sizes = {0.25, 0.5};
    filters = FilterPair(mesh, sizes);
    problem = cantilever();
  }

  EvalBundle eval(const Eigen::VectorXd& phi, const ConstraintSpec& s) const {
    auto st = forward(mesh, mesh.make_field(phi), filters, sharpness, geometric);
    return evaluate(mesh, st, problem, s, filters, 1e-13, {SolverMethod::direct});
  }

  // Central differences of all three quantities at once.
  std::array<Eigen::VectorXd, 3> finite_differences(const Eigen::VectorXd& phi, const ConstraintSpec& s) const {
    std::array<Eigen::VectorXd, 3> fd;
    for (auto& v : fd) v.resize(phi.size());
    const double d = 1e-6;
    for (Index i = 0; i < phi.size(); ++i) {
      Eigen::VectorXd p = phi, q = phi;
      p[i] += d;
      q[i] -= d;
      auto a = eval(p, s), b = eval(q, s);
      fd[0][i] = (a.F - b.F) / (2 * d);
      fd[1][i] = (a.g1 - b.g1) / (2 * d);
      fd[2][i] = (a.g2 - b.g2) / (2 * d);
    }
    return fd;
  }

  SimplicialMesh mesh;
  FeatureSizeSpec sizes;
  FilterPair filters;
  ElasticityProblem problem;
  double sharpness = 4.0, geometric = 16.0;
};

TEST_F(Composite, AllGradientsMatchFiniteDifferences) {
  auto s = spec_for(mesh, 0.6, 0.2);
  for (unsigned seed : {1u, 2u, 3u}) {
    Eigen::VectorXd phi = random_design(mesh, seed, -0.4, 1.0);
    auto b = eval(phi, s);
    auto fd = finite_differences(phi, s);
    ASSERT_GT(fd[2].cwiseAbs().maxCoeff(), 1e-6) << "detector band not exercised";
    EXPECT_LT(rel_max_error(b.dF_dphi, fd[0]), 1e-4) << seed;
    EXPECT_LT(rel_max_error(b.dg1_dphi, fd[1]), 1e-4) << seed;
    EXPECT_LT(rel_max_error(b.dg2_dphi, fd[2]), 1e-4) << seed;
  }
}

TEST_F(Composite, MaxSizeGradientWithDefaultDetector) {
  // Gentle solid-to-void ramp: rho_bar sweeps through the (0.9, 0.05) band
  // where the geometric projection still has slope.
  auto s = spec_for(mesh);
  Eigen::VectorXd phi(mesh.num_nodes());
  for (Index i = 0; i < phi.size(); ++i) phi[i] = 0.6 * (0.6 - mesh.node(i)[0]);
  phi += 0.02 * random_design(mesh, 4);
  auto b = eval(phi, s);
  auto fd = finite_differences(phi, s);
  ASSERT_GT(fd[2].cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(rel_max_error(b.dg2_dphi, fd[2]), 1e-4);
}

TEST_F(Composite, ZeroDerivativeChainsToZero) {
  auto st = forward(mesh, mesh.make_field(random_design(mesh, 5)), filters, sharpness, geometric);
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(mesh.num_nodes());
  EXPECT_EQ(chain_to_phi(zero, ChainPath::analysis, st, filters).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(chain_to_phi(zero, ChainPath::geometric, st, filters).cwiseAbs().maxCoeff(), 0.0);
}

TEST_F(Composite, GradientStaysFiniteUnderSharpProjection) {
  sharpness = 1e4;
  geometric = 1e5;
  auto b = eval(random_design(mesh, 6, -0.05, 0.05), spec_for(mesh));
  EXPECT_TRUE(b.dF_dphi.allFinite());
  EXPECT_TRUE(b.dg2_dphi.allFinite());
}

TEST_F(Composite, MissingForwardStateIsRejected) {
  DesignState empty;
  try {
    chain_to_phi(Eigen::VectorXd::Ones(mesh.num_nodes()), ChainPath::analysis, empty, filters);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::stale_state);
  }
  auto other = build_structured(unit_box(), 2, {8, 8});
  EXPECT_THROW(forward(other, other.make_field(0.0), filters, 1.0, 8.0), Error);
}

TEST(ConstraintSpecValidation, RejectsBadValues) {
  ConstraintSpec s;
  s.violation_bound = 1e-3;
  EXPECT_NO_THROW(s.validate());
  auto bad = s;
  bad.beta = 0.97;
  bad.bandwidth = 0.05;
  EXPECT_THROW(bad.validate(), Error);
  bad = s;
  bad.volume_fraction = 1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = s;
  bad.violation_bound = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}
