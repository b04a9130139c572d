#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "thinwall/error.hpp"
#include "thinwall/fem.hpp"
#include "thinwall/filter.hpp"
#include "thinwall/mesh.hpp"
#include "thinwall/projection.hpp"

namespace thinwall {

struct ConstraintSpec {
  double volume_fraction = 0.5;   // V*
  double beta = 0.9;
  double bandwidth = 0.05;        // h
  double penalty_exponent = 2.0;  // eta
  double violation_bound = 0.0;   // eps*, volume units
  double domain_volume = 1.0;     // V0

  void validate() const {
    if (!(volume_fraction > 0.0 && volume_fraction < 1.0))
      throw Error(ErrorKind::invalid_spec, "volume fraction must lie in (0, 1)");
    if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorKind::invalid_spec, "beta must lie in (0, 1)");
    if (!(bandwidth > 0.0)) throw Error(ErrorKind::invalid_spec, "detector bandwidth must be positive");
    if (!(beta + bandwidth < 1.0)) throw Error(ErrorKind::invalid_spec, "beta + h must be below 1");
    if (!(penalty_exponent >= 1.0)) throw Error(ErrorKind::invalid_spec, "penalty exponent must be at least 1");
    if (!(domain_volume > 0.0)) throw Error(ErrorKind::invalid_spec, "domain volume must be positive");
    if (!(violation_bound > 0.0 && violation_bound < 0.1 * domain_volume))
      throw Error(ErrorKind::invalid_spec, "violation bound must be positive and small against the domain volume");
  }
};

struct ScalarAndGradient {
  double value = 0.0;
  Eigen::VectorXd gradient;  // partials with respect to nodal values
};

/// g1 = (1/V0) int rho - V*. P1 fields integrate exactly with lumped weights.
inline ScalarAndGradient eval_volume(const NodalField& rho, const SimplicialMesh& mesh, const ConstraintSpec& spec) {
  mesh.require_bound(rho, "density field");
  Eigen::VectorXd lumped = mesh.lumped_mass();
  return {lumped.dot(rho.values) / spec.domain_volume - spec.volume_fraction, lumped / spec.domain_volume};
}

/// g2 = int H^(rho_bar - beta, h) (rho_bar / beta)^eta - eps*, nodal quadrature.
inline ScalarAndGradient eval_maxsize(const NodalField& rho_bar, const SimplicialMesh& mesh,
                                      const ConstraintSpec& spec) {
  mesh.require_bound(rho_bar, "filtered density");
  Eigen::VectorXd lumped = mesh.lumped_mass();
  ScalarAndGradient out{-spec.violation_bound, Eigen::VectorXd::Zero(rho_bar.size())};
  const double eta = spec.penalty_exponent;
  for (Index i = 0; i < rho_bar.size(); ++i) {
    const double x = rho_bar.values[i];
    auto hd = detector(x - spec.beta, spec.bandwidth);
    if (hd.value == 0.0 && hd.slope == 0.0) continue;
    const double ratio = std::max(x, 0.0) / spec.beta;
    const double pw = std::pow(ratio, eta);
    out.value += lumped[i] * hd.value * pw;
    out.gradient[i] = lumped[i] * (hd.slope * pw + hd.value * eta * std::pow(ratio, eta - 1.0) / spec.beta);
  }
  return out;
}

/// Volume where the detector fires, weighted by its value.
inline double detector_active_volume(const NodalField& rho_bar, const SimplicialMesh& mesh,
                                     const ConstraintSpec& spec) {
  Eigen::VectorXd lumped = mesh.lumped_mass();
  double v = 0.0;
  for (Index i = 0; i < rho_bar.size(); ++i) v += lumped[i] * detector(rho_bar.values[i] - spec.beta, spec.bandwidth).value;
  return v;
}

struct ComplianceEval {
  double value = 0.0;
  Eigen::VectorXd gradient;          // nodal
  std::vector<double> element_gradient;
  DisplacementField displacement;
  SolverStats stats;
};

/// F = 1/2 u^T K u with the adjoint-free sensitivity. Element partials are
/// scattered to nodes through the transpose of the nodal-to-element average.
inline ComplianceEval eval_compliance(const ElasticityProblem& problem, const SimplicialMesh& mesh,
                                      const NodalField& rho, double tol, const SolverOptions& options = {}) {
  ComplianceEval out;
  out.displacement = solve_elasticity(mesh, rho, problem, tol, options, &out.stats);
  auto c = compliance_and_strain_energy(mesh, rho, problem, out.displacement);
  out.value = c.compliance;
  out.element_gradient.resize(mesh.num_elements());
  out.gradient = Eigen::VectorXd::Zero(mesh.num_nodes());
  const double share = 1.0 / (mesh.dimension() + 1);
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    double rho_e = mesh.element_average(rho.values, e);
    double de = -problem.modulus_derivative(rho_e) / problem.youngs_modulus * c.unit_energy[e];
    out.element_gradient[e] = de;
    for (Index n : mesh.element(e)) out.gradient[n] += share * de;
  }
  return out;
}

/// The two Helmholtz operators of the pipeline on one mesh version.
struct FilterPair {
  FilterOperator min_filter;  // r_min, on phi
  FilterOperator max_filter;  // r_max, on rho~

  FilterPair() = default;
  FilterPair(const SimplicialMesh& mesh, const FeatureSizeSpec& sizes)
      : min_filter(mesh, sizes.min_radius()), max_filter(mesh, sizes.max_radius()) {}
  bool bound_to(const SimplicialMesh& mesh) const { return min_filter.bound_to(mesh) && max_filter.bound_to(mesh); }
};

/// Every field of the forward map phi -> phi~ -> (rho, rho~) -> rho_bar,
/// together with the projection slopes needed by the chain rule.
struct DesignState {
  NodalField phi, phi_tilde, rho, rho_tilde, rho_bar;
  Eigen::VectorXd rho_slope, rho_tilde_slope;
  double sharpness = 0.0, geometric_sharpness = 0.0;

  std::uint64_t mesh_version() const { return phi.mesh_version; }
  bool complete() const {
    const Index n = phi.size();
    return n > 0 && phi_tilde.size() == n && rho.size() == n && rho_tilde.size() == n && rho_bar.size() == n &&
           rho_slope.size() == n && rho_tilde_slope.size() == n;
  }
};

inline DesignState forward(const SimplicialMesh& mesh, const NodalField& phi, const FilterPair& filters, double s,
                           double s_g) {
  mesh.require_bound(phi, "design field");
  if (!filters.bound_to(mesh)) throw Error(ErrorKind::stale_state, "filters were built for another mesh version");
  DesignState st;
  st.phi = phi;
  st.sharpness = s;
  st.geometric_sharpness = s_g;
  st.phi_tilde = apply_filter(filters.min_filter, phi);
  auto rho = project_analysis(st.phi_tilde, s);
  auto rho_tilde = project_geometric(st.phi_tilde, s_g, s);
  st.rho = std::move(rho.values);
  st.rho_slope = std::move(rho.slope);
  st.rho_tilde = std::move(rho_tilde.values);
  st.rho_tilde_slope = std::move(rho_tilde.slope);
  st.rho_bar = apply_filter(filters.max_filter, st.rho_tilde);
  return st;
}

enum class ChainPath { analysis, geometric };

/// Pulls a derivative vector with respect to rho (analysis path) or rho_bar
/// (geometric path) back to phi.
inline Eigen::VectorXd chain_to_phi(const Eigen::VectorXd& d, ChainPath path, const DesignState& state,
                                    const FilterPair& filters) {
  if (!state.complete()) throw Error(ErrorKind::stale_state, "forward fields are missing; run the forward map first");
  if (filters.min_filter.mesh_version() != state.mesh_version() ||
      filters.max_filter.mesh_version() != state.mesh_version())
    throw Error(ErrorKind::stale_state, "filters and forward state belong to different mesh versions");
  if (d.size() != state.phi.size()) throw Error(ErrorKind::stale_field, "derivative has the wrong length");
  if (path == ChainPath::analysis)
    return apply_filter_transpose(filters.min_filter, state.rho_slope.cwiseProduct(d));
  Eigen::VectorXd through_max = apply_filter_transpose(filters.max_filter, d);
  return apply_filter_transpose(filters.min_filter, state.rho_tilde_slope.cwiseProduct(through_max));
}

struct EvalBundle {
  double F = 0.0, g1 = 0.0, g2 = 0.0;
  Eigen::VectorXd dF_dphi, dg1_dphi, dg2_dphi;
  double max_rho_bar = 0.0;
  double volume_fraction = 0.0;
  double detector_active_volume = 0.0;
  std::uint64_t mesh_version = 0;
  DisplacementField displacement;
  SolverStats stats;
};

inline EvalBundle evaluate(const SimplicialMesh& mesh, const DesignState& state, const ElasticityProblem& problem,
                           const ConstraintSpec& spec, const FilterPair& filters, double tol,
                           const SolverOptions& options = {}) {
  if (state.mesh_version() != mesh.version()) throw Error(ErrorKind::stale_state, "design state is for another mesh");
  EvalBundle b;
  b.mesh_version = mesh.version();
  auto f = eval_compliance(problem, mesh, state.rho, tol, options);
  auto v = eval_volume(state.rho, mesh, spec);
  auto g = eval_maxsize(state.rho_bar, mesh, spec);
  b.F = f.value;
  b.g1 = v.value;
  b.g2 = g.value;
  b.dF_dphi = chain_to_phi(f.gradient, ChainPath::analysis, state, filters);
  b.dg1_dphi = chain_to_phi(v.gradient, ChainPath::analysis, state, filters);
  b.dg2_dphi = chain_to_phi(g.gradient, ChainPath::geometric, state, filters);
  b.max_rho_bar = state.rho_bar.values.maxCoeff();
  b.volume_fraction = v.value + spec.volume_fraction;
  b.detector_active_volume = detector_active_volume(state.rho_bar, mesh, spec);
  b.displacement = std::move(f.displacement);
  b.stats = f.stats;
  return b;
}

}  // namespace thinwall
