#pragma once

#include <cmath>
#include <memory>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "thinwall/error.hpp"
#include "thinwall/fem.hpp"
#include "thinwall/mesh.hpp"

namespace thinwall {

/// PDE radius equivalent to a feature diameter R of a classical filter.
inline double radius_from_diameter(double diameter) {
  if (!(diameter >= 0.0)) throw Error(ErrorKind::invalid_spec, "feature diameter must be non-negative");
  return diameter / (2.0 * std::sqrt(3.0));
}

struct FeatureSizeSpec {
  double min_diameter = 0.0;
  double max_diameter = 0.0;

  void validate() const {
    if (!(min_diameter > 0.0 && min_diameter < max_diameter))
      throw Error(ErrorKind::invalid_spec, "feature sizes must satisfy 0 < min_diameter < max_diameter");
  }
  double min_radius() const { return radius_from_diameter(min_diameter); }
  double max_radius() const { return radius_from_diameter(max_diameter); }
};

/// Factorized Neumann Helmholtz operator K = r^2 S + M on one mesh version.
/// Immutable once built; copies share the factorization.
class FilterOperator {
 public:
  FilterOperator() = default;

  FilterOperator(const SimplicialMesh& mesh, double radius)
      : radius_(radius), mesh_version_(mesh.version()), state_(std::make_shared<State>()) {
    SparseSystem k = assemble_helmholtz(mesh, radius);
    state_->mass = assemble_mass(mesh);
    state_->factor.compute(Eigen::SparseMatrix<double>(k.matrix));
    if (state_->factor.info() != Eigen::Success)
      throw Error(ErrorKind::assembly_error, "Helmholtz operator factorization failed");
  }

  double radius() const { return radius_; }
  std::uint64_t mesh_version() const { return mesh_version_; }
  bool valid() const { return static_cast<bool>(state_); }
  bool bound_to(const SimplicialMesh& mesh) const { return valid() && mesh_version_ == mesh.version(); }
  const Eigen::SparseMatrix<double>& mass() const { return state_->mass; }

  /// K^-1 b.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    if (!valid()) throw Error(ErrorKind::stale_state, "filter operator has not been built");
    if (b.size() != state_->mass.rows()) throw Error(ErrorKind::stale_field, "vector size does not match the filter mesh");
    return state_->factor.solve(b);
  }

  void require_bound(const NodalField& g) const {
    if (!valid()) throw Error(ErrorKind::stale_state, "filter operator has not been built");
    if (g.mesh_version != mesh_version_ || g.size() != state_->mass.rows())
      throw Error(ErrorKind::stale_field, "field is not bound to the filter's mesh version");
  }

 private:
  struct State {
    Eigen::SparseMatrix<double> mass;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> factor;
  };
  double radius_ = 0.0;
  std::uint64_t mesh_version_ = 0;
  std::shared_ptr<State> state_;
};

/// Solution y of -r^2 lap y + y = g with natural boundary conditions.
inline NodalField apply_filter(const FilterOperator& op, const NodalField& g) {
  op.require_bound(g);
  return {op.solve(op.mass() * g.values), g.mesh_version};
}

/// Adjoint under the mass inner product; the operator is M-self-adjoint.
inline NodalField apply_filter_adjoint(const FilterOperator& op, const NodalField& g) { return apply_filter(op, g); }

/// Euclidean transpose M K^-1 v, for chaining derivative vectors whose
/// entries are partials with respect to nodal values.
inline Eigen::VectorXd apply_filter_transpose(const FilterOperator& op, const Eigen::VectorXd& v) {
  return op.mass() * op.solve(v);
}

}  // namespace thinwall
