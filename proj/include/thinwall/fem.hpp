#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "thinwall/error.hpp"
#include "thinwall/mesh.hpp"
#include "thinwall/parallel.hpp"

namespace thinwall {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;
using VectorFunction = std::function<Eigen::Vector3d(const Point&)>;
using PointPredicate = std::function<bool(const Point&)>;

/// Picks boundary entities: those on `region` (any boundary region when
/// empty) that also satisfy `where`. Nodes are tested at their position,
/// facets at their centroid.
struct BoundarySelector {
  std::string region;
  PointPredicate where;
};

struct DirichletCondition {
  BoundarySelector on;
  std::array<bool, 3> axes{true, true, true};
  Eigen::Vector3d value = Eigen::Vector3d::Zero();
  VectorFunction value_fn;  // overrides `value` when set
};

/// Surface traction. With `total > 0` the traction is rescaled so that the
/// integral of |t| over the selected facets equals `total`.
struct LoadCondition {
  BoundarySelector on;
  Eigen::Vector3d traction = Eigen::Vector3d::Zero();
  VectorFunction traction_fn;  // overrides `traction` when set
  double total = 0.0;
};

struct ElasticityProblem {
  double youngs_modulus = 1.0;
  double poisson_ratio = 0.3;
  double simp_penalty = 3.0;
  double rho_min = 1e-6;
  std::vector<DirichletCondition> dirichlet;
  std::vector<LoadCondition> loads;

  void validate() const {
    if (!(youngs_modulus > 0.0)) throw Error(ErrorKind::invalid_spec, "Young's modulus must be positive");
    if (!(poisson_ratio > 0.0 && poisson_ratio < 0.5))
      throw Error(ErrorKind::invalid_spec, "Poisson ratio must lie in (0, 0.5)");
    if (!(simp_penalty >= 1.0)) throw Error(ErrorKind::invalid_spec, "SIMP penalty must be at least 1");
    // rho_min = 0 is bare SIMP: fine for analysis, singular in void.
    if (!(rho_min >= 0.0 && rho_min < 0.1)) throw Error(ErrorKind::invalid_spec, "rho_min must lie in [0, 0.1)");
  }

  /// Modified SIMP: E0 (rho_min + (1 - rho_min) rho^P).
  double modulus(double rho) const {
    return youngs_modulus * (rho_min + (1.0 - rho_min) * std::pow(rho, simp_penalty));
  }
  double modulus_derivative(double rho) const {
    return youngs_modulus * (1.0 - rho_min) * simp_penalty * std::pow(rho, simp_penalty - 1.0);
  }
};

/// Linear system after Dirichlet elimination. `dof_map` sends a full dof
/// (node * dim + axis) to its equation, or -1 when prescribed.
struct SparseSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
  std::vector<Index> dof_map;
  Eigen::VectorXd prescribed;
  std::uint64_t mesh_version = 0;

  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd full = prescribed;
    for (std::size_t i = 0; i < dof_map.size(); ++i)
      if (dof_map[i] >= 0) full[static_cast<Index>(i)] = reduced[dof_map[i]];
    return full;
  }
};

/// Nodal displacement, node-major (node * dim + axis).
struct DisplacementField {
  Eigen::VectorXd values;
  std::uint64_t mesh_version = 0;
};

/// Isotropic constitutive matrix; plane stress in 2D, engineering shear.
inline Eigen::MatrixXd constitutive_matrix(int dim, double E, double nu) {
  if (dim == 2) {
    Eigen::MatrixXd d(3, 3);
    double c = E / (1.0 - nu * nu);
    d << c, c * nu, 0.0, c * nu, c, 0.0, 0.0, 0.0, c * (1.0 - nu) / 2.0;
    return d;
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(6, 6);
  double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
  double mu = E / (2.0 * (1.0 + nu));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) d(i, j) = lambda;
    d(i, i) = lambda + 2.0 * mu;
    d(i + 3, i + 3) = mu;
  }
  return d;
}

/// Strain-displacement matrix of a linear simplex.
inline Eigen::MatrixXd strain_matrix(const SimplexGeometry& g, int dim) {
  const int n = dim + 1;
  if (dim == 2) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(3, 2 * n);
    for (int i = 0; i < n; ++i) {
      b(0, 2 * i) = g.grad[i][0];
      b(1, 2 * i + 1) = g.grad[i][1];
      b(2, 2 * i) = g.grad[i][1];
      b(2, 2 * i + 1) = g.grad[i][0];
    }
    return b;
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(6, 3 * n);
  for (int i = 0; i < n; ++i) {
    const auto& gr = g.grad[i];
    b(0, 3 * i) = gr[0];
    b(1, 3 * i + 1) = gr[1];
    b(2, 3 * i + 2) = gr[2];
    b(3, 3 * i + 1) = gr[2];
    b(3, 3 * i + 2) = gr[1];
    b(4, 3 * i) = gr[2];
    b(4, 3 * i + 2) = gr[0];
    b(5, 3 * i) = gr[1];
    b(5, 3 * i + 1) = gr[0];
  }
  return b;
}

/// Element stiffness V B^T D B at modulus E.
inline Eigen::MatrixXd element_stiffness(const SimplicialMesh& mesh, Index e, double E, double nu) {
  SimplexGeometry g = mesh.geometry(e);
  Eigen::MatrixXd b = strain_matrix(g, mesh.dimension());
  return g.volume * b.transpose() * constitutive_matrix(mesh.dimension(), E, nu) * b;
}

namespace detail {

inline int resolve_region(const SimplicialMesh& mesh, const std::string& region) {
  if (region.empty()) return -1;
  int tag = mesh.region_tag(region);
  if (tag < 0) throw Error(ErrorKind::invalid_spec, "unknown boundary region '" + region + "'");
  return tag;
}

inline double facet_measure(const SimplicialMesh& mesh, const BoundaryFacet& f) {
  const Point &a = mesh.node(f.nodes[0]), &b = mesh.node(f.nodes[1]);
  Eigen::Vector3d ab(b[0] - a[0], b[1] - a[1], b[2] - a[2]);
  if (mesh.dimension() == 2) return ab.norm();
  const Point& c = mesh.node(f.nodes[2]);
  Eigen::Vector3d ac(c[0] - a[0], c[1] - a[1], c[2] - a[2]);
  return 0.5 * ab.cross(ac).norm();
}

inline Point facet_centroid(const SimplicialMesh& mesh, const BoundaryFacet& f) {
  Point c{0.0, 0.0, 0.0};
  const int d = mesh.dimension();
  for (int i = 0; i < d; ++i)
    for (int a = 0; a < 3; ++a) c[a] += mesh.node(f.nodes[i])[a] / d;
  return c;
}

inline std::vector<const BoundaryFacet*> select_facets(const SimplicialMesh& mesh, const BoundarySelector& sel) {
  const int tag = resolve_region(mesh, sel.region);
  std::vector<const BoundaryFacet*> out;
  for (const auto& f : mesh.boundary_facets()) {
    if (tag >= 0 && f.tag != tag) continue;
    if (sel.where && !sel.where(facet_centroid(mesh, f))) continue;
    out.push_back(&f);
  }
  return out;
}

inline std::vector<Index> select_nodes(const SimplicialMesh& mesh, const BoundarySelector& sel) {
  const int tag = resolve_region(mesh, sel.region);
  std::vector<char> on(mesh.num_nodes(), 0);
  for (const auto& f : mesh.boundary_facets()) {
    if (tag >= 0 && f.tag != tag) continue;
    for (int i = 0; i < mesh.dimension(); ++i) on[f.nodes[i]] = 1;
  }
  std::vector<Index> out;
  for (Index n = 0; n < mesh.num_nodes(); ++n)
    if (on[n] && (!sel.where || sel.where(mesh.node(n)))) out.push_back(n);
  return out;
}

// Element-wise triplets, concatenated in element order whatever the worker
// count.
template <typename ElementBlock>
std::vector<Triplet> gather_triplets(const SimplicialMesh& mesh, int dofs_per_node, ElementBlock&& block) {
  const int workers = worker_count();
  std::vector<std::vector<Triplet>> parts(static_cast<std::size_t>(workers));
  for_each_chunk(static_cast<std::size_t>(mesh.num_elements()), workers,
                 [&](int w, std::size_t begin, std::size_t end) {
                   auto& out = parts[static_cast<std::size_t>(w)];
                   const int n = (mesh.dimension() + 1) * dofs_per_node;
                   out.reserve((end - begin) * static_cast<std::size_t>(n * n));
                   for (std::size_t e = begin; e < end; ++e) {
                     Eigen::MatrixXd ke = block(static_cast<Index>(e));
                     auto verts = mesh.element(static_cast<Index>(e));
                     for (int i = 0; i < n; ++i)
                       for (int j = 0; j < n; ++j) {
                         Index gi = verts[i / dofs_per_node] * dofs_per_node + i % dofs_per_node;
                         Index gj = verts[j / dofs_per_node] * dofs_per_node + j % dofs_per_node;
                         out.emplace_back(gi, gj, ke(i, j));
                       }
                   }
                 });
  std::vector<Triplet> all;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  all.reserve(total);
  for (const auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  return all;
}

inline void require_unit_interval(const NodalField& rho) {
  for (Index i = 0; i < rho.size(); ++i)
    if (!(rho.values[i] >= 0.0 && rho.values[i] <= 1.0))
      throw Error(ErrorKind::invalid_field,
                  "density at node " + std::to_string(i) + " is outside [0, 1]: " + std::to_string(rho.values[i]));
}

}  // namespace detail

/// Consistent load vector of the problem's tractions (full dof numbering).
inline Eigen::VectorXd assemble_loads(const SimplicialMesh& mesh, const ElasticityProblem& problem) {
  const int d = mesh.dimension();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Index>(mesh.num_nodes()) * d);
  for (const auto& load : problem.loads) {
    auto facets = detail::select_facets(mesh, load.on);
    std::vector<Eigen::Vector3d> t(facets.size());
    double integral = 0.0;
    for (std::size_t k = 0; k < facets.size(); ++k) {
      t[k] = load.traction_fn ? load.traction_fn(detail::facet_centroid(mesh, *facets[k])) : load.traction;
      integral += t[k].norm() * detail::facet_measure(mesh, *facets[k]);
    }
    double scale = 1.0;
    if (load.total > 0.0) {
      if (!(integral > 0.0)) throw Error(ErrorKind::invalid_spec, "load selects no boundary facets");
      scale = load.total / integral;
    }
    for (std::size_t k = 0; k < facets.size(); ++k) {
      double share = detail::facet_measure(mesh, *facets[k]) / d;
      for (int i = 0; i < d; ++i)
        for (int a = 0; a < d; ++a) f[facets[k]->nodes[i] * d + a] += scale * share * t[k][a];
    }
  }
  return f;
}

/// Stiffness of the SIMP-interpolated body with Dirichlet dofs eliminated.
inline SparseSystem assemble_elasticity(const SimplicialMesh& mesh, const NodalField& rho,
                                        const ElasticityProblem& problem) {
  mesh.require_bound(rho, "density field");
  detail::require_unit_interval(rho);
  problem.validate();
  const int d = mesh.dimension();
  const Index ndof = mesh.num_nodes() * d;

  auto triplets = detail::gather_triplets(mesh, d, [&](Index e) {
    return element_stiffness(mesh, e, problem.modulus(mesh.element_average(rho.values, e)), problem.poisson_ratio);
  });

  SparseSystem sys;
  sys.mesh_version = mesh.version();
  sys.prescribed = Eigen::VectorXd::Zero(ndof);
  std::vector<char> fixed(static_cast<std::size_t>(ndof), 0);
  for (const auto& bc : problem.dirichlet) {
    for (Index n : detail::select_nodes(mesh, bc.on)) {
      Eigen::Vector3d v = bc.value_fn ? bc.value_fn(mesh.node(n)) : bc.value;
      for (int a = 0; a < d; ++a)
        if (bc.axes[a]) {
          fixed[n * d + a] = 1;
          sys.prescribed[n * d + a] = v[a];
        }
    }
  }
  sys.dof_map.assign(static_cast<std::size_t>(ndof), -1);
  Index free = 0;
  for (Index i = 0; i < ndof; ++i)
    if (!fixed[i]) sys.dof_map[i] = free++;

  Eigen::VectorXd f = assemble_loads(mesh, problem);
  sys.rhs.resize(free);
  for (Index i = 0; i < ndof; ++i)
    if (sys.dof_map[i] >= 0) sys.rhs[sys.dof_map[i]] = f[i];

  std::vector<Triplet> reduced;
  reduced.reserve(triplets.size());
  for (const auto& t : triplets) {
    Index ri = sys.dof_map[t.row()], rj = sys.dof_map[t.col()];
    if (ri < 0) continue;
    if (rj >= 0)
      reduced.emplace_back(ri, rj, t.value());
    else
      sys.rhs[ri] -= t.value() * sys.prescribed[t.col()];
  }
  sys.matrix.resize(free, free);
  sys.matrix.setFromTriplets(reduced.begin(), reduced.end());
  return sys;
}

/// Consistent P1 mass matrix.
inline SparseMatrix assemble_mass(const SimplicialMesh& mesh) {
  const int n = mesh.dimension() + 1;
  auto triplets = detail::gather_triplets(mesh, 1, [&](Index e) {
    double v = mesh.element_volume(e);
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(n, n, v / (n * (n + 1)));
    m.diagonal().array() *= 2.0;
    return m;
  });
  SparseMatrix m(mesh.num_nodes(), mesh.num_nodes());
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

/// r^2 (grad, grad) + (., .) with natural boundary conditions. The rhs is
/// left empty; a solve for input g uses M g.
inline SparseSystem assemble_helmholtz(const SimplicialMesh& mesh, double radius) {
  if (!(radius >= 0.0)) throw Error(ErrorKind::invalid_spec, "filter radius must be non-negative");
  const int n = mesh.dimension() + 1;
  const double r2 = radius * radius;
  auto triplets = detail::gather_triplets(mesh, 1, [&](Index e) {
    SimplexGeometry g = mesh.geometry(e);
    Eigen::MatrixXd k(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        k(i, j) = r2 * g.volume * g.grad[i].dot(g.grad[j]) + g.volume * (i == j ? 2.0 : 1.0) / (n * (n + 1));
    return k;
  });
  SparseSystem sys;
  sys.mesh_version = mesh.version();
  sys.matrix.resize(mesh.num_nodes(), mesh.num_nodes());
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  sys.dof_map.resize(static_cast<std::size_t>(mesh.num_nodes()));
  std::iota(sys.dof_map.begin(), sys.dof_map.end(), 0);
  sys.prescribed = Eigen::VectorXd::Zero(mesh.num_nodes());
  return sys;
}

enum class SolverMethod { automatic, cg, direct };

struct SolverOptions {
  SolverMethod method = SolverMethod::automatic;
  int stagnation_window = 100;
  const Eigen::VectorXd* initial_guess = nullptr;
};

struct SolverStats {
  int iterations = 0;
  bool used_direct = false;
  double relative_residual = 0.0;
};

namespace detail {

inline Eigen::VectorXd direct_solve(const SparseMatrix& a, const Eigen::VectorXd& b) {
  Eigen::SparseMatrix<double> col = a;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(col);
  if (ldlt.info() != Eigen::Success)
    throw Error(ErrorKind::assembly_error, "sparse factorization failed; the matrix is singular");
  if ((ldlt.vectorD().array() <= 0.0).any())
    throw Error(ErrorKind::assembly_error, "matrix is not positive definite");
  return ldlt.solve(b);
}

}  // namespace detail

/// Solves A x = b to ||A x - b|| <= tol ||b||. Jacobi-preconditioned CG,
/// falling back to a sparse LDL^T factorization when the residual has not
/// improved for `stagnation_window` iterations.
inline Eigen::VectorXd solve(const SparseSystem& system, double tol, const SolverOptions& options = {},
                             SolverStats* stats = nullptr) {
  if (!(tol > 0.0)) throw Error(ErrorKind::invalid_spec, "solver tolerance must be positive");
  const SparseMatrix& a = system.matrix;
  const Eigen::VectorXd& b = system.rhs;
  const Index n = static_cast<Index>(b.size());
  SolverStats local;
  SolverStats& st = stats ? *stats : local;
  st = {};

  const double bnorm = b.norm();
  if (n == 0 || bnorm == 0.0) return Eigen::VectorXd::Zero(n);

  if (options.method == SolverMethod::direct) {
    Eigen::VectorXd x = detail::direct_solve(a, b);
    st.used_direct = true;
    st.relative_residual = (a * x - b).norm() / bnorm;
    return x;
  }

  Eigen::VectorXd inv_diag = a.diagonal();
  for (Index i = 0; i < n; ++i) {
    if (!(inv_diag[i] > 0.0)) throw Error(ErrorKind::assembly_error, "non-positive diagonal entry");
    inv_diag[i] = 1.0 / inv_diag[i];
  }
  Eigen::VectorXd x = options.initial_guess && options.initial_guess->size() == n ? *options.initial_guess
                                                                                  : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b - a * x;
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  Eigen::VectorXd q(n);
  double rz = r.dot(z);
  double rnorm = r.norm();
  double best = rnorm;
  int since_best = 0;
  const long cap = 20L * n;
  const double target = tol * bnorm;
  int it = 0;
  while (rnorm > target) {
    if (it >= cap) {
      st.iterations = it;
      throw Error(ErrorKind::convergence_failure,
                  "CG reached the iteration cap of " + std::to_string(cap) + " without converging");
    }
    q.noalias() = a * p;
    double curvature = p.dot(q);
    if (!(curvature > 0.0)) throw Error(ErrorKind::assembly_error, "negative curvature in CG: matrix is indefinite");
    double alpha = rz / curvature;
    x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    z = inv_diag.cwiseProduct(r);
    double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
    rnorm = r.norm();
    ++it;
    if (rnorm < best) {
      best = rnorm;
      since_best = 0;
    } else if (++since_best >= options.stagnation_window && options.method == SolverMethod::automatic) {
      x = detail::direct_solve(a, b);
      st.used_direct = true;
      st.iterations = it;
      st.relative_residual = (a * x - b).norm() / bnorm;
      return x;
    }
  }
  st.iterations = it;
  st.relative_residual = (a * x - b).norm() / bnorm;
  // Recursive residual drift: confirm against the true residual.
  if (st.relative_residual > tol && options.method == SolverMethod::automatic) {
    x = detail::direct_solve(a, b);
    st.used_direct = true;
    st.relative_residual = (a * x - b).norm() / bnorm;
  }
  return x;
}

inline DisplacementField solve_elasticity(const SimplicialMesh& mesh, const NodalField& rho,
                                          const ElasticityProblem& problem, double tol,
                                          const SolverOptions& options = {}, SolverStats* stats = nullptr) {
  SparseSystem sys = assemble_elasticity(mesh, rho, problem);
  return {sys.expand(solve(sys, tol, options, stats)), mesh.version()};
}

struct ComplianceResult {
  double compliance = 0.0;
  std::vector<double> unit_energy;  // 1/2 u_e^T k_e(rho = 1) u_e per element
};

inline ComplianceResult compliance_and_strain_energy(const SimplicialMesh& mesh, const NodalField& rho,
                                                     const ElasticityProblem& problem, const DisplacementField& u) {
  mesh.require_bound(rho, "density field");
  const int d = mesh.dimension();
  if (u.mesh_version != mesh.version() || u.values.size() != static_cast<Index>(mesh.num_nodes()) * d)
    throw Error(ErrorKind::stale_field, "displacement is not bound to this mesh version");
  ComplianceResult out;
  out.unit_energy.resize(mesh.num_elements());
  const int n = (d + 1) * d;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    Eigen::MatrixXd ke = element_stiffness(mesh, e, problem.youngs_modulus, problem.poisson_ratio);
    Eigen::VectorXd ue(n);
    auto verts = mesh.element(e);
    for (int i = 0; i < n; ++i) ue[i] = u.values[verts[i / d] * d + i % d];
    double energy = 0.5 * ue.dot(ke * ue);
    out.unit_energy[e] = energy;
    out.compliance += problem.modulus(mesh.element_average(rho.values, e)) / problem.youngs_modulus * energy;
  }
  return out;
}

}  // namespace thinwall
