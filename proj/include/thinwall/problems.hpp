#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "thinwall/adapt.hpp"
#include "thinwall/config.hpp"
#include "thinwall/fem.hpp"
#include "thinwall/filter.hpp"
#include "thinwall/mesh.hpp"

namespace thinwall {

/// Geometry, supports and loads of one run, before any optimization state.
struct ProblemSetup {
  std::string name;
  int dimension = 2;
  Box domain;
  std::vector<int> cells;
  int initial_level = 0;
  ElasticityProblem elasticity;
  bool approximate = false;  // geometry/loads read off a figure, not given numerically
};

namespace detail {

inline Box box_of(const std::vector<double>& extent) {
  Box b;
  for (std::size_t a = 0; a < extent.size(); ++a) b.hi[a] = extent[a];
  return b;
}

inline PointPredicate window(std::vector<double> lo, std::vector<double> hi) {
  if (lo.empty()) return {};
  return [lo = std::move(lo), hi = std::move(hi)](const Point& p) {
    for (std::size_t a = 0; a < lo.size(); ++a)
      if (p[a] < lo[a] || p[a] > hi[a]) return false;
    return true;
  };
}

inline void clamp_all(ElasticityProblem& pb, BoundarySelector on) {
  pb.dirichlet.push_back({std::move(on), {true, true, true}});
}

}  // namespace detail

/// Resolves the named problem (or the explicit description) of a config.
inline ProblemSetup make_problem(const RunConfig& c) {
  validate(c);
  ProblemSetup s;
  s.name = c.problem;
  std::vector<double> extent;
  if (c.problem == "cantilever_2d") {
    // Clamped left edge, unit downward load on a short patch at mid-height
    // of the right edge.
    extent = {2.0, 1.0};
    s.cells = {18, 9};
    s.initial_level = 4;
  } else if (c.problem == "sheared_beam") {
    extent = {2.0, 0.6, 1.0};
    s.cells = {10, 3, 5};
    s.initial_level = 3;
    s.approximate = true;
  } else if (c.problem == "twisted_ball" || c.problem == "multi_cube") {
    extent = {1.0, 1.0, 1.0};
    s.cells = {6, 6, 6};
    s.initial_level = 3;
    s.approximate = true;
  } else {
    extent = c.extent;
    s.cells = c.cells;
  }
  if (!c.extent.empty()) extent = c.extent;
  if (!c.cells.empty()) s.cells = c.cells;
  if (extent.size() != s.cells.size())
    throw Error(ErrorKind::config_invariant, "violates domain.cells and domain.extent have the same length");
  if (c.problem != "custom" && extent.size() != (c.problem == "cantilever_2d" ? 2u : 3u))
    throw Error(ErrorKind::config_invariant, "violates domain.extent matches the problem's dimension");
  s.dimension = static_cast<int>(extent.size());
  s.domain = detail::box_of(extent);
  if (c.initial_level) s.initial_level = *c.initial_level;

  ElasticityProblem& pb = s.elasticity;
  pb.youngs_modulus = c.youngs_modulus;
  pb.poisson_ratio = c.poisson_ratio;
  pb.rho_min = c.rho_min;
  pb.simp_penalty = c.schedule.penalty_start;
  const Point hi = s.domain.hi;

  if (c.problem == "cantilever_2d") {
    detail::clamp_all(pb, {"xmin", {}});
    LoadCondition load;
    const double y0 = 0.5 * hi[1], half = 0.05 * hi[1];
    load.on = {"xmax", [=](const Point& p) { return std::abs(p[1] - y0) < half; }};
    load.traction = {0.0, -1.0, 0.0};
    load.total = 1.0;
    pb.loads.push_back(load);
  } else if (c.problem == "sheared_beam") {
    // Clamped end face; downward shear along the bottom edge of the free end.
    detail::clamp_all(pb, {"xmin", {}});
    LoadCondition load;
    const double band = 0.1 * hi[2];
    load.on = {"xmax", [=](const Point& p) { return p[2] < band; }};
    load.traction = {0.0, 0.0, -1.0};
    load.total = 1.0;
    pb.loads.push_back(load);
  } else if (c.problem == "twisted_ball") {
    // Clamped square patch at the bottom centre; torque about z on the top face.
    const double cx = 0.5 * hi[0], cy = 0.5 * hi[1], half = 0.2 * std::min(hi[0], hi[1]);
    detail::clamp_all(pb, {"zmin", [=](const Point& p) {
                             return std::abs(p[0] - cx) <= half + 1e-12 && std::abs(p[1] - cy) <= half + 1e-12;
                           }});
    LoadCondition load;
    load.on = {"zmax", {}};
    load.traction_fn = [=](const Point& p) { return Eigen::Vector3d(-(p[1] - cy), p[0] - cx, 0.0); };
    load.total = 1.0;
    pb.loads.push_back(load);
  } else if (c.problem == "multi_cube") {
    // One bottom quadrant clamped, the other three on z-rollers; combined
    // vertical and shear load on a patch at the top centre.
    const double cx = 0.5 * hi[0], cy = 0.5 * hi[1];
    detail::clamp_all(pb, {"zmin", [=](const Point& p) { return p[0] <= cx + 1e-12 && p[1] <= cy + 1e-12; }});
    pb.dirichlet.push_back({{"zmin", {}}, {false, false, true}});
    LoadCondition load;
    const double half = 0.2 * std::min(hi[0], hi[1]);
    load.on = {"zmax", [=](const Point& p) { return std::abs(p[0] - cx) < half && std::abs(p[1] - cy) < half; }};
    load.traction = Eigen::Vector3d(1.0, 0.0, -1.0).normalized();
    load.total = 1.0;
    pb.loads.push_back(load);
  } else {
    for (const auto& r : c.fixed_regions) detail::clamp_all(pb, {r, {}});
    LoadCondition load;
    load.on = {c.load_region, detail::window(c.load_window_lo, c.load_window_hi)};
    Eigen::Vector3d f = Eigen::Vector3d::Zero();
    for (std::size_t a = 0; a < c.load_force.size(); ++a) f[static_cast<Index>(a)] = c.load_force[a];
    if (!(f.norm() > 0.0)) throw Error(ErrorKind::config_invariant, "violates load.force is non-zero");
    load.traction = f.normalized();
    load.total = f.norm();
    pb.loads.push_back(load);
  }
  if (c.problem != "custom" && !c.load_window_lo.empty()) pb.loads.front().on.where = detail::window(c.load_window_lo, c.load_window_hi);
  return s;
}

/// Edge length of the finest elements of the initial mesh (the structured
/// cell size, halved every `dimension` bisection levels).
inline double finest_cell_size(const ProblemSetup& s) {
  double h = s.domain.extent(0) / s.cells[0];
  for (int a = 1; a < s.dimension; ++a) h = std::min(h, s.domain.extent(a) / s.cells[static_cast<std::size_t>(a)]);
  return std::ldexp(h, -(s.initial_level / s.dimension));
}

/// R_min defaults to four finest cells, R_max to 2 R_min.
inline FeatureSizeSpec feature_sizes(const RunConfig& c, const ProblemSetup& s) {
  FeatureSizeSpec f;
  f.min_diameter = c.min_diameter.value_or(4.0 * finest_cell_size(s));
  f.max_diameter = c.max_diameter.value_or(2.0 * f.min_diameter);
  if (!(f.min_diameter < f.max_diameter))
    throw Error(ErrorKind::config_invariant, "violates feature.min_diameter < feature.max_diameter (R_min < R_max)");
  double smallest = s.domain.extent(0);
  for (int a = 1; a < s.dimension; ++a) smallest = std::min(smallest, s.domain.extent(a));
  if (!(f.max_diameter < smallest))
    throw Error(ErrorKind::config_invariant, "violates feature.max_diameter < smallest domain extent");
  return f;
}

/// Bisects every element `levels` times.
inline SimplicialMesh refine_uniformly(SimplicialMesh mesh, int levels) {
  for (int k = 0; k < levels; ++k) {
    AdaptConfig all;
    all.refine_fraction = 1.0;
    all.coarsen_fraction = 0.0;
    all.growth_rate = 1e9;
    all.min_level = 0;
    all.max_level = 1 << 20;
    ElementIndicator w{std::vector<double>(static_cast<std::size_t>(mesh.num_elements()), 1.0), mesh.version()};
    mesh = adapt(mesh, w, all);
  }
  return mesh;
}

inline SimplicialMesh initial_mesh(const ProblemSetup& s) {
  return refine_uniformly(build_structured(s.domain, s.dimension, s.cells), s.initial_level);
}

}  // namespace thinwall
