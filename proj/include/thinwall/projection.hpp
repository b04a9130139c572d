#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "thinwall/error.hpp"
#include "thinwall/mesh.hpp"

namespace thinwall {

enum class ProjectionKind { analysis, geometric, detector };

/// For tanh projections `bandwidth` is the sharpness s; for the detector it
/// is the half-width h and `threshold` is beta.
struct ProjectionParams {
  ProjectionKind kind = ProjectionKind::analysis;
  double threshold = 0.0;
  double bandwidth = 1.0;

  void validate() const {
    if (!(bandwidth > 0.0)) throw Error(ErrorKind::invalid_spec, "projection bandwidth must be positive");
    if (kind == ProjectionKind::detector && !(threshold > 0.0 && threshold < 1.0))
      throw Error(ErrorKind::invalid_spec, "detector threshold must lie in (0, 1)");
  }
};

struct ScalarWithSlope {
  double value;
  double slope;
};

/// 1/2 (1 + tanh(s x)). Written through exp(-2 s |x|) so that the slope
/// stays exact (and finite) far into saturation.
inline ScalarWithSlope tanh_step(double x, double s) {
  const double e = std::exp(-2.0 * s * std::abs(x));
  const double tail = e / (1.0 + e);  // distance from the nearer asymptote
  const double value = x >= 0.0 ? 1.0 - tail : tail;
  const double slope = 2.0 * s * e / ((1.0 + e) * (1.0 + e));
  return {value, slope};
}

/// Quintic smoothed Heaviside on [-h, h]; C2 across the branch points.
inline ScalarWithSlope detector(double x, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::invalid_spec, "detector half-width must be positive");
  if (x < -h) return {0.0, 0.0};
  if (x > h) return {1.0, 0.0};
  const double t = x / h, t2 = t * t;
  const double value = 0.5 + t * (15.0 / 16.0 - t2 * (5.0 / 8.0 - t2 * 3.0 / 16.0));
  const double slope = 15.0 / (16.0 * h) * (1.0 - t2) * (1.0 - t2);
  return {value, slope};
}

inline double detector_curvature(double x, double h) {
  if (x < -h || x > h) return 0.0;
  const double t = x / h;
  return -15.0 / (4.0 * h * h) * t * (1.0 - t * t);
}

struct ProjectedField {
  NodalField values;
  Eigen::VectorXd slope;
};

namespace detail {

inline ProjectedField project_tanh(const NodalField& phi_tilde, double s) {
  if (!(s > 0.0)) throw Error(ErrorKind::invalid_spec, "projection sharpness must be positive");
  ProjectedField out{{Eigen::VectorXd(phi_tilde.size()), phi_tilde.mesh_version}, Eigen::VectorXd(phi_tilde.size())};
  for (Index i = 0; i < phi_tilde.size(); ++i) {
    auto r = tanh_step(phi_tilde.values[i], s);
    out.values.values[i] = r.value;
    out.slope[i] = r.slope;
  }
  return out;
}

}  // namespace detail

/// rho = H~(phi~).
inline ProjectedField project_analysis(const NodalField& phi_tilde, double s) {
  return detail::project_tanh(phi_tilde, s);
}

/// rho~ = H-(phi~); requires s_g >= s.
inline ProjectedField project_geometric(const NodalField& phi_tilde, double s_g, double s) {
  if (s_g < s) throw Error(ErrorKind::invalid_spec, "geometric sharpness must be at least the analysis sharpness");
  return detail::project_tanh(phi_tilde, s_g);
}

/// Applies any of the three maps according to `params`.
inline ProjectedField project(const NodalField& x, const ProjectionParams& params) {
  params.validate();
  if (params.kind != ProjectionKind::detector) {
    NodalField shifted{x.values.array() - params.threshold, x.mesh_version};
    return detail::project_tanh(shifted, params.bandwidth);
  }
  ProjectedField out{{Eigen::VectorXd(x.size()), x.mesh_version}, Eigen::VectorXd(x.size())};
  for (Index i = 0; i < x.size(); ++i) {
    auto r = detector(x.values[i] - params.threshold, params.bandwidth);
    out.values.values[i] = r.value;
    out.slope[i] = r.slope;
  }
  return out;
}

}  // namespace thinwall
