#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "thinwall/filter.hpp"
#include "thinwall/mesh.hpp"
#include "thinwall/projection.hpp"

namespace thinwall {

struct DetectorSetting {
  double beta = 0.9;
  double bandwidth = 0.05;
};

/// Strip demonstration: a stack of solid bands of known width in rho_tilde,
/// smoothed by r_max filters of several sizes and passed through detectors.
struct StripOptions {
  double min_diameter = 0.1;
  std::vector<double> width_factors{4.0, 2.0, 1.0, 0.5};   // strip width / min_diameter
  std::vector<double> max_factors{1.5, 2.0, 4.0};          // max_diameter / min_diameter
  std::vector<DetectorSetting> detectors{{0.97, 0.015}, {0.90, 0.05}, {0.75, 0.2}};
  double gap_factor = 6.0;                                 // spacing / min_diameter
  int cells_per_min = 16;
};

struct StripRow {
  double width_factor = 0.0;
  double max_factor = 0.0;
  DetectorSetting detector;
  double peak_rho_bar = 0.0;
  double coverage = 0.0;  // detector-weighted fraction of the strip's area
};

struct StripDiagnostics {
  SimplicialMesh mesh;
  std::vector<std::pair<double, double>> strips;  // [lo, hi] along y
  NodalField rho_tilde;
  std::vector<NodalField> rho_bar;                // per max factor
  std::vector<std::vector<NodalField>> detected;  // [max factor][detector]
  std::vector<StripRow> rows;

  const StripRow& row(double width_factor, double max_factor, double beta) const {
    for (const auto& r : rows)
      if (r.width_factor == width_factor && r.max_factor == max_factor && r.detector.beta == beta) return r;
    throw Error(ErrorKind::invalid_spec, "no such strip row");
  }
};

inline StripDiagnostics diagnostic_strips(const StripOptions& opt) {
  if (!(opt.min_diameter > 0.0) || opt.cells_per_min < 1 || !(opt.gap_factor > 0.0))
    throw Error(ErrorKind::invalid_spec, "strip diagnostics need positive sizes");
  for (double w : opt.width_factors)
    if (!(w > 0.0)) throw Error(ErrorKind::invalid_spec, "strip widths must be positive");
  for (double f : opt.max_factors)
    if (!(f > 0.0)) throw Error(ErrorKind::invalid_spec, "max-size factors must be positive");

  const double R = opt.min_diameter;
  const double h = R / opt.cells_per_min;
  // Snap every strip edge to a grid line.
  auto cells = [&](double factor) { return std::max(1, static_cast<int>(std::lround(factor * opt.cells_per_min))); };
  const int gap = cells(opt.gap_factor);

  StripDiagnostics out;
  int ny = gap;
  for (double w : opt.width_factors) {
    const int c = cells(w);
    out.strips.push_back({ny * h, (ny + c) * h});
    ny += c + gap;
  }
  Box box;
  box.hi = {2.0 * h, ny * h, 0.0};
  out.mesh = build_structured(box, 2, {2, ny});
  const SimplicialMesh& mesh = out.mesh;

  // Nodal step with the edge value 1/2, so the interpolant integrates to the width.
  Eigen::VectorXd g = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (Index i = 0; i < mesh.num_nodes(); ++i) {
    const double y = mesh.node(i)[1];
    for (auto [lo, hi] : out.strips) {
      if (std::abs(y - lo) < 1e-9 * h || std::abs(y - hi) < 1e-9 * h) g[i] = 0.5;
      else if (y > lo && y < hi) g[i] = 1.0;
    }
  }
  out.rho_tilde = mesh.make_field(g);

  const Eigen::VectorXd lumped = mesh.lumped_mass();
  auto inside = [&](Index i, std::pair<double, double> s) {
    const double y = mesh.node(i)[1];
    return y > s.first - 1e-9 * h && y < s.second + 1e-9 * h;
  };

  for (double f : opt.max_factors) {
    FilterOperator op(mesh, radius_from_diameter(f * R));
    out.rho_bar.push_back(apply_filter(op, out.rho_tilde));
    const NodalField& rb = out.rho_bar.back();
    out.detected.emplace_back();
    for (const DetectorSetting& d : opt.detectors) {
      Eigen::VectorXd hv(mesh.num_nodes());
      for (Index i = 0; i < mesh.num_nodes(); ++i) hv[i] = detector(rb.values[i] - d.beta, d.bandwidth).value;
      out.detected.back().push_back(mesh.make_field(hv));
      for (std::size_t s = 0; s < out.strips.size(); ++s) {
        StripRow row{opt.width_factors[s], f, d, 0.0, 0.0};
        double area = 0.0, hit = 0.0;
        for (Index i = 0; i < mesh.num_nodes(); ++i) {
          if (!inside(i, out.strips[s])) continue;
          row.peak_rho_bar = std::max(row.peak_rho_bar, rb.values[i]);
          area += lumped[i];
          hit += lumped[i] * hv[i];
        }
        row.coverage = area > 0.0 ? hit / area : 0.0;
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

}  // namespace thinwall
