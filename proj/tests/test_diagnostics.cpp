#include <gtest/gtest.h>

#include <cmath>

#include "thinwall/diagnostics.hpp"

using namespace thinwall;

namespace {

const StripDiagnostics& strips() {
  static const StripDiagnostics d = diagnostic_strips(StripOptions{});
  return d;
}

}  // namespace

TEST(Strips, LayoutMatchesRequestedWidths) {
  const auto& d = strips();
  StripOptions opt;
  ASSERT_EQ(d.strips.size(), opt.width_factors.size());
  for (std::size_t s = 0; s < d.strips.size(); ++s)
    EXPECT_NEAR(d.strips[s].second - d.strips[s].first, opt.width_factors[s] * opt.min_diameter, 1e-12);
  // Interpolated step integrates to the total strip area.
  double area = d.rho_tilde.values.dot(d.mesh.lumped_mass());
  double expected = 0.0;
  for (double w : opt.width_factors) expected += w * opt.min_diameter;
  const double thickness = 2.0 * opt.min_diameter / opt.cells_per_min;
  EXPECT_NEAR(area, expected * thickness, 1e-12);
  EXPECT_EQ(d.rows.size(), 4u * 3u * 3u);
}

TEST(Strips, IsolatedPeakMatchesOneDimensionalSolution) {
  // Peak of the filtered indicator of a strip of half-width a: 1 - exp(-a / r).
  const auto& d = strips();
  StripOptions opt;
  for (double f : opt.max_factors) {
    const double r = radius_from_diameter(f * opt.min_diameter);
    for (double w : opt.width_factors) {
      const double exact = 1.0 - std::exp(-0.5 * w * opt.min_diameter / r);
      const double peak = d.row(w, f, 0.9).peak_rho_bar;
      EXPECT_NEAR(peak, exact, 0.03 * exact) << "R_max/R_min " << f << " width " << w;
    }
  }
}

TEST(Strips, PeakFallsAsMaxSizeGrows) {
  const auto& d = strips();
  for (double w : StripOptions{}.width_factors) {
    EXPECT_GT(d.row(w, 1.5, 0.9).peak_rho_bar, d.row(w, 2.0, 0.9).peak_rho_bar);
    EXPECT_GT(d.row(w, 2.0, 0.9).peak_rho_bar, d.row(w, 4.0, 0.9).peak_rho_bar);
  }
}

TEST(Strips, DetectorSeparatesWideFromThinStrips) {
  const auto& d = strips();
  EXPECT_GT(d.row(4.0, 2.0, 0.9).coverage, 0.5);
  EXPECT_LT(d.row(1.0, 2.0, 0.9).coverage, 0.01);
  EXPECT_LT(d.row(0.5, 2.0, 0.9).coverage, 0.01);
  // The detector never fires where the filtered density stays below beta - h.
  for (const auto& r : d.rows)
    if (r.peak_rho_bar < r.detector.beta - r.detector.bandwidth) EXPECT_EQ(r.coverage, 0.0);
}

TEST(Strips, FieldsStayInUnitInterval) {
  const auto& d = strips();
  for (const auto& rb : d.rho_bar) {
    EXPECT_GE(rb.values.minCoeff(), -1e-3);
    EXPECT_LE(rb.values.maxCoeff(), 1.0 + 1e-3);
  }
  for (const auto& row : d.detected)
    for (const auto& h : row) {
      EXPECT_GE(h.values.minCoeff(), 0.0);
      EXPECT_LE(h.values.maxCoeff(), 1.0);
    }
}

TEST(Strips, RejectsBadOptions) {
  StripOptions o;
  o.width_factors = {1.0, -1.0};
  EXPECT_THROW(diagnostic_strips(o), Error);
  o = StripOptions{};
  o.min_diameter = 0.0;
  EXPECT_THROW(diagnostic_strips(o), Error);
}
