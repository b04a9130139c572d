#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>

#include "thinwall/diagnostics.hpp"
#include "thinwall/run.hpp"

using namespace thinwall;

namespace {

int cmd_run(const std::string& path, const std::string& out, int max_iters, bool no_maxsize, bool quiet) {
  RunConfig cfg = load_config(path);
  if (!out.empty()) cfg.output_directory = out;
  if (max_iters > 0) cfg.limits.max_iterations = max_iters;
  if (no_maxsize) cfg.enable_max = false;
  validate(cfg);

  if (!quiet) std::printf("%5s %14s %11s %11s %9s %9s %8s\n", "iter", "F", "g1", "g2", "max_rb", "elements", "seconds");
  auto progress = [&](const LogRow& r) {
    if (!quiet)
      std::printf("%5d %14.6g %11.3e %11.3e %9.4f %9d %8.2f\n", r.iteration, r.F, r.g1, r.g2, r.max_rho_bar,
                  static_cast<int>(r.elements), r.seconds);
    std::fflush(stdout);
  };
  RunResult res = run(cfg, progress);
  const LogRow& last = res.log.back();
  std::printf("\n%s after %zu iterations: F = %.6g, g1 = %.3e, g2 = %.3e (bound %.3e), %d elements\n",
              to_string(res.reason), res.log.size(), last.F, last.g1, last.g2, res.constraint.violation_bound,
              static_cast<int>(last.elements));
  if (!cfg.output_directory.empty()) std::printf("output in %s\n", cfg.output_directory.c_str());
  return 0;
}

int cmd_strips(const std::string& path, const std::string& csv) {
  RunConfig cfg = load_config(path);
  ProblemSetup setup = make_problem(cfg);
  StripOptions opt;
  opt.min_diameter = feature_sizes(cfg, setup).min_diameter;
  StripDiagnostics d = diagnostic_strips(opt);

  std::printf("R_min = %g, mesh %d elements\n\n", opt.min_diameter, static_cast<int>(d.mesh.num_elements()));
  std::printf("%8s %8s %6s %6s %10s %9s\n", "width", "R_max", "beta", "h", "peak_rb", "coverage");
  for (const StripRow& r : d.rows)
    std::printf("%7.2gR %7.2gR %6.2f %6.3f %10.4f %8.1f%%\n", r.width_factor, r.max_factor, r.detector.beta,
                r.detector.bandwidth, r.peak_rho_bar, 100.0 * r.coverage);

  if (!csv.empty()) {
    std::ofstream f(csv);
    if (!f) throw Error(ErrorKind::io_error, "cannot open '" + csv + "' for writing");
    // Profile across the strips along the left edge.
    f << "y,rho_tilde";
    for (double m : opt.max_factors) {
      f << ",rho_bar_" << m;
      for (const auto& det : opt.detectors) f << ",H_" << m << "_" << det.beta;
    }
    f << '\n';
    for (Index i = 0; i < d.mesh.num_nodes(); ++i) {
      if (d.mesh.node(i)[0] != 0.0) continue;
      f << d.mesh.node(i)[1] << ',' << d.rho_tilde.values[i];
      for (std::size_t m = 0; m < d.rho_bar.size(); ++m) {
        f << ',' << d.rho_bar[m].values[i];
        for (const auto& h : d.detected[m]) f << ',' << h.values[i];
      }
      f << '\n';
    }
    std::printf("\nprofile written to %s\n", csv.c_str());
  }
  return 0;
}

int cmd_mesh_info(const std::string& path) {
  VtkSummary s = read_vtk_summary(path);
  std::printf("%s\n  points   %d\n  cells    %d\n", path.c_str(), static_cast<int>(s.points), static_cast<int>(s.cells));
  for (auto [type, n] : s.cell_types)
    std::printf("  type %-3d %d (%s)\n", type, static_cast<int>(n),
                type == 5 ? "triangle" : type == 10 ? "tetrahedron" : "other");
  auto arrays = [&](const char* where, const std::vector<std::string>& names) {
    for (const auto& a : names)
      std::printf("  %s %-10s [%g, %g]\n", where, a.c_str(), s.ranges.at(a).first, s.ranges.at(a).second);
  };
  arrays("point", s.point_arrays);
  arrays("cell ", s.cell_arrays);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thin-walled topology optimization with adaptive simplicial meshes"};
  app.require_subcommand(1);

  std::string config, out, csv, vtk;
  int max_iters = 0;
  bool no_maxsize = false, quiet = false;

  auto* run_cmd = app.add_subcommand("run", "optimize the problem described by a config file");
  run_cmd->add_option("config", config, "config file")->required();
  run_cmd->add_option("--out", out, "output directory (overrides output.directory)");
  run_cmd->add_option("--max-iters", max_iters, "iteration budget (overrides optimizer.max_iterations)")
      ->check(CLI::PositiveNumber);
  run_cmd->add_flag("--no-maxsize", no_maxsize, "drop the maximum-size constraint");
  run_cmd->add_flag("-q,--quiet", quiet, "print only the summary");

  auto* diag = app.add_subcommand("diagnostics", "filter and detector demonstrations");
  diag->require_subcommand(1);
  auto* strips = diag->add_subcommand("strips", "strip widths 4, 2, 1, 0.5 R_min through each R_max and detector");
  strips->add_option("config", config, "config file supplying R_min")->required();
  strips->add_option("--csv", csv, "write the field profiles to this file");

  auto* info = app.add_subcommand("mesh-info", "summarize a VTK snapshot");
  info->add_option("vtk", vtk, "legacy VTK file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(config, out, max_iters, no_maxsize, quiet);
    if (*strips) return cmd_strips(config, csv);
    if (*info) return cmd_mesh_info(vtk);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == ErrorKind::parse_error || e.kind() == ErrorKind::config_invariant ? 2 : 1;
  }
  return 0;
}
