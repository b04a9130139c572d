#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "thinwall/adapt.hpp"
#include "thinwall/config.hpp"
#include "thinwall/objectives.hpp"
#include "thinwall/optimizer.hpp"
#include "thinwall/problems.hpp"
#include "thinwall/vtk.hpp"

namespace thinwall {

struct LogRow {
  int iteration = 0;
  double F = 0.0, g1 = 0.0, g2 = 0.0;
  double max_rho_bar = 0.0;
  Index elements = 0;
  double seconds = 0.0;  // wall time since the start of the run
};

struct RunResult {
  SimplicialMesh mesh;
  DesignState state;  // evaluated fields of the last logged iterate
  EvalBundle evaluation;
  FeatureSizeSpec sizes;
  ConstraintSpec constraint;
  std::vector<LogRow> log;
  TerminationStatus reason = TerminationStatus::proceed;
  std::vector<int> remesh_iterations;
  std::vector<std::string> artifacts;
};

/// Called after every logged iteration; used by the CLI for progress.
using RunObserver = std::function<void(const LogRow&)>;

namespace detail {

inline std::string csv_row(const LogRow& r) {
  return std::to_string(r.iteration) + "," + format_double(r.F) + "," + format_double(r.g1) + "," +
         format_double(r.g2) + "," + format_double(r.max_rho_bar) + "," + std::to_string(r.elements) + "," +
         format_double(std::round(r.seconds * 1e3) / 1e3);
}

class RunOutput {
 public:
  explicit RunOutput(const std::string& dir) : dir_(dir) {
    if (dir_.empty()) return;
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::io_error, "cannot create output directory '" + dir_ + "': " + ec.message());
    log_path_ = (std::filesystem::path(dir_) / "log.csv").string();
    log_.open(log_path_, std::ios::trunc);
    if (!log_) throw Error(ErrorKind::io_error, "cannot open '" + log_path_ + "' for writing");
    log_ << "iter,F,g1,g2,max_rhobar,elements,seconds\n" << std::flush;
  }

  bool enabled() const { return !dir_.empty(); }
  const std::string& log_path() const { return log_path_; }

  void row(const LogRow& r) {
    if (enabled()) log_ << csv_row(r) << '\n' << std::flush;
  }

  std::string snapshot(const SimplicialMesh& mesh, const DesignState& state, const ElementIndicator& w,
                       const std::string& tag) {
    auto path = (std::filesystem::path(dir_) / ("design_" + tag + ".vtk")).string();
    export_vtk(mesh, state, w, path);
    return path;
  }

  std::string status(const std::string& text) {
    auto path = (std::filesystem::path(dir_) / "status.txt").string();
    std::ofstream f(path, std::ios::trunc);
    f << text << '\n';
    return path;
  }

 private:
  std::string dir_, log_path_;
  std::ofstream log_;
};

// Moves MMA's iterate history and asymptotes onto the new nodes with the
// same interpolation used for phi, so the oscillation test keeps working
// across a remesh.
inline void carry_history(MmaState& mma, const SimplicialMesh& from, const SimplicialMesh& to) {
  auto carry = [&](Eigen::VectorXd& v) {
    if (v.size() == from.num_nodes()) v = transfer(from.make_field(v), from, to).values;
    else v.resize(0);
  };
  if (mma.xold1.size() != from.num_nodes()) {
    mma.reset();
    return;
  }
  carry(mma.lower);
  carry(mma.upper);
  carry(mma.xold1);
  carry(mma.xold2);
}

inline std::string iteration_tag(int k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", k);
  return buf;
}

}  // namespace detail

/// The full optimization: continuation stages, periodic adaptation, MMA on
/// nodal phi in [-1, 1], snapshots and the CSV log.
inline RunResult run(const RunConfig& cfg, const RunObserver& observer = {}) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  ProblemSetup setup = make_problem(cfg);
  RunResult res;
  res.sizes = feature_sizes(cfg, setup);
  res.mesh = initial_mesh(setup);
  SimplicialMesh& mesh = res.mesh;
  ElasticityProblem problem = setup.elasticity;

  ConstraintSpec& spec = res.constraint;
  spec.volume_fraction = cfg.volume_fraction;
  spec.beta = cfg.beta;
  spec.bandwidth = cfg.bandwidth;
  spec.penalty_exponent = cfg.penalty_exponent;
  spec.domain_volume = mesh.lumped_mass().sum();
  spec.violation_bound = cfg.violation_fraction * spec.domain_volume;
  spec.validate();

  AdaptConfig adapt_cfg = cfg.adapt_config;
  adapt_cfg.max_level = cfg.max_level.value_or(setup.initial_level);
  adapt_cfg.min_level = std::min(adapt_cfg.min_level, adapt_cfg.max_level);

  // Uniform start at the volume target, optionally perturbed.
  Eigen::VectorXd phi0 = Eigen::VectorXd::Constant(mesh.num_nodes(), 2.0 * cfg.volume_fraction - 1.0);
  if (cfg.init_perturbation > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(-cfg.init_perturbation, cfg.init_perturbation);
    for (Index i = 0; i < phi0.size(); ++i) phi0[i] = std::clamp(phi0[i] + u(rng), -1.0, 1.0);
  }
  NodalField phi = mesh.make_field(phi0);
  FilterPair filters(mesh, res.sizes);

  detail::RunOutput out(cfg.output_directory);
  if (out.enabled()) res.artifacts.push_back(out.log_path());

  MmaState mma;
  mma.move_limit = cfg.move_limit;
  std::vector<IterationRecord> history;
  Eigen::VectorXd previous_phi;
  double f_ref = 1.0;
  const int settled = schedule_settled_at(cfg.schedule);
  SolverOptions solver_options{cfg.solver};

  auto snapshot = [&](int k) {
    auto w = error_indicator(mesh, res.state.rho, adapt_cfg.alpha);
    res.artifacts.push_back(out.snapshot(mesh, res.state, w, detail::iteration_tag(k)));
  };

  int k = 0;
  try {
    for (;; ++k) {
      const ScheduleValues sched = advance_schedules(cfg.schedule, k);
      problem.simp_penalty = sched.penalty;
      // Stage changes and remeshes coincide.
      const bool stage_start = k % cfg.schedule.stage_length == 0;
      if (k > 0 && cfg.adapt && k % cfg.remesh_cadence == 0) {
        // Indicator from the last evaluated density, then carry phi across.
        auto w = error_indicator(mesh, res.state.rho, adapt_cfg.alpha);
        SimplicialMesh next = adapt(mesh, w, adapt_cfg);
        phi = transfer(phi, mesh, next, std::pair{-1.0, 1.0});
        detail::carry_history(mma, mesh, next);
        mesh = std::move(next);
        filters = FilterPair(mesh, res.sizes);
        previous_phi.resize(0);
        res.remesh_iterations.push_back(k);
      }

      res.state = forward(mesh, phi, filters, sched.sharpness, sched.geometric_sharpness);
      res.evaluation = evaluate(mesh, res.state, problem, spec, filters, cfg.solver_tolerance, solver_options);
      const EvalBundle& ev = res.evaluation;
      if (!std::isfinite(ev.F)) throw Error(ErrorKind::convergence_failure, "compliance is not finite");

      LogRow row{k, ev.F, ev.g1, ev.g2, ev.max_rho_bar, mesh.num_elements(), elapsed()};
      res.log.push_back(row);
      out.row(row);
      if (observer) observer(row);

      const double change = previous_phi.size() == phi.size()
                                ? (phi.values - previous_phi).cwiseAbs().maxCoeff()
                                : std::numeric_limits<double>::infinity();
      history.push_back({ev.F, change});
      TerminationStatus status = check_termination(history, cfg.limits);
      if (status == TerminationStatus::converged && k < settled) status = TerminationStatus::proceed;
      if (status != TerminationStatus::proceed) {
        res.reason = status;
        break;
      }
      if (out.enabled() && cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0) snapshot(k);

      // Objective normalized per stage.
      if (stage_start) f_ref = std::max(std::abs(ev.F), 1e-300);
      const Index n = phi.size();
      const Index m = cfg.enable_max ? 2 : 1;
      Eigen::VectorXd g(m);
      Eigen::MatrixXd dg(m, n);
      g[0] = ev.g1;
      dg.row(0) = ev.dg1_dphi.transpose();
      if (cfg.enable_max) {
        const double scale = 1.0 / spec.domain_volume;
        g[1] = scale * ev.g2;
        dg.row(1) = scale * ev.dg2_dphi.transpose();
      }
      MmaResult step = mma_update(mma, phi.values, ev.F / f_ref, ev.dF_dphi / f_ref, g, dg,
                                  Eigen::VectorXd::Constant(n, -1.0), Eigen::VectorXd::Constant(n, 1.0));
      previous_phi = phi.values;
      phi.values = step.x.cwiseMax(-1.0).cwiseMin(1.0);
    }
  } catch (const Error& e) {
    if (out.enabled()) out.status("failed at iteration " + std::to_string(k) + ": " + e.what());
    throw;
  }

  if (out.enabled()) {
    snapshot(k);
    res.artifacts.push_back(out.status(to_string(res.reason)));
  }
  return res;
}

}  // namespace thinwall
