#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "thinwall/error.hpp"

namespace thinwall {

/// Svanberg's MMA with elastic variables y (cost c y + d y^2 / 2) and the
/// artificial z variable fixed at zero (a_i = 0).
struct MmaState {
  Eigen::VectorXd lower, upper;  // asymptotes
  Eigen::VectorXd xold1, xold2;
  int iteration = 0;

  double asymptote_init = 0.5;
  double asymptote_grow = 1.2;
  double asymptote_shrink = 0.7;
  double move_limit = 0.2;  // fraction of the box range
  // Closest an asymptote may come to x, as a fraction of the box range. The
  // usual 0.01 stalls near smooth minima, where the model curvature scales
  // like |df| / distance.
  double asymptote_min_gap = 1e-5;
  double elastic_c = 1000.0;
  double elastic_d = 1.0;
  double raa0 = 1e-5;

  void reset() {
    iteration = 0;
    lower.resize(0);
    upper.resize(0);
    xold1.resize(0);
    xold2.resize(0);
  }
};

struct MmaResult {
  Eigen::VectorXd x;
  Eigen::VectorXd lambda;  // subproblem multipliers
  Eigen::VectorXd y;       // elastic slack; nonzero marks an infeasible subproblem
  double kkt_residual = 0.0;
  int dual_iterations = 0;
  bool infeasible = false;
};

namespace detail {

// Separable subproblem data and its dual.
struct MmaSubproblem {
  Eigen::VectorXd lo, up, alpha, beta, p0, q0, b;
  Eigen::MatrixXd P, Q;
  double c = 1000.0, d = 1.0;

  Eigen::Index n() const { return lo.size(); }
  Eigen::Index m() const { return b.size(); }

  Eigen::VectorXd primal(const Eigen::VectorXd& lam) const {
    Eigen::VectorXd x(n());
    for (Eigen::Index j = 0; j < n(); ++j) {
      double p = p0[j], q = q0[j];
      for (Eigen::Index i = 0; i < m(); ++i) {
        p += lam[i] * P(i, j);
        q += lam[i] * Q(i, j);
      }
      double sp = std::sqrt(p), sq = std::sqrt(q);
      x[j] = std::clamp((sp * lo[j] + sq * up[j]) / (sp + sq), alpha[j], beta[j]);
    }
    return x;
  }

  Eigen::VectorXd slack_y(const Eigen::VectorXd& lam) const {
    return ((lam.array() - c) / d).max(0.0).matrix();
  }

  // Constraint left-hand sides without the elastic slack.
  Eigen::VectorXd lhs(const Eigen::VectorXd& x) const {
    Eigen::VectorXd ux = (up - x).cwiseInverse(), xl = (x - lo).cwiseInverse();
    return P * ux + Q * xl;
  }

  double dual_value(const Eigen::VectorXd& lam) const {
    Eigen::VectorXd x = primal(lam), y = slack_y(lam);
    double w = 0.0;
    for (Eigen::Index j = 0; j < n(); ++j) w += p0[j] / (up[j] - x[j]) + q0[j] / (x[j] - lo[j]);
    w += lam.dot(lhs(x) - b);
    for (Eigen::Index i = 0; i < m(); ++i) w += c * y[i] + 0.5 * d * y[i] * y[i] - lam[i] * y[i];
    return w;
  }

  Eigen::VectorXd dual_gradient(const Eigen::VectorXd& lam) const {
    Eigen::VectorXd x = primal(lam);
    return lhs(x) - b - slack_y(lam);
  }

  Eigen::MatrixXd dual_hessian(const Eigen::VectorXd& lam) const {
    Eigen::VectorXd x = primal(lam);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m(), m());
    for (Eigen::Index j = 0; j < n(); ++j) {
      if (x[j] <= alpha[j] || x[j] >= beta[j]) continue;
      double ux = up[j] - x[j], xl = x[j] - lo[j];
      double p = p0[j], q = q0[j];
      for (Eigen::Index i = 0; i < m(); ++i) {
        p += lam[i] * P(i, j);
        q += lam[i] * Q(i, j);
      }
      double curv = 2.0 * p / (ux * ux * ux) + 2.0 * q / (xl * xl * xl);
      Eigen::VectorXd g = P.col(j) / (ux * ux) - Q.col(j) / (xl * xl);
      h.noalias() -= g * g.transpose() / curv;
    }
    for (Eigen::Index i = 0; i < m(); ++i)
      if (lam[i] > c) h(i, i) -= 1.0 / d;
    return h;
  }

  // Projected gradient: zero exactly at the dual optimum (lam >= 0).
  static double kkt(const Eigen::VectorXd& lam, const Eigen::VectorXd& grad) {
    double r = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) r = std::max(r, std::abs(std::min(lam[i], -grad[i])));
    return r;
  }
};

// Maximizes the concave dual over lam >= 0 by projected Newton with an
// Armijo backtrack.
inline Eigen::VectorXd solve_dual(const MmaSubproblem& sp, int& iterations, double& residual) {
  const Eigen::Index m = sp.m();
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(m);
  if (m == 0) {
    residual = 0.0;
    return lam;
  }
  const double scale = 1.0 + sp.b.cwiseAbs().maxCoeff();
  double w = sp.dual_value(lam);
  for (iterations = 0; iterations < 200; ++iterations) {
    Eigen::VectorXd g = sp.dual_gradient(lam);
    residual = MmaSubproblem::kkt(lam, g);
    if (residual <= 1e-13 * scale) break;
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < m; ++i)
      if (lam[i] > 0.0 || g[i] > 0.0) free.push_back(i);
    Eigen::MatrixXd h = sp.dual_hessian(lam);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(m);
    const Eigen::Index k = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd hf(k, k);
    Eigen::VectorXd gf(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      gf[a] = g[free[a]];
      for (Eigen::Index b = 0; b < k; ++b) hf(a, b) = h(free[a], free[b]);
    }
    // Flat directions (every x on its bound): regularize towards ascent.
    double reg = 1e-12 * (1.0 + hf.cwiseAbs().maxCoeff());
    Eigen::VectorXd sf = (-hf + reg * Eigen::MatrixXd::Identity(k, k)).ldlt().solve(gf);
    if (!sf.allFinite() || sf.dot(gf) <= 0.0) sf = gf;
    for (Eigen::Index a = 0; a < k; ++a) step[free[a]] = sf[a];
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      Eigen::VectorXd trial = (lam + t * step).cwiseMax(0.0);
      double wt = sp.dual_value(trial);
      if (wt >= w + 1e-4 * g.dot(trial - lam) || (trial - lam).norm() < 1e-16 * (1.0 + lam.norm())) {
        moved = (trial - lam).norm() > 0.0;
        lam = trial;
        w = wt;
        break;
      }
    }
    if (!moved) break;
  }
  residual = MmaSubproblem::kkt(lam, sp.dual_gradient(lam));
  return lam;
}

}  // namespace detail

/// One MMA step for min f(x) s.t. g_i(x) <= 0, xmin <= x <= xmax.
/// `dg` holds one constraint gradient per row.
inline MmaResult mma_update(MmaState& st, const Eigen::VectorXd& x, double f, const Eigen::VectorXd& df,
                            const Eigen::VectorXd& g, const Eigen::MatrixXd& dg, const Eigen::VectorXd& xmin,
                            const Eigen::VectorXd& xmax) {
  (void)f;
  const Eigen::Index n = x.size(), m = g.size();
  if (df.size() != n || dg.rows() != m || (m > 0 && dg.cols() != n) || xmin.size() != n || xmax.size() != n)
    throw Error(ErrorKind::invalid_spec, "MMA dimensions are inconsistent");
  for (Eigen::Index j = 0; j < n; ++j)
    if (!(xmin[j] < xmax[j]) || x[j] < xmin[j] || x[j] > xmax[j])
      throw Error(ErrorKind::invalid_spec, "MMA iterate outside its box");
  if (!df.allFinite() || !g.allFinite() || !dg.allFinite())
    throw Error(ErrorKind::invalid_field, "non-finite value passed to MMA");

  Eigen::VectorXd range = xmax - xmin;
  if (st.xold1.size() != n) st.reset();
  Eigen::VectorXd lo(n), up(n);
  if (st.iteration < 2) {
    lo = x - st.asymptote_init * range;
    up = x + st.asymptote_init * range;
  } else {
    for (Eigen::Index j = 0; j < n; ++j) {
      double osc = (x[j] - st.xold1[j]) * (st.xold1[j] - st.xold2[j]);
      double factor = osc > 0.0 ? st.asymptote_grow : (osc < 0.0 ? st.asymptote_shrink : 1.0);
      lo[j] = x[j] - factor * (st.xold1[j] - st.lower[j]);
      up[j] = x[j] + factor * (st.upper[j] - st.xold1[j]);
      lo[j] = std::clamp(lo[j], x[j] - 10.0 * range[j], x[j] - st.asymptote_min_gap * range[j]);
      up[j] = std::clamp(up[j], x[j] + st.asymptote_min_gap * range[j], x[j] + 10.0 * range[j]);
    }
  }

  detail::MmaSubproblem sp;
  sp.lo = lo;
  sp.up = up;
  sp.c = st.elastic_c;
  sp.d = st.elastic_d;
  sp.alpha.resize(n);
  sp.beta.resize(n);
  sp.p0.resize(n);
  sp.q0.resize(n);
  sp.P.resize(m, n);
  sp.Q.resize(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    sp.alpha[j] = std::max({xmin[j], lo[j] + 0.1 * (x[j] - lo[j]), x[j] - st.move_limit * range[j]});
    sp.beta[j] = std::min({xmax[j], up[j] - 0.1 * (up[j] - x[j]), x[j] + st.move_limit * range[j]});
    const double ux2 = (up[j] - x[j]) * (up[j] - x[j]), xl2 = (x[j] - lo[j]) * (x[j] - lo[j]);
    const double reg = st.raa0 / std::max(range[j], 1e-5);
    sp.p0[j] = ux2 * (1.001 * std::max(df[j], 0.0) + 0.001 * std::max(-df[j], 0.0) + reg);
    sp.q0[j] = xl2 * (0.001 * std::max(df[j], 0.0) + 1.001 * std::max(-df[j], 0.0) + reg);
    for (Eigen::Index i = 0; i < m; ++i) {
      sp.P(i, j) = ux2 * (1.001 * std::max(dg(i, j), 0.0) + 0.001 * std::max(-dg(i, j), 0.0) + reg);
      sp.Q(i, j) = xl2 * (0.001 * std::max(dg(i, j), 0.0) + 1.001 * std::max(-dg(i, j), 0.0) + reg);
    }
  }
  sp.b = sp.lhs(x) - g;

  MmaResult out;
  out.lambda = detail::solve_dual(sp, out.dual_iterations, out.kkt_residual);
  out.x = sp.primal(out.lambda);
  out.y = sp.slack_y(out.lambda);
  out.infeasible = (out.y.array() > 0.0).any();

  st.xold2 = st.xold1.size() == n ? st.xold1 : x;
  st.xold1 = x;
  st.lower = lo;
  st.upper = up;
  ++st.iteration;
  return out;
}

/// Piecewise-constant continuation: parameters change only every
/// `stage_length` iterations.
struct ContinuationSchedule {
  int stage_length = 10;
  double penalty_start = 1.0, penalty_final = 3.0;
  int penalty_ramp_end = 30;
  double sharpness_start = 1.0, sharpness_max = 64.0;
  double geometric_start = 8.0, geometric_max = 512.0;

  bool operator==(const ContinuationSchedule&) const = default;

  void validate() const {
    if (stage_length < 1) throw Error(ErrorKind::invalid_spec, "stage length must be at least 1");
    if (!(penalty_start >= 1.0 && penalty_final >= penalty_start))
      throw Error(ErrorKind::invalid_spec, "penalty schedule must be non-decreasing from at least 1");
    if (!(sharpness_start > 0.0 && sharpness_max >= sharpness_start))
      throw Error(ErrorKind::invalid_spec, "sharpness schedule must be positive and non-decreasing");
    if (!(geometric_start >= sharpness_start && geometric_max >= sharpness_max && geometric_max >= geometric_start))
      throw Error(ErrorKind::invalid_spec, "geometric sharpness must dominate the analysis sharpness");
  }
};

struct ScheduleValues {
  double penalty;
  double sharpness;
  double geometric_sharpness;

  bool operator==(const ScheduleValues&) const = default;
};

inline ScheduleValues advance_schedules(const ContinuationSchedule& s, int iteration) {
  const int stage = std::max(iteration, 0) / s.stage_length;
  const double start = static_cast<double>(stage) * s.stage_length;
  double penalty = s.penalty_final;
  if (s.penalty_ramp_end > 0)
    penalty = std::min(s.penalty_final,
                       s.penalty_start + (s.penalty_final - s.penalty_start) * start / s.penalty_ramp_end);
  const double doubling = std::ldexp(1.0, std::min(stage, 60));
  return {penalty, std::min(s.sharpness_start * doubling, s.sharpness_max),
          std::min(s.geometric_start * doubling, s.geometric_max)};
}

/// First iteration from which the schedule no longer changes.
inline int schedule_settled_at(const ContinuationSchedule& s) {
  const ScheduleValues last{s.penalty_final, s.sharpness_max, s.geometric_max};
  for (int stage = 0;; ++stage)
    if (advance_schedules(s, stage * s.stage_length) == last) return stage * s.stage_length;
}

struct TerminationLimits {
  double objective_tolerance = 1e-4;
  double design_tolerance = 1e-3;
  int consecutive = 3;
  int max_iterations = 100;

  bool operator==(const TerminationLimits&) const = default;
};

/// One completed iteration: objective and max |phi_k - phi_{k-1}|.
struct IterationRecord {
  double objective;
  double design_change;
};

enum class TerminationStatus { proceed, converged, iteration_capped };

inline const char* to_string(TerminationStatus s) {
  switch (s) {
    case TerminationStatus::proceed: return "continue";
    case TerminationStatus::converged: return "converged";
    case TerminationStatus::iteration_capped: return "iteration-capped";
  }
  return "?";
}

inline TerminationStatus check_termination(const std::vector<IterationRecord>& history,
                                           const TerminationLimits& limits) {
  const int n = static_cast<int>(history.size());
  if (n > limits.consecutive) {
    bool quiet = true;
    for (int k = n - limits.consecutive; k < n && quiet; ++k) {
      double f0 = history[k - 1].objective, f1 = history[k].objective;
      double rel = std::abs(f1 - f0) / std::max(std::abs(f1), 1e-300);
      quiet = (f1 == f0 || rel < limits.objective_tolerance) && history[k].design_change < limits.design_tolerance;
    }
    if (quiet) return TerminationStatus::converged;
  }
  if (n >= limits.max_iterations) return TerminationStatus::iteration_capped;
  return TerminationStatus::proceed;
}

}  // namespace thinwall
