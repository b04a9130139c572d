#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "thinwall/adapt.hpp"
#include "thinwall/error.hpp"
#include "thinwall/fem.hpp"
#include "thinwall/optimizer.hpp"

namespace thinwall {

/// Everything a run needs. Unset optionals mean "derive from the problem".
struct RunConfig {
  std::string problem = "cantilever_2d";
  std::vector<double> extent;  // empty: problem default
  std::vector<int> cells;

  double youngs_modulus = 1.0;
  double poisson_ratio = 0.3;
  double rho_min = 1e-6;
  ContinuationSchedule schedule;

  std::optional<double> min_diameter;  // default 4 finest cells
  std::optional<double> max_diameter;  // default 2 min_diameter
  bool enable_max = true;

  double volume_fraction = 0.5;
  double beta = 0.9;
  double bandwidth = 0.05;
  double penalty_exponent = 2.0;
  double violation_fraction = 1e-3;  // eps* / V0

  bool adapt = true;
  AdaptConfig adapt_config;
  int remesh_cadence = 10;
  std::optional<int> initial_level;  // default: problem's
  std::optional<int> max_level;      // default: initial level

  TerminationLimits limits;
  double move_limit = 0.05;

  SolverMethod solver = SolverMethod::automatic;
  double solver_tolerance = 1e-8;

  std::string output_directory = "thinwall_out";
  int snapshot_every = 10;

  unsigned seed = 0;
  double init_perturbation = 0.0;

  // Explicit problem description (problem = custom).
  std::vector<std::string> fixed_regions;
  std::string load_region;
  std::vector<double> load_force;
  std::vector<double> load_window_lo, load_window_hi;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r"), e = s.find_last_not_of(" \t\r");
  return b == std::string_view::npos ? std::string() : std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw std::invalid_argument("expected a number, got '" + s + "'");
  return v;
}

inline long parse_integer(const std::string& s) {
  long v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw std::invalid_argument("expected an integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& s, Parse parse) {
  std::vector<T> out;
  for (const auto& item : split_list(s)) out.push_back(static_cast<T>(parse(item)));
  return out;
}

template <typename T, typename Format>
std::string format_list(const std::vector<T>& v, Format fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out;
}

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define THINWALL_DOUBLE_KEY(key, member, help)                                                     \
  ConfigKey {                                                                                      \
    key, help, [](RunConfig& c, const std::string& v) { c.member = parse_double(v); },             \
        [](const RunConfig& c) { return format_double(c.member); }                                 \
  }
#define THINWALL_INT_KEY(key, member, help)                                                        \
  ConfigKey {                                                                                      \
    key, help, [](RunConfig& c, const std::string& v) { c.member = static_cast<int>(parse_integer(v)); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                                \
  }
#define THINWALL_BOOL_KEY(key, member, help)                                                       \
  ConfigKey {                                                                                      \
    key, help, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v); },               \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }                \
  }
#define THINWALL_AUTO_DOUBLE_KEY(key, member, help)                                                \
  ConfigKey {                                                                                      \
    key, help,                                                                                     \
        [](RunConfig& c, const std::string& v) {                                                   \
          if (v == "auto") c.member.reset(); else c.member = parse_double(v);                      \
        },                                                                                         \
        [](const RunConfig& c) { return c.member ? format_double(*c.member) : std::string("auto"); } \
  }
#define THINWALL_DOUBLE_LIST_KEY(key, member, help)                                                \
  ConfigKey {                                                                                      \
    key, help, [](RunConfig& c, const std::string& v) { c.member = parse_list<double>(v, parse_double); }, \
        [](const RunConfig& c) { return format_list(c.member, format_double); }                    \
  }

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"problem", "cantilever_2d | sheared_beam | twisted_ball | multi_cube | custom",
       [](RunConfig& c, const std::string& v) { c.problem = v; }, [](const RunConfig& c) { return c.problem; }},
      THINWALL_DOUBLE_LIST_KEY("domain.extent", extent, "box size per axis; empty = problem default"),
      {"domain.cells", "coarse cells per axis; empty = problem default",
       [](RunConfig& c, const std::string& v) { c.cells = parse_list<int>(v, parse_integer); },
       [](const RunConfig& c) { return format_list(c.cells, [](int x) { return std::to_string(x); }); }},
      THINWALL_DOUBLE_KEY("material.youngs_modulus", youngs_modulus, "E0"),
      THINWALL_DOUBLE_KEY("material.poisson_ratio", poisson_ratio, "nu"),
      THINWALL_DOUBLE_KEY("material.rho_min", rho_min, "stiffness floor of modified SIMP"),
      THINWALL_DOUBLE_KEY("material.penalty_start", schedule.penalty_start, "SIMP exponent at iteration 0"),
      THINWALL_DOUBLE_KEY("material.penalty_final", schedule.penalty_final, "SIMP exponent after the ramp"),
      THINWALL_INT_KEY("material.penalty_ramp_end", schedule.penalty_ramp_end, "iteration where P reaches its final value"),
      THINWALL_INT_KEY("projection.stage_length", schedule.stage_length, "iterations between continuation steps"),
      THINWALL_DOUBLE_KEY("projection.sharpness_start", schedule.sharpness_start, "analysis sharpness s at iteration 0"),
      THINWALL_DOUBLE_KEY("projection.sharpness_max", schedule.sharpness_max, "cap on s (doubles per stage)"),
      THINWALL_DOUBLE_KEY("projection.geometric_start", schedule.geometric_start, "geometric sharpness s_g at iteration 0"),
      THINWALL_DOUBLE_KEY("projection.geometric_max", schedule.geometric_max, "cap on s_g (doubles per stage)"),
      THINWALL_AUTO_DOUBLE_KEY("feature.min_diameter", min_diameter, "R_min; auto = 4 finest cell sizes"),
      THINWALL_AUTO_DOUBLE_KEY("feature.max_diameter", max_diameter, "R_max; auto = 2 R_min"),
      THINWALL_BOOL_KEY("feature.enable_max", enable_max, "impose the maximum-size constraint g2"),
      THINWALL_DOUBLE_KEY("constraint.volume_fraction", volume_fraction, "V*"),
      THINWALL_DOUBLE_KEY("constraint.beta", beta, "detector threshold"),
      THINWALL_DOUBLE_KEY("constraint.bandwidth", bandwidth, "detector half-width h"),
      THINWALL_DOUBLE_KEY("constraint.penalty_exponent", penalty_exponent, "eta"),
      THINWALL_DOUBLE_KEY("constraint.violation_fraction", violation_fraction, "eps* as a fraction of V0"),
      THINWALL_BOOL_KEY("mesh.adapt", adapt, "adapt the mesh every cadence iterations"),
      THINWALL_DOUBLE_KEY("mesh.alpha", adapt_config.alpha, "indicator solid weight"),
      THINWALL_DOUBLE_KEY("mesh.growth_rate", adapt_config.growth_rate, "element-count ratio budget per adaptation"),
      THINWALL_DOUBLE_KEY("mesh.refine_fraction", adapt_config.refine_fraction, "top fraction marked for refinement"),
      THINWALL_DOUBLE_KEY("mesh.coarsen_fraction", adapt_config.coarsen_fraction, "bottom fraction marked for coarsening"),
      THINWALL_INT_KEY("mesh.min_level", adapt_config.min_level, "coarsest bisection level"),
      {"mesh.max_level", "finest bisection level; auto = initial level",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") c.max_level.reset(); else c.max_level = static_cast<int>(parse_integer(v));
       },
       [](const RunConfig& c) { return c.max_level ? std::to_string(*c.max_level) : std::string("auto"); }},
      THINWALL_INT_KEY("mesh.cadence", remesh_cadence, "iterations between adaptations"),
      {"mesh.initial_level", "uniform bisections of the coarse grid; auto = problem default",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") c.initial_level.reset(); else c.initial_level = static_cast<int>(parse_integer(v));
       },
       [](const RunConfig& c) { return c.initial_level ? std::to_string(*c.initial_level) : std::string("auto"); }},
      THINWALL_INT_KEY("optimizer.max_iterations", limits.max_iterations, "iteration budget"),
      THINWALL_DOUBLE_KEY("optimizer.objective_tolerance", limits.objective_tolerance, "relative objective change"),
      THINWALL_DOUBLE_KEY("optimizer.design_tolerance", limits.design_tolerance, "max design change"),
      THINWALL_INT_KEY("optimizer.consecutive", limits.consecutive, "quiet iterations needed to converge"),
      THINWALL_DOUBLE_KEY("optimizer.move_limit", move_limit, "MMA move limit, fraction of [-1, 1]"),
      {"solver.method", "auto | cg | direct",
       [](RunConfig& c, const std::string& v) {
         if (v == "auto") c.solver = SolverMethod::automatic;
         else if (v == "cg") c.solver = SolverMethod::cg;
         else if (v == "direct") c.solver = SolverMethod::direct;
         else throw std::invalid_argument("expected auto, cg or direct, got '" + v + "'");
       },
       [](const RunConfig& c) {
         return std::string(c.solver == SolverMethod::cg ? "cg" : c.solver == SolverMethod::direct ? "direct" : "auto");
       }},
      THINWALL_DOUBLE_KEY("solver.tolerance", solver_tolerance, "relative residual of elasticity solves"),
      {"output.directory", "where snapshots and the log go",
       [](RunConfig& c, const std::string& v) { c.output_directory = v; },
       [](const RunConfig& c) { return c.output_directory; }},
      THINWALL_INT_KEY("output.snapshot_every", snapshot_every, "VTK cadence; 0 = final only"),
      {"seed", "seed of the initial perturbation",
       [](RunConfig& c, const std::string& v) { c.seed = static_cast<unsigned>(parse_integer(v)); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      THINWALL_DOUBLE_KEY("init.perturbation", init_perturbation, "amplitude of uniform noise on the initial phi"),
      {"bc.fixed", "regions clamped in all directions (custom problem)",
       [](RunConfig& c, const std::string& v) { c.fixed_regions = split_list(v); },
       [](const RunConfig& c) { return format_list(c.fixed_regions, [](const std::string& s) { return s; }); }},
      {"load.face", "region carrying the load (custom problem)",
       [](RunConfig& c, const std::string& v) { c.load_region = v; }, [](const RunConfig& c) { return c.load_region; }},
      THINWALL_DOUBLE_LIST_KEY("load.force", load_force, "total force vector (custom problem)"),
      THINWALL_DOUBLE_LIST_KEY("load.window_lo", load_window_lo, "lower corner of the loaded patch"),
      THINWALL_DOUBLE_LIST_KEY("load.window_hi", load_window_hi, "upper corner of the loaded patch"),
  };
  return keys;
}

#undef THINWALL_DOUBLE_KEY
#undef THINWALL_INT_KEY
#undef THINWALL_BOOL_KEY
#undef THINWALL_AUTO_DOUBLE_KEY
#undef THINWALL_DOUBLE_LIST_KEY

}  // namespace detail

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& invariant) { throw Error(ErrorKind::config_invariant, "violates " + invariant); };
  static const std::array<std::string_view, 5> known{"cantilever_2d", "sheared_beam", "twisted_ball", "multi_cube",
                                                     "custom"};
  if (std::find(known.begin(), known.end(), c.problem) == known.end()) fail("problem is a known name ('" + c.problem + "')");
  if (!c.extent.empty() && (c.extent.size() < 2 || c.extent.size() > 3)) fail("domain.extent has 2 or 3 entries");
  for (double e : c.extent)
    if (!(e > 0.0)) fail("domain.extent > 0");
  if (!c.cells.empty() && !c.extent.empty() && c.cells.size() != c.extent.size())
    fail("domain.cells and domain.extent have the same length");
  for (int n : c.cells)
    if (n < 1) fail("domain.cells >= 1");
  if (c.min_diameter && !(*c.min_diameter > 0.0)) fail("feature.min_diameter > 0");
  if (c.min_diameter && c.max_diameter && !(*c.min_diameter < *c.max_diameter))
    fail("feature.min_diameter < feature.max_diameter (R_min < R_max)");
  if (!(c.volume_fraction > 0.0 && c.volume_fraction < 1.0)) fail("0 < constraint.volume_fraction < 1");
  if (!(c.beta > 0.0 && c.beta < 1.0)) fail("0 < constraint.beta < 1");
  if (!(c.bandwidth > 0.0 && c.beta + c.bandwidth < 1.0)) fail("constraint.bandwidth > 0 and beta + bandwidth < 1");
  if (!(c.penalty_exponent >= 1.0)) fail("constraint.penalty_exponent >= 1");
  if (!(c.violation_fraction > 0.0 && c.violation_fraction < 0.1)) fail("0 < constraint.violation_fraction < 0.1");
  if (!(c.youngs_modulus > 0.0)) fail("material.youngs_modulus > 0");
  if (!(c.poisson_ratio > 0.0 && c.poisson_ratio < 0.5)) fail("0 < material.poisson_ratio < 0.5");
  if (!(c.rho_min > 0.0 && c.rho_min < 0.1)) fail("0 < material.rho_min < 0.1");
  if (c.remesh_cadence < 1) fail("mesh.cadence >= 1");
  if (c.adapt && c.remesh_cadence >= 1 && c.schedule.stage_length % c.remesh_cadence != 0)
    fail("projection.stage_length is a multiple of mesh.cadence (schedule changes only on remesh iterations)");
  if (c.initial_level && *c.initial_level < 0) fail("mesh.initial_level >= 0");
  if (c.limits.max_iterations < 1) fail("optimizer.max_iterations >= 1");
  if (c.limits.consecutive < 1) fail("optimizer.consecutive >= 1");
  if (!(c.limits.objective_tolerance > 0.0 && c.limits.design_tolerance > 0.0)) fail("optimizer tolerances > 0");
  if (!(c.move_limit > 0.0 && c.move_limit <= 1.0)) fail("0 < optimizer.move_limit <= 1");
  if (!(c.solver_tolerance > 0.0 && c.solver_tolerance < 1.0)) fail("0 < solver.tolerance < 1");
  if (c.snapshot_every < 0) fail("output.snapshot_every >= 0");
  if (!(c.init_perturbation >= 0.0 && c.init_perturbation <= 1.0)) fail("0 <= init.perturbation <= 1");
  if (c.max_level && *c.max_level < c.adapt_config.min_level) fail("mesh.min_level <= mesh.max_level");
  if (c.max_level && c.initial_level && *c.max_level < *c.initial_level) fail("mesh.initial_level <= mesh.max_level");
  try {
    AdaptConfig a = c.adapt_config;
    a.max_level = std::max(a.min_level, c.max_level.value_or(a.min_level));
    a.validate();
  } catch (const Error& e) {
    fail(std::string("mesh settings: ") + e.what());
  }
  try {
    c.schedule.validate();
  } catch (const Error& e) {
    fail(std::string("continuation settings: ") + e.what());
  }
  if (c.problem == "custom") {
    if (c.extent.empty() || c.cells.empty()) fail("custom problems set domain.extent and domain.cells");
    if (c.fixed_regions.empty()) fail("custom problems set bc.fixed");
    if (c.load_region.empty() || c.load_force.size() != c.extent.size())
      fail("custom problems set load.face and a load.force with one entry per axis");
  }
  if (!c.load_window_lo.empty() && c.load_window_lo.size() != c.load_window_hi.size())
    fail("load.window_lo and load.window_hi have the same length");
}

inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>") {
  RunConfig c;
  std::string line;
  int number = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++number;
    auto hash = line.find('#');
    std::string body = detail::trim(line.substr(0, hash));
    if (body.empty()) continue;
    auto where = [&] { return source + ":" + std::to_string(number) + ": "; };
    auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::parse_error, where() + "expected 'key = value'");
    std::string key = detail::trim(body.substr(0, eq)), value = detail::trim(body.substr(eq + 1));
    const auto& keys = detail::config_keys();
    auto it = std::find_if(keys.begin(), keys.end(), [&](const detail::ConfigKey& k) { return k.name == key; });
    if (it == keys.end()) throw Error(ErrorKind::parse_error, where() + "unknown key '" + key + "'");
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw Error(ErrorKind::parse_error, where() + "duplicate key '" + key + "'");
    seen.push_back(key);
    try {
      it->set(c, value);
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::parse_error, where() + key + ": " + e.what());
    }
  }
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io_error, "cannot open config file '" + path + "'");
  return parse_config(in, path);
}

/// Every key with its current value, in reference-table order.
inline std::string serialize(const RunConfig& c) {
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(c) + "\n";
  return out;
}

/// Reference table of keys, defaults and meaning.
inline std::string config_reference() {
  RunConfig defaults;
  std::string out;
  for (const auto& k : detail::config_keys()) out += k.name + " = " + k.get(defaults) + "    # " + k.help + "\n";
  return out;
}

}  // namespace thinwall
