#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_set>
#include <utility>
#include <vector>

#include "thinwall/error.hpp"
#include "thinwall/mesh.hpp"

namespace thinwall {

/// Per-element refinement priority in [0, 1].
struct ElementIndicator {
  std::vector<double> values;
  std::uint64_t mesh_version = 0;
};

struct AdaptConfig {
  double alpha = 0.1;
  double growth_rate = 1.3;
  double refine_fraction = 0.2;
  double coarsen_fraction = 0.3;
  int min_level = 0;
  int max_level = 2;

  bool operator==(const AdaptConfig&) const = default;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::invalid_spec, "alpha must lie in [0, 1]");
    if (!(growth_rate > 0.0)) throw Error(ErrorKind::invalid_spec, "growth_rate must be positive");
    if (refine_fraction < 0.0 || coarsen_fraction < 0.0 || refine_fraction + coarsen_fraction > 1.0 + 1e-12)
      throw Error(ErrorKind::invalid_spec, "refine_fraction + coarsen_fraction must lie in [0, 1]");
    if (min_level < 0 || min_level > max_level)
      throw Error(ErrorKind::invalid_spec, "levels must satisfy 0 <= min_level <= max_level");
  }
};

/// Raw indicator rho (1 - rho + alpha).
inline double indicator_raw(double rho, double alpha) { return rho * (1.0 - rho + alpha); }

/// Largest value of the raw indicator over rho in [0, 1]; attained at
/// rho = (1 + alpha) / 2.
inline double indicator_peak(double alpha) { return 0.25 * (1.0 + alpha) * (1.0 + alpha); }

inline ElementIndicator error_indicator(const SimplicialMesh& mesh, const NodalField& rho, double alpha) {
  mesh.require_bound(rho, "density field");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::invalid_spec, "alpha must lie in [0, 1]");
  ElementIndicator w;
  w.mesh_version = mesh.version();
  w.values.resize(mesh.num_elements());
  const double peak = indicator_peak(alpha);
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    double r = std::clamp(mesh.element_average(rho.values, e), 0.0, 1.0);
    w.values[e] = std::clamp(indicator_raw(r, alpha) / peak, 0.0, 1.0);
  }
  return w;
}

namespace detail {

// Mutable view over a mesh's refinement forest. Keeps node-to-cell adjacency
// of active cells current through every bisection and merge.
class MeshEditor {
 public:
  explicit MeshEditor(SimplicialMesh& mesh) : m_(mesh), d_(mesh.dim_) {
    node_cells_.resize(m_.nodes_.size());
    for (Index c = 0; c < static_cast<Index>(m_.cells_.size()); ++c) {
      const Cell& cell = m_.cells_[c];
      if (!cell.alive || !cell.active) continue;
      ++active_;
      for (int i = 0; i <= d_; ++i) node_cells_[cell.verts[i]].push_back(c);
    }
  }

  Index active_count() const { return active_; }
  const Cell& cell(Index c) const { return m_.cells_[c]; }
  Index num_cells() const { return static_cast<Index>(m_.cells_.size()); }

  EdgeKey refinement_edge(Index c) const {
    const Cell& cell = m_.cells_[c];
    return edge_key(cell.verts[0], cell.verts[cell.tag]);
  }

  // Active cells containing every node in `nodes`, ascending.
  std::vector<Index> cells_with(std::span<const Index> nodes) const {
    std::vector<Index> out = node_cells_[nodes[0]];
    for (std::size_t k = 1; k < nodes.size(); ++k) {
      const auto& other = node_cells_[nodes[k]];
      std::erase_if(out, [&](Index c) { return std::find(other.begin(), other.end(), c) == other.end(); });
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Bisects `c` after recursively refining every neighbour across its
  /// refinement edge until that edge is shared compatibly.
  void refine(Index c, int depth = 0) {
    if (!m_.cells_[c].active) return;
    if (depth > 200) throw Error(ErrorKind::invalid_domain, "bisection closure did not terminate");
    const EdgeKey edge = refinement_edge(c);
    const std::array<Index, 2> ends{edge.first, edge.second};
    std::vector<Index> patch;
    for (;;) {
      patch = cells_with(ends);
      auto bad = std::find_if(patch.begin(), patch.end(), [&](Index p) { return refinement_edge(p) != edge; });
      if (bad == patch.end()) break;
      refine(*bad, depth + 1);
    }
    for (Index p : patch) bisect(p);
  }

  /// Undoes the bisection that created node `z` if every cell around it
  /// passes `allowed`, the level jump stays at most one, and the element
  /// count stays at or above `lower`.
  template <typename Allowed>
  bool try_coarsen(Index z, Allowed&& allowed, double lower) {
    if (z < 0 || z >= static_cast<Index>(node_cells_.size())) return false;
    const std::vector<Index> patch = node_cells_[z];
    if (patch.empty()) return false;
    std::vector<Index> parents;
    for (Index c : patch) {
      Index p = m_.cells_[c].parent;
      if (p < 0 || m_.cells_[p].midpoint != z) return false;
      if (!allowed(c)) return false;
      if (std::find(parents.begin(), parents.end(), p) == parents.end()) parents.push_back(p);
    }
    if (patch.size() != 2 * parents.size()) return false;
    for (Index p : parents)
      for (Index ch : m_.cells_[p].children)
        if (ch < 0 || !m_.cells_[ch].active) return false;
    if (static_cast<double>(active_) - static_cast<double>(parents.size()) < lower) return false;

    // Only the facet opposite z leaves the patch; its neighbour must not end
    // up two levels finer than the merged parent.
    for (Index c : patch) {
      const Cell& cell = m_.cells_[c];
      int skip = 0;
      while (cell.verts[skip] != z) ++skip;
      FacetKey f = simplex_facet(cell.verts, d_, skip);
      for (Index n : cells_with(std::span<const Index>(f.data(), static_cast<std::size_t>(d_))))
        if (n != c && m_.cells_[n].level > cell.level) return false;
    }

    std::sort(parents.begin(), parents.end());
    for (Index p : parents) merge(p);
    Cell& first = m_.cells_[parents.front()];
    m_.midpoints_.erase(edge_key(first.verts[0], first.verts[first.tag]));
    return true;
  }

  /// Refines the coarser side of every facet whose level jump exceeds one.
  void enforce_grading() {
    for (;;) {
      std::unordered_map<FacetKey, std::array<Index, 2>, FacetHash> owners;
      for (Index c = 0; c < num_cells(); ++c) {
        const Cell& cell = m_.cells_[c];
        if (!cell.alive || !cell.active) continue;
        for (int k = 0; k <= d_; ++k) {
          auto [it, inserted] = owners.try_emplace(simplex_facet(cell.verts, d_, k), std::array<Index, 2>{c, -1});
          if (!inserted) it->second[1] = c;
        }
      }
      std::vector<Index> coarse;
      for (const auto& [key, pair] : owners) {
        if (pair[1] < 0) continue;
        int la = m_.cells_[pair[0]].level, lb = m_.cells_[pair[1]].level;
        if (la - lb > 1) coarse.push_back(pair[1]);
        if (lb - la > 1) coarse.push_back(pair[0]);
      }
      if (coarse.empty()) return;
      std::sort(coarse.begin(), coarse.end());
      coarse.erase(std::unique(coarse.begin(), coarse.end()), coarse.end());
      for (Index c : coarse) refine(c);
    }
  }

  void finish() { m_.finalize(); }

 private:
  Index midpoint(Index a, Index b) {
    EdgeKey key = edge_key(a, b);
    if (auto it = m_.midpoints_.find(key); it != m_.midpoints_.end()) return it->second;
    const Point &pa = m_.nodes_[a], &pb = m_.nodes_[b];
    Index z = static_cast<Index>(m_.nodes_.size());
    m_.nodes_.push_back({0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.5 * (pa[2] + pb[2])});
    node_cells_.emplace_back();
    m_.midpoints_[key] = z;
    return z;
  }

  void unlink(Index c) {
    const Cell& cell = m_.cells_[c];
    for (int i = 0; i <= d_; ++i) std::erase(node_cells_[cell.verts[i]], c);
  }
  void link(Index c) {
    const Cell& cell = m_.cells_[c];
    for (int i = 0; i <= d_; ++i) node_cells_[cell.verts[i]].push_back(c);
  }

  void bisect(Index c) {
    const Cell parent = m_.cells_[c];
    const int k = parent.tag;
    const Index a = parent.verts[0], b = parent.verts[k];
    const Index z = midpoint(a, b);

    Cell first, second;
    first.verts = parent.verts;
    first.verts[k] = z;
    for (int i = 0; i < k; ++i) second.verts[i] = parent.verts[i + 1];
    second.verts[k] = z;
    for (int i = k + 1; i <= d_; ++i) second.verts[i] = parent.verts[i];
    for (Cell* child : {&first, &second}) {
      child->tag = k > 1 ? k - 1 : d_;
      child->level = parent.level + 1;
      child->parent = c;
      child->active = true;
    }
    const Index id1 = num_cells();
    m_.cells_.push_back(first);
    m_.cells_.push_back(second);

    unlink(c);
    Cell& p = m_.cells_[c];
    p.active = false;
    p.children = {id1, id1 + 1};
    p.midpoint = z;
    link(id1);
    link(id1 + 1);
    ++active_;

    // Boundary facets through the bisected edge split in two.
    for (int skip = 1; skip <= d_; ++skip) {
      if (skip == k) continue;
      FacetKey f = simplex_facet(parent.verts, d_, skip);
      auto it = m_.boundary_tags_.find(f);
      if (it == m_.boundary_tags_.end()) continue;
      int tag = it->second;
      m_.boundary_tags_.erase(it);
      m_.boundary_tags_[replace(f, b, z)] = tag;
      m_.boundary_tags_[replace(f, a, z)] = tag;
    }
  }

  void merge(Index p) {
    Cell& parent = m_.cells_[p];
    const int k = parent.tag;
    const Index a = parent.verts[0], b = parent.verts[k], z = parent.midpoint;
    for (Index ch : parent.children) {
      unlink(ch);
      m_.cells_[ch].active = false;
      m_.cells_[ch].alive = false;
    }
    parent.children = {-1, -1};
    parent.midpoint = -1;
    parent.active = true;
    link(p);
    --active_;

    for (int skip = 1; skip <= d_; ++skip) {
      if (skip == k) continue;
      FacetKey f = simplex_facet(parent.verts, d_, skip);
      FacetKey half_a = replace(f, b, z), half_b = replace(f, a, z);
      auto it = m_.boundary_tags_.find(half_a);
      if (it == m_.boundary_tags_.end()) continue;
      int tag = it->second;
      m_.boundary_tags_.erase(it);
      m_.boundary_tags_.erase(half_b);
      m_.boundary_tags_[f] = tag;
    }
  }

  FacetKey replace(FacetKey f, Index from, Index to) const {
    for (int i = 0; i < d_; ++i)
      if (f[i] == from) f[i] = to;
    return facet_key(std::span<const Index>(f.data(), static_cast<std::size_t>(d_)));
  }

  SimplicialMesh& m_;
  int d_;
  Index active_ = 0;
  std::vector<std::vector<Index>> node_cells_;
};

}  // namespace detail

/// Refines the highest-indicator elements by newest-vertex bisection (with
/// conformity closure) and merges sibling groups among the lowest ones.
/// The element count is kept within [min(g, 1/g), g] times the input count,
/// up to the closure needed to stay conforming.
inline SimplicialMesh adapt(const SimplicialMesh& mesh, const ElementIndicator& indicator, const AdaptConfig& config) {
  config.validate();
  if (indicator.mesh_version != mesh.version() ||
      static_cast<Index>(indicator.values.size()) != mesh.num_elements())
    throw Error(ErrorKind::stale_field, "indicator is not bound to this mesh version");

  const Index n0 = mesh.num_elements();
  const double upper = config.growth_rate * n0;
  const double lower = std::min(config.growth_rate, 1.0 / config.growth_rate) * n0;
  const auto n_refine = static_cast<Index>(std::floor(config.refine_fraction * n0 + 1e-9));
  const auto n_coarsen = static_cast<Index>(std::floor(config.coarsen_fraction * n0 + 1e-9));

  std::vector<Index> order(n0);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return indicator.values[x] > indicator.values[y]; });

  SimplicialMesh out = mesh;
  detail::MeshEditor editor(out);

  std::vector<char> coarsen_mark(editor.num_cells(), 0);
  std::vector<Index> candidates;
  for (Index i = 0; i < n_coarsen; ++i) {
    Index e = order[n0 - 1 - i];
    if (mesh.element_level(e) <= config.min_level) continue;
    Index c = mesh.element_cell(e);
    coarsen_mark[c] = 1;
    Index z = editor.cell(editor.cell(c).parent).midpoint;
    if (std::find(candidates.begin(), candidates.end(), z) == candidates.end()) candidates.push_back(z);
  }
  auto allowed = [&](Index c) {
    return c < static_cast<Index>(coarsen_mark.size()) && coarsen_mark[c] && editor.cell(c).level > config.min_level;
  };
  for (Index z : candidates) editor.try_coarsen(z, allowed, lower);

  for (Index i = 0; i < n_refine; ++i) {
    Index e = order[i];
    if (mesh.element_level(e) >= config.max_level) continue;
    if (editor.active_count() >= upper) break;
    editor.refine(mesh.element_cell(e));
  }
  editor.enforce_grading();
  editor.finish();
  return out;
}

/// Point location by uniform bucketing of element bounding boxes.
class PointLocator {
 public:
  struct Hit {
    Index element = -1;
    std::array<double, 4> bary{0.0, 0.0, 0.0, 0.0};
    double outside = 0.0;  // distance outside the element's facet planes
  };

  explicit PointLocator(const SimplicialMesh& mesh) : mesh_(mesh) {
    const int d = mesh.dimension();
    const Box& box = mesh.bounding_box();
    pad_ = 1e-10 * mesh.diameter();
    const double per_axis = std::max(1.0, std::pow(static_cast<double>(mesh.num_elements()) / 2.0, 1.0 / d));
    for (int a = 0; a < 3; ++a) {
      lo_[a] = box.lo[a] - pad_;
      double ext = box.hi[a] - box.lo[a] + 2 * pad_;
      n_[a] = a < d ? std::max(1, static_cast<int>(per_axis * ext / std::max(mesh.diameter(), 1e-300) * std::sqrt(d))) : 1;
      step_[a] = a < d ? ext / n_[a] : 1.0;
    }
    buckets_.resize(static_cast<std::size_t>(n_[0]) * n_[1] * n_[2]);
    for (Index e = 0; e < mesh.num_elements(); ++e) {
      Point lo = mesh.node(mesh.element(e)[0]), hi = lo;
      for (Index v : mesh.element(e))
        for (int a = 0; a < 3; ++a) {
          lo[a] = std::min(lo[a], mesh.node(v)[a]);
          hi[a] = std::max(hi[a], mesh.node(v)[a]);
        }
      std::array<int, 3> b0{}, b1{};
      for (int a = 0; a < 3; ++a) {
        b0[a] = cell_of(lo[a] - pad_, a);
        b1[a] = cell_of(hi[a] + pad_, a);
      }
      for (int k = b0[2]; k <= b1[2]; ++k)
        for (int j = b0[1]; j <= b1[1]; ++j)
          for (int i = b0[0]; i <= b1[0]; ++i) buckets_[bucket(i, j, k)].push_back(e);
    }
  }

  /// Best element for `p`: containing it if any, otherwise the one it lies
  /// closest outside of among the local candidates.
  Hit locate(const Point& p) const {
    Hit best;
    best.outside = std::numeric_limits<double>::infinity();
    const auto& cands = buckets_[bucket(cell_of(p[0], 0), cell_of(p[1], 1), cell_of(p[2], 2))];
    const int d = mesh_.dimension();
    for (Index e : cands) {
      SimplexGeometry g = mesh_.geometry(e);
      const Point& x0 = mesh_.node(mesh_.element(e)[0]);
      Eigen::Vector3d rel(p[0] - x0[0], p[1] - x0[1], p[2] - x0[2]);
      Hit h;
      h.element = e;
      double sum = 0.0;
      double outside = 0.0;
      for (int i = 1; i <= d; ++i) {
        h.bary[i] = g.grad[i].dot(rel);
        sum += h.bary[i];
      }
      h.bary[0] = 1.0 - sum;
      for (int i = 0; i <= d; ++i)
        if (h.bary[i] < 0.0) outside = std::max(outside, -h.bary[i] / g.grad[i].norm());
      h.outside = outside;
      if (outside < best.outside) best = h;
      if (outside == 0.0) break;
    }
    return best;
  }

  double tolerance() const { return pad_; }

 private:
  int cell_of(double x, int a) const {
    int i = static_cast<int>(std::floor((x - lo_[a]) / step_[a]));
    return std::clamp(i, 0, n_[a] - 1);
  }
  std::size_t bucket(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(n_[0]) * (j + static_cast<std::size_t>(n_[1]) * k);
  }

  const SimplicialMesh& mesh_;
  double pad_ = 0.0;
  std::array<double, 3> lo_{}, step_{};
  std::array<int, 3> n_{1, 1, 1};
  std::vector<std::vector<Index>> buckets_;
};

/// Interpolates a nodal field from `old_mesh` onto the nodes of `new_mesh`
/// using the old elements' linear basis. Values are clamped to `bounds`.
inline NodalField transfer(const NodalField& field, const SimplicialMesh& old_mesh, const SimplicialMesh& new_mesh,
                           std::optional<std::pair<double, double>> bounds = std::nullopt) {
  old_mesh.require_bound(field, "transferred field");
  if (old_mesh.version() == new_mesh.version()) return field;

  const PointLocator locator(old_mesh);
  const int d = old_mesh.dimension();
  Eigen::VectorXd out(new_mesh.num_nodes());
  for (Index n = 0; n < new_mesh.num_nodes(); ++n) {
    const Point& p = new_mesh.node(n);
    PointLocator::Hit hit = locator.locate(p);
    if (hit.element < 0 || hit.outside > locator.tolerance())
      throw Error(ErrorKind::transfer_failure,
                  "node " + std::to_string(n) + " lies outside the source mesh by more than the tolerance");
    auto verts = old_mesh.element(hit.element);
    double value = std::numeric_limits<double>::quiet_NaN();
    for (Index v : verts)
      if (old_mesh.node(v) == p) value = field.values[v];
    if (std::isnan(value)) {
      if (hit.outside > 0.0) {
        double s = 0.0;
        for (int i = 0; i <= d; ++i) s += hit.bary[i] = std::max(hit.bary[i], 0.0);
        for (int i = 0; i <= d; ++i) hit.bary[i] /= s;
      }
      const double f0 = field.values[verts[0]];
      value = f0;
      for (int i = 1; i <= d; ++i) value += hit.bary[i] * (field.values[verts[i]] - f0);
    }
    if (bounds) value = std::clamp(value, bounds->first, bounds->second);
    out[n] = value;
  }
  return {std::move(out), new_mesh.version()};
}

}  // namespace thinwall
