#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "thinwall/error.hpp"

namespace thinwall {

using Index = int;
using Point = std::array<double, 3>;
using Simplex = std::array<Index, 4>;

struct Box {
  Point lo{0.0, 0.0, 0.0};
  Point hi{0.0, 0.0, 0.0};

  double extent(int axis) const { return hi[axis] - lo[axis]; }
};

/// Nodal values tagged with the version of the mesh they live on.
struct NodalField {
  Eigen::VectorXd values;
  std::uint64_t mesh_version = 0;

  Index size() const { return static_cast<Index>(values.size()); }
};

/// A boundary facet (edge in 2D, triangle in 3D). Node ids are sorted
/// ascending; entries past the facet size are -1.
struct BoundaryFacet {
  std::array<Index, 3> nodes{-1, -1, -1};
  int tag = -1;
};

/// Barycentric gradients and measure of one simplex.
struct SimplexGeometry {
  double volume = 0.0;
  std::array<Eigen::Vector3d, 4> grad{};
};

namespace detail {

inline std::uint64_t next_mesh_version() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

// Refinement forest entry. Vertices are kept in bisection order: the
// refinement edge is (verts[0], verts[tag]).
struct Cell {
  Simplex verts{-1, -1, -1, -1};
  int tag = 0;
  int level = 0;
  Index parent = -1;
  std::array<Index, 2> children{-1, -1};
  Index midpoint = -1;
  bool active = false;
  bool alive = true;
};

using EdgeKey = std::pair<Index, Index>;

inline EdgeKey edge_key(Index a, Index b) { return a < b ? EdgeKey{a, b} : EdgeKey{b, a}; }

struct EdgeHash {
  std::size_t operator()(const EdgeKey& e) const noexcept {
    auto packed = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.first)) << 32) |
                  static_cast<std::uint32_t>(e.second);
    return std::hash<std::uint64_t>{}(packed);
  }
};

using FacetKey = std::array<Index, 3>;

inline FacetKey facet_key(std::span<const Index> nodes) {
  FacetKey key{-1, -1, -1};
  std::copy(nodes.begin(), nodes.end(), key.begin());
  std::sort(key.begin(), key.begin() + static_cast<std::ptrdiff_t>(nodes.size()));
  return key;
}

/// Facet `skip` of a simplex: all vertices except vertex `skip`.
inline FacetKey simplex_facet(const Simplex& s, int dim, int skip) {
  std::array<Index, 3> buf{-1, -1, -1};
  int n = 0;
  for (int i = 0; i <= dim; ++i)
    if (i != skip) buf[n++] = s[i];
  return facet_key(std::span<const Index>(buf.data(), static_cast<std::size_t>(dim)));
}

struct FacetHash {
  std::size_t operator()(const FacetKey& f) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (Index v : f) h = (h ^ static_cast<std::uint32_t>(v)) * 1099511628211ull;
    return h;
  }
};

class MeshEditor;

}  // namespace detail

/// Conforming triangle/tetrahedron mesh. Elements are stored positively
/// oriented; the refinement forest behind them drives newest-vertex bisection
/// and its inverse.
class SimplicialMesh {
 public:
  SimplicialMesh() = default;

  /// Builds a mesh from raw simplices. Each simplex becomes a level-0 root
  /// whose bisection order is the given vertex order. Boundary facets are
  /// tagged by `tagger(facet centroid)`, which must return an index into
  /// `regions`.
  static SimplicialMesh from_simplices(int dimension, std::vector<Point> nodes,
                                       const std::vector<Simplex>& simplices,
                                       std::vector<std::string> regions,
                                       const std::function<int(const Point&)>& tagger) {
    if (dimension != 2 && dimension != 3)
      throw Error(ErrorKind::invalid_domain, "dimension must be 2 or 3");
    SimplicialMesh mesh;
    mesh.dim_ = dimension;
    mesh.nodes_ = std::move(nodes);
    mesh.regions_ = std::move(regions);
    for (const Simplex& s : simplices) {
      detail::Cell cell;
      cell.verts = s;
      cell.tag = dimension;
      cell.active = true;
      mesh.cells_.push_back(cell);
    }
    std::unordered_map<detail::FacetKey, int, detail::FacetHash> count;
    for (const Simplex& s : simplices)
      for (int k = 0; k <= dimension; ++k) ++count[detail::simplex_facet(s, dimension, k)];
    for (const auto& [key, n] : count) {
      if (n != 1) continue;
      Point c{0.0, 0.0, 0.0};
      for (int i = 0; i < dimension; ++i)
        for (int a = 0; a < 3; ++a) c[a] += mesh.nodes_[key[i]][a] / dimension;
      int tag = tagger(c);
      if (tag < 0 || tag >= static_cast<int>(mesh.regions_.size()))
        throw Error(ErrorKind::invalid_domain, "boundary tag does not name a declared region");
      mesh.boundary_tags_[key] = tag;
    }
    mesh.finalize();
    return mesh;
  }

  int dimension() const { return dim_; }
  Index num_nodes() const { return static_cast<Index>(nodes_.size()); }
  Index num_elements() const { return static_cast<Index>(elements_.size()); }
  const Point& node(Index i) const { return nodes_[i]; }
  const std::vector<Point>& nodes() const { return nodes_; }

  std::span<const Index> element(Index e) const {
    return {elements_[e].data(), static_cast<std::size_t>(dim_ + 1)};
  }
  const Simplex& element_array(Index e) const { return elements_[e]; }
  int element_level(Index e) const { return levels_[e]; }

  /// Forest id of the element's parent, if it was produced by bisection.
  std::optional<Index> element_parent(Index e) const {
    Index p = cells_[element_cells_[e]].parent;
    if (p < 0) return std::nullopt;
    return p;
  }
  /// Forest id of the element itself.
  Index element_cell(Index e) const { return element_cells_[e]; }

  const std::vector<BoundaryFacet>& boundary_facets() const { return boundary_; }
  const std::vector<std::string>& boundary_regions() const { return regions_; }

  int region_tag(std::string_view name) const {
    for (std::size_t i = 0; i < regions_.size(); ++i)
      if (regions_[i] == name) return static_cast<int>(i);
    return -1;
  }

  std::uint64_t version() const { return version_; }
  const Box& bounding_box() const { return box_; }

  double diameter() const {
    double s = 0.0;
    for (int a = 0; a < dim_; ++a) s += box_.extent(a) * box_.extent(a);
    return std::sqrt(s);
  }

  double signed_volume(Index e) const { return signed_volume_of(elements_[e]); }
  double element_volume(Index e) const { return std::abs(signed_volume(e)); }

  double total_volume() const {
    double v = 0.0;
    for (Index e = 0; e < num_elements(); ++e) v += element_volume(e);
    return v;
  }

  Point element_centroid(Index e) const {
    Point c{0.0, 0.0, 0.0};
    for (Index v : element(e))
      for (int a = 0; a < 3; ++a) c[a] += nodes_[v][a] / (dim_ + 1);
    return c;
  }

  SimplexGeometry geometry(Index e) const { return geometry_of(elements_[e]); }

  /// Lumped (row-sum) mass: each element spreads its volume evenly over
  /// its vertices.
  Eigen::VectorXd lumped_mass() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(num_nodes());
    for (Index e = 0; e < num_elements(); ++e) {
      double share = element_volume(e) / (dim_ + 1);
      for (Index v : element(e)) m[v] += share;
    }
    return m;
  }

  NodalField make_field(double value) const {
    return {Eigen::VectorXd::Constant(num_nodes(), value), version_};
  }
  NodalField make_field(Eigen::VectorXd values) const {
    if (values.size() != num_nodes())
      throw Error(ErrorKind::invalid_field, "field length does not match node count");
    return {std::move(values), version_};
  }

  void require_bound(const NodalField& f, std::string_view what) const {
    if (f.mesh_version != version_ || f.values.size() != num_nodes())
      throw Error(ErrorKind::stale_field,
                  std::string(what) + " is bound to mesh version " + std::to_string(f.mesh_version) +
                      ", mesh is at version " + std::to_string(version_));
  }

  /// Element-average of a nodal field.
  double element_average(const Eigen::VectorXd& nodal, Index e) const {
    double s = 0.0;
    for (Index v : element(e)) s += nodal[v];
    return s / (dim_ + 1);
  }

 private:
  friend class detail::MeshEditor;

  double signed_volume_of(const Simplex& s) const {
    if (dim_ == 2) {
      const Point &a = nodes_[s[0]], &b = nodes_[s[1]], &c = nodes_[s[2]];
      return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
    }
    Eigen::Matrix3d j;
    for (int k = 0; k < 3; ++k)
      for (int a = 0; a < 3; ++a) j(a, k) = nodes_[s[k + 1]][a] - nodes_[s[0]][a];
    return j.determinant() / 6.0;
  }

  SimplexGeometry geometry_of(const Simplex& s) const {
    SimplexGeometry g;
    if (dim_ == 2) {
      Eigen::Matrix2d j;
      for (int k = 0; k < 2; ++k)
        for (int a = 0; a < 2; ++a) j(a, k) = nodes_[s[k + 1]][a] - nodes_[s[0]][a];
      g.volume = std::abs(j.determinant()) / 2.0;
      Eigen::Matrix2d inv = j.inverse();
      g.grad[0].setZero();
      for (int k = 0; k < 2; ++k) {
        g.grad[k + 1] = Eigen::Vector3d(inv(k, 0), inv(k, 1), 0.0);
        g.grad[0] -= g.grad[k + 1];
      }
    } else {
      Eigen::Matrix3d j;
      for (int k = 0; k < 3; ++k)
        for (int a = 0; a < 3; ++a) j(a, k) = nodes_[s[k + 1]][a] - nodes_[s[0]][a];
      g.volume = std::abs(j.determinant()) / 6.0;
      Eigen::Matrix3d inv = j.inverse();
      g.grad[0].setZero();
      for (int k = 0; k < 3; ++k) {
        g.grad[k + 1] = inv.row(k).transpose();
        g.grad[0] -= g.grad[k + 1];
      }
    }
    return g;
  }

  // Rebuilds the public arrays from the active forest cells: drops orphan
  // nodes, orients elements, lists boundary facets, bumps the version.
  void finalize() {
    std::vector<Index> active;
    for (Index c = 0; c < static_cast<Index>(cells_.size()); ++c)
      if (cells_[c].alive && cells_[c].active) active.push_back(c);

    std::vector<Index> remap(nodes_.size(), -1);
    for (Index c : active)
      for (int i = 0; i <= dim_; ++i) remap[cells_[c].verts[i]] = 0;
    std::vector<Point> kept;
    kept.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (remap[i] < 0) continue;
      remap[i] = static_cast<Index>(kept.size());
      kept.push_back(nodes_[i]);
    }
    const bool moved = kept.size() != nodes_.size();
    nodes_ = std::move(kept);

    if (moved) {
      for (auto& cell : cells_) {
        if (!cell.alive) continue;
        for (int i = 0; i <= dim_; ++i) cell.verts[i] = remap[cell.verts[i]];
        if (cell.midpoint >= 0) cell.midpoint = remap[cell.midpoint];
      }
      std::unordered_map<detail::EdgeKey, Index, detail::EdgeHash> mids;
      for (const auto& [edge, z] : midpoints_)
        mids[detail::edge_key(remap[edge.first], remap[edge.second])] = remap[z];
      midpoints_ = std::move(mids);
      std::map<detail::FacetKey, int> tags;
      for (const auto& [key, tag] : boundary_tags_) {
        detail::FacetKey k = key;
        for (int i = 0; i < dim_; ++i) k[i] = remap[k[i]];
        tags[detail::facet_key(std::span<const Index>(k.data(), static_cast<std::size_t>(dim_)))] = tag;
      }
      boundary_tags_ = std::move(tags);
    }

    elements_.clear();
    levels_.clear();
    element_cells_.clear();
    for (Index c : active) {
      Simplex s = cells_[c].verts;
      if (signed_volume_of(s) < 0.0) std::swap(s[dim_ - 1], s[dim_]);
      elements_.push_back(s);
      levels_.push_back(cells_[c].level);
      element_cells_.push_back(c);
    }

    boundary_.clear();
    for (const auto& [key, tag] : boundary_tags_) boundary_.push_back({key, tag});

    box_.lo = {0.0, 0.0, 0.0};
    box_.hi = {0.0, 0.0, 0.0};
    if (!nodes_.empty()) {
      box_.lo = box_.hi = nodes_[0];
      for (const Point& p : nodes_)
        for (int a = 0; a < 3; ++a) {
          box_.lo[a] = std::min(box_.lo[a], p[a]);
          box_.hi[a] = std::max(box_.hi[a], p[a]);
        }
    }
    version_ = detail::next_mesh_version();
  }

  int dim_ = 2;
  std::vector<Point> nodes_;
  std::vector<Simplex> elements_;
  std::vector<int> levels_;
  std::vector<Index> element_cells_;
  std::vector<BoundaryFacet> boundary_;
  std::vector<std::string> regions_;
  std::uint64_t version_ = 0;
  Box box_;

  std::vector<detail::Cell> cells_;
  std::unordered_map<detail::EdgeKey, Index, detail::EdgeHash> midpoints_;
  std::map<detail::FacetKey, int> boundary_tags_;
};

/// Uniform simplicial mesh of an axis-aligned box: each cell is split into
/// 2 triangles or 6 Kuhn tetrahedra sharing the cell's main diagonal.
/// Boundary facets are tagged xmin, xmax, ymin, ymax[, zmin, zmax].
inline SimplicialMesh build_structured(const Box& box, int dimension, std::span<const int> cells_per_axis) {
  if (dimension != 2 && dimension != 3)
    throw Error(ErrorKind::invalid_domain, "dimension must be 2 or 3");
  if (static_cast<int>(cells_per_axis.size()) != dimension)
    throw Error(ErrorKind::invalid_domain, "cells_per_axis must have one entry per axis");
  for (int a = 0; a < dimension; ++a) {
    if (!(box.extent(a) > 0.0))
      throw Error(ErrorKind::invalid_domain, "box extent along axis " + std::to_string(a) + " is not positive");
    if (cells_per_axis[a] < 1)
      throw Error(ErrorKind::invalid_domain, "cells_per_axis must be at least 1");
  }
  const int nx = cells_per_axis[0], ny = cells_per_axis[1], nz = dimension == 3 ? cells_per_axis[2] : 0;
  auto id = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };

  std::vector<Point> nodes;
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        Point p{box.lo[0] + box.extent(0) * i / nx, box.lo[1] + box.extent(1) * j / ny,
                dimension == 3 ? box.lo[2] + box.extent(2) * k / nz : 0.0};
        // Hit the far faces exactly.
        if (i == nx) p[0] = box.hi[0];
        if (j == ny) p[1] = box.hi[1];
        if (dimension == 3 && k == nz) p[2] = box.hi[2];
        nodes.push_back(p);
      }

  std::vector<Simplex> simplices;
  if (dimension == 2) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        simplices.push_back({id(i, j, 0), id(i + 1, j, 0), id(i + 1, j + 1, 0), -1});
        simplices.push_back({id(i, j, 0), id(i, j + 1, 0), id(i + 1, j + 1, 0), -1});
      }
  } else {
    static constexpr std::array<std::array<int, 3>, 6> perms{
        {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
          for (const auto& perm : perms) {
            std::array<int, 3> c{i, j, k};
            Simplex s{};
            s[0] = id(c[0], c[1], c[2]);
            for (int step = 0; step < 3; ++step) {
              ++c[perm[step]];
              s[step + 1] = id(c[0], c[1], c[2]);
            }
            simplices.push_back(s);
          }
  }

  std::vector<std::string> regions{"xmin", "xmax", "ymin", "ymax"};
  if (dimension == 3) {
    regions.push_back("zmin");
    regions.push_back("zmax");
  }
  const double tol = 1e-12;
  auto tagger = [&](const Point& c) {
    for (int a = 0; a < dimension; ++a) {
      double scale = tol * box.extent(a);
      if (std::abs(c[a] - box.lo[a]) <= scale) return 2 * a;
      if (std::abs(c[a] - box.hi[a]) <= scale) return 2 * a + 1;
    }
    return -1;
  };
  return SimplicialMesh::from_simplices(dimension, std::move(nodes), simplices, std::move(regions), tagger);
}

inline SimplicialMesh build_structured(const Box& box, int dimension, std::initializer_list<int> cells) {
  std::vector<int> c(cells);
  return build_structured(box, dimension, std::span<const int>(c));
}

/// Facets shared by other than exactly one (boundary) or two (interior)
/// elements; empty for a conforming mesh.
inline std::vector<detail::FacetKey> nonconforming_facets(const SimplicialMesh& mesh) {
  const int d = mesh.dimension();
  std::unordered_map<detail::FacetKey, int, detail::FacetHash> count;
  for (Index e = 0; e < mesh.num_elements(); ++e)
    for (int k = 0; k <= d; ++k) ++count[detail::simplex_facet(mesh.element_array(e), d, k)];
  std::unordered_map<detail::FacetKey, int, detail::FacetHash> boundary;
  for (const auto& f : mesh.boundary_facets()) boundary[f.nodes] = f.tag;
  std::vector<detail::FacetKey> bad;
  for (const auto& [key, n] : count) {
    bool on_boundary = boundary.count(key) > 0;
    if ((on_boundary && n != 1) || (!on_boundary && n != 2)) bad.push_back(key);
  }
  // Boundary facets that no element owns.
  for (const auto& f : mesh.boundary_facets())
    if (count.count(f.nodes) == 0) bad.push_back(f.nodes);
  std::sort(bad.begin(), bad.end());
  return bad;
}

/// Largest level jump across a shared facet.
inline int max_level_jump(const SimplicialMesh& mesh) {
  const int d = mesh.dimension();
  std::unordered_map<detail::FacetKey, std::vector<Index>, detail::FacetHash> owners;
  for (Index e = 0; e < mesh.num_elements(); ++e)
    for (int k = 0; k <= d; ++k) owners[detail::simplex_facet(mesh.element_array(e), d, k)].push_back(e);
  int jump = 0;
  for (const auto& [key, es] : owners)
    if (es.size() == 2)
      jump = std::max(jump, std::abs(mesh.element_level(es[0]) - mesh.element_level(es[1])));
  return jump;
}

}  // namespace thinwall
