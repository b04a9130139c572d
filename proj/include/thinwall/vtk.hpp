#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "thinwall/adapt.hpp"
#include "thinwall/error.hpp"
#include "thinwall/mesh.hpp"
#include "thinwall/objectives.hpp"

namespace thinwall {

namespace detail {

// Shortest round-trip text; locale independent and deterministic.
inline void put_number(std::string& out, double v) {
  std::array<char, 32> buf{};
  auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), r.ptr);
}

inline void put_scalars(std::string& out, const char* name, const Eigen::VectorXd& v) {
  out += "SCALARS ";
  out += name;
  out += " double 1\nLOOKUP_TABLE default\n";
  for (Index i = 0; i < v.size(); ++i) {
    put_number(out, v[i]);
    out += '\n';
  }
}

}  // namespace detail

/// Legacy ASCII unstructured grid with the design fields as point data and
/// the refinement indicator as cell data.
inline std::string vtk_text(const SimplicialMesh& mesh, const DesignState& state, const ElementIndicator& w) {
  if (state.mesh_version() != mesh.version() || !state.complete())
    throw Error(ErrorKind::stale_state, "design state is not bound to the exported mesh");
  if (w.mesh_version != mesh.version()) throw Error(ErrorKind::stale_field, "indicator is not bound to the exported mesh");
  const int d = mesh.dimension();
  const Index nn = mesh.num_nodes(), ne = mesh.num_elements();
  std::string out;
  out.reserve(static_cast<std::size_t>(nn) * 160 + static_cast<std::size_t>(ne) * 40);
  out += "# vtk DataFile Version 3.0\nthinwall design\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out += "POINTS " + std::to_string(nn) + " double\n";
  for (Index n = 0; n < nn; ++n) {
    const Point& p = mesh.node(n);
    for (int a = 0; a < 3; ++a) {
      if (a) out += ' ';
      detail::put_number(out, p[a]);
    }
    out += '\n';
  }
  out += "CELLS " + std::to_string(ne) + " " + std::to_string(ne * (d + 2)) + "\n";
  for (Index e = 0; e < ne; ++e) {
    out += std::to_string(d + 1);
    for (Index v : mesh.element(e)) out += " " + std::to_string(v);
    out += '\n';
  }
  out += "CELL_TYPES " + std::to_string(ne) + "\n";
  const std::string type = d == 2 ? "5\n" : "10\n";
  for (Index e = 0; e < ne; ++e) out += type;
  out += "POINT_DATA " + std::to_string(nn) + "\n";
  detail::put_scalars(out, "phi", state.phi.values);
  detail::put_scalars(out, "phi_tilde", state.phi_tilde.values);
  detail::put_scalars(out, "rho", state.rho.values);
  detail::put_scalars(out, "rho_tilde", state.rho_tilde.values);
  detail::put_scalars(out, "rho_bar", state.rho_bar.values);
  out += "CELL_DATA " + std::to_string(ne) + "\n";
  detail::put_scalars(out, "w", Eigen::Map<const Eigen::VectorXd>(w.values.data(), static_cast<Index>(w.values.size())));
  return out;
}

inline void export_vtk(const SimplicialMesh& mesh, const DesignState& state, const ElementIndicator& w,
                       const std::string& path) {
  std::string text = vtk_text(mesh, state, w);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::io_error, "cannot open '" + path + "' for writing");
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(ErrorKind::io_error, "failed writing '" + path + "'");
}

/// What mesh-info reports about a legacy VTK file.
struct VtkSummary {
  Index points = 0;
  Index cells = 0;
  std::map<int, Index> cell_types;  // VTK type id -> count
  std::vector<std::string> point_arrays, cell_arrays;
  std::map<std::string, std::pair<double, double>> ranges;
};

inline VtkSummary read_vtk_summary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io_error, "cannot open '" + path + "'");
  auto bad = [&](const std::string& what) { return Error(ErrorKind::parse_error, path + ": " + what); };
  std::string line;
  if (!std::getline(f, line) || line.rfind("# vtk DataFile", 0) != 0) throw bad("not a legacy VTK file");
  std::getline(f, line);  // title
  if (!std::getline(f, line) || line.rfind("ASCII", 0) != 0) throw bad("only ASCII files are supported");
  VtkSummary s;
  std::string word;
  enum { none, point_data, cell_data } section = none;
  while (f >> word) {
    if (word == "DATASET") {
      f >> word;
      if (word != "UNSTRUCTURED_GRID") throw bad("dataset is " + word + ", expected UNSTRUCTURED_GRID");
    } else if (word == "POINTS") {
      f >> s.points >> word;
      double x;
      for (Index i = 0; i < 3 * s.points; ++i)
        if (!(f >> x)) throw bad("truncated POINTS block");
    } else if (word == "CELLS") {
      Index size = 0;
      f >> s.cells >> size;
      Index v;
      for (Index i = 0; i < size; ++i)
        if (!(f >> v)) throw bad("truncated CELLS block");
    } else if (word == "CELL_TYPES") {
      Index n = 0;
      f >> n;
      if (n != s.cells) throw bad("CELL_TYPES count differs from CELLS");
      int t;
      for (Index i = 0; i < n; ++i) {
        if (!(f >> t)) throw bad("truncated CELL_TYPES block");
        ++s.cell_types[t];
      }
    } else if (word == "POINT_DATA" || word == "CELL_DATA") {
      Index n = 0;
      f >> n;
      section = word == "POINT_DATA" ? point_data : cell_data;
      if (n != (section == point_data ? s.points : s.cells)) throw bad(word + " count mismatch");
    } else if (word == "SCALARS") {
      if (section == none) throw bad("SCALARS outside a data section");
      std::string name, type;
      int comps = 1;
      f >> name >> type;
      std::getline(f, line);
      std::istringstream rest(line);
      if (!(rest >> comps)) comps = 1;
      f >> word;
      if (word != "LOOKUP_TABLE") throw bad("expected LOOKUP_TABLE after SCALARS " + name);
      f >> word;
      const Index n = (section == point_data ? s.points : s.cells) * comps;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo, x;
      for (Index i = 0; i < n; ++i) {
        if (!(f >> x)) throw bad("truncated array " + name);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      (section == point_data ? s.point_arrays : s.cell_arrays).push_back(name);
      s.ranges[name] = {lo, hi};
    } else {
      throw bad("unexpected token '" + word + "'");
    }
  }
  return s;
}

}  // namespace thinwall
