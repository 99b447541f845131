#include "formnet/net_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "formnet/errors.hpp"
#include "formnet/rng.hpp"

namespace formnet {

namespace {

using nlohmann::json;

constexpr double kMinEdgeLength = 1e-12;

int node_id(const Topology& topo, const EdgeEnd& end) {
  // Flat id over interior nodes then boundary nodes, for set/union work.
  return end.kind == NodeKind::Interior ? end.index
                                        : topo.n_interior + end.index;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

void Topology::validate() const {
  if (n_interior < 1) throw InvalidInputError("net needs at least one interior node");
  if (n_boundary < 1) throw InvalidInputError("net needs boundary nodes");
  if (m_interior < 0 || m_interior > edge_count())
    throw InvalidInputError("interior edge count out of range");

  std::set<std::pair<int, int>> seen;
  std::vector<int> degree(n_interior, 0);
  UnionFind components(n_interior + n_boundary);
  std::vector<bool> used(n_interior + n_boundary, false);

  for (int e = 0; e < edge_count(); ++e) {
    const Edge& edge = edges[e];
    for (const EdgeEnd& end : {edge.s, edge.t}) {
      const int limit = end.kind == NodeKind::Interior ? n_interior : n_boundary;
      if (end.index < 0 || end.index >= limit)
        throw InvalidInputError("edge endpoint index out of range");
    }
    const int a = node_id(*this, edge.s);
    const int b = node_id(*this, edge.t);
    if (a == b) throw InvalidInputError("self-loop edge");
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second)
      throw InvalidInputError("duplicate edge");

    const bool s_int = edge.s.kind == NodeKind::Interior;
    const bool t_int = edge.t.kind == NodeKind::Interior;
    if (e < m_interior) {
      if (!s_int || !t_int)
        throw InvalidInputError("interior edge must connect two interior nodes");
    } else {
      if (s_int == t_int)
        throw InvalidInputError(
            "boundary edge must connect one interior and one boundary node");
    }
    if (s_int) ++degree[edge.s.index];
    if (t_int) ++degree[edge.t.index];
    components.unite(a, b);
    used[a] = used[b] = true;
  }

  for (int i = 0; i < n_interior; ++i)
    if (degree[i] < 2)
      throw InvalidInputError("interior node with degree < 2");
  for (int i = 0; i < n_interior + n_boundary; ++i)
    if (!used[i]) throw InvalidInputError("node not connected to any edge");
  const int root = components.find(0);
  for (int i = 1; i < n_interior + n_boundary; ++i)
    if (components.find(i) != root)
      throw InvalidInputError("net is not a single connected component");
}

void EdgeParams::validate(int edge_count) const {
  if (unstressed_length.size() != edge_count ||
      axial_stiffness.size() != edge_count)
    throw DimensionError("edge parameter vectors must have one entry per edge");
  if ((unstressed_length.array() <= 0.0).any())
    throw InvalidInputError("unstressed lengths must be positive");
  if ((axial_stiffness.array() <= 0.0).any())
    throw InvalidInputError("axial stiffnesses must be positive");
}

double edge_length(const Topology& topology, const Geometry& geometry,
                   int edge_index) {
  if (edge_index < 0 || edge_index >= topology.edge_count())
    throw DimensionError("edge index out of range");
  const Edge& e = topology.edges[edge_index];
  return (geometry.node(e.s) - geometry.node(e.t)).norm();
}

Eigen::VectorXd edge_lengths(const Topology& topology,
                             const Geometry& geometry) {
  Eigen::VectorXd lengths(topology.edge_count());
  for (int e = 0; e < topology.edge_count(); ++e)
    lengths[e] = edge_length(topology, geometry, e);
  return lengths;
}

Eigen::VectorXd force_residual(const Topology& topology,
                               const Geometry& geometry,
                               const EdgeParams& params) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(3 * topology.n_interior);
  for (int e = 0; e < topology.edge_count(); ++e) {
    const Edge& edge = topology.edges[e];
    const Eigen::Vector3d d = geometry.node(edge.s) - geometry.node(edge.t);
    const double l = d.norm();
    const double l0 = params.unstressed_length[e];
    if (l <= l0) continue;  // tension-only material
    if (l < kMinEdgeLength)
      throw DegenerateGeometryError("tensioned edge has near-zero length");
    const Eigen::Vector3d f =
        (params.axial_stiffness[e] / l0) * (l - l0) / l * d;
    if (edge.s.kind == NodeKind::Interior)
      h.segment<3>(3 * edge.s.index) += f;
    if (edge.t.kind == NodeKind::Interior)
      h.segment<3>(3 * edge.t.index) -= f;
  }
  return h;
}

double total_energy(const Topology& topology, const Geometry& geometry,
                    const EdgeParams& params) {
  double energy = 0.0;
  for (int e = 0; e < topology.edge_count(); ++e) {
    const double l = edge_length(topology, geometry, e);
    const double l0 = params.unstressed_length[e];
    const double stretch = std::max(l - l0, 0.0);
    energy += 0.5 * params.axial_stiffness[e] / l0 * stretch * stretch;
  }
  return energy;
}

Net synth_net(int grid_nx, int grid_ny, const FrameSpec& frame,
              const SagSpec& sag, std::uint64_t seed, double ea,
              double pretension) {
  if (grid_nx < 3 || grid_ny < 3)
    throw InvalidInputError("grid must be at least 3x3");
  if (ea <= 0.0) throw InvalidInputError("axial stiffness must be positive");
  if (pretension <= 0.02 || pretension > 1.0)
    throw InvalidInputError("pretension factor must lie in (0.02, 1]");

  const int nx = grid_nx, ny = grid_ny;
  auto layout = [&](int i, int j) -> Eigen::Vector3d {
    const double xh = 2.0 * i / (nx - 1) - 1.0;  // [-1, 1]
    const double yh = 2.0 * j / (ny - 1) - 1.0;
    return {0.5 * frame.size_x * xh, 0.5 * frame.size_y * yh,
            sag.corner_z * xh * yh};
  };

  // Grid cell -> node numbering. Interior nodes are the inner lattice,
  // boundary nodes the non-corner perimeter (corner cells are unused since
  // a corner would attach to no interior node).
  std::vector<std::vector<EdgeEnd>> id(nx, std::vector<EdgeEnd>(ny, {NodeKind::Interior, -1}));
  Net net;
  std::vector<Eigen::Vector3d> interior_pos, boundary_pos;
  for (int j = 1; j < ny - 1; ++j)
    for (int i = 1; i < nx - 1; ++i) {
      id[i][j] = {NodeKind::Interior, static_cast<int>(interior_pos.size())};
      interior_pos.push_back(layout(i, j));
    }
  auto add_boundary = [&](int i, int j) {
    id[i][j] = {NodeKind::Boundary, static_cast<int>(boundary_pos.size())};
    boundary_pos.push_back(layout(i, j));
  };
  for (int i = 1; i < nx - 1; ++i) {
    add_boundary(i, 0);
    add_boundary(i, ny - 1);
  }
  for (int j = 1; j < ny - 1; ++j) {
    add_boundary(0, j);
    add_boundary(nx - 1, j);
  }

  auto is_interior = [&](int i, int j) {
    return i >= 1 && i < nx - 1 && j >= 1 && j < ny - 1;
  };
  auto exists = [&](int i, int j) {
    return !((i == 0 || i == nx - 1) && (j == 0 || j == ny - 1));
  };
  std::vector<Edge> interior_edges, boundary_edges;
  auto add_edge = [&](int i0, int j0, int i1, int j1) {
    const bool a = is_interior(i0, j0), b = is_interior(i1, j1);
    if (a && b)
      interior_edges.push_back({id[i0][j0], id[i1][j1]});
    else if (a != b)  // frame-frame links along the perimeter are not cables
      boundary_edges.push_back(a ? Edge{id[i0][j0], id[i1][j1]}
                                 : Edge{id[i1][j1], id[i0][j0]});
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!exists(i, j)) continue;
      if (i + 1 < nx && exists(i + 1, j)) add_edge(i, j, i + 1, j);
      if (j + 1 < ny && exists(i, j + 1)) add_edge(i, j, i, j + 1);
    }

  net.topology.n_interior = static_cast<int>(interior_pos.size());
  net.topology.n_boundary = static_cast<int>(boundary_pos.size());
  net.topology.m_interior = static_cast<int>(interior_edges.size());
  net.topology.edges = std::move(interior_edges);
  net.topology.edges.insert(net.topology.edges.end(), boundary_edges.begin(),
                            boundary_edges.end());

  net.geometry.interior.resize(3 * net.topology.n_interior);
  for (int i = 0; i < net.topology.n_interior; ++i)
    net.geometry.interior.segment<3>(3 * i) = interior_pos[i];
  net.geometry.boundary.resize(3 * net.topology.n_boundary);
  for (int i = 0; i < net.topology.n_boundary; ++i)
    net.geometry.boundary.segment<3>(3 * i) = boundary_pos[i];

  const int m = net.topology.edge_count();
  net.params.unstressed_length.resize(m);
  net.params.axial_stiffness = Eigen::VectorXd::Constant(m, ea);
  RngStream lengths(seed, 0);
  for (int e = 0; e < m; ++e) {
    const double dist = edge_length(net.topology, net.geometry, e);
    const double factor = pretension - 0.02 * lengths.uniform(0.0, 1.0);
    net.params.unstressed_length[e] = factor * dist;
    if (!(net.params.unstressed_length[e] > 0.0))
      throw InvalidInputError("frame spec produced a non-positive edge length");
  }

  net.topology.validate();
  net.params.validate(m);
  return net;
}

namespace {

json coords_to_json(const Eigen::VectorXd& stacked) {
  json arr = json::array();
  for (int i = 0; i + 2 < stacked.size(); i += 3)
    arr.push_back({stacked[i], stacked[i + 1], stacked[i + 2]});
  return arr;
}

Eigen::VectorXd coords_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw IoError(std::string("expected array for ") + what);
  Eigen::VectorXd out(3 * arr.size());
  int k = 0;
  for (const auto& node : arr) {
    if (!node.is_array() || node.size() != 3)
      throw IoError(std::string("expected [x,y,z] entries in ") + what);
    for (int c = 0; c < 3; ++c) out[k++] = node[c].get<double>();
  }
  return out;
}

Eigen::VectorXd vector_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw IoError(std::string("expected array for ") + what);
  Eigen::VectorXd out(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) out[i] = arr[i].get<double>();
  return out;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

std::string net_to_json(const Net& net) {
  json doc;
  doc["format_version"] = 1;
  doc["nodes_interior"] = coords_to_json(net.geometry.interior);
  doc["nodes_boundary"] = coords_to_json(net.geometry.boundary);
  json edges = json::array();
  for (const Edge& e : net.topology.edges) {
    edges.push_back({e.s.kind == NodeKind::Interior ? "I" : "B", e.s.index,
                     e.t.kind == NodeKind::Interior ? "I" : "B", e.t.index});
  }
  doc["edges"] = edges;
  doc["m_interior"] = net.topology.m_interior;
  doc["l0"] = vector_to_json(net.params.unstressed_length);
  doc["EA"] = vector_to_json(net.params.axial_stiffness);
  return doc.dump(2);
}

namespace {

Net net_from_parsed(const json& doc) {
  Net net;
  net.geometry.interior = coords_from_json(doc.at("nodes_interior"), "nodes_interior");
  net.geometry.boundary = coords_from_json(doc.at("nodes_boundary"), "nodes_boundary");
  net.topology.n_interior = static_cast<int>(net.geometry.interior.size() / 3);
  net.topology.n_boundary = static_cast<int>(net.geometry.boundary.size() / 3);
  net.topology.m_interior = doc.at("m_interior").get<int>();
  for (const auto& row : doc.at("edges")) {
    if (!row.is_array() || row.size() != 4)
      throw IoError("edges entries must be [s_kind, s_idx, t_kind, t_idx]");
    auto kind = [](const json& j) {
      const std::string k = j.get<std::string>();
      if (k == "I") return NodeKind::Interior;
      if (k == "B") return NodeKind::Boundary;
      throw IoError("edge endpoint kind must be \"I\" or \"B\"");
    };
    net.topology.edges.push_back(
        {{kind(row[0]), row[1].get<int>()}, {kind(row[2]), row[3].get<int>()}});
  }
  net.params.unstressed_length = vector_from_json(doc.at("l0"), "l0");
  net.params.axial_stiffness = vector_from_json(doc.at("EA"), "EA");
  net.topology.validate();
  net.params.validate(net.topology.edge_count());
  return net;
}

}  // namespace

Net net_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& err) {
    throw IoError(std::string("net file is not valid JSON: ") + err.what());
  }
  try {
    return net_from_parsed(doc);
  } catch (const json::exception& err) {
    // Missing or ill-typed keys surface as file-format errors.
    throw IoError(std::string("malformed net file: ") + err.what());
  }
}

Net load_net(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open net file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return net_from_json(ss.str());
}

void save_net(const Net& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write net file: " + path);
  out << net_to_json(net) << "\n";
}

}  // namespace formnet
