#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace formnet {

enum class NodeKind { Interior, Boundary };

struct EdgeEnd {
  NodeKind kind = NodeKind::Interior;
  int index = 0;
};

/// One cable segment between two nodes.
struct Edge {
  EdgeEnd s;
  EdgeEnd t;
};

/// Graph of the cable net. Edges are stored with the interior-interior
/// segments first (m_interior of them) followed by the segments that attach
/// an interior node to the frame; parameter vectors follow the same order.
struct Topology {
  int n_interior = 0;
  int n_boundary = 0;
  int m_interior = 0;
  std::vector<Edge> edges;

  int edge_count() const { return static_cast<int>(edges.size()); }
  int m_boundary() const { return edge_count() - m_interior; }

  /// Structural rules enforced at construction boundaries (file load,
  /// generators): index ranges, interior edges connect two interior nodes,
  /// frame edges connect exactly one interior and one boundary node
  /// (frame-frame segments are not modeled), no self-loops or duplicate
  /// edges, every node is used, interior nodes have degree >= 2, and the
  /// whole net is one connected component.
  void validate() const;
};

/// Nodal coordinates, stacked xyz per node. `interior` holds the free
/// nodes, `boundary` the nodes clamped to the rigid frame.
struct Geometry {
  Eigen::VectorXd interior;
  Eigen::VectorXd boundary;

  Eigen::Vector3d node(const EdgeEnd& end) const {
    const Eigen::VectorXd& block =
        end.kind == NodeKind::Interior ? interior : boundary;
    return block.segment<3>(3 * end.index);
  }
};

/// Per-edge material data, same ordering as Topology::edges.
struct EdgeParams {
  Eigen::VectorXd unstressed_length;  // l0, meters, > 0
  Eigen::VectorXd axial_stiffness;    // EA, newtons, > 0

  void validate(int edge_count) const;

  /// First m_interior entries of l0 (the uncertain parameters).
  Eigen::VectorXd interior_lengths(int m_interior) const {
    return unstressed_length.head(m_interior);
  }
};

struct Net {
  Topology topology;
  Geometry geometry;
  EdgeParams params;
};

/// Euclidean distance between the edge's endpoints.
double edge_length(const Topology& topology, const Geometry& geometry,
                   int edge_index);

/// All edge lengths in edge order.
Eigen::VectorXd edge_lengths(const Topology& topology,
                             const Geometry& geometry);

/// Net elastic force at every interior node, stacked xyz (newtons).
/// A tensioned edge (length > unstressed length) pulls its endpoints
/// together with magnitude EA * (l - l0) / l0; slack edges carry no force.
/// Equals the gradient of total_energy wherever all edges are strictly
/// tensioned.
Eigen::VectorXd force_residual(const Topology& topology,
                               const Geometry& geometry,
                               const EdgeParams& params);

/// Total elastic energy (joules): 1/2 * sum_e EA_e / l0_e * max(l_e - l0_e, 0)^2.
double total_energy(const Topology& topology, const Geometry& geometry,
                    const EdgeParams& params);

/// Rectangular frame footprint for generated nets, meters.
struct FrameSpec {
  double size_x = 4.0;
  double size_y = 3.0;
};

/// Out-of-plane shape of the frame: corner heights alternate +/- corner_z,
/// giving a saddle (z = corner_z * xhat * yhat on the unit square).
struct SagSpec {
  double corner_z = 0.6;
};

/// Deterministic synthetic quad-grid net. grid_nx x grid_ny node lattice
/// (both >= 3); the (nx-2) x (ny-2) inner nodes are free, the non-corner
/// perimeter nodes sit on the frame. Unstressed lengths are drawn per edge
/// in [pretension - 0.02, pretension] times the layout distance so every
/// edge is tensioned at equilibrium; stiffness is uniform.
Net synth_net(int grid_nx, int grid_ny, const FrameSpec& frame,
              const SagSpec& sag, std::uint64_t seed, double ea = 1000.0,
              double pretension = 0.98);

/// Net description JSON (see README for the schema). Validates on load.
Net load_net(const std::string& path);
void save_net(const Net& net, const std::string& path);
std::string net_to_json(const Net& net);
Net net_from_json(const std::string& text);

}  // namespace formnet
