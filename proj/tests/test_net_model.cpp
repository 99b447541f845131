#include <doctest.h>

#include <Eigen/Core>

#include "formnet/errors.hpp"
#include "formnet/net_model.hpp"
#include "test_support.hpp"

using namespace formnet;
using formnet::testing::ScratchDir;
using formnet::testing::two_anchor_net;

namespace {

// One interior node tied to one boundary anchor; force_residual and
// total_energy do not validate, so the degree-1 topology is usable here.
Net single_edge_net(const Eigen::Vector3d& interior,
                    const Eigen::Vector3d& boundary, double ea, double l0) {
  Net net;
  net.topology.n_interior = 1;
  net.topology.n_boundary = 1;
  net.topology.m_interior = 0;
  net.topology.edges = {{{NodeKind::Interior, 0}, {NodeKind::Boundary, 0}}};
  net.geometry.interior = interior;
  net.geometry.boundary = boundary;
  net.params.unstressed_length = Eigen::VectorXd::Constant(1, l0);
  net.params.axial_stiffness = Eigen::VectorXd::Constant(1, ea);
  return net;
}

}  // namespace

TEST_CASE("edge lengths are plain Euclidean distances") {
  Net net = single_edge_net({0, 0, 0}, {1, 0, 0}, 1.0, 1.0);
  CHECK(edge_length(net.topology, net.geometry, 0) == 1.0);

  net.geometry.boundary << 0, 0, 0;  // coincident endpoints
  CHECK(edge_length(net.topology, net.geometry, 0) == 0.0);

  net.geometry.interior = Eigen::Vector3d(1, 2, 2);
  CHECK(edge_length(net.topology, net.geometry, 0) == 3.0);

  const Eigen::VectorXd all = edge_lengths(net.topology, net.geometry);
  CHECK(all.size() == 1);
  CHECK(all[0] == 3.0);
}

TEST_CASE("a stretched edge pulls the interior node toward its anchor") {
  // Unit stiffness, unit unstressed length, anchor 2 m away: the tension
  // coefficient is EA * (1/l0 - 1/l) = 1 - 1/2, acting along -x.
  const Net net = single_edge_net({0, 0, 0}, {2, 0, 0}, 1.0, 1.0);
  const Eigen::VectorXd h =
      force_residual(net.topology, net.geometry, net.params);
  CHECK(h.size() == 3);
  CHECK(h[0] == -1.0);
  CHECK(h[1] == 0.0);
  CHECK(h[2] == 0.0);
}

TEST_CASE("a slack edge carries neither force nor energy") {
  const Net net = single_edge_net({0, 0, 0}, {0.5, 0, 0}, 1.0, 1.0);
  CHECK(force_residual(net.topology, net.geometry, net.params)
            .lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(total_energy(net.topology, net.geometry, net.params) == 0.0);
}

TEST_CASE("energy matches the half-quadratic elongation form") {
  Net net = single_edge_net({0, 0, 0}, {1.5, 0, 0}, 2.0, 1.0);
  // 1/2 * (EA/l0) * (l - l0)^2 = 1/2 * 2 * 0.25
  CHECK(total_energy(net.topology, net.geometry, net.params) ==
        doctest::Approx(0.25).epsilon(1e-14));

  net.geometry.boundary << 1.0, 0, 0;  // exactly unstressed
  CHECK(total_energy(net.topology, net.geometry, net.params) == 0.0);
}

TEST_CASE("symmetric anchors balance the midpoint exactly") {
  Net net = two_anchor_net();
  net.geometry.interior = Eigen::Vector3d::Zero();
  CHECK(force_residual(net.topology, net.geometry, net.params)
            .lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("a tensioned edge collapsing to zero length is an error") {
  const Net net = single_edge_net({1e-13, 0, 0}, {0, 0, 0}, 1.0, 1e-14);
  CHECK_THROWS_AS(force_residual(net.topology, net.geometry, net.params),
                  DegenerateGeometryError);
}

TEST_CASE("generated grids have the documented shape") {
  const Net five = synth_net(5, 5, FrameSpec{}, SagSpec{}, 1);
  CHECK(five.topology.n_interior == 9);
  CHECK(five.topology.n_boundary == 12);
  CHECK(five.topology.m_interior == 12);
  CHECK(five.topology.m_boundary() == 12);
  CHECK_NOTHROW(five.topology.validate());
  CHECK_NOTHROW(five.params.validate(five.topology.edge_count()));

  const Net three = synth_net(3, 3, FrameSpec{}, SagSpec{}, 1);
  CHECK(three.topology.n_interior == 1);
  CHECK(three.topology.n_boundary == 4);
  CHECK(three.topology.m_interior == 0);
  CHECK(three.topology.m_boundary() == 4);
}

TEST_CASE("generated lengths pre-tension every edge") {
  const Net net = synth_net(4, 5, FrameSpec{}, SagSpec{}, 9);
  const Eigen::VectorXd layout = edge_lengths(net.topology, net.geometry);
  for (int e = 0; e < net.topology.edge_count(); ++e) {
    CHECK(net.params.unstressed_length[e] <= 0.98 * layout[e]);
    CHECK(net.params.unstressed_length[e] >= 0.96 * layout[e] - 1e-12);
  }
  CHECK((layout - net.params.unstressed_length).minCoeff() > 0.0);
}

TEST_CASE("net generation is deterministic in the seed") {
  const Net a = synth_net(4, 4, FrameSpec{}, SagSpec{}, 11);
  const Net b = synth_net(4, 4, FrameSpec{}, SagSpec{}, 11);
  const Net c = synth_net(4, 4, FrameSpec{}, SagSpec{}, 12);
  CHECK(net_to_json(a) == net_to_json(b));
  CHECK((a.params.unstressed_length - c.params.unstressed_length)
            .lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("net generation rejects bad arguments") {
  CHECK_THROWS_AS(synth_net(2, 4, FrameSpec{}, SagSpec{}, 1),
                  InvalidInputError);
  CHECK_THROWS_AS(synth_net(4, 4, FrameSpec{}, SagSpec{}, 1, -5.0),
                  InvalidInputError);
  CHECK_THROWS_AS(synth_net(4, 4, FrameSpec{}, SagSpec{}, 1, 1000.0, 1.5),
                  InvalidInputError);
}

TEST_CASE("parameter validation separates size and sign problems") {
  EdgeParams params;
  params.unstressed_length = Eigen::Vector2d(0.5, 0.5);
  params.axial_stiffness = Eigen::Vector2d(1.0, 1.0);
  CHECK_NOTHROW(params.validate(2));
  CHECK_THROWS_AS(params.validate(3), DimensionError);

  params.unstressed_length[1] = 0.0;
  CHECK_THROWS_AS(params.validate(2), InvalidInputError);
}

TEST_CASE("net files round-trip exactly") {
  const Net net = synth_net(4, 4, FrameSpec{}, SagSpec{}, 21);
  const Net back = net_from_json(net_to_json(net));
  CHECK((net.geometry.interior - back.geometry.interior)
            .lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((net.geometry.boundary - back.geometry.boundary)
            .lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((net.params.unstressed_length - back.params.unstressed_length)
            .lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((net.params.axial_stiffness - back.params.axial_stiffness)
            .lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(back.topology.m_interior == net.topology.m_interior);

  const ScratchDir scratch("net_io");
  const std::string path = scratch.path("net.json");
  save_net(net, path);
  const Net loaded = load_net(path);
  CHECK(net_to_json(loaded) == net_to_json(net));
}

TEST_CASE("net files that cannot be decoded raise file errors") {
  CHECK_THROWS_AS(net_from_json("this is not json"), IoError);
  CHECK_THROWS_AS(net_from_json("{\"nodes_interior\": []}"), IoError);
  CHECK_THROWS_AS(load_net("/nonexistent/net.json"), IoError);

  // Structurally valid JSON with physically invalid content fails validation.
  Net net = synth_net(4, 4, FrameSpec{}, SagSpec{}, 3);
  net.params.unstressed_length[0] = -1.0;
  CHECK_THROWS_AS(net_from_json(net_to_json(net)), InvalidInputError);
}
