#include "gdm/graph.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gdm {

void HyperParams::validate() const {
  if (!(sigma_s_sq > 0.0)) throw std::invalid_argument("HyperParams: sigma_s_sq must be > 0");
  if (!(sigma_zeta_sq > 0.0)) throw std::invalid_argument("HyperParams: sigma_zeta_sq must be > 0");
  if (!(sigma_r_sq > 0.0)) throw std::invalid_argument("HyperParams: sigma_r_sq must be > 0");
  if (!(sigma_d_sq > 0.0)) throw std::invalid_argument("HyperParams: sigma_d_sq must be > 0");
  if (!(sigma_p_sq > 0.0)) throw std::invalid_argument("HyperParams: sigma_p_sq must be > 0");
  if (std::isinf(sigma_d_sq)) throw std::invalid_argument("HyperParams: sigma_d_sq must be finite");
  if (!(sigma_d_sq >= 100.0 * sigma_s_sq)) {
    throw std::invalid_argument("HyperParams: sigma_d_sq must be >= 100 * sigma_s_sq");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("HyperParams: epsilon must be > 0");
}

FactorGraph::FactorGraph(std::shared_ptr<VoxelGrid> grid, HyperParams params)
    : grid_(std::move(grid)), params_(params) {
  if (!grid_) throw std::invalid_argument("FactorGraph: null grid");
  params_.validate();
}

NodeId FactorGraph::find(const VoxelIndex& voxel) const {
  auto it = index_.find(voxel);
  return it == index_.end() ? kInvalidNode : it->second;
}

NodeId FactorGraph::add_node(const VoxelIndex& voxel) {
  if (contains(voxel)) {
    throw std::invalid_argument("add_node: voxel " + to_string(voxel) + " already present");
  }
  if (grid_->occupied(voxel)) {
    throw std::invalid_argument("add_node: voxel " + to_string(voxel) + " inside obstacle");
  }
  NodeRecord n;
  n.voxel = voxel;
  n.lambda_ii = 1.0 / params_.sigma_d_sq;
  n.g_i = params_.z0 / params_.sigma_d_sq;
  const NodeId id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(std::move(n));
  index_.emplace(voxel, id);
  ++live_nodes_;
  return id;
}

ConnectResult FactorGraph::connect(const VoxelIndex& a, const VoxelIndex& b) {
  if (!VoxelGrid::lattice_adjacent(a, b)) {
    throw std::invalid_argument("connect: voxels " + to_string(a) + " and " + to_string(b) +
                                " are not lattice-adjacent");
  }
  const NodeId na = find(a);
  const NodeId nb = find(b);
  if (na == kInvalidNode || nb == kInvalidNode) {
    throw std::invalid_argument("connect: both nodes must exist");
  }
  for (const NeighborLink& link : nodes_[na].neighbors) {
    if (link.node == nb) throw std::invalid_argument("connect: edge already present");
  }
  if (grid_->is_blocked(a, b)) {
    return {ConnectOutcome::kBlocked, kInvalidEdge};
  }
  EdgeRecord e;
  e.a = na;
  e.b = nb;
  e.coupling = params_.coupling();
  const EdgeId id = static_cast<EdgeId>(edges_.size());
  edges_.push_back(e);
  ++live_edges_;
  nodes_[na].neighbors.push_back({nb, id});
  nodes_[nb].neighbors.push_back({na, id});
  recompute_self_potential(nodes_[na]);
  recompute_self_potential(nodes_[nb]);
  if (listener_) {
    listener_->on_edge_created(id);
    listener_->on_self_potential_changed(na);
    listener_->on_self_potential_changed(nb);
  }
  return {ConnectOutcome::kCreated, id};
}

void FactorGraph::advance_clock(double now) {
  if (now < now_) {
    throw std::invalid_argument("graph clock regression: now=" + std::to_string(now) +
                                " precedes " + std::to_string(now_));
  }
  now_ = now;
}

void FactorGraph::recompute_self_potential(NodeRecord& n) const {
  double lambda = 1.0 / params_.sigma_d_sq;
  for (const NeighborLink& link : n.neighbors) {
    lambda += edges_[link.edge].coupling;
  }
  double g = params_.z0 / params_.sigma_d_sq;
  for (const Measurement& m : n.measurements) {
    const double a = params_.alpha(now_ - m.timestamp);
    lambda += a;
    g += a * m.value;
  }
  n.lambda_ii = lambda;
  n.g_i = g;
}

void FactorGraph::attach_measurement(NodeId node, const Measurement& m, double now) {
  NodeRecord& n = nodes_.at(node);
  if (!n.alive) throw std::invalid_argument("attach_measurement: node removed");
  if (!(m.voxel == n.voxel)) {
    throw std::invalid_argument("attach_measurement: measurement voxel " + to_string(m.voxel) +
                                " does not match node voxel " + to_string(n.voxel));
  }
  if (!std::isfinite(m.timestamp) || !std::isfinite(m.value)) {
    throw std::invalid_argument("attach_measurement: non-finite measurement");
  }
  if (m.value < 0.0) {
    throw std::invalid_argument("attach_measurement: negative concentration");
  }
  if (m.timestamp > now) {
    throw std::invalid_argument("attach_measurement: timestamp in the future (clock regression)");
  }
  advance_clock(now);
  n.measurements.push_back(m);
  recompute_self_potential(n);
  if (listener_) listener_->on_self_potential_changed(node);
}

std::vector<NodeId> FactorGraph::refresh_time_decay(double now) {
  if (params_.time_invariant()) return {};
  for (const NodeRecord& n : nodes_) {
    if (!n.alive) continue;
    for (const Measurement& m : n.measurements) {
      if (m.timestamp > now) {
        throw std::invalid_argument("refresh_time_decay: clock regression past stored timestamp");
      }
    }
  }
  advance_clock(now);
  std::vector<NodeId> changed;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    NodeRecord& n = nodes_[id];
    if (!n.alive || n.measurements.empty()) continue;
    const double old_lambda = n.lambda_ii;
    const double old_g = n.g_i;
    recompute_self_potential(n);
    if (n.lambda_ii != old_lambda || n.g_i != old_g) {
      changed.push_back(id);
      if (listener_) listener_->on_self_potential_changed(id);
    }
  }
  return changed;
}

void FactorGraph::set_occupied(const VoxelIndex& voxel) {
  grid_->set_occupied(voxel, true);
  const NodeId id = find(voxel);
  if (id != kInvalidNode) {
    NodeRecord& n = nodes_[id];
    for (const NeighborLink& link : n.neighbors) {
      NodeRecord& peer = nodes_[link.node];
      std::erase_if(peer.neighbors, [&](const NeighborLink& l) { return l.edge == link.edge; });
      edges_[link.edge].alive = false;
      --live_edges_;
      if (listener_) listener_->on_edge_removed(link.edge);
      recompute_self_potential(peer);
      if (listener_) listener_->on_self_potential_changed(link.node);
    }
    n.neighbors.clear();
    n.alive = false;
    index_.erase(voxel);
    --live_nodes_;
    if (listener_) listener_->on_node_removed(id);
  }
  // Occupancy changed around the adjacent voxels; let growth re-check them.
  for (const auto& d : kNeighborOffsets) {
    const VoxelIndex nb{voxel.ix + d[0], voxel.iy + d[1], voxel.iz + d[2]};
    const NodeId nid = find(nb);
    if (nid != kInvalidNode) nodes_[nid].expanded = false;
  }
}

void FactorGraph::rebuild_self_potentials() {
  for (NodeRecord& n : nodes_) {
    if (n.alive) recompute_self_potential(n);
  }
}

std::vector<NodeId> FactorGraph::live_nodes() const {
  std::vector<NodeId> out;
  out.reserve(live_nodes_);
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].alive) out.push_back(id);
  }
  return out;
}

}  // namespace gdm
