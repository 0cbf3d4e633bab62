#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <unordered_map>
#include <vector>

#include "gdm/voxel_grid.hpp"

namespace gdm {

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;
inline constexpr NodeId kInvalidNode = std::numeric_limits<NodeId>::max();
inline constexpr EdgeId kInvalidEdge = std::numeric_limits<EdgeId>::max();

// Model variances and thresholds. sigma_zeta_sq == infinity disables time decay.
struct HyperParams {
  double sigma_s_sq = 0.1;
  double sigma_zeta_sq = std::numeric_limits<double>::infinity();
  double sigma_r_sq = 2.0;
  double sigma_d_sq = 1e4;
  double sigma_p_sq = 1e4;
  double z0 = 0.0;
  double epsilon = 0.01;

  bool time_invariant() const { return std::isinf(sigma_zeta_sq); }
  // Observation precision for a measurement of age dt seconds.
  double alpha(double dt) const {
    return time_invariant() ? 1.0 / sigma_s_sq : 1.0 / (sigma_s_sq + sigma_zeta_sq * dt);
  }
  // Edge information weight for a free voxel pair.
  double coupling() const { return 1.0 / sigma_r_sq; }

  // Throws std::invalid_argument on any violated invariant.
  void validate() const;
};

struct Measurement {
  double value = 0.0;      // concentration, same unit as z0
  double timestamp = 0.0;  // seconds since epoch
  VoxelIndex voxel;
};

struct NeighborLink {
  NodeId node = kInvalidNode;
  EdgeId edge = kInvalidEdge;
};

// Per-variable state: self potential (lambda_ii, g_i), measurement set,
// neighbor list and the expansion latch.
struct NodeRecord {
  VoxelIndex voxel;
  double lambda_ii = 0.0;  // P_ii, always > 0 (default factor contributes 1/sigma_d_sq)
  double g_i = 0.0;
  std::vector<Measurement> measurements;
  std::vector<NeighborLink> neighbors;
  bool expanded = false;
  bool alive = true;

  double self_precision() const { return lambda_ii; }
  double self_mean() const { return g_i / lambda_ii; }
};

// Undirected coupling between two lattice-adjacent free voxels. Blocked pairs
// are represented by absence, never by zero coupling.
struct EdgeRecord {
  NodeId a = kInvalidNode;
  NodeId b = kInvalidNode;
  double coupling = 0.0;  // beta = 1/sigma_r_sq, enters Lambda as -beta off-diagonal
  bool alive = true;
};

enum class ConnectOutcome { kCreated, kBlocked };

struct ConnectResult {
  ConnectOutcome outcome = ConnectOutcome::kBlocked;
  EdgeId edge = kInvalidEdge;
};

// Observer for structural/potential changes; the solver registers one so its
// message store stays aligned with the graph.
struct GraphListener {
  virtual ~GraphListener() = default;
  virtual void on_edge_created(EdgeId) {}
  virtual void on_edge_removed(EdgeId) {}
  virtual void on_node_removed(NodeId) {}
  virtual void on_self_potential_changed(NodeId) {}
};

// Owns factor-graph state and assembles GMRF information quantities from
// observation, regularisation and default factors. Single writer; see module
// docs for the concurrency contract.
class FactorGraph {
 public:
  FactorGraph(std::shared_ptr<VoxelGrid> grid, HyperParams params);

  const HyperParams& params() const { return params_; }
  const VoxelGrid& grid() const { return *grid_; }
  std::shared_ptr<VoxelGrid> grid_ptr() const { return grid_; }

  void set_listener(GraphListener* listener) { listener_ = listener; }

  // Creates an unconnected node with the default-factor potential
  // (1/sigma_d_sq, z0). Rejects duplicates and occupied voxels.
  NodeId add_node(const VoxelIndex& voxel);

  // Connects two existing lattice-adjacent nodes unless occupancy blocks the
  // pair. On creation both endpoint self precisions gain the coupling beta.
  ConnectResult connect(const VoxelIndex& a, const VoxelIndex& b);

  // Appends m to the node's measurement set and folds its observation factor
  // into the self potential. `now` must not precede any stored timestamp.
  void attach_measurement(NodeId node, const Measurement& m, double now);

  // Recomputes every measurement's alpha at the new time. No-op with
  // sigma_zeta_sq infinite. Returns the nodes whose self potential changed.
  std::vector<NodeId> refresh_time_decay(double now);

  // Marks the voxel occupied and drops any node there along with incident
  // edges; neighbors get their expansion latch reset so growth can re-check.
  void set_occupied(const VoxelIndex& voxel);

  NodeId find(const VoxelIndex& voxel) const;
  bool contains(const VoxelIndex& voxel) const { return find(voxel) != kInvalidNode; }

  const NodeRecord& node(NodeId id) const { return nodes_[id]; }
  const EdgeRecord& edge(EdgeId id) const { return edges_[id]; }
  std::size_t node_slots() const { return nodes_.size(); }
  std::size_t edge_slots() const { return edges_.size(); }
  std::size_t live_node_count() const { return live_nodes_; }
  std::size_t live_edge_count() const { return live_edges_; }
  void set_expanded(NodeId id, bool value) { nodes_[id].expanded = value; }

  double now() const { return now_; }

  // Recomputes all self potentials from stored measurements and neighbor
  // lists (idempotent rebuild; exposed for audits and tests).
  void rebuild_self_potentials();

  // All live node ids in creation order.
  std::vector<NodeId> live_nodes() const;

 private:
  void advance_clock(double now);
  void recompute_self_potential(NodeRecord& n) const;

  std::shared_ptr<VoxelGrid> grid_;
  HyperParams params_;
  std::vector<NodeRecord> nodes_;
  std::vector<EdgeRecord> edges_;
  std::unordered_map<VoxelIndex, NodeId, VoxelIndexHash> index_;
  GraphListener* listener_ = nullptr;
  double now_ = 0.0;
  std::size_t live_nodes_ = 0;
  std::size_t live_edges_ = 0;
};

}  // namespace gdm
