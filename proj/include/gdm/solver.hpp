#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <vector>

#include "gdm/graph.hpp"

namespace gdm {

// Idle threshold for the residual propagation loop. Distinct from the
// wildfire epsilon, which is a propagation-stopping threshold.
inline constexpr double kResidualIdleFloor = 1e-9;

// Thrown when a message intermediate breaks down (non-positive aggregate
// precision or non-finite value); identifies the offending edge or node.
struct SolverBreakdown : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Directed Gaussian message. `precision`/`mean` hold the last transmitted
// pair and enter aggregation sums ((0, 0) before the first send contributes
// nothing). `prev_*` is the residual reference, seeded with (1/sigma_p_sq, 0)
// so the first residual is finite.
struct EdgeMessage {
  double precision = 0.0;
  double mean = 0.0;
  double prev_precision = 0.0;
  double prev_mean = 0.0;
  bool sent = false;
  bool alive = true;
};

enum class SchedulePhase : std::uint8_t { kWildfire, kResidual };

struct TraceRow {
  std::uint64_t message_index = 0;
  SchedulePhase phase = SchedulePhase::kWildfire;
  VoxelIndex from;
  VoxelIndex to;
  double residual = 0.0;
  std::uint64_t wall_time_ns = 0;
};

struct SolverCounters {
  std::uint64_t messages_sent = 0;
  std::uint64_t wildfire_messages = 0;
  std::uint64_t residual_messages = 0;
  // Residuals evaluated across a precision sign change after the first send;
  // not expected on diagonally dominant models.
  std::uint64_t sign_flip_events = 0;
};

struct WildfireResult {
  std::uint64_t messages_sent = 0;
  std::vector<NodeId> visited;  // nodes popped from the FIFO, in order
};

struct ResidualStepResult {
  bool idle = true;
  double residual = 0.0;
  std::uint32_t directed_edge = 0;
};

// Gaussian belief propagation over a FactorGraph: message update/send,
// Bhattacharyya-style residuals, and the wildfire / residual / round-robin
// schedulers. Registers itself as the graph's listener so dynamic growth
// keeps the message store in sync.
class GabpSolver : public GraphListener {
 public:
  explicit GabpSolver(FactorGraph& graph);
  ~GabpSolver() override;

  GabpSolver(const GabpSolver&) = delete;
  GabpSolver& operator=(const GabpSolver&) = delete;

  // GraphListener
  void on_edge_created(EdgeId e) override;
  void on_edge_removed(EdgeId e) override;
  void on_node_removed(NodeId n) override;
  void on_self_potential_changed(NodeId n) override;

  // Self potential plus incoming message potentials from all neighbors except
  // `exclude`, precision-weighted. Throws SolverBreakdown if the aggregate
  // precision is non-positive.
  std::pair<double, double> aggregate_excluding(NodeId i, NodeId exclude) const;

  struct Candidate {
    double precision = 0.0;
    double mean = 0.0;
  };
  // Pure message computation along i -> j (no state change).
  Candidate compute_message(NodeId i, NodeId j) const;

  // Computes, commits and returns the message i -> j together with its
  // residual against the previously transmitted pair.
  double send_message(NodeId from, NodeId to);

  // Eq.-style residual between consecutive messages on one directed edge,
  // evaluated on absolute precisions (message precisions are negative under
  // the canonical sign convention; the magnitude carries the information).
  // Returns +inf when exactly one precision is zero.
  static double message_residual(double p_prev, double mu_prev, double p_new, double mu_new);

  // FIFO propagation from `start`: pops node t, sends to all neighbors using
  // one shared aggregate per node visit, enqueues neighbors whose received
  // residual exceeds epsilon (duplicates suppressed), and invokes
  // `expansion_hook` on each such neighbor before enqueueing it.
  WildfireResult wildfire_from(NodeId start, double epsilon,
                               const std::function<void(NodeId)>& expansion_hook = {});

  // Re-sends the directed edge of maximal residual; idle when the maximum is
  // below `floor`.
  ResidualStepResult residual_step(double floor = kResidualIdleFloor);

  // Runs residual_step until idle or `max_messages` sends; returns sends.
  std::uint64_t run_residual(double floor = kResidualIdleFloor,
                             std::uint64_t max_messages = UINT64_MAX);

  // Baseline scheduler: one pass over all live directed edges in id order.
  std::uint64_t round_robin_sweep();

  // Marginal (mean, variance) of a node. Pure read. Throws SolverBreakdown if
  // the marginal precision is non-positive (invariant breach).
  std::pair<double, double> marginal(NodeId i) const;

  // Largest current residual among tracked edges (cleans stale heap entries).
  double current_max_residual();
  // Exhaustive recomputation over all live directed edges; exact but O(E).
  double recompute_global_max_residual() const;

  const SolverCounters& counters() const { return counters_; }
  const EdgeMessage& message(std::uint32_t directed_edge) const { return messages_[directed_edge]; }
  std::uint32_t directed_edge_count() const { return static_cast<std::uint32_t>(messages_.size()); }

  // Directed edge id of the message sent from `from` along edge e.
  std::uint32_t directed_id(EdgeId e, NodeId from) const;
  NodeId from_of(std::uint32_t d) const;
  NodeId to_of(std::uint32_t d) const;

  void set_trace(std::vector<TraceRow>* sink) { trace_ = sink; }
  void set_phase(SchedulePhase phase) { phase_ = phase; }

  // (sum of precisions, sum of precision-weighted means) over the self
  // potential and all incoming messages, in neighbor-list order.
  std::pair<double, double> node_aggregate(NodeId i) const;

 private:
  struct QueueEntry {
    double residual;
    std::uint32_t directed_edge;
    std::uint64_t gen;
  };
  struct QueueCompare {
    bool operator()(const QueueEntry& a, const QueueEntry& b) const {
      if (a.residual != b.residual) return a.residual < b.residual;
      return a.directed_edge > b.directed_edge;  // ties: lowest edge id first
    }
  };

  Candidate compute_from_aggregate(double sum_p, double sum_g, NodeId i, NodeId j,
                                   const NeighborLink& link) const;
  double commit_send(std::uint32_t d, NodeId from, NodeId to, const Candidate& c);
  void mark_dirty(std::uint32_t d);
  void refresh_residual_entry(std::uint32_t d);

  FactorGraph& graph_;
  std::vector<EdgeMessage> messages_;
  std::vector<std::uint64_t> gen_;
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, QueueCompare> queue_;
  SolverCounters counters_;
  SchedulePhase phase_ = SchedulePhase::kWildfire;
  std::vector<TraceRow>* trace_ = nullptr;
  std::chrono::steady_clock::time_point epoch_;
  std::vector<char> in_queue_;  // wildfire membership flags, indexed by NodeId
};

struct HybridOutcome {
  std::uint64_t messages = 0;
  std::uint64_t wildfire_messages = 0;
  std::uint64_t residual_messages = 0;
  std::uint64_t measurements_inserted = 0;
  bool budget_exhausted = false;
};

// Hybrid message schedule: wildfire for every measurement `poll` yields,
// residual propagation between arrivals, interruptible at every message
// boundary. Returns when poll is dry and the queue is idle, or on budget.
// `insert_wildfire` performs the insertion and returns messages sent.
HybridOutcome hybrid_run(GabpSolver& solver,
                         const std::function<std::optional<Measurement>()>& poll,
                         const std::function<std::uint64_t(const Measurement&)>& insert_wildfire,
                         std::uint64_t message_budget = UINT64_MAX,
                         double idle_floor = kResidualIdleFloor);

}  // namespace gdm
