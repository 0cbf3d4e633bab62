#include "gdm/solver.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <string>

namespace gdm {

GabpSolver::GabpSolver(FactorGraph& graph) : graph_(graph) {
  epoch_ = std::chrono::steady_clock::now();
  graph_.set_listener(this);
  for (EdgeId e = 0; e < graph_.edge_slots(); ++e) {
    if (graph_.edge(e).alive) on_edge_created(e);
  }
}

GabpSolver::~GabpSolver() { graph_.set_listener(nullptr); }

std::uint32_t GabpSolver::directed_id(EdgeId e, NodeId from) const {
  return 2 * e + (graph_.edge(e).a == from ? 0u : 1u);
}

NodeId GabpSolver::from_of(std::uint32_t d) const {
  const EdgeRecord& e = graph_.edge(d >> 1);
  return (d & 1u) == 0 ? e.a : e.b;
}

NodeId GabpSolver::to_of(std::uint32_t d) const {
  const EdgeRecord& e = graph_.edge(d >> 1);
  return (d & 1u) == 0 ? e.b : e.a;
}

void GabpSolver::on_edge_created(EdgeId e) {
  const std::size_t need = 2 * (static_cast<std::size_t>(e) + 1);
  if (messages_.size() < need) {
    messages_.resize(need);
    gen_.resize(need, 0);
  }
  const double seed_precision = 1.0 / graph_.params().sigma_p_sq;
  for (std::uint32_t d = 2 * e; d <= 2 * e + 1; ++d) {
    messages_[d] = EdgeMessage{};
    messages_[d].prev_precision = seed_precision;
    messages_[d].prev_mean = 0.0;
    mark_dirty(d);
  }
}

void GabpSolver::on_edge_removed(EdgeId e) {
  for (std::uint32_t d = 2 * e; d <= 2 * e + 1; ++d) {
    if (d < messages_.size()) {
      messages_[d].alive = false;
      ++gen_[d];  // invalidate queued entries
    }
  }
}

void GabpSolver::on_node_removed(NodeId) {}

void GabpSolver::on_self_potential_changed(NodeId n) {
  const NodeRecord& rec = graph_.node(n);
  if (!rec.alive) return;
  for (const NeighborLink& link : rec.neighbors) {
    mark_dirty(directed_id(link.edge, n));
  }
}

std::pair<double, double> GabpSolver::node_aggregate(NodeId i) const {
  const NodeRecord& rec = graph_.node(i);
  double sum_p = rec.lambda_ii;
  double sum_g = rec.g_i;  // P_ii * mu_ii == g_i exactly
  for (const NeighborLink& link : rec.neighbors) {
    const EdgeMessage& m = messages_[directed_id(link.edge, link.node)];
    sum_p += m.precision;
    sum_g += m.precision * m.mean;
  }
  return {sum_p, sum_g};
}

GabpSolver::Candidate GabpSolver::compute_from_aggregate(double sum_p, double sum_g, NodeId i,
                                                         NodeId j,
                                                         const NeighborLink& link) const {
  const EdgeMessage& rev = messages_[directed_id(link.edge, j)];
  const double p_excl = sum_p - rev.precision;
  if (!(p_excl > 0.0)) {
    throw SolverBreakdown("aggregate precision non-positive at node " +
                          to_string(graph_.node(i).voxel) + " excluding " +
                          to_string(graph_.node(j).voxel));
  }
  const double mu_excl = (sum_g - rev.precision * rev.mean) / p_excl;
  const double lam_ij = -graph_.edge(link.edge).coupling;
  Candidate c;
  c.precision = -(lam_ij * lam_ij) / p_excl;
  c.mean = -(lam_ij * mu_excl) / c.precision;
  if (!std::isfinite(c.precision) || !std::isfinite(c.mean)) {
    throw SolverBreakdown("non-finite message on edge " + to_string(graph_.node(i).voxel) +
                          " -> " + to_string(graph_.node(j).voxel));
  }
  return c;
}

std::pair<double, double> GabpSolver::aggregate_excluding(NodeId i, NodeId exclude) const {
  const NodeRecord& rec = graph_.node(i);
  const NeighborLink* link = nullptr;
  for (const NeighborLink& l : rec.neighbors) {
    if (l.node == exclude) {
      link = &l;
      break;
    }
  }
  if (link == nullptr) {
    throw std::invalid_argument("aggregate_excluding: " + to_string(graph_.node(exclude).voxel) +
                                " is not a neighbor of " + to_string(rec.voxel));
  }
  auto [sum_p, sum_g] = node_aggregate(i);
  const EdgeMessage& rev = messages_[directed_id(link->edge, exclude)];
  const double p_excl = sum_p - rev.precision;
  if (!(p_excl > 0.0)) {
    throw SolverBreakdown("aggregate precision non-positive at node " + to_string(rec.voxel));
  }
  return {p_excl, (sum_g - rev.precision * rev.mean) / p_excl};
}

GabpSolver::Candidate GabpSolver::compute_message(NodeId i, NodeId j) const {
  const NodeRecord& rec = graph_.node(i);
  for (const NeighborLink& link : rec.neighbors) {
    if (link.node == j) {
      auto [sum_p, sum_g] = node_aggregate(i);
      return compute_from_aggregate(sum_p, sum_g, i, j, link);
    }
  }
  throw std::invalid_argument("compute_message: no edge " + to_string(rec.voxel) + " -> " +
                              to_string(graph_.node(j).voxel));
}

double GabpSolver::message_residual(double p_prev, double mu_prev, double p_new, double mu_new) {
  const double ap = std::abs(p_prev);
  const double an = std::abs(p_new);
  if (ap == 0.0 && an == 0.0) {
    const double dm = mu_prev - mu_new;
    return dm == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  if (ap == 0.0 || an == 0.0) {
    // A (0, 0) reference carries infinite information change.
    return std::numeric_limits<double>::infinity();
  }
  const double ratio = an / ap + ap / an + 2.0;
  const double dm = mu_prev - mu_new;
  return 0.25 * std::log(0.25 * ratio) + 0.25 * (ap + an) * dm * dm;
}

double GabpSolver::commit_send(std::uint32_t d, NodeId from, NodeId to, const Candidate& c) {
  EdgeMessage& msg = messages_[d];
  if (msg.sent && std::signbit(msg.prev_precision) != std::signbit(c.precision)) {
    ++counters_.sign_flip_events;
  }
  const double r = message_residual(msg.prev_precision, msg.prev_mean, c.precision, c.mean);
  msg.precision = c.precision;
  msg.mean = c.mean;
  msg.prev_precision = c.precision;
  msg.prev_mean = c.mean;
  msg.sent = true;

  ++counters_.messages_sent;
  if (phase_ == SchedulePhase::kWildfire) {
    ++counters_.wildfire_messages;
  } else {
    ++counters_.residual_messages;
  }
  if (trace_ != nullptr) {
    TraceRow row;
    row.message_index = counters_.messages_sent;
    row.phase = phase_;
    row.from = graph_.node(from).voxel;
    row.to = graph_.node(to).voxel;
    row.residual = r;
    row.wall_time_ns = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                             epoch_)
            .count());
    trace_->push_back(row);
  }

  // This edge is now at its hypothetical value; drop its queue priority.
  ++gen_[d];
  // The inputs of every message out of `to` changed, except to -> from whose
  // aggregate excludes the message just received.
  const NodeRecord& dst = graph_.node(to);
  for (const NeighborLink& link : dst.neighbors) {
    if (link.node == from) continue;
    mark_dirty(directed_id(link.edge, to));
  }
  return r;
}

void GabpSolver::mark_dirty(std::uint32_t d) {
  ++gen_[d];
  refresh_residual_entry(d);
}

void GabpSolver::refresh_residual_entry(std::uint32_t d) {
  const EdgeMessage& msg = messages_[d];
  if (!msg.alive) return;
  const NodeId i = from_of(d);
  const NodeId j = to_of(d);
  const Candidate c = compute_message(i, j);
  const double r = message_residual(msg.prev_precision, msg.prev_mean, c.precision, c.mean);
  if (r > 0.0) {
    queue_.push(QueueEntry{r, d, gen_[d]});
  }
}

double GabpSolver::send_message(NodeId from, NodeId to) {
  const NodeRecord& rec = graph_.node(from);
  if (!rec.alive) throw std::invalid_argument("send_message: sender removed");
  for (const NeighborLink& link : rec.neighbors) {
    if (link.node == to) {
      auto [sum_p, sum_g] = node_aggregate(from);
      const Candidate c = compute_from_aggregate(sum_p, sum_g, from, to, link);
      return commit_send(directed_id(link.edge, from), from, to, c);
    }
  }
  throw std::invalid_argument("send_message: no edge " + to_string(rec.voxel) + " -> " +
                              to_string(graph_.node(to).voxel));
}

WildfireResult GabpSolver::wildfire_from(NodeId start, double epsilon,
                                         const std::function<void(NodeId)>& expansion_hook) {
  if (start >= graph_.node_slots() || !graph_.node(start).alive) {
    throw std::invalid_argument("wildfire_from: start node missing");
  }
  const SchedulePhase saved = phase_;
  phase_ = SchedulePhase::kWildfire;
  WildfireResult result;
  const std::uint64_t sent0 = counters_.messages_sent;

  std::deque<NodeId> fifo;
  if (in_queue_.size() < graph_.node_slots()) in_queue_.resize(graph_.node_slots(), 0);
  fifo.push_back(start);
  in_queue_[start] = 1;

  while (!fifo.empty()) {
    const NodeId t = fifo.front();
    fifo.pop_front();
    in_queue_[t] = 0;
    if (!graph_.node(t).alive) continue;
    result.visited.push_back(t);

    // Snapshot: expansion of a neighbor can grow other adjacency lists but
    // never t's own (no new lattice neighbor of t can appear here).
    const std::vector<NeighborLink> links = graph_.node(t).neighbors;
    const auto [sum_p, sum_g] = node_aggregate(t);
    for (const NeighborLink& link : links) {
      const NodeId j = link.node;
      const Candidate c = compute_from_aggregate(sum_p, sum_g, t, j, link);
      const double r = commit_send(directed_id(link.edge, t), t, j, c);
      if (r > epsilon) {
        if (expansion_hook) expansion_hook(j);
        if (in_queue_.size() < graph_.node_slots()) in_queue_.resize(graph_.node_slots(), 0);
        if (!in_queue_[j]) {
          fifo.push_back(j);
          in_queue_[j] = 1;
        }
      }
    }
  }

  result.messages_sent = counters_.messages_sent - sent0;
  phase_ = saved;
  return result;
}

ResidualStepResult GabpSolver::residual_step(double floor) {
  const SchedulePhase saved = phase_;
  phase_ = SchedulePhase::kResidual;
  ResidualStepResult out;
  while (!queue_.empty()) {
    const QueueEntry top = queue_.top();
    if (top.gen != gen_[top.directed_edge] || !messages_[top.directed_edge].alive) {
      queue_.pop();
      continue;
    }
    if (top.residual < floor) break;
    queue_.pop();
    const NodeId i = from_of(top.directed_edge);
    const NodeId j = to_of(top.directed_edge);
    const Candidate c = compute_message(i, j);
    commit_send(top.directed_edge, i, j, c);
    out.idle = false;
    out.residual = top.residual;
    out.directed_edge = top.directed_edge;
    break;
  }
  phase_ = saved;
  return out;
}

std::uint64_t GabpSolver::run_residual(double floor, std::uint64_t max_messages) {
  std::uint64_t sent = 0;
  while (sent < max_messages) {
    if (residual_step(floor).idle) break;
    ++sent;
  }
  return sent;
}

std::uint64_t GabpSolver::round_robin_sweep() {
  const SchedulePhase saved = phase_;
  phase_ = SchedulePhase::kResidual;
  std::uint64_t sent = 0;
  for (std::uint32_t d = 0; d < messages_.size(); ++d) {
    if (!messages_[d].alive) continue;
    const NodeId i = from_of(d);
    const NodeId j = to_of(d);
    const Candidate c = compute_message(i, j);
    commit_send(d, i, j, c);
    ++sent;
  }
  phase_ = saved;
  return sent;
}

std::pair<double, double> GabpSolver::marginal(NodeId i) const {
  const NodeRecord& rec = graph_.node(i);
  if (!rec.alive) throw std::invalid_argument("marginal: node removed");
  const auto [sum_p, sum_g] = node_aggregate(i);
  if (!(sum_p > 0.0)) {
    throw SolverBreakdown("marginal precision non-positive at node " + to_string(rec.voxel));
  }
  return {sum_g / sum_p, 1.0 / sum_p};
}

double GabpSolver::current_max_residual() {
  while (!queue_.empty()) {
    const QueueEntry top = queue_.top();
    if (top.gen != gen_[top.directed_edge] || !messages_[top.directed_edge].alive) {
      queue_.pop();
      continue;
    }
    return top.residual;
  }
  return 0.0;
}

double GabpSolver::recompute_global_max_residual() const {
  double best = 0.0;
  for (std::uint32_t d = 0; d < messages_.size(); ++d) {
    const EdgeMessage& msg = messages_[d];
    if (!msg.alive) continue;
    const Candidate c = compute_message(from_of(d), to_of(d));
    best = std::max(best,
                    message_residual(msg.prev_precision, msg.prev_mean, c.precision, c.mean));
  }
  return best;
}

HybridOutcome hybrid_run(GabpSolver& solver,
                         const std::function<std::optional<Measurement>()>& poll,
                         const std::function<std::uint64_t(const Measurement&)>& insert_wildfire,
                         std::uint64_t message_budget, double idle_floor) {
  HybridOutcome out;
  const SolverCounters before = solver.counters();
  while (out.messages < message_budget) {
    if (auto m = poll()) {
      insert_wildfire(*m);
      ++out.measurements_inserted;
      out.messages = solver.counters().messages_sent - before.messages_sent;
      continue;
    }
    const ResidualStepResult step = solver.residual_step(idle_floor);
    out.messages = solver.counters().messages_sent - before.messages_sent;
    if (step.idle) {
      // Idle and no pending measurement: done.
      if (auto m = poll()) {
        insert_wildfire(*m);
        ++out.measurements_inserted;
        out.messages = solver.counters().messages_sent - before.messages_sent;
        continue;
      }
      break;
    }
  }
  out.budget_exhausted = out.messages >= message_budget;
  out.wildfire_messages = solver.counters().wildfire_messages - before.wildfire_messages;
  out.residual_messages = solver.counters().residual_messages - before.residual_messages;
  return out;
}

}  // namespace gdm
