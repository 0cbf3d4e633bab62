#include "gdm/oracle.hpp"

#include <algorithm>
#include <stdexcept>

namespace gdm {

DenseSystem assemble(const FactorGraph& graph) {
  if (graph.live_node_count() == 0) {
    throw std::invalid_argument("assemble: graph is empty");
  }
  DenseSystem sys;
  std::vector<std::pair<VoxelIndex, NodeId>> ordered;
  ordered.reserve(graph.live_node_count());
  for (NodeId id : graph.live_nodes()) {
    ordered.emplace_back(graph.node(id).voxel, id);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  const int n = static_cast<int>(ordered.size());
  sys.voxels.reserve(n);
  std::unordered_map<NodeId, int> row_of_node;
  row_of_node.reserve(n);
  for (int r = 0; r < n; ++r) {
    sys.voxels.push_back(ordered[r].first);
    sys.row_of.emplace(ordered[r].first, r);
    row_of_node.emplace(ordered[r].second, r);
  }

  sys.lambda = Eigen::MatrixXd::Zero(n, n);
  sys.g = Eigen::VectorXd::Zero(n);
  for (int r = 0; r < n; ++r) {
    const NodeRecord& rec = graph.node(ordered[r].second);
    sys.lambda(r, r) = rec.lambda_ii;
    sys.g(r) = rec.g_i;
    for (const NeighborLink& link : rec.neighbors) {
      const int c = row_of_node.at(link.node);
      sys.lambda(r, c) = -graph.edge(link.edge).coupling;
    }
  }
  return sys;
}

Eigen::VectorXd solve_map(const DenseSystem& sys) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sys.lambda);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error("solve_map: factorization failed (graph invariant breach)");
  }
  Eigen::VectorXd mu = ldlt.solve(sys.g);
  // One refinement step keeps the residual near machine precision.
  mu += ldlt.solve(sys.g - sys.lambda * mu);
  const double g_inf = sys.g.lpNorm<Eigen::Infinity>();
  const double r_inf = (sys.lambda * mu - sys.g).lpNorm<Eigen::Infinity>();
  if (g_inf > 0.0 && r_inf > 1e-10 * g_inf) {
    throw std::runtime_error("solve_map: residual check failed");
  }
  return mu;
}

Eigen::VectorXd marginal_variances(const DenseSystem& sys) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sys.lambda);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error("marginal_variances: factorization failed");
  }
  const int n = sys.size();
  Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::VectorXd var = inv.diagonal();
  for (int i = 0; i < n; ++i) {
    if (!(var(i) > 0.0)) {
      throw std::runtime_error("marginal_variances: non-positive variance at row " +
                               std::to_string(i));
    }
  }
  return var;
}

}  // namespace gdm
