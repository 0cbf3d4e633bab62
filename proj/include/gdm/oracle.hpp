#pragma once

#include <Eigen/Dense>
#include <unordered_map>
#include <vector>

#include "gdm/graph.hpp"

namespace gdm {

// Dense mirror of the graph's information form. Rows are ordered by voxel
// lexicographic order so assembly is deterministic.
struct DenseSystem {
  std::vector<VoxelIndex> voxels;  // row -> voxel
  std::unordered_map<VoxelIndex, int, VoxelIndexHash> row_of;
  Eigen::MatrixXd lambda;
  Eigen::VectorXd g;

  int size() const { return static_cast<int>(voxels.size()); }
};

// Entry-wise dense assembly from NodeRecords and EdgeRecords.
DenseSystem assemble(const FactorGraph& graph);

// Solves lambda * mu = g; verifies the residual is below 1e-10 * |g|_inf.
Eigen::VectorXd solve_map(const DenseSystem& sys);

// Diagonal of lambda^{-1}.
Eigen::VectorXd marginal_variances(const DenseSystem& sys);

}  // namespace gdm
