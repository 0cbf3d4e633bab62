#include "gdm/voxel_grid.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace gdm {

double norm(const Vec3& a) { return std::sqrt(a.x * a.x + a.y * a.y + a.z * a.z); }

std::string to_string(const VoxelIndex& v) {
  return std::to_string(v.ix) + "_" + std::to_string(v.iy) + "_" + std::to_string(v.iz);
}

VoxelGrid::VoxelGrid(int nx, int ny, int nz, double resolution, Vec3 origin)
    : nx_(nx), ny_(ny), nz_(nz), resolution_(resolution), origin_(origin) {
  if (nx <= 0 || ny <= 0 || nz <= 0) {
    throw std::invalid_argument("VoxelGrid: dims must be positive");
  }
  if (!(resolution > 0.0)) {
    throw std::invalid_argument("VoxelGrid: resolution must be positive");
  }
  bits_.assign((voxel_count() + 7) / 8, 0);
}

bool VoxelGrid::in_extent(const Vec3& p) const {
  const double ex = nx_ * resolution_;
  const double ey = ny_ * resolution_;
  const double ez = nz_ * resolution_;
  return p.x >= origin_.x && p.x < origin_.x + ex && p.y >= origin_.y && p.y < origin_.y + ey &&
         p.z >= origin_.z && p.z < origin_.z + ez;
}

bool VoxelGrid::occupied(const VoxelIndex& v) const {
  if (!in_bounds(v)) {
    throw std::out_of_range("VoxelGrid::occupied: voxel " + to_string(v) + " out of bounds");
  }
  const std::size_t i = bit_index(v);
  return (bits_[i >> 3] >> (i & 7)) & 1u;
}

void VoxelGrid::set_occupied(const VoxelIndex& v, bool value) {
  if (!in_bounds(v)) {
    throw std::out_of_range("VoxelGrid::set_occupied: voxel " + to_string(v) + " out of bounds");
  }
  const std::size_t i = bit_index(v);
  if (value) {
    bits_[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
  } else {
    bits_[i >> 3] &= static_cast<std::uint8_t>(~(1u << (i & 7)));
  }
}

std::size_t VoxelGrid::occupied_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < voxel_count(); ++i) {
    if ((bits_[i >> 3] >> (i & 7)) & 1u) ++n;
  }
  return n;
}

bool VoxelGrid::lattice_adjacent(const VoxelIndex& a, const VoxelIndex& b) {
  const int dx = std::abs(a.ix - b.ix);
  const int dy = std::abs(a.iy - b.iy);
  const int dz = std::abs(a.iz - b.iz);
  return dx + dy + dz == 1;
}

bool VoxelGrid::is_blocked(const VoxelIndex& a, const VoxelIndex& b) const {
  if (!in_bounds(a) || !in_bounds(b)) {
    throw std::out_of_range("VoxelGrid::is_blocked: voxel out of bounds");
  }
  if (!lattice_adjacent(a, b)) {
    throw std::invalid_argument("VoxelGrid::is_blocked: voxels " + to_string(a) + " and " +
                                to_string(b) + " are not lattice-adjacent");
  }
  return occupied(a) || occupied(b);
}

VoxelIndex VoxelGrid::voxel_of(const Vec3& p) const {
  const double fx = (p.x - origin_.x) / resolution_;
  const double fy = (p.y - origin_.y) / resolution_;
  const double fz = (p.z - origin_.z) / resolution_;
  const VoxelIndex v{static_cast<int>(std::floor(fx)), static_cast<int>(std::floor(fy)),
                     static_cast<int>(std::floor(fz))};
  if (v.ix < 0 || v.ix >= nx_) {
    throw std::out_of_range("VoxelGrid::voxel_of: x outside extent");
  }
  if (v.iy < 0 || v.iy >= ny_) {
    throw std::out_of_range("VoxelGrid::voxel_of: y outside extent");
  }
  if (v.iz < 0 || v.iz >= nz_) {
    throw std::out_of_range("VoxelGrid::voxel_of: z outside extent");
  }
  return v;
}

Vec3 VoxelGrid::center_of(const VoxelIndex& v) const {
  return {origin_.x + (v.ix + 0.5) * resolution_, origin_.y + (v.iy + 0.5) * resolution_,
          origin_.z + (v.iz + 0.5) * resolution_};
}

void VoxelGrid::save(std::ostream& out) const {
  out << "OCCGRID v1\n";
  out << "dims " << nx_ << ' ' << ny_ << ' ' << nz_ << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "resolution " << resolution_ << '\n';
  out << "origin " << origin_.x << ' ' << origin_.y << ' ' << origin_.z << '\n';
  out.write(reinterpret_cast<const char*>(bits_.data()), static_cast<std::streamsize>(bits_.size()));
}

void VoxelGrid::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("VoxelGrid::save_file: cannot open " + path);
  save(out);
}

VoxelGrid VoxelGrid::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "OCCGRID v1") {
    throw std::runtime_error("VoxelGrid::load: bad magic, expected 'OCCGRID v1'");
  }
  int nx = 0, ny = 0, nz = 0;
  double res = 0.0;
  Vec3 origin;
  {
    if (!std::getline(in, line)) throw std::runtime_error("VoxelGrid::load: missing dims");
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> nx >> ny >> nz) || key != "dims") {
      throw std::runtime_error("VoxelGrid::load: malformed dims line");
    }
  }
  {
    if (!std::getline(in, line)) throw std::runtime_error("VoxelGrid::load: missing resolution");
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> res) || key != "resolution") {
      throw std::runtime_error("VoxelGrid::load: malformed resolution line");
    }
  }
  {
    if (!std::getline(in, line)) throw std::runtime_error("VoxelGrid::load: missing origin");
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> origin.x >> origin.y >> origin.z) || key != "origin") {
      throw std::runtime_error("VoxelGrid::load: malformed origin line");
    }
  }
  VoxelGrid grid(nx, ny, nz, res, origin);
  in.read(reinterpret_cast<char*>(grid.bits_.data()), static_cast<std::streamsize>(grid.bits_.size()));
  if (static_cast<std::size_t>(in.gcount()) != grid.bits_.size()) {
    throw std::runtime_error("VoxelGrid::load: truncated payload");
  }
  return grid;
}

VoxelGrid VoxelGrid::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("VoxelGrid::load_file: cannot open " + path);
  return load(in);
}

}  // namespace gdm
