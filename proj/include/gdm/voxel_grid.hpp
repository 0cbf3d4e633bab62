#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace gdm {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
double norm(const Vec3& a);

// Integer lattice coordinates of a voxel. Resolution and origin live on the grid.
struct VoxelIndex {
  int ix = 0;
  int iy = 0;
  int iz = 0;

  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
  // Lexicographic (ix, iy, iz); fixes row ordering for dense assembly and exports.
  friend bool operator<(const VoxelIndex& a, const VoxelIndex& b) {
    if (a.ix != b.ix) return a.ix < b.ix;
    if (a.iy != b.iy) return a.iy < b.iy;
    return a.iz < b.iz;
  }
};

std::string to_string(const VoxelIndex& v);

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const {
    std::uint64_t h = static_cast<std::uint32_t>(v.ix);
    h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::uint32_t>(v.iy);
    h = h * 0x9e3779b97f4a7c15ULL + static_cast<std::uint32_t>(v.iz);
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

// Canonical 6-neighbor direction order. Grids with nz == 1 (2D mode) never
// yield in-bounds ±z neighbors, so the same order serves both modes.
inline constexpr std::array<std::array<int, 3>, 6> kNeighborOffsets = {{
    {{1, 0, 0}}, {{-1, 0, 0}}, {{0, 1, 0}}, {{0, -1, 0}}, {{0, 0, 1}}, {{0, 0, -1}}}};

// Dense binary occupancy map over an axis-aligned voxel lattice.
// Bit i of the payload is voxel (ix, iy, iz) with i = ix + iy*nx + iz*nx*ny,
// little-endian bit order within each byte.
class VoxelGrid {
 public:
  VoxelGrid(int nx, int ny, int nz, double resolution, Vec3 origin);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  double resolution() const { return resolution_; }
  const Vec3& origin() const { return origin_; }
  std::size_t voxel_count() const { return static_cast<std::size_t>(nx_) * ny_ * nz_; }
  bool two_d() const { return nz_ == 1; }

  bool in_bounds(const VoxelIndex& v) const {
    return v.ix >= 0 && v.ix < nx_ && v.iy >= 0 && v.iy < ny_ && v.iz >= 0 && v.iz < nz_;
  }
  bool in_extent(const Vec3& p) const;

  bool occupied(const VoxelIndex& v) const;
  void set_occupied(const VoxelIndex& v, bool value = true);
  std::size_t occupied_count() const;

  // True iff either endpoint voxel is occupied. Requires a, b in bounds and
  // lattice-adjacent.
  bool is_blocked(const VoxelIndex& a, const VoxelIndex& b) const;

  // floor((p - origin) / resolution) per axis; rejects points outside the
  // extent naming the offending axis. Lower-inclusive boundary convention.
  VoxelIndex voxel_of(const Vec3& p) const;

  Vec3 center_of(const VoxelIndex& v) const;

  static bool lattice_adjacent(const VoxelIndex& a, const VoxelIndex& b);

  // OCCGRID v1 file format: four ASCII header lines then the raw bit payload.
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;
  static VoxelGrid load(std::istream& in);
  static VoxelGrid load_file(const std::string& path);

  const std::vector<std::uint8_t>& payload() const { return bits_; }

 private:
  std::size_t bit_index(const VoxelIndex& v) const {
    return static_cast<std::size_t>(v.ix) + static_cast<std::size_t>(v.iy) * nx_ +
           static_cast<std::size_t>(v.iz) * nx_ * ny_;
  }

  int nx_, ny_, nz_;
  double resolution_;
  Vec3 origin_;
  std::vector<std::uint8_t> bits_;
};

}  // namespace gdm
