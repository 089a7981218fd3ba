#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qsm {

struct QsmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operands live on different grids.
struct GridMismatch : QsmError {
  using QsmError::QsmError;
};

// Regular 3D lattice with physical voxel spacing in mm.
// Linear storage is x-fastest: index = i1 + N1*(i2 + N2*i3).
struct GridSpec {
  std::array<int, 3> dims{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  GridSpec() = default;
  GridSpec(std::array<int, 3> d, std::array<double, 3> h) : dims(d), spacing(h) {
    for (int i = 0; i < 3; ++i) {
      if (dims[i] < 1) throw QsmError("GridSpec: dims must be >= 1");
      if (!std::isfinite(spacing[i]) || spacing[i] <= 0.0)
        throw QsmError("GridSpec: spacing must be finite and positive");
    }
    if (double(dims[0]) * dims[1] * dims[2] > 4.0e9)
      throw QsmError("GridSpec: voxel count too large");
  }

  std::size_t voxels() const {
    return std::size_t(dims[0]) * std::size_t(dims[1]) * std::size_t(dims[2]);
  }
  std::size_t index(int i1, int i2, int i3) const {
    return std::size_t(i1) + std::size_t(dims[0]) * (std::size_t(i2) + std::size_t(dims[1]) * std::size_t(i3));
  }
  bool operator==(const GridSpec& o) const { return dims == o.dims && spacing == o.spacing; }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (a != b) throw GridMismatch(std::string(what) + ": grid mismatch");
}

// Real-valued voxel volume. Data passed in at construction must be finite.
struct ScalarVolume {
  GridSpec grid;
  std::vector<double> data;

  ScalarVolume() = default;
  explicit ScalarVolume(const GridSpec& g) : grid(g), data(g.voxels(), 0.0) {}
  ScalarVolume(const GridSpec& g, std::vector<double> d) : grid(g), data(std::move(d)) {
    if (data.size() != grid.voxels()) throw QsmError("ScalarVolume: data size != voxel count");
    for (double v : data)
      if (!std::isfinite(v)) throw QsmError("ScalarVolume: non-finite sample");
  }

  double& at(int i1, int i2, int i3) { return data[grid.index(i1, i2, i3)]; }
  double at(int i1, int i2, int i3) const { return data[grid.index(i1, i2, i3)]; }
};

// Complex voxel volume (echo images, spectra).
struct ComplexVolume {
  GridSpec grid;
  std::vector<std::complex<double>> data;

  ComplexVolume() = default;
  explicit ComplexVolume(const GridSpec& g) : grid(g), data(g.voxels(), {0.0, 0.0}) {}
  ComplexVolume(const GridSpec& g, std::vector<std::complex<double>> d) : grid(g), data(std::move(d)) {
    if (data.size() != grid.voxels()) throw QsmError("ComplexVolume: data size != voxel count");
    for (const auto& z : data)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw QsmError("ComplexVolume: non-finite sample");
  }
};

// Binary region of interest; samples are 0 or 1.
struct RoiMask {
  GridSpec grid;
  std::vector<std::uint8_t> member;

  RoiMask() = default;
  explicit RoiMask(const GridSpec& g) : grid(g), member(g.voxels(), 0) {}
  RoiMask(const GridSpec& g, std::vector<std::uint8_t> m) : grid(g), member(std::move(m)) {
    if (member.size() != grid.voxels()) throw QsmError("RoiMask: data size != voxel count");
    for (auto v : member)
      if (v > 1) throw QsmError("RoiMask: samples must be 0 or 1");
  }

  bool at(int i1, int i2, int i3) const { return member[grid.index(i1, i2, i3)] != 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : member) n += v;
    return n;
  }
};

inline double linf_norm(const ScalarVolume& v) {
  double m = 0.0;
  for (double x : v.data) m = std::max(m, std::fabs(x));
  return m;
}

inline double l2_norm(const ScalarVolume& v) {
  double s = 0.0;
  for (double x : v.data) s += x * x;
  return std::sqrt(s);
}

// Boundary of the mask: member voxels with a 6-neighbor outside the mask,
// where anything beyond the grid edge counts as outside.
inline RoiMask boundary_set(const RoiMask& roi) {
  const auto& g = roi.grid;
  RoiMask out(g);
  for (int i3 = 0; i3 < g.dims[2]; ++i3)
    for (int i2 = 0; i2 < g.dims[1]; ++i2)
      for (int i1 = 0; i1 < g.dims[0]; ++i1) {
        if (!roi.at(i1, i2, i3)) continue;
        bool edge = i1 == 0 || i1 == g.dims[0] - 1 || i2 == 0 || i2 == g.dims[1] - 1 ||
                    i3 == 0 || i3 == g.dims[2] - 1;
        bool exterior_neighbor =
            edge ||
            !roi.at(i1 - 1, i2, i3) || !roi.at(i1 + 1, i2, i3) ||
            !roi.at(i1, i2 - 1, i3) || !roi.at(i1, i2 + 1, i3) ||
            !roi.at(i1, i2, i3 - 1) || !roi.at(i1, i2, i3 + 1);
        if (exterior_neighbor) out.member[g.index(i1, i2, i3)] = 1;
      }
  return out;
}

// Member voxels within Chebyshev distance k of the mask boundary. Computed by
// k rounds of 26-neighborhood dilation of the boundary over the full grid
// (one dilation round grows the Chebyshev ball by exactly one), then
// intersected with the mask. k = 0 returns the boundary itself.
inline RoiMask band_mask(const RoiMask& roi, int k) {
  if (k < 0) throw QsmError("band_mask: k must be >= 0");
  const auto& g = roi.grid;
  RoiMask cur = boundary_set(roi);
  for (int round = 0; round < k; ++round) {
    RoiMask next = cur;
    for (int i3 = 0; i3 < g.dims[2]; ++i3)
      for (int i2 = 0; i2 < g.dims[1]; ++i2)
        for (int i1 = 0; i1 < g.dims[0]; ++i1) {
          if (cur.at(i1, i2, i3)) continue;
          bool hit = false;
          for (int d3 = -1; d3 <= 1 && !hit; ++d3)
            for (int d2 = -1; d2 <= 1 && !hit; ++d2)
              for (int d1 = -1; d1 <= 1 && !hit; ++d1) {
                int j1 = i1 + d1, j2 = i2 + d2, j3 = i3 + d3;
                if (j1 < 0 || j1 >= g.dims[0] || j2 < 0 || j2 >= g.dims[1] || j3 < 0 ||
                    j3 >= g.dims[2])
                  continue;
                if (cur.at(j1, j2, j3)) hit = true;
              }
          if (hit) next.member[g.index(i1, i2, i3)] = 1;
        }
    cur = std::move(next);
  }
  RoiMask out(g);
  for (std::size_t i = 0; i < cur.member.size(); ++i)
    out.member[i] = cur.member[i] & roi.member[i];
  return out;
}

// Embed the volume in a grid enlarged by an integer factor per axis, original
// samples in the low-index corner, zeros elsewhere. Spacing is unchanged.
inline ScalarVolume pad_zero(const ScalarVolume& v, int factor) {
  if (factor < 2) throw QsmError("pad_zero: factor must be >= 2");
  const auto& g = v.grid;
  GridSpec pg({g.dims[0] * factor, g.dims[1] * factor, g.dims[2] * factor}, g.spacing);
  ScalarVolume out(pg);
  for (int i3 = 0; i3 < g.dims[2]; ++i3)
    for (int i2 = 0; i2 < g.dims[1]; ++i2)
      for (int i1 = 0; i1 < g.dims[0]; ++i1)
        out.data[pg.index(i1, i2, i3)] = v.data[g.index(i1, i2, i3)];
  return out;
}

// Keep the low-index corner block of the given target shape; exact left
// inverse of pad_zero on the same target grid.
inline ScalarVolume crop_corner(const ScalarVolume& v, const GridSpec& target) {
  for (int i = 0; i < 3; ++i) {
    if (target.dims[i] > v.grid.dims[i]) throw QsmError("crop_corner: target exceeds source");
    if (target.spacing[i] != v.grid.spacing[i]) throw QsmError("crop_corner: spacing mismatch");
  }
  ScalarVolume out(target);
  for (int i3 = 0; i3 < target.dims[2]; ++i3)
    for (int i2 = 0; i2 < target.dims[1]; ++i2)
      for (int i1 = 0; i1 < target.dims[0]; ++i1)
        out.data[target.index(i1, i2, i3)] = v.data[v.grid.index(i1, i2, i3)];
  return out;
}

}  // namespace qsm
