#pragma once

#include <cmath>
#include <vector>

#include "qsm/volume.hpp"

namespace qsm {

// Relative l2 error over the ROI: |1_roi (x - ref)|_2 / |1_roi ref|_2.
inline double rmse_rel(const ScalarVolume& x, const ScalarVolume& ref, const RoiMask& roi) {
  require_same_grid(x.grid, ref.grid, "rmse_rel");
  require_same_grid(x.grid, roi.grid, "rmse_rel");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (!roi.member[i]) continue;
    double d = x.data[i] - ref.data[i];
    num += d * d;
    den += ref.data[i] * ref.data[i];
  }
  if (den == 0.0) throw QsmError("rmse_rel: reference is zero on the ROI");
  return std::sqrt(num / den);
}

// Mean local structural similarity over the ROI. Windows are 11^3 Gaussian
// (sigma = 1.5 voxels), restricted to ROI voxels inside the grid and
// renormalized, so edge and boundary voxels use exactly the samples that
// exist. The dynamic range L is taken from the reference over the ROI;
// stabilizers are C1 = (0.01 L)^2, C2 = (0.03 L)^2.
inline double ssim3d(const ScalarVolume& x, const ScalarVolume& ref, const RoiMask& roi) {
  require_same_grid(x.grid, ref.grid, "ssim3d");
  require_same_grid(x.grid, roi.grid, "ssim3d");
  const auto& g = x.grid;

  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    if (!roi.member[i]) continue;
    double v = ref.data[i];
    if (first) {
      lo = hi = v;
      first = false;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (first) throw QsmError("ssim3d: empty ROI");
  const double L = hi - lo;
  if (L <= 0.0) throw QsmError("ssim3d: reference has zero dynamic range on the ROI");
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);

  constexpr int R = 5;  // 11^3 window
  const double sigma = 1.5;
  double w[2 * R + 1][2 * R + 1][2 * R + 1];
  for (int a = -R; a <= R; ++a)
    for (int b = -R; b <= R; ++b)
      for (int c = -R; c <= R; ++c)
        w[a + R][b + R][c + R] = std::exp(-double(a * a + b * b + c * c) / (2.0 * sigma * sigma));

  double total = 0.0;
  std::size_t count = 0;
  for (int i3 = 0; i3 < g.dims[2]; ++i3)
    for (int i2 = 0; i2 < g.dims[1]; ++i2)
      for (int i1 = 0; i1 < g.dims[0]; ++i1) {
        if (!roi.at(i1, i2, i3)) continue;
        double sw = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int a = std::max(-R, -i1); a <= std::min(R, g.dims[0] - 1 - i1); ++a)
          for (int b = std::max(-R, -i2); b <= std::min(R, g.dims[1] - 1 - i2); ++b)
            for (int c = std::max(-R, -i3); c <= std::min(R, g.dims[2] - 1 - i3); ++c) {
              std::size_t j = g.index(i1 + a, i2 + b, i3 + c);
              if (!roi.member[j]) continue;
              double wt = w[a + R][b + R][c + R];
              double xv = x.data[j], yv = ref.data[j];
              sw += wt;
              sx += wt * xv;
              sy += wt * yv;
              sxx += wt * xv * xv;
              syy += wt * yv * yv;
              sxy += wt * xv * yv;
            }
        double mx = sx / sw, my = sy / sw;
        double vx = std::max(0.0, sxx / sw - mx * mx);
        double vy = std::max(0.0, syy / sw - my * my);
        double cxy = sxy / sw - mx * my;
        double val = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                     ((mx * mx + my * my + c1) * (vx + vy + c2));
        total += val;
        ++count;
      }
  return total / double(count);
}

struct EvalReport {
  double rmse = 0.0;
  double ssim = 0.0;
  std::size_t roi_voxels = 0;
  double wall_time_seconds = 0.0;  // informational; never serialized
};

inline EvalReport evaluate(const ScalarVolume& x, const ScalarVolume& ref, const RoiMask& roi) {
  EvalReport rep;
  rep.rmse = rmse_rel(x, ref, roi);
  rep.ssim = ssim3d(x, ref, roi);
  rep.roi_voxels = roi.count();
  return rep;
}

}  // namespace qsm
