#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "qsm/volume.hpp"

namespace qsm {

// Two-tap filter pair for an undecimated tensor-product frame. The defaults
// are the Haar pair; any pair accepted here must satisfy the unitary
// extension identities, which make the analysis/synthesis pair a tight frame
// (synthesize(analyze(u)) == u).
struct FilterBank {
  std::vector<double> low{0.5, 0.5};
  std::vector<double> high{0.5, -0.5};
  int levels = 1;

  FilterBank() = default;
  FilterBank(std::vector<double> q0, std::vector<double> q1, int l)
      : low(std::move(q0)), high(std::move(q1)), levels(l) {
    validate();
  }
  explicit FilterBank(int l) : levels(l) { validate(); }

  void validate() const {
    if (levels < 1) throw QsmError("FilterBank: levels must be >= 1");
    if (low.empty() || high.empty()) throw QsmError("FilterBank: empty filter");
    // Unitary extension on a dense frequency sample:
    //   |q0^(xi)|^2 + |q1^(xi)|^2 = 1
    //   q0^(xi) conj(q0^(xi+pi)) + q1^(xi) conj(q1^(xi+pi)) = 0
    const int m = 64;
    for (int t = 0; t < m; ++t) {
      double xi = 2.0 * std::numbers::pi * t / m;
      auto hat = [&](const std::vector<double>& q, double w) {
        std::complex<double> s{0.0, 0.0};
        for (std::size_t j = 0; j < q.size(); ++j)
          s += q[j] * std::exp(std::complex<double>(0.0, -w * double(j)));
        return s;
      };
      auto a0 = hat(low, xi), a1 = hat(high, xi);
      auto b0 = hat(low, xi + std::numbers::pi), b1 = hat(high, xi + std::numbers::pi);
      double unity = std::norm(a0) + std::norm(a1);
      std::complex<double> cross = a0 * std::conj(b0) + a1 * std::conj(b1);
      if (std::fabs(unity - 1.0) > 1e-12 || std::abs(cross) > 1e-12)
        throw QsmError("FilterBank: filters violate the tight-frame identities");
    }
  }
};

// Undecimated coefficients: 7 high-pass bands per level plus one terminal
// low-pass, each a full-size volume (7*levels + 1 total). Band index alpha in
// 1..7 encodes which axes took the high-pass filter: bit0 = x, bit1 = y,
// bit2 = z.
struct FrameCoeffs {
  GridSpec grid;
  int levels = 0;
  std::vector<ScalarVolume> bands;

  FrameCoeffs() = default;
  FrameCoeffs(const GridSpec& g, int l) : grid(g), levels(l) {
    bands.assign(std::size_t(7 * l + 1), ScalarVolume(g));
  }

  ScalarVolume& band(int level, int alpha) { return bands[std::size_t(level) * 7 + alpha - 1]; }
  const ScalarVolume& band(int level, int alpha) const {
    return bands[std::size_t(level) * 7 + alpha - 1];
  }
  ScalarVolume& lowpass() { return bands.back(); }
  const ScalarVolume& lowpass() const { return bands.back(); }
};

namespace detail {

// Periodic two-tap pass along one axis with hop `step` (filters are upsampled
// by 2^level in the undecimated cascade). Correlation reads forward,
// convolution (the adjoint) reads backward.
enum class PassDir { correlate, convolve };

inline void two_tap_pass(const std::vector<double>& in, std::vector<double>& out,
                         const GridSpec& g, int axis, double f0, double f1, int step,
                         PassDir dir) {
  const int n = g.dims[axis];
  const int hop = ((dir == PassDir::correlate) ? step : -step) % n;
  const std::size_t stride = (axis == 0) ? 1
                             : (axis == 1) ? std::size_t(g.dims[0])
                                           : std::size_t(g.dims[0]) * g.dims[1];
  for (int i3 = 0; i3 < g.dims[2]; ++i3)
    for (int i2 = 0; i2 < g.dims[1]; ++i2)
      for (int i1 = 0; i1 < g.dims[0]; ++i1) {
        int idx[3] = {i1, i2, i3};
        int jj = idx[axis] + hop;
        if (jj >= n) jj -= n;
        if (jj < 0) jj += n;
        std::size_t base = g.index(i1, i2, i3);
        std::ptrdiff_t off = std::ptrdiff_t(jj - idx[axis]) * std::ptrdiff_t(stride);
        out[base] = f0 * in[base] + f1 * in[std::size_t(std::ptrdiff_t(base) + off)];
      }
}

}  // namespace detail

// Undecimated analysis cascade. Level l filters act with hop 2^l; the all-low
// branch feeds the next level, the seven mixed branches are emitted as bands.
inline FrameCoeffs analyze(const ScalarVolume& u, const FilterBank& bank) {
  const auto& g = u.grid;
  FrameCoeffs out(g, bank.levels);
  std::vector<double> approx = u.data;
  std::vector<double> x[2], xy[4], xyz[8];
  for (auto& b : x) b.resize(g.voxels());
  for (auto& b : xy) b.resize(g.voxels());
  for (auto& b : xyz) b.resize(g.voxels());
  for (int l = 0; l < bank.levels; ++l) {
    const int step = 1 << l;
    for (int ax = 0; ax < 2; ++ax)
      detail::two_tap_pass(approx, x[ax], g, 0, ax ? bank.high[0] : bank.low[0],
                           ax ? bank.high[1] : bank.low[1], step, detail::PassDir::correlate);
    for (int ay = 0; ay < 2; ++ay)
      for (int ax = 0; ax < 2; ++ax)
        detail::two_tap_pass(x[ax], xy[ax + 2 * ay], g, 1, ay ? bank.high[0] : bank.low[0],
                             ay ? bank.high[1] : bank.low[1], step, detail::PassDir::correlate);
    for (int az = 0; az < 2; ++az)
      for (int a = 0; a < 4; ++a)
        detail::two_tap_pass(xy[a], xyz[a + 4 * az], g, 2, az ? bank.high[0] : bank.low[0],
                             az ? bank.high[1] : bank.low[1], step, detail::PassDir::correlate);
    for (int alpha = 1; alpha < 8; ++alpha) out.band(l, alpha).data = xyz[alpha];
    approx = std::move(xyz[0]);
    xyz[0].resize(g.voxels());
  }
  out.lowpass().data = std::move(approx);
  return out;
}

// Adjoint cascade; for a tight frame this is the inverse of analyze.
inline ScalarVolume synthesize(const FrameCoeffs& c, const FilterBank& bank) {
  if (c.levels != bank.levels) throw QsmError("synthesize: level count mismatch");
  const auto& g = c.grid;
  std::vector<double> acc = c.lowpass().data;
  std::vector<double> tz[4], ty[2], tmp(g.voxels()), tmp2(g.voxels());
  for (auto& b : tz) b.resize(g.voxels());
  for (auto& b : ty) b.resize(g.voxels());
  for (int l = bank.levels - 1; l >= 0; --l) {
    const int step = 1 << l;
    auto pass_back = [&](const std::vector<double>& in, std::vector<double>& out, int axis,
                         bool high) {
      detail::two_tap_pass(in, out, g, axis, high ? bank.high[0] : bank.low[0],
                           high ? bank.high[1] : bank.low[1], step, detail::PassDir::convolve);
    };
    for (int a = 0; a < 4; ++a) {
      const std::vector<double>& p0 = (a == 0) ? acc : c.band(l, a).data;
      pass_back(p0, tmp, 2, false);
      pass_back(c.band(l, a + 4).data, tmp2, 2, true);
      for (std::size_t i = 0; i < tz[a].size(); ++i) tz[a][i] = tmp[i] + tmp2[i];
    }
    for (int ax = 0; ax < 2; ++ax) {
      pass_back(tz[ax], tmp, 1, false);
      pass_back(tz[ax + 2], tmp2, 1, true);
      for (std::size_t i = 0; i < ty[ax].size(); ++i) ty[ax][i] = tmp[i] + tmp2[i];
    }
    pass_back(ty[0], tmp, 0, false);
    pass_back(ty[1], tmp2, 0, true);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = tmp[i] + tmp2[i];
  }
  return ScalarVolume(g, std::move(acc));
}

// Per-level thresholds for the isotropic shrink; gamma[l] applies to the
// seven high bands of level l.
struct ThresholdSchedule {
  std::vector<double> gamma;

  static ThresholdSchedule geometric(double nu, int levels) {
    ThresholdSchedule s;
    s.gamma.resize(std::size_t(levels));
    for (int l = 0; l < levels; ++l) s.gamma[std::size_t(l)] = nu * std::pow(2.0, -l);
    return s;
  }
};

// Joint magnitude across the seven high bands of one level at one voxel.
inline double band_magnitude(const FrameCoeffs& c, int level, std::size_t i) {
  double r2 = 0.0;
  for (int alpha = 1; alpha < 8; ++alpha) {
    double t = c.band(level, alpha).data[i];
    r2 += t * t;
  }
  return std::sqrt(r2);
}

// Proximal map of the weighted isotropic l1 penalty: shrink each level's
// 7-vector of high-band samples toward zero by gamma[l] in joint magnitude,
// zeroing it when the magnitude is below threshold. The low-pass band passes
// through untouched.
inline FrameCoeffs iso_threshold(const FrameCoeffs& c, const ThresholdSchedule& sched) {
  if (sched.gamma.size() != std::size_t(c.levels))
    throw QsmError("iso_threshold: schedule/level mismatch");
  FrameCoeffs out(c.grid, c.levels);
  const std::size_t n = c.grid.voxels();
  for (int l = 0; l < c.levels; ++l) {
    const double g = sched.gamma[std::size_t(l)];
    for (std::size_t i = 0; i < n; ++i) {
      double r = band_magnitude(c, l, i);
      double f = (r > g) ? (r - g) / r : 0.0;
      for (int alpha = 1; alpha < 8; ++alpha)
        out.band(l, alpha).data[i] = f * c.band(l, alpha).data[i];
    }
  }
  out.lowpass() = c.lowpass();
  return out;
}

// Weighted isotropic l1 value: sum over levels of gamma[l] * sum over voxels
// of the joint high-band magnitude.
inline double iso_l12_norm(const FrameCoeffs& c, const ThresholdSchedule& sched) {
  if (sched.gamma.size() != std::size_t(c.levels))
    throw QsmError("iso_l12_norm: schedule/level mismatch");
  double total = 0.0;
  const std::size_t n = c.grid.voxels();
  for (int l = 0; l < c.levels; ++l) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += band_magnitude(c, l, i);
    total += sched.gamma[std::size_t(l)] * s;
  }
  return total;
}

}  // namespace qsm
