#pragma once

#include <cmath>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsm/rng.hpp"
#include "qsm/spectral.hpp"
#include "qsm/volume.hpp"

namespace qsm {

// Axis-aligned ellipsoid; lengths in mm, susceptibility in ppm.
struct EllipsoidSpec {
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> semi_axes{1, 1, 1};
  double chi_ppm = 0.0;

  bool contains(double x, double y, double z) const {
    double s = 0.0;
    double p[3] = {x, y, z};
    for (int i = 0; i < 3; ++i) {
      double t = (p[i] - center[i]) / semi_axes[i];
      s += t * t;
    }
    return s <= 1.0;
  }
};

// Ellipsoid scene: one ROI shell, susceptibility sources inside it, and
// background sources strictly outside it.
struct PhantomScene {
  EllipsoidSpec roi_shape;
  std::vector<EllipsoidSpec> interior;
  std::vector<EllipsoidSpec> exterior;
  double magnitude_inside = 1.0;

  void validate() const {
    auto check = [](const EllipsoidSpec& e, const char* what) {
      for (int i = 0; i < 3; ++i) {
        if (!std::isfinite(e.semi_axes[i]) || e.semi_axes[i] <= 0.0)
          throw QsmError(std::string(what) + ": semi-axes must be positive");
        if (!std::isfinite(e.center[i])) throw QsmError(std::string(what) + ": bad center");
      }
      if (!std::isfinite(e.chi_ppm)) throw QsmError(std::string(what) + ": bad chi");
    };
    check(roi_shape, "scene roi_shape");
    for (const auto& e : interior) check(e, "scene interior ellipsoid");
    for (const auto& e : exterior) check(e, "scene exterior ellipsoid");
    if (!std::isfinite(magnitude_inside) || magnitude_inside < 0.0)
      throw QsmError("scene: magnitude_inside must be nonnegative");
  }
};

struct RasterizedPhantom {
  ScalarVolume chi;  // dimensionless (ppm / 1e6)
  RoiMask roi;
  ScalarVolume magnitude;
};

// Sample the scene at voxel centers ((i+0.5)h). Ellipsoids paint in listed
// order, the last containing shape winning. Susceptibility converts from ppm
// to dimensionless here; magnitude is magnitude_inside on the ROI and zero
// outside. Rejects scenes whose interior sources leak out of the ROI or
// whose exterior sources touch it (checked on the raster).
inline RasterizedPhantom rasterize(const PhantomScene& scene, const GridSpec& grid) {
  scene.validate();
  RasterizedPhantom out{ScalarVolume(grid), RoiMask(grid), ScalarVolume(grid)};
  std::size_t idx = 0;
  for (int i3 = 0; i3 < grid.dims[2]; ++i3) {
    double z = (i3 + 0.5) * grid.spacing[2];
    for (int i2 = 0; i2 < grid.dims[1]; ++i2) {
      double y = (i2 + 0.5) * grid.spacing[1];
      for (int i1 = 0; i1 < grid.dims[0]; ++i1, ++idx) {
        double x = (i1 + 0.5) * grid.spacing[0];
        bool in_roi = scene.roi_shape.contains(x, y, z);
        double chi_ppm = in_roi ? scene.roi_shape.chi_ppm : 0.0;
        for (const auto& e : scene.interior)
          if (e.contains(x, y, z)) {
            if (!in_roi) throw QsmError("rasterize: interior ellipsoid leaves the ROI");
            chi_ppm = e.chi_ppm;
          }
        for (const auto& e : scene.exterior)
          if (e.contains(x, y, z)) {
            if (in_roi) throw QsmError("rasterize: exterior ellipsoid overlaps the ROI");
            chi_ppm = e.chi_ppm;
          }
        out.chi.data[idx] = chi_ppm * 1e-6;
        out.roi.member[idx] = in_roi ? 1 : 0;
        out.magnitude.data[idx] = in_roi ? scene.magnitude_inside : 0.0;
      }
    }
  }
  if (out.roi.count() == 0) throw QsmError("rasterize: scene ROI contains no voxels");
  return out;
}

// Dipole field of the full susceptibility map, computed as a free-space
// convolution: embed in a grid twice the size so periodic images cannot fold
// back, multiply by the dipole symbol, crop. chi and the result are
// dimensionless.
inline ScalarVolume simulate_total_field(const ScalarVolume& chi, int pad_factor = 2) {
  GridSpec padded({chi.grid.dims[0] * pad_factor, chi.grid.dims[1] * pad_factor,
                   chi.grid.dims[2] * pad_factor},
                  chi.grid.spacing);
  return apply_symbol(dipole_symbol(padded), chi, ConvPolicy::zero_padded(pad_factor));
}

struct AcquisitionParams {
  double b0_tesla = 3.0;
  double gamma_hz_per_tesla = 42.577e6;
  std::vector<double> echo_times_s;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  // phase per unit (dimensionless) field per second
  double rad_per_field_s() const {
    return 2.0 * std::numbers::pi * gamma_hz_per_tesla * b0_tesla;
  }

  void validate() const {
    if (!(b0_tesla > 0) || !(gamma_hz_per_tesla > 0))
      throw QsmError("AcquisitionParams: field strength and gamma must be positive");
    if (echo_times_s.empty()) throw QsmError("AcquisitionParams: no echo times");
    for (double te : echo_times_s)
      if (!(te > 0) || !std::isfinite(te)) throw QsmError("AcquisitionParams: bad echo time");
    if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma))
      throw QsmError("AcquisitionParams: bad noise sigma");
  }
};

inline std::vector<double> equispaced_echoes(double first_s, double step_s, int count) {
  std::vector<double> te(std::size_t(count), 0.0);
  for (int t = 0; t < count; ++t) te[std::size_t(t)] = first_s + step_s * t;
  return te;
}

struct EchoSeries {
  GridSpec grid;
  std::vector<double> echo_times_s;
  std::vector<ComplexVolume> echoes;
};

// Phase accumulated by echo t would pass +-pi somewhere the signal is
// visible; the acquisition cannot be inverted there.
struct PhaseWrapRisk : QsmError {
  using QsmError::QsmError;
};

// Complex gradient-echo images I_t = m * exp(-i * 2 pi gamma B0 b TE_t),
// noiseless. Refuses to produce an echo whose phase magnitude reaches pi at
// any voxel with nonzero magnitude.
inline EchoSeries simulate_gre(const ScalarVolume& b, const ScalarVolume& magnitude,
                               const AcquisitionParams& params) {
  params.validate();
  require_same_grid(b.grid, magnitude.grid, "simulate_gre");
  const double c = params.rad_per_field_s();
  EchoSeries series{b.grid, params.echo_times_s, {}};
  series.echoes.reserve(params.echo_times_s.size());
  for (double te : params.echo_times_s) {
    ComplexVolume img(b.grid);
    for (std::size_t i = 0; i < b.data.size(); ++i) {
      double theta = c * b.data[i] * te;
      if (magnitude.data[i] > 0.0 && std::fabs(theta) >= std::numbers::pi)
        throw PhaseWrapRisk("simulate_gre: echo phase reaches pi inside the object");
      img.data[i] = std::polar(magnitude.data[i], -theta);
    }
    series.echoes.push_back(std::move(img));
  }
  return series;
}

// Add iid complex Gaussian noise, sigma per real/imag channel. Each draw is
// addressed by (echo, voxel), so the result is independent of traversal
// order; sigma = 0 returns the input bit-for-bit.
inline EchoSeries add_noise(const EchoSeries& series, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0) || !std::isfinite(sigma)) throw QsmError("add_noise: bad sigma");
  EchoSeries out = series;
  if (sigma == 0.0) return out;
  for (std::size_t t = 0; t < out.echoes.size(); ++t) {
    auto& img = out.echoes[t];
    for (std::size_t i = 0; i < img.data.size(); ++i) {
      CounterRng rng(seed, t, i);
      auto [g1, g2] = rng.gaussian_pair();
      img.data[i] += std::complex<double>(sigma * g1, sigma * g2);
    }
  }
  return out;
}

struct FieldEstimate {
  ScalarVolume b_hat;       // dimensionless
  ScalarVolume snr_weight;  // magnitude-weighted echo energy, peak-normalized
};

// Weighted least squares fit of phase over echo time, per voxel:
//   b = sum_t w_t phi_t TE_t / (c * sum_t w_t TE_t^2),  w_t = |I_t|^2,
// with phi_t = -arg(I_t) matching the signal convention above and
// c = 2 pi gamma B0. Voxels with no signal get zero. The reliability weight
// is sum_t w_t TE_t^2, normalized so its maximum is one.
inline FieldEstimate estimate_field(const EchoSeries& series, const AcquisitionParams& params) {
  params.validate();
  if (series.echoes.size() != series.echo_times_s.size() || series.echoes.empty())
    throw QsmError("estimate_field: malformed echo series");
  const double c = params.rad_per_field_s();
  FieldEstimate out{ScalarVolume(series.grid), ScalarVolume(series.grid)};
  const std::size_t n = series.grid.voxels();
  double wmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < series.echoes.size(); ++t) {
      const auto& z = series.echoes[t].data[i];
      double w = std::norm(z);
      double te = series.echo_times_s[t];
      num += w * (-std::arg(z)) * te;
      den += w * te * te;
    }
    out.b_hat.data[i] = (den > 0.0) ? num / (c * den) : 0.0;
    out.snr_weight.data[i] = den;
    wmax = std::max(wmax, den);
  }
  if (wmax > 0.0)
    for (auto& w : out.snr_weight.data) w /= wmax;
  return out;
}

// Local field the scanner geometry would ideally deliver: restrict the
// dipole-source divergence to the ROI and solve the free-space Poisson
// problem for it. Everything runs on the doubled grid so both the
// differentiation and the inverse Laplacian are free-space operations.
inline ScalarVolume true_local_field(const ScalarVolume& chi, const RoiMask& roi,
                                     int pad_factor = 2) {
  require_same_grid(chi.grid, roi.grid, "true_local_field");
  GridSpec padded({chi.grid.dims[0] * pad_factor, chi.grid.dims[1] * pad_factor,
                   chi.grid.dims[2] * pad_factor},
                  chi.grid.spacing);
  ScalarVolume source =
      apply_symbol(pdiff_symbol(padded), chi, ConvPolicy::zero_padded(pad_factor));
  for (std::size_t i = 0; i < source.data.size(); ++i)
    if (!roi.member[i]) source.data[i] = 0.0;
  ScalarVolume solved = solve_symbol(neglap_continuous_symbol(padded),
                                     pad_zero(source, pad_factor), 0.0, ZeroFreqRule::zero);
  return crop_corner(solved, chi.grid);
}

// Scene file: lengths in mm, susceptibilities in ppm.
inline PhantomScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw QsmError("load_scene: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw QsmError("load_scene: bad JSON in " + path + ": " + e.what());
  }
  auto parse_ellipsoid = [](const nlohmann::json& e) {
    EllipsoidSpec out;
    auto c = e.at("center"), a = e.at("semi_axes");
    for (int i = 0; i < 3; ++i) {
      out.center[i] = c.at(i).get<double>();
      out.semi_axes[i] = a.at(i).get<double>();
    }
    out.chi_ppm = e.value("chi_ppm", 0.0);
    return out;
  };
  PhantomScene scene;
  try {
    scene.roi_shape = parse_ellipsoid(j.at("roi_shape"));
    for (const auto& e : j.value("interior", nlohmann::json::array()))
      scene.interior.push_back(parse_ellipsoid(e));
    for (const auto& e : j.value("exterior", nlohmann::json::array()))
      scene.exterior.push_back(parse_ellipsoid(e));
    scene.magnitude_inside = j.value("magnitude_inside", 1.0);
  } catch (const nlohmann::json::exception& e) {
    throw QsmError("load_scene: missing or malformed field in " + path + ": " + e.what());
  }
  scene.validate();
  return scene;
}

}  // namespace qsm
