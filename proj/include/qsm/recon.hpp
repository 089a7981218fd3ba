#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "qsm/framelet.hpp"
#include "qsm/spectral.hpp"
#include "qsm/volume.hpp"

namespace qsm {

enum class ReconMethod { tkd, tikhonov, frame_int, frame_diff, frame_hire };

inline const char* method_name(ReconMethod m) {
  switch (m) {
    case ReconMethod::tkd: return "tkd";
    case ReconMethod::tikhonov: return "tikhonov";
    case ReconMethod::frame_int: return "frame_int";
    case ReconMethod::frame_diff: return "frame_diff";
    case ReconMethod::frame_hire: return "frame_hire";
  }
  return "?";
}

inline ReconMethod method_from_name(const std::string& s) {
  if (s == "tkd") return ReconMethod::tkd;
  if (s == "tikhonov") return ReconMethod::tikhonov;
  if (s == "frame_int") return ReconMethod::frame_int;
  if (s == "frame_diff") return ReconMethod::frame_diff;
  if (s == "frame_hire") return ReconMethod::frame_hire;
  throw QsmError("unknown reconstruction method: " + s);
}

struct ReconConfig {
  ReconMethod method = ReconMethod::frame_hire;
  double hbar = 0.125;    // truncation floor for tkd
  double eps = 0.01;      // ridge weight for tikhonov
  double nu = 5e-4;       // frame penalty weight (frame_* methods)
  double lambda = -1.0;   // incompatibility penalty weight; < 0 means 5*nu
  double beta = 0.05;     // splitting penalty
  int levels = 1;         // frame decomposition depth
  double tol = 5e-3;      // stop when the relative iterate change drops below
  int max_iter = 200;

  double lambda_eff() const { return lambda < 0.0 ? 5.0 * nu : lambda; }

  void validate() const {
    if (!(hbar > 0)) throw QsmError("ReconConfig: hbar must be positive");
    if (!(eps > 0)) throw QsmError("ReconConfig: eps must be positive");
    if (!(nu > 0)) throw QsmError("ReconConfig: nu must be positive");
    if (!(beta > 0)) throw QsmError("ReconConfig: beta must be positive");
    if (levels < 1) throw QsmError("ReconConfig: levels must be >= 1");
    if (!(tol > 0)) throw QsmError("ReconConfig: tol must be positive");
    if (max_iter < 1) throw QsmError("ReconConfig: max_iter must be >= 1");
  }
};

// Per-voxel fidelity weights.
enum class SigmaPolicy { ones, roi, estimated };

inline SigmaPolicy sigma_policy_from_name(const std::string& s) {
  if (s == "ones") return SigmaPolicy::ones;
  if (s == "roi") return SigmaPolicy::roi;
  if (s == "estimated") return SigmaPolicy::estimated;
  throw QsmError("unknown sigma policy: " + s);
}

inline ScalarVolume build_sigma(SigmaPolicy policy, const GridSpec& grid,
                                const RoiMask* roi = nullptr,
                                const ScalarVolume* snr_weight = nullptr) {
  switch (policy) {
    case SigmaPolicy::ones: {
      ScalarVolume s(grid);
      for (auto& x : s.data) x = 1.0;
      return s;
    }
    case SigmaPolicy::roi: {
      if (!roi) throw QsmError("build_sigma: roi policy needs a mask");
      require_same_grid(grid, roi->grid, "build_sigma");
      ScalarVolume s(grid);
      for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = roi->member[i] ? 1.0 : 0.0;
      return s;
    }
    case SigmaPolicy::estimated: {
      if (!snr_weight) throw QsmError("build_sigma: estimated policy needs a weight volume");
      require_same_grid(grid, snr_weight->grid, "build_sigma");
      for (double x : snr_weight->data)
        if (x < 0.0) throw QsmError("build_sigma: negative weight");
      return *snr_weight;
    }
  }
  throw QsmError("build_sigma: bad policy");
}

struct IterRecord {
  int iter = 0;
  double rel_change = 0.0;
  double objective = 0.0;
  // split-constraint residuals, l2
  double res_frame = 0.0;     // |W chi - d|
  double res_lap = 0.0;       // |L v - e|
  double res_fidelity = 0.0;  // |K chi - f|
  double res_aux = 0.0;       // |v - g|
};

struct ConvergenceTrace {
  double initial_objective = 0.0;
  std::vector<IterRecord> records;
};

enum class SolveStatus { converged, max_iter_reached };

struct ReconResult {
  ScalarVolume chi;
  ScalarVolume v;  // incompatibility estimate; zero volume unless frame_hire
  ConvergenceTrace trace;
  SolveStatus status = SolveStatus::converged;
};

// The iteration produced a non-finite value; the trace up to that point is
// attached.
struct DivergedError : QsmError {
  ConvergenceTrace trace;
  DivergedError(const std::string& msg, ConvergenceTrace t)
      : QsmError(msg), trace(std::move(t)) {}
};

// Truncated dipole inversion: divide the spectrum by
// sign(D) * max(|D|, hbar), with sign(0) = 0 killing the unknowable cone.
inline ScalarVolume tkd(const ScalarVolume& b_l, double hbar) {
  if (!(hbar > 0)) throw QsmError("tkd: hbar must be positive");
  SpectralSymbol d = dipole_symbol(b_l.grid);
  auto z = fft::forward(b_l.data, b_l.grid.dims);
  for (std::size_t i = 0; i < z.size(); ++i) {
    double v = d.values[i];
    double sign = (v > 0.0) - (v < 0.0);
    z[i] *= sign / std::max(std::fabs(v), hbar);
  }
  fft::backward(z, b_l.grid.dims);
  ScalarVolume out(b_l.grid);
  for (std::size_t i = 0; i < z.size(); ++i) out.data[i] = z[i].real();
  return out;
}

// Ridge-regularized inversion: chi_hat = D b_hat / (D^2 + 2 eps).
inline ScalarVolume tikhonov(const ScalarVolume& b_l, double eps) {
  if (!(eps > 0)) throw QsmError("tikhonov: eps must be positive");
  SpectralSymbol d = dipole_symbol(b_l.grid);
  auto z = fft::forward(b_l.data, b_l.grid.dims);
  for (std::size_t i = 0; i < z.size(); ++i) {
    double v = d.values[i];
    z[i] *= v / (v * v + 2.0 * eps);
  }
  fft::backward(z, b_l.grid.dims);
  ScalarVolume out(b_l.grid);
  for (std::size_t i = 0; i < z.size(); ++i) out.data[i] = z[i].real();
  return out;
}

namespace detail {

inline void coeff_axpy(FrameCoeffs& out, const FrameCoeffs& a, const FrameCoeffs& b,
                       double sign) {
  for (std::size_t k = 0; k < out.bands.size(); ++k)
    for (std::size_t i = 0; i < out.bands[k].data.size(); ++i)
      out.bands[k].data[i] = a.bands[k].data[i] + sign * b.bands[k].data[i];
}

inline double l2_diff_coeffs(const FrameCoeffs& a, const FrameCoeffs& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.bands.size(); ++k)
    for (std::size_t i = 0; i < a.bands[k].data.size(); ++i) {
      double t = a.bands[k].data[i] - b.bands[k].data[i];
      s += t * t;
    }
  return std::sqrt(s);
}

}  // namespace detail

// Alternating-direction solver shared by the three frame-regularized models.
// Each sweep solves every subproblem in closed form: the split variables are
// soft shrinks, the fidelity pair (f, g) is a per-voxel 2x2 SPD solve, and the
// chi and v normal equations diagonalize in k-space. Splits update first from the
// previous iterate, then the primal pair, then the multipliers, so iteration
// one already carries meaningful constraint residuals. The three models
// differ only in the fidelity symbol K (dipole, or discrete-Laplacian times
// dipole), the data volume, and whether the incompatibility branch v is
// active:
//   frame_int:  K = D,     data = b_l,        no v
//   frame_diff: K = L*D,   data = lap b_l,    no v
//   frame_hire: K = D,     data = b_l,        v active, penalized by
//                                             lambda |lap v|_1
// sigma holds per-voxel fidelity weights (>= 0).
inline ReconResult split_bregman(const ScalarVolume& data, const ScalarVolume& sigma,
                                 const ReconConfig& cfg) {
  cfg.validate();
  require_same_grid(data.grid, sigma.grid, "split_bregman");
  if (cfg.method != ReconMethod::frame_int && cfg.method != ReconMethod::frame_diff &&
      cfg.method != ReconMethod::frame_hire)
    throw QsmError("split_bregman: not a frame-regularized method");
  const bool with_v = cfg.method == ReconMethod::frame_hire;
  const auto& g = data.grid;
  const std::size_t n = g.voxels();
  const auto dims = g.dims;

  // fidelity symbol
  SpectralSymbol kin = dipole_symbol(g);
  if (cfg.method == ReconMethod::frame_diff) {
    SpectralSymbol lap = neglap_discrete_symbol(g);
    for (std::size_t i = 0; i < kin.values.size(); ++i) kin.values[i] *= lap.values[i];
  }
  SpectralSymbol lap_disc = neglap_discrete_symbol(g);

  FilterBank bank(cfg.levels);
  ThresholdSchedule sched = ThresholdSchedule::geometric(cfg.nu, cfg.levels);
  ThresholdSchedule prox = sched;
  for (auto& t : prox.gamma) t /= cfg.beta;
  const double lambda = cfg.lambda_eff();

  std::vector<double> inv_sig_beta(n), inv_two(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sigma.data[i] < 0.0) throw QsmError("split_bregman: negative sigma weight");
    inv_sig_beta[i] = 1.0 / (sigma.data[i] + cfg.beta);
    inv_two[i] = 1.0 / (2.0 * sigma.data[i] + cfg.beta);
  }

  ScalarVolume chi(g), v(g), achi(g), lv(g);
  std::vector<double> e(n, 0.0), q(n, 0.0), f(n, 0.0), gg(n, 0.0), r(n, 0.0), s(n, 0.0);
  FrameCoeffs p(g, cfg.levels), wchi(g, cfg.levels), tmp_c(g, cfg.levels);

  ConvergenceTrace trace;
  double init_obj = 0.0;
  for (std::size_t i = 0; i < n; ++i) init_obj += sigma.data[i] * data.data[i] * data.data[i];
  trace.initial_objective = 0.5 * init_obj;

  ReconResult out;
  out.status = SolveStatus::max_iter_reached;

  std::vector<std::complex<double>> spec(n), spec2(n);
  std::vector<double> t1(n), t3(n);

  for (int it = 1; it <= cfg.max_iter; ++it) {
    // shrink block, from the previous iterate
    detail::coeff_axpy(tmp_c, wchi, p, +1.0);
    FrameCoeffs d = iso_threshold(tmp_c, prox);
    if (with_v) {
      const double thr = lambda / cfg.beta;
      for (std::size_t i = 0; i < n; ++i) {
        double z = lv.data[i] + q[i];
        double mag = std::fabs(z) - thr;
        e[i] = mag > 0.0 ? (z > 0.0 ? mag : -mag) : 0.0;
      }
    }

    // fidelity block: with v active, f and g share one strictly convex
    // quadratic; the exact per-voxel 2x2 solve keeps the incompatibility
    // branch moving at the same pace as chi, so its constraints tighten
    // before the stopping rule fires
    for (std::size_t i = 0; i < n; ++i) {
      double sig = sigma.data[i];
      double af = achi.data[i] + r[i];
      if (with_v) {
        double vg = v.data[i] + s[i];
        f[i] = inv_two[i] * (sig * (data.data[i] - vg) + (sig + cfg.beta) * af);
        gg[i] = inv_two[i] * (sig * (data.data[i] - af) + (sig + cfg.beta) * vg);
      } else {
        f[i] = inv_sig_beta[i] * (sig * data.data[i] + cfg.beta * af);
      }
    }

    // chi subproblem: (K^2 + 1) chi_hat = K (f - r)^hat + (W^T (d - p))^hat
    for (std::size_t i = 0; i < n; ++i) t1[i] = f[i] - r[i];
    detail::coeff_axpy(tmp_c, d, p, -1.0);
    ScalarVolume wsyn = synthesize(tmp_c, bank);
    for (std::size_t i = 0; i < n; ++i) spec[i] = {t1[i], 0.0};
    fft::transform(spec, dims, FFTW_FORWARD);
    for (std::size_t i = 0; i < n; ++i) spec2[i] = {wsyn.data[i], 0.0};
    fft::transform(spec2, dims, FFTW_FORWARD);
    for (std::size_t i = 0; i < n; ++i) {
      double k = kin.values[i];
      spec[i] = (k * spec[i] + spec2[i]) / (k * k + 1.0);
    }
    spec2 = spec;
    for (std::size_t i = 0; i < n; ++i) spec2[i] *= kin.values[i];
    fft::transform(spec, dims, FFTW_BACKWARD);
    fft::transform(spec2, dims, FFTW_BACKWARD);
    double chi_change = 0.0, chi_norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double c_new = spec[i].real();
      double dlt = c_new - chi.data[i];
      chi_change += dlt * dlt;
      chi_norm += c_new * c_new;
      chi.data[i] = c_new;
      achi.data[i] = spec2[i].real();
    }

    // v subproblem: (1 + L^2) v_hat = (g - s + L(e - q))^hat
    if (with_v) {
      for (std::size_t i = 0; i < n; ++i) t3[i] = e[i] - q[i];
      ScalarVolume leq = neglap_stencil(ScalarVolume(g, t3));
      for (std::size_t i = 0; i < n; ++i) spec[i] = {gg[i] - s[i] + leq.data[i], 0.0};
      fft::transform(spec, dims, FFTW_FORWARD);
      for (std::size_t i = 0; i < n; ++i) {
        double l = lap_disc.values[i];
        spec[i] /= 1.0 + l * l;
      }
      fft::transform(spec, dims, FFTW_BACKWARD);
      for (std::size_t i = 0; i < n; ++i) v.data[i] = spec[i].real();
      lv = neglap_stencil(v);
    }

    // constraint residuals at the new iterate, then multiplier ascent on the
    // same differences
    wchi = analyze(chi, bank);
    double res_frame = detail::l2_diff_coeffs(wchi, d);
    detail::coeff_axpy(tmp_c, wchi, d, -1.0);
    detail::coeff_axpy(p, p, tmp_c, +1.0);
    double res_lap = 0.0, res_fid = 0.0, res_aux = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double tf = achi.data[i] - f[i];
      res_fid += tf * tf;
      r[i] += tf;
      if (with_v) {
        double tl = lv.data[i] - e[i];
        double tg = v.data[i] - gg[i];
        res_lap += tl * tl;
        res_aux += tg * tg;
        q[i] += tl;
        s[i] += tg;
      }
    }
    res_lap = std::sqrt(res_lap);
    res_fid = std::sqrt(res_fid);
    res_aux = std::sqrt(res_aux);

    // objective of the active model at the new iterate
    double fid = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double resid = achi.data[i] + (with_v ? v.data[i] : 0.0) - data.data[i];
      fid += sigma.data[i] * resid * resid;
    }
    double obj = 0.5 * fid + iso_l12_norm(wchi, sched);
    if (with_v)
      for (std::size_t i = 0; i < n; ++i) obj += lambda * std::fabs(lv.data[i]);

    double rel;
    if (chi_norm > 0.0)
      rel = std::sqrt(chi_change / chi_norm);
    else
      rel = chi_change > 0.0 ? 1.0 : 0.0;

    trace.records.push_back({it, rel, obj, res_frame, res_lap, res_fid, res_aux});
    if (!std::isfinite(obj) || !std::isfinite(rel))
      throw DivergedError("split_bregman: iterate diverged", std::move(trace));

    if (rel <= cfg.tol) {
      out.status = SolveStatus::converged;
      break;
    }
  }

  out.chi = std::move(chi);
  out.v = std::move(v);
  out.trace = std::move(trace);
  return out;
}

// One entry point for all five methods. The closed-form baselines return a
// single-record trace; sigma only matters for the frame methods.
inline ReconResult reconstruct(const ScalarVolume& b_l, const ScalarVolume& sigma,
                               const ReconConfig& cfg) {
  switch (cfg.method) {
    case ReconMethod::tkd: {
      ReconResult r;
      r.chi = tkd(b_l, cfg.hbar);
      r.v = ScalarVolume(b_l.grid);
      return r;
    }
    case ReconMethod::tikhonov: {
      ReconResult r;
      r.chi = tikhonov(b_l, cfg.eps);
      r.v = ScalarVolume(b_l.grid);
      return r;
    }
    case ReconMethod::frame_diff: {
      ScalarVolume lap_data = neglap_stencil(b_l);
      return split_bregman(lap_data, sigma, cfg);
    }
    default:
      return split_bregman(b_l, sigma, cfg);
  }
}

}  // namespace qsm
