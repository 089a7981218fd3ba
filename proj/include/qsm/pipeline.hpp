#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsm/lbv.hpp"
#include "qsm/metrics.hpp"
#include "qsm/phantom.hpp"
#include "qsm/qvol.hpp"
#include "qsm/recon.hpp"
#include "qsm/volume.hpp"

namespace qsm {

// On disk, susceptibility and field volumes carry ppm values; the simulation
// core works dimensionless. The factor lives here, at the file boundary.
constexpr double kPpm = 1e-6;

struct MethodSpec {
  std::string label;  // file tag; defaults to the method name
  ReconConfig cfg;
};

struct PipelineConfig {
  std::string scene_path;
  GridSpec grid;
  AcquisitionParams acq;
  std::uint64_t seed = 0;
  double bfr_tol = 1e-8;
  int bfr_max_iter = 0;
  SigmaPolicy sigma_policy = SigmaPolicy::ones;
  std::vector<MethodSpec> methods;
  std::vector<int> incompatibility_bands{0, 1, 2, 3, 4, 6, 8};
  std::string output_dir;

  void validate() const {
    if (scene_path.empty()) throw QsmError("pipeline: scene path missing");
    if (output_dir.empty()) throw QsmError("pipeline: output dir missing");
    for (int i = 0; i < 3; ++i)
      if (grid.dims[i] < 4) throw QsmError("pipeline: grid dims must be >= 4");
    if (methods.empty()) throw QsmError("pipeline: no reconstruction methods requested");
    for (std::size_t a = 0; a < methods.size(); ++a)
      for (std::size_t b = a + 1; b < methods.size(); ++b)
        if (methods[a].label == methods[b].label)
          throw QsmError("pipeline: duplicate method label '" + methods[a].label +
                         "'; set a distinct 'label'");
    acq.validate();
  }
};

inline ReconConfig parse_method_entry(const nlohmann::json& m) {
  ReconConfig cfg;
  cfg.method = method_from_name(m.at("method").get<std::string>());
  cfg.hbar = m.value("hbar", cfg.hbar);
  cfg.eps = m.value("eps", cfg.eps);
  cfg.nu = m.value("nu", cfg.nu);
  cfg.lambda = m.value("lambda", cfg.lambda);
  cfg.beta = m.value("beta", cfg.beta);
  cfg.levels = m.value("levels", cfg.levels);
  cfg.tol = m.value("tol", cfg.tol);
  cfg.max_iter = m.value("max_iter", cfg.max_iter);
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw QsmError("pipeline: cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw QsmError(std::string("pipeline: bad config JSON: ") + e.what());
  }
  PipelineConfig cfg;
  try {
    cfg.scene_path = j.at("scene").get<std::string>();
    auto jg = j.at("grid");
    std::array<int, 3> dims;
    std::array<double, 3> sp{1.0, 1.0, 1.0};
    for (int i = 0; i < 3; ++i) dims[i] = jg.at("dims").at(i).get<int>();
    if (jg.contains("spacing"))
      for (int i = 0; i < 3; ++i) sp[i] = jg.at("spacing").at(i).get<double>();
    cfg.grid = GridSpec(dims, sp);

    auto ja = j.at("acquisition");
    cfg.acq.b0_tesla = ja.value("b0_tesla", 3.0);
    cfg.acq.gamma_hz_per_tesla = ja.value("gamma_hz_per_tesla", 42.577e6);
    if (ja.contains("echo_times_s")) {
      for (const auto& te : ja.at("echo_times_s")) cfg.acq.echo_times_s.push_back(te.get<double>());
    } else {
      cfg.acq.echo_times_s = equispaced_echoes(ja.at("echo_first_s").get<double>(),
                                               ja.at("echo_step_s").get<double>(),
                                               ja.at("echo_count").get<int>());
    }
    cfg.acq.noise_sigma = ja.value("noise_sigma", 0.0);
    cfg.seed = j.value("seed", std::uint64_t(0));
    cfg.acq.seed = cfg.seed;
    if (j.contains("bfr")) {
      cfg.bfr_tol = j.at("bfr").value("tol", cfg.bfr_tol);
      cfg.bfr_max_iter = j.at("bfr").value("max_iter", cfg.bfr_max_iter);
    }
    cfg.sigma_policy = sigma_policy_from_name(j.value("sigma_policy", std::string("ones")));
    for (const auto& m : j.at("methods")) {
      MethodSpec spec;
      spec.cfg = parse_method_entry(m);
      spec.label = m.value("label", std::string(method_name(spec.cfg.method)));
      cfg.methods.push_back(std::move(spec));
    }
    if (j.contains("incompatibility_bands")) {
      cfg.incompatibility_bands.clear();
      for (const auto& k : j.at("incompatibility_bands"))
        cfg.incompatibility_bands.push_back(k.get<int>());
    }
    cfg.output_dir = j.value("output_dir", std::string("out"));
  } catch (const nlohmann::json::exception& e) {
    throw QsmError(std::string("pipeline: missing or malformed config field: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline ScalarVolume scaled(const ScalarVolume& v, double factor) {
  ScalarVolume out(v.grid);
  for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = v.data[i] * factor;
  return out;
}

class StageClock {
 public:
  explicit StageClock(std::ostream& log, const std::string& name) : log_(log), name_(name) {
    t0_ = std::chrono::steady_clock::now();
  }
  double finish() {
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    log_ << "  [" << name_ << "] " << fmt17(dt) << " s\n";
    return dt;
  }

 private:
  std::ostream& log_;
  std::string name_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

// Stage functions below read and write QVOL artifacts so that running them
// one-by-one from the command line reproduces run_pipeline byte for byte.

inline void stage_phantom(const std::string& scene_path, const GridSpec& grid,
                          const std::string& out_dir) {
  namespace fs = std::filesystem;
  PhantomScene scene = load_scene(scene_path);
  RasterizedPhantom ph = rasterize(scene, grid);
  fs::create_directories(out_dir);
  write_volume((fs::path(out_dir) / "chi_true.qvol").string(), detail::scaled(ph.chi, 1.0 / kPpm));
  write_mask((fs::path(out_dir) / "roi.qvol").string(), ph.roi);
  write_volume((fs::path(out_dir) / "magnitude.qvol").string(), ph.magnitude);
}

struct SimulateSummary {
  double max_last_echo_phase = 0.0;  // radians, over visible voxels
};

inline SimulateSummary stage_simulate(const std::string& chi_path, const std::string& mag_path,
                                      const AcquisitionParams& acq, const std::string& out_dir) {
  namespace fs = std::filesystem;
  ScalarVolume chi = detail::scaled(read_volume(chi_path), kPpm);
  ScalarVolume mag = read_volume(mag_path);
  ScalarVolume b = simulate_total_field(chi);
  EchoSeries clean = simulate_gre(b, mag, acq);
  SimulateSummary sum;
  {
    const double c = acq.rad_per_field_s() * acq.echo_times_s.back();
    for (std::size_t i = 0; i < b.data.size(); ++i)
      if (mag.data[i] > 0.0)
        sum.max_last_echo_phase = std::max(sum.max_last_echo_phase, std::fabs(c * b.data[i]));
  }
  EchoSeries noisy = add_noise(clean, acq.noise_sigma, acq.seed);
  FieldEstimate est = estimate_field(noisy, acq);
  fs::create_directories(out_dir);
  write_volume((fs::path(out_dir) / "b_total.qvol").string(), detail::scaled(b, 1.0 / kPpm));
  write_volume((fs::path(out_dir) / "b_hat.qvol").string(),
               detail::scaled(est.b_hat, 1.0 / kPpm));
  write_volume((fs::path(out_dir) / "snr_weight.qvol").string(), est.snr_weight);
  return sum;
}

struct BfrSummary {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

inline BfrSummary stage_bfr(const std::string& field_path, const std::string& roi_path,
                            double tol, int max_iter, const std::string& out_path) {
  ScalarVolume field = read_volume(field_path);
  RoiMask roi = read_mask(roi_path);
  LbvResult res = lbv_solve(field, roi, tol, max_iter);
  write_volume(out_path, res.local_field);
  return {res.iterations, res.rel_residual, res.converged};
}

inline void stage_truefield(const std::string& chi_path, const std::string& roi_path,
                            const std::string& out_path) {
  ScalarVolume chi = detail::scaled(read_volume(chi_path), kPpm);
  RoiMask roi = read_mask(roi_path);
  ScalarVolume bt = true_local_field(chi, roi);
  write_volume(out_path, detail::scaled(bt, 1.0 / kPpm));
}

inline void stage_incompatibility(const std::string& field_bv_path,
                                  const std::string& field_true_path,
                                  const std::string& roi_path, const std::vector<int>& bands,
                                  const std::string& out_json) {
  ScalarVolume bv = read_volume(field_bv_path);
  ScalarVolume bt = read_volume(field_true_path);
  RoiMask roi = read_mask(roi_path);
  IncompReport rep = analyze_incompatibility(bv, bt, roi, bands);
  nlohmann::ordered_json j;
  j["v_l2"] = rep.v_l2;
  j["lap_mass_total"] = rep.lap_mass_total;
  j["band_fraction"] = nlohmann::ordered_json::array();
  for (auto [k, frac] : rep.band_fraction)
    j["band_fraction"].push_back({{"k", k}, {"fraction", frac}});
  std::ofstream out(out_json, std::ios::trunc);
  if (!out) throw QsmError("pipeline: cannot write " + out_json);
  out << j.dump(2) << "\n";
}

struct ReconStageResult {
  SolveStatus status = SolveStatus::converged;
  int iterations = 0;
};

inline ReconStageResult stage_recon(const std::string& bl_path, const MethodSpec& spec,
                                    SigmaPolicy policy, const std::string& roi_path,
                                    const std::string& snr_path, const std::string& out_chi,
                                    const std::string& out_trace, const std::string& out_v) {
  ScalarVolume b_l = read_volume(bl_path);
  ScalarVolume sigma;
  if (policy == SigmaPolicy::ones) {
    sigma = build_sigma(policy, b_l.grid);
  } else if (policy == SigmaPolicy::roi) {
    RoiMask roi = read_mask(roi_path);
    sigma = build_sigma(policy, b_l.grid, &roi);
  } else {
    ScalarVolume snr = read_volume(snr_path);
    sigma = build_sigma(policy, b_l.grid, nullptr, &snr);
  }
  ReconResult res = reconstruct(b_l, sigma, spec.cfg);
  write_volume(out_chi, res.chi);
  const bool frame_method = spec.cfg.method == ReconMethod::frame_int ||
                            spec.cfg.method == ReconMethod::frame_diff ||
                            spec.cfg.method == ReconMethod::frame_hire;
  if (frame_method && !out_trace.empty()) {
    std::ofstream tr(out_trace, std::ios::trunc);
    if (!tr) throw QsmError("pipeline: cannot write " + out_trace);
    tr << "iter,rel_change,objective,res_frame,res_lap,res_fidelity,res_aux\n";
    for (const auto& rec : res.trace.records)
      tr << rec.iter << ',' << detail::fmt17(rec.rel_change) << ','
         << detail::fmt17(rec.objective) << ',' << detail::fmt17(rec.res_frame) << ','
         << detail::fmt17(rec.res_lap) << ',' << detail::fmt17(rec.res_fidelity) << ','
         << detail::fmt17(rec.res_aux) << "\n";
  }
  if (spec.cfg.method == ReconMethod::frame_hire && !out_v.empty())
    write_volume(out_v, res.v);
  return {res.status, int(res.trace.records.size())};
}

inline EvalReport stage_eval(const std::string& chi_path, const std::string& truth_path,
                             const std::string& roi_path) {
  ScalarVolume chi = read_volume(chi_path);
  ScalarVolume truth = read_volume(truth_path);
  RoiMask roi = read_mask(roi_path);
  return evaluate(chi, truth, roi);
}

struct PipelineMethodOutcome {
  std::string label;
  ReconMethod method = ReconMethod::tkd;
  EvalReport report;
  SolveStatus status = SolveStatus::converged;
  int iterations = 0;
};

struct PipelineOutcome {
  SimulateSummary simulate;
  BfrSummary bfr_measured;
  BfrSummary bfr_true;
  std::vector<PipelineMethodOutcome> methods;
};

// End-to-end run. Every numeric artifact lands in cfg.output_dir; wall times
// go to the log stream only, so two runs with the same config produce
// byte-identical files.
inline PipelineOutcome run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  namespace fs = std::filesystem;
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  auto at = [&](const char* name) { return (fs::path(cfg.output_dir) / name).string(); };
  PipelineOutcome out;

  {
    detail::StageClock clock(log, "phantom");
    stage_phantom(cfg.scene_path, cfg.grid, cfg.output_dir);
    clock.finish();
  }
  {
    detail::StageClock clock(log, "simulate");
    out.simulate = stage_simulate(at("chi_true.qvol"), at("magnitude.qvol"), cfg.acq,
                                  cfg.output_dir);
    clock.finish();
    log << "  max last-echo phase: " << detail::fmt17(out.simulate.max_last_echo_phase)
        << " rad\n";
  }
  {
    detail::StageClock clock(log, "bfr");
    out.bfr_measured =
        stage_bfr(at("b_hat.qvol"), at("roi.qvol"), cfg.bfr_tol, cfg.bfr_max_iter,
                  at("b_local.qvol"));
    out.bfr_true = stage_bfr(at("b_total.qvol"), at("roi.qvol"), cfg.bfr_tol, cfg.bfr_max_iter,
                             at("b_local_true.qvol"));
    clock.finish();
    if (!out.bfr_measured.converged || !out.bfr_true.converged)
      log << "  warning: background removal hit its iteration cap\n";
  }
  {
    detail::StageClock clock(log, "truefield");
    stage_truefield(at("chi_true.qvol"), at("roi.qvol"), at("b_tilde.qvol"));
    stage_incompatibility(at("b_local_true.qvol"), at("b_tilde.qvol"), at("roi.qvol"),
                          cfg.incompatibility_bands, at("incompatibility.json"));
    clock.finish();
  }

  nlohmann::ordered_json reports;
  reports["methods"] = nlohmann::ordered_json::array();
  for (const auto& spec : cfg.methods) {
    detail::StageClock clock(log, "recon " + spec.label);
    PipelineMethodOutcome mo;
    mo.label = spec.label;
    mo.method = spec.cfg.method;
    std::string chi_path = at(("chi_" + spec.label + ".qvol").c_str());
    std::string trace_path = at(("trace_" + spec.label + ".csv").c_str());
    std::string v_path = at(("v_" + spec.label + ".qvol").c_str());
    auto rr = stage_recon(at("b_local.qvol"), spec, cfg.sigma_policy, at("roi.qvol"),
                          at("snr_weight.qvol"), chi_path, trace_path, v_path);
    mo.status = rr.status;
    mo.iterations = rr.iterations;
    mo.report = stage_eval(chi_path, at("chi_true.qvol"), at("roi.qvol"));
    mo.report.wall_time_seconds = clock.finish();
    if (rr.status == SolveStatus::max_iter_reached)
      log << "  warning: " << spec.label << " stopped at the iteration cap\n";
    log << "  " << spec.label << ": rmse " << detail::fmt17(mo.report.rmse) << ", ssim "
        << detail::fmt17(mo.report.ssim) << "\n";
    nlohmann::ordered_json jm;
    jm["label"] = mo.label;
    jm["method"] = method_name(mo.method);
    jm["rmse"] = mo.report.rmse;
    jm["ssim"] = mo.report.ssim;
    jm["roi_voxels"] = mo.report.roi_voxels;
    jm["iterations"] = mo.iterations;
    jm["status"] = (mo.status == SolveStatus::converged) ? "converged" : "max_iter";
    reports["methods"].push_back(std::move(jm));
    out.methods.push_back(std::move(mo));
  }
  {
    std::ofstream rf(at("reports.json"), std::ios::trunc);
    if (!rf) throw QsmError("pipeline: cannot write reports.json");
    rf << reports.dump(2) << "\n";
  }
  return out;
}

}  // namespace qsm
