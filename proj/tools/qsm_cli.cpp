#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsm/pipeline.hpp"
#include "qsm/png.hpp"
#include "qsm/qvol.hpp"

namespace {

qsm::GridSpec grid_from(const std::vector<int>& dims, const std::vector<double>& spacing) {
  if (dims.size() != 3) throw qsm::QsmError("expected three dims");
  if (spacing.size() != 3) throw qsm::QsmError("expected three spacing values");
  return qsm::GridSpec({dims[0], dims[1], dims[2]}, {spacing[0], spacing[1], spacing[2]});
}

int axis_from(const std::string& s) {
  if (s == "x" || s == "0") return 0;
  if (s == "y" || s == "1") return 1;
  if (s == "z" || s == "2") return 2;
  throw qsm::QsmError("axis must be x, y, or z");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Susceptibility-mapping toolkit: phantom simulation, background removal, "
               "dipole inversion, and evaluation"};
  app.require_subcommand(1);

  // phantom
  auto* sc_phantom = app.add_subcommand("phantom", "Rasterize a scene into volumes");
  std::string ph_scene, ph_out_dir;
  std::vector<int> ph_dims{64, 64, 64};
  std::vector<double> ph_spacing{1.0, 1.0, 1.0};
  sc_phantom->add_option("--scene", ph_scene, "Scene JSON")->required();
  sc_phantom->add_option("--dims", ph_dims, "Grid dims")->delimiter(',')->expected(3);
  sc_phantom->add_option("--spacing", ph_spacing, "Voxel spacing (mm)")->delimiter(',')->expected(3);
  sc_phantom->add_option("--out-dir", ph_out_dir, "Output directory")->required();

  // simulate
  auto* sc_sim = app.add_subcommand("simulate", "Forward field, echoes, noise, field fit");
  std::string sim_chi, sim_mag, sim_out_dir;
  double sim_b0 = 3.0, sim_gamma = 42.577e6, sim_te_first = 0.0026, sim_te_step = 0.0026;
  int sim_te_count = 11;
  std::vector<double> sim_te_list;
  double sim_sigma = 0.0;
  std::uint64_t sim_seed = 0;
  sc_sim->add_option("--chi", sim_chi, "Susceptibility QVOL (ppm)")->required();
  sc_sim->add_option("--magnitude", sim_mag, "Magnitude QVOL")->required();
  sc_sim->add_option("--b0", sim_b0, "Field strength (T)");
  sc_sim->add_option("--gamma", sim_gamma, "Gyromagnetic ratio (Hz/T)");
  sc_sim->add_option("--te-first", sim_te_first, "First echo time (s)");
  sc_sim->add_option("--te-step", sim_te_step, "Echo spacing (s)");
  sc_sim->add_option("--te-count", sim_te_count, "Echo count");
  sc_sim->add_option("--te", sim_te_list, "Explicit echo times (s)")->delimiter(',');
  sc_sim->add_option("--sigma", sim_sigma, "Complex noise std per channel");
  sc_sim->add_option("--seed", sim_seed, "Noise seed");
  sc_sim->add_option("--out-dir", sim_out_dir, "Output directory")->required();

  // bfr
  auto* sc_bfr = app.add_subcommand("bfr", "Background removal (Dirichlet Laplace solve)");
  std::string bfr_field, bfr_roi, bfr_out;
  double bfr_tol = 1e-8;
  int bfr_max_iter = 0;
  sc_bfr->add_option("--field", bfr_field, "Total field QVOL (ppm)")->required();
  sc_bfr->add_option("--roi", bfr_roi, "ROI mask QVOL")->required();
  sc_bfr->add_option("--tol", bfr_tol, "CG relative residual target");
  sc_bfr->add_option("--max-iter", bfr_max_iter, "Iteration cap (0 = auto)");
  sc_bfr->add_option("--out", bfr_out, "Local field QVOL")->required();

  // truefield
  auto* sc_tf = app.add_subcommand("truefield", "Reference local field of a known source map");
  std::string tf_chi, tf_roi, tf_out, tf_compare, tf_report;
  std::vector<int> tf_bands{0, 1, 2, 3, 4, 6, 8};
  sc_tf->add_option("--chi", tf_chi, "Susceptibility QVOL (ppm)")->required();
  sc_tf->add_option("--roi", tf_roi, "ROI mask QVOL")->required();
  sc_tf->add_option("--out", tf_out, "Reference local field QVOL")->required();
  sc_tf->add_option("--compare", tf_compare, "Boundary-value local field to analyze against");
  sc_tf->add_option("--bands", tf_bands, "Chebyshev band widths")->delimiter(',');
  sc_tf->add_option("--report", tf_report, "Incompatibility report JSON (needs --compare)");

  // recon
  auto* sc_recon = app.add_subcommand("recon", "Dipole inversion");
  std::string rc_bl, rc_method = "frame_hire", rc_policy = "ones", rc_roi, rc_snr, rc_out,
              rc_trace, rc_out_v;
  qsm::ReconConfig rc_cfg;
  sc_recon->add_option("--bl", rc_bl, "Local field QVOL (ppm)")->required();
  sc_recon->add_option("--method", rc_method, "tkd|tikhonov|frame_int|frame_diff|frame_hire");
  sc_recon->add_option("--sigma-policy", rc_policy, "ones|roi|estimated");
  sc_recon->add_option("--roi", rc_roi, "ROI mask (sigma-policy roi)");
  sc_recon->add_option("--snr", rc_snr, "Reliability weights (sigma-policy estimated)");
  sc_recon->add_option("--hbar", rc_cfg.hbar, "tkd truncation floor");
  sc_recon->add_option("--eps", rc_cfg.eps, "tikhonov ridge weight");
  sc_recon->add_option("--nu", rc_cfg.nu, "frame penalty weight");
  sc_recon->add_option("--lambda", rc_cfg.lambda, "incompatibility penalty (default 5*nu)");
  sc_recon->add_option("--beta", rc_cfg.beta, "splitting penalty");
  sc_recon->add_option("--levels", rc_cfg.levels, "frame levels");
  sc_recon->add_option("--tol", rc_cfg.tol, "relative-change stop");
  sc_recon->add_option("--max-iter", rc_cfg.max_iter, "iteration cap");
  sc_recon->add_option("--out", rc_out, "Susceptibility QVOL")->required();
  sc_recon->add_option("--trace", rc_trace, "Convergence trace CSV (frame methods)");
  sc_recon->add_option("--out-v", rc_out_v, "Incompatibility estimate QVOL (frame_hire)");

  // eval
  auto* sc_eval = app.add_subcommand("eval", "Error metrics against a reference");
  std::string ev_chi, ev_truth, ev_roi, ev_out;
  sc_eval->add_option("--chi", ev_chi, "Reconstruction QVOL")->required();
  sc_eval->add_option("--truth", ev_truth, "Reference QVOL")->required();
  sc_eval->add_option("--roi", ev_roi, "ROI mask QVOL")->required();
  sc_eval->add_option("--out", ev_out, "Report JSON");

  // export-slice
  auto* sc_slice = app.add_subcommand("export-slice", "Window one slice to a grayscale PNG");
  std::string sl_vol, sl_axis = "z", sl_out;
  int sl_index = 0;
  std::vector<double> sl_window{-0.025, 0.025};
  sc_slice->add_option("--vol", sl_vol, "Volume QVOL")->required();
  sc_slice->add_option("--axis", sl_axis, "x|y|z");
  sc_slice->add_option("--index", sl_index, "Slice index")->required();
  sc_slice->add_option("--window", sl_window, "lo,hi display window")->delimiter(',')->expected(2);
  sc_slice->add_option("--out", sl_out, "PNG path")->required();

  // import-raw
  auto* sc_import = app.add_subcommand("import-raw", "Wrap a raw binary block as QVOL");
  std::string im_raw, im_dtype = "f32", im_out;
  std::vector<int> im_dims;
  std::vector<double> im_spacing{1.0, 1.0, 1.0};
  sc_import->add_option("--raw", im_raw, "Raw little-endian input")->required();
  sc_import->add_option("--dims", im_dims, "Grid dims")->delimiter(',')->expected(3)->required();
  sc_import->add_option("--spacing", im_spacing, "Voxel spacing (mm)")->delimiter(',')->expected(3);
  sc_import->add_option("--dtype", im_dtype, "f32|f64|u8");
  sc_import->add_option("--out", im_out, "QVOL path")->required();

  // pipeline
  auto* sc_pipe = app.add_subcommand("pipeline", "Scene -> volumes -> recon -> reports");
  std::string pp_config, pp_out_dir;
  std::uint64_t pp_seed = 0;
  bool pp_seed_set = false;
  sc_pipe->add_option("--config", pp_config, "Pipeline config JSON")->required();
  sc_pipe->add_option("--output-dir", pp_out_dir, "Override output directory");
  sc_pipe->add_option("--seed", pp_seed, "Override seed")->trigger_on_parse()->each([&](const std::string&) {
    pp_seed_set = true;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sc_phantom) {
      qsm::stage_phantom(ph_scene, grid_from(ph_dims, ph_spacing), ph_out_dir);
      std::cout << "wrote chi_true.qvol, roi.qvol, magnitude.qvol to " << ph_out_dir << "\n";
    } else if (*sc_sim) {
      qsm::AcquisitionParams acq;
      acq.b0_tesla = sim_b0;
      acq.gamma_hz_per_tesla = sim_gamma;
      acq.echo_times_s = sim_te_list.empty()
                             ? qsm::equispaced_echoes(sim_te_first, sim_te_step, sim_te_count)
                             : sim_te_list;
      acq.noise_sigma = sim_sigma;
      acq.seed = sim_seed;
      auto sum = qsm::stage_simulate(sim_chi, sim_mag, acq, sim_out_dir);
      std::cout << "wrote b_total.qvol, b_hat.qvol, snr_weight.qvol to " << sim_out_dir
                << " (max last-echo phase " << sum.max_last_echo_phase << " rad)\n";
    } else if (*sc_bfr) {
      auto sum = qsm::stage_bfr(bfr_field, bfr_roi, bfr_tol, bfr_max_iter, bfr_out);
      std::cout << "wrote " << bfr_out << " (" << sum.iterations << " iterations, residual "
                << sum.rel_residual << ")\n";
      if (!sum.converged) std::cout << "warning: iteration cap reached\n";
    } else if (*sc_tf) {
      qsm::stage_truefield(tf_chi, tf_roi, tf_out);
      std::cout << "wrote " << tf_out << "\n";
      if (!tf_report.empty()) {
        if (tf_compare.empty())
          throw qsm::QsmError("truefield: --report needs --compare");
        qsm::stage_incompatibility(tf_compare, tf_out, tf_roi, tf_bands, tf_report);
        std::cout << "wrote " << tf_report << "\n";
      }
    } else if (*sc_recon) {
      qsm::MethodSpec spec;
      rc_cfg.method = qsm::method_from_name(rc_method);
      spec.cfg = rc_cfg;
      spec.label = rc_method;
      auto rr = qsm::stage_recon(rc_bl, spec, qsm::sigma_policy_from_name(rc_policy), rc_roi,
                                 rc_snr, rc_out, rc_trace, rc_out_v);
      std::cout << "wrote " << rc_out << " (" << rr.iterations << " iterations)\n";
      if (rr.status == qsm::SolveStatus::max_iter_reached)
        std::cout << "warning: stopped at the iteration cap\n";
    } else if (*sc_eval) {
      auto rep = qsm::stage_eval(ev_chi, ev_truth, ev_roi);
      nlohmann::ordered_json j;
      j["rmse"] = rep.rmse;
      j["ssim"] = rep.ssim;
      j["roi_voxels"] = rep.roi_voxels;
      std::cout << j.dump(2) << "\n";
      if (!ev_out.empty()) {
        std::ofstream f(ev_out, std::ios::trunc);
        if (!f) throw qsm::QsmError("eval: cannot write " + ev_out);
        f << j.dump(2) << "\n";
      }
    } else if (*sc_slice) {
      qsm::ScalarVolume v = qsm::read_volume(sl_vol);
      qsm::export_slice(sl_out, v, axis_from(sl_axis), sl_index, sl_window[0], sl_window[1]);
      std::cout << "wrote " << sl_out << "\n";
    } else if (*sc_import) {
      std::ifstream in(im_raw, std::ios::binary);
      if (!in) throw qsm::QsmError("import-raw: cannot open " + im_raw);
      std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
      qsm::GridSpec grid = grid_from(im_dims, im_spacing);
      std::size_t n = grid.voxels();
      if (im_dtype == "u8") {
        if (bytes.size() != n) throw qsm::QsmError("import-raw: size mismatch for u8");
        qsm::write_mask(im_out, qsm::RoiMask(grid, {bytes.begin(), bytes.end()}));
      } else if (im_dtype == "f32" || im_dtype == "f64") {
        std::size_t w = (im_dtype == "f32") ? 4 : 8;
        if (bytes.size() != n * w) throw qsm::QsmError("import-raw: size mismatch for " + im_dtype);
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i)
          data[i] = (w == 4) ? double(qsm::detail::load_le<float>(bytes.data() + 4 * i))
                             : qsm::detail::load_le<double>(bytes.data() + 8 * i);
        qsm::write_volume(im_out, qsm::ScalarVolume(grid, std::move(data)));
      } else {
        throw qsm::QsmError("import-raw: dtype must be f32, f64, or u8");
      }
      std::cout << "wrote " << im_out << "\n";
    } else if (*sc_pipe) {
      qsm::PipelineConfig cfg = qsm::load_pipeline_config(pp_config);
      if (!pp_out_dir.empty()) cfg.output_dir = pp_out_dir;
      if (pp_seed_set) {
        cfg.seed = pp_seed;
        cfg.acq.seed = pp_seed;
      }
      cfg.validate();
      qsm::run_pipeline(cfg, std::cout);
      std::cout << "pipeline complete: " << cfg.output_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
