#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qsm/metrics.hpp"
#include "qsm/recon.hpp"

using namespace qsm;

namespace {

// piecewise-constant source, ppm-scale values
ScalarVolume blob_chi(const GridSpec& g) {
  ScalarVolume chi(g);
  std::size_t i = 0;
  for (int i3 = 0; i3 < g.dims[2]; ++i3)
    for (int i2 = 0; i2 < g.dims[1]; ++i2)
      for (int i1 = 0; i1 < g.dims[0]; ++i1, ++i) {
        double a = std::hypot(i1 - 5.0, i2 - 6.0, i3 - 7.0);
        double b = std::hypot(i1 - 10.0, i2 - 9.0, i3 - 8.0);
        if (a < 3.5) chi.data[i] = 0.05;
        if (b < 3.0) chi.data[i] = -0.03;
      }
  return chi;
}

ScalarVolume dipole_of(const ScalarVolume& chi) {
  return apply_symbol(dipole_symbol(chi.grid), chi, ConvPolicy::circular());
}

RoiMask full_roi(const GridSpec& g) {
  RoiMask roi(g);
  for (auto& m : roi.member) m = 1;
  return roi;
}

}  // namespace

TEST_CASE("Truncated inversion is exact on spectra clear of the truncation floor") {
  GridSpec g({12, 10, 8}, {1, 1, 1});
  const double hbar = 0.125;
  SpectralSymbol d = dipole_symbol(g);
  auto z = fft::forward(oracle::random_data(g.voxels(), 31), g.dims);
  for (std::size_t i = 0; i < z.size(); ++i)
    if (std::fabs(d.values[i]) < hbar) z[i] = 0.0;  // even set, symmetry survives
  fft::backward(z, g.dims);
  ScalarVolume chi_true(g);
  for (std::size_t i = 0; i < z.size(); ++i) chi_true.data[i] = z[i].real();
  REQUIRE(linf_norm(chi_true) > 0.0);

  ScalarVolume rec = tkd(dipole_of(chi_true), hbar);
  double err = 0.0;
  for (std::size_t i = 0; i < rec.data.size(); ++i)
    err = std::max(err, std::fabs(rec.data[i] - chi_true.data[i]));
  CHECK(err <= 1e-10 * linf_norm(chi_true));
  CHECK_THROWS_AS(tkd(chi_true, 0.0), QsmError);
}

TEST_CASE("Ridge inversion satisfies its normal equations") {
  GridSpec g({14, 12, 10}, {1, 1, 1});
  const double eps = 0.01;
  ScalarVolume b(g, oracle::random_data(g.voxels(), 32, 0.05));
  ScalarVolume chi = tikhonov(b, eps);

  SpectralSymbol d = dipole_symbol(g);
  ScalarVolume achi = apply_symbol(d, chi, ConvPolicy::circular());
  for (std::size_t i = 0; i < achi.data.size(); ++i) achi.data[i] -= b.data[i];
  ScalarVolume resid = apply_symbol(d, achi, ConvPolicy::circular());  // A^T (A chi - b)
  for (std::size_t i = 0; i < resid.data.size(); ++i) resid.data[i] += 2.0 * eps * chi.data[i];

  ScalarVolume atb = apply_symbol(d, b, ConvPolicy::circular());
  CHECK(l2_norm(resid) <= 1e-9 * l2_norm(atb));
}

TEST_CASE("Closed-form baselines return an empty trace and zero incompatibility") {
  GridSpec g({8, 8, 8}, {1, 1, 1});
  ScalarVolume b(g, oracle::random_data(g.voxels(), 33, 0.05));
  ScalarVolume sigma = build_sigma(SigmaPolicy::ones, g);
  for (ReconMethod m : {ReconMethod::tkd, ReconMethod::tikhonov}) {
    ReconConfig cfg;
    cfg.method = m;
    ReconResult r = reconstruct(b, sigma, cfg);
    CHECK(r.trace.records.empty());
    CHECK(r.status == SolveStatus::converged);
    CHECK(linf_norm(r.v) == 0.0);
    CHECK(linf_norm(r.chi) > 0.0);
  }
}

TEST_CASE("Frame-regularized solve: zero data converges immediately to zero") {
  GridSpec g({8, 8, 8}, {1, 1, 1});
  ScalarVolume b(g);
  ReconConfig cfg;
  cfg.method = ReconMethod::frame_int;
  ReconResult r = split_bregman(b, build_sigma(SigmaPolicy::ones, g), cfg);
  CHECK(r.status == SolveStatus::converged);
  REQUIRE(r.trace.records.size() == 1);
  CHECK(r.trace.records[0].rel_change == 0.0);
  CHECK(r.trace.records[0].objective == 0.0);
  CHECK(linf_norm(r.chi) == 0.0);
}

TEST_CASE("Frame-regularized solve recovers a blob and lowers the objective") {
  GridSpec g({16, 16, 16}, {1, 1, 1});
  ScalarVolume chi_true = blob_chi(g);
  ScalarVolume b = dipole_of(chi_true);
  ScalarVolume sigma = build_sigma(SigmaPolicy::ones, g);
  ReconConfig cfg;
  cfg.method = ReconMethod::frame_int;
  cfg.tol = 1e-4;
  cfg.max_iter = 400;
  ReconResult r = split_bregman(b, sigma, cfg);

  REQUIRE_FALSE(r.trace.records.empty());
  const auto& last = r.trace.records.back();
  CHECK(last.objective < r.trace.initial_objective);
  for (const auto& rec : r.trace.records) {
    CHECK(std::isfinite(rec.objective));
    CHECK(rec.res_frame >= 0.0);
    CHECK(rec.res_fidelity >= 0.0);
  }
  for (std::size_t k = 1; k < r.trace.records.size(); ++k)
    CHECK(r.trace.records[k].iter == r.trace.records[k - 1].iter + 1);

  RoiMask roi = full_roi(g);
  CHECK(rmse_rel(r.chi, chi_true, roi) < 0.5);
}

TEST_CASE("Solutions agree across splitting penalties") {
  GridSpec g({16, 16, 16}, {1, 1, 1});
  ScalarVolume b = dipole_of(blob_chi(g));
  ScalarVolume sigma = build_sigma(SigmaPolicy::ones, g);
  ReconConfig cfg;
  cfg.method = ReconMethod::frame_int;
  cfg.tol = 1e-5;
  cfg.max_iter = 600;
  ReconResult r1 = split_bregman(b, sigma, cfg);
  cfg.beta = 0.1;
  ReconResult r2 = split_bregman(b, sigma, cfg);
  double o1 = r1.trace.records.back().objective;
  double o2 = r2.trace.records.back().objective;
  CHECK(std::fabs(o1 - o2) <= 0.01 * std::max(o1, o2));
}

TEST_CASE("A huge incompatibility penalty collapses to the plain frame model") {
  GridSpec g({16, 16, 16}, {1, 1, 1});
  ScalarVolume b = dipole_of(blob_chi(g));  // dipole data is mean-free
  ScalarVolume sigma = build_sigma(SigmaPolicy::ones, g);
  ReconConfig cfg;
  cfg.tol = 1e-4;
  cfg.max_iter = 400;
  cfg.method = ReconMethod::frame_int;
  ReconResult plain = split_bregman(b, sigma, cfg);
  cfg.method = ReconMethod::frame_hire;
  cfg.lambda = 1e6 * cfg.nu;
  ReconResult pinned = split_bregman(b, sigma, cfg);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < g.voxels(); ++i) {
    double dd = pinned.chi.data[i] - plain.chi.data[i];
    num += dd * dd;
    den += plain.chi.data[i] * plain.chi.data[i];
  }
  CHECK(std::sqrt(num / den) < 0.02);
}

TEST_CASE("The incompatibility branch absorbs a planted non-dipole component") {
  GridSpec g({16, 16, 16}, {1, 1, 1});
  ScalarVolume chi_true = blob_chi(g);
  ScalarVolume b = dipole_of(chi_true);

  // v with sparse discrete-Laplacian mass: two opposite Green bumps
  ScalarVolume spikes(g);
  spikes.data[g.index(3, 3, 3)] = 0.15;
  spikes.data[g.index(12, 12, 12)] = -0.15;
  ScalarVolume v_true =
      solve_symbol(neglap_discrete_symbol(g), spikes, 0.0, ZeroFreqRule::zero);
  for (std::size_t i = 0; i < g.voxels(); ++i) b.data[i] += v_true.data[i];

  ScalarVolume sigma = build_sigma(SigmaPolicy::ones, g);
  ReconConfig cfg;
  cfg.tol = 1e-4;
  cfg.max_iter = 400;
  cfg.method = ReconMethod::frame_int;
  ReconResult plain = split_bregman(b, sigma, cfg);
  cfg.method = ReconMethod::frame_hire;
  ReconResult hire = split_bregman(b, sigma, cfg);

  RoiMask roi = full_roi(g);
  double e_plain = rmse_rel(plain.chi, chi_true, roi);
  double e_hire = rmse_rel(hire.chi, chi_true, roi);
  CHECK(e_hire < e_plain);
  CHECK(linf_norm(hire.v) > 0.0);
}

TEST_CASE("Derivative-domain data ignores constant offsets") {
  GridSpec g({12, 12, 12}, {1, 1, 1});
  ScalarVolume b = dipole_of(blob_chi(GridSpec({12, 12, 12}, {1, 1, 1})));
  ScalarVolume sigma = build_sigma(SigmaPolicy::ones, g);
  ReconConfig cfg;
  cfg.method = ReconMethod::frame_diff;
  cfg.max_iter = 60;
  ReconResult r1 = reconstruct(b, sigma, cfg);
  ScalarVolume shifted = b;
  for (auto& x : shifted.data) x += 17.3;  // would wreck a field-domain fit
  ReconResult r2 = reconstruct(shifted, sigma, cfg);
  REQUIRE(linf_norm(r1.chi) > 0.0);
  double diff = 0.0;
  for (std::size_t i = 0; i < g.voxels(); ++i)
    diff = std::max(diff, std::fabs(r1.chi.data[i] - r2.chi.data[i]));
  CHECK(diff <= 1e-9 * linf_norm(r1.chi));
}

TEST_CASE("A non-finite iterate raises a diagnosable error") {
  GridSpec g({8, 8, 8}, {1, 1, 1});
  ScalarVolume b(g);
  for (auto& x : b.data) x = 1e200;
  ReconConfig cfg;
  cfg.method = ReconMethod::frame_int;
  try {
    split_bregman(b, build_sigma(SigmaPolicy::ones, g), cfg);
    FAIL("expected DivergedError");
  } catch (const DivergedError& e) {
    CHECK_FALSE(e.trace.records.empty());
  }
}

TEST_CASE("Fidelity weight policies") {
  GridSpec g({6, 6, 6}, {1, 1, 1});
  RoiMask roi(g);
  roi.member[0] = 1;
  ScalarVolume ones = build_sigma(SigmaPolicy::ones, g);
  CHECK(ones.data[5] == 1.0);
  ScalarVolume masked = build_sigma(SigmaPolicy::roi, g, &roi);
  CHECK(masked.data[0] == 1.0);
  CHECK(masked.data[1] == 0.0);
  ScalarVolume w(g);
  w.data[3] = 0.5;
  ScalarVolume est = build_sigma(SigmaPolicy::estimated, g, nullptr, &w);
  CHECK(est.data[3] == 0.5);
  CHECK_THROWS_AS(build_sigma(SigmaPolicy::roi, g), QsmError);
  CHECK_THROWS_AS(build_sigma(SigmaPolicy::estimated, g), QsmError);
  w.data[3] = -1.0;
  CHECK_THROWS_AS(build_sigma(SigmaPolicy::estimated, g, nullptr, &w), QsmError);
  CHECK_THROWS_AS(sigma_policy_from_name("nope"), QsmError);
}

TEST_CASE("Method names round-trip and configs validate") {
  for (ReconMethod m : {ReconMethod::tkd, ReconMethod::tikhonov, ReconMethod::frame_int,
                        ReconMethod::frame_diff, ReconMethod::frame_hire})
    CHECK(method_from_name(method_name(m)) == m);
  CHECK_THROWS_AS(method_from_name("tgv"), QsmError);

  ReconConfig cfg;
  CHECK(cfg.lambda_eff() == Catch::Approx(5.0 * cfg.nu));
  cfg.lambda = 0.25;
  CHECK(cfg.lambda_eff() == 0.25);
  cfg.levels = 0;
  CHECK_THROWS_AS(cfg.validate(), QsmError);
  cfg.levels = 1;
  cfg.beta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), QsmError);
  cfg.beta = 0.05;
  cfg.max_iter = 0;
  CHECK_THROWS_AS(cfg.validate(), QsmError);
}
