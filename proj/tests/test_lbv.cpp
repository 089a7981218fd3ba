#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "qsm/lbv.hpp"

using namespace qsm;

namespace {

RoiMask ball_roi(const GridSpec& g, double i0, double j0, double k0, double radius_vox) {
  RoiMask roi(g);
  std::size_t i = 0;
  for (int i3 = 0; i3 < g.dims[2]; ++i3)
    for (int i2 = 0; i2 < g.dims[1]; ++i2)
      for (int i1 = 0; i1 < g.dims[0]; ++i1, ++i) {
        double dx = i1 - i0, dy = i2 - j0, dz = i3 - k0;
        roi.member[i] = (dx * dx + dy * dy + dz * dz <= radius_vox * radius_vox) ? 1 : 0;
      }
  return roi;
}

// discretely harmonic for the 7-point stencil at any spacing: affine plus
// cross terms
ScalarVolume harmonic_background(const GridSpec& g) {
  ScalarVolume f(g);
  std::size_t i = 0;
  for (int i3 = 0; i3 < g.dims[2]; ++i3)
    for (int i2 = 0; i2 < g.dims[1]; ++i2)
      for (int i1 = 0; i1 < g.dims[0]; ++i1, ++i) {
        double x = i1 * g.spacing[0], y = i2 * g.spacing[1], z = i3 * g.spacing[2];
        f.data[i] = 2.0 + 0.5 * x - 0.3 * y + 0.7 * z + 0.11 * x * y - 0.07 * y * z + 0.05 * x * z;
      }
  return f;
}

}  // namespace

TEST_CASE("Boundary-value solve matches a dense Cholesky factorization") {
  GridSpec g({12, 12, 12}, {1.0, 1.2, 0.9});
  RoiMask roi = ball_roi(g, 5.5, 5.5, 5.5, 4.6);
  RoiMask bnd = boundary_set(roi);

  std::vector<std::size_t> voxel_of;
  std::vector<std::int64_t> unknown_of(g.voxels(), -1);
  for (std::size_t i = 0; i < g.voxels(); ++i)
    if (roi.member[i] && !bnd.member[i]) {
      unknown_of[i] = std::int64_t(voxel_of.size());
      voxel_of.push_back(i);
    }
  const std::size_t n = voxel_of.size();
  REQUIRE(n > 100);

  ScalarVolume total(g, oracle::random_data(g.voxels(), 55));
  const double w[3] = {1.0 / (g.spacing[0] * g.spacing[0]),
                       1.0 / (g.spacing[1] * g.spacing[1]),
                       1.0 / (g.spacing[2] * g.spacing[2])};
  const std::ptrdiff_t stride[3] = {1, g.dims[0], std::ptrdiff_t(g.dims[0]) * g.dims[1]};

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(Eigen::Index(n));
  for (std::size_t u = 0; u < n; ++u) {
    std::size_t i = voxel_of[u];
    A(Eigen::Index(u), Eigen::Index(u)) = 2.0 * (w[0] + w[1] + w[2]);
    double s = 2.0 * (w[0] + w[1] + w[2]) * total.data[i];
    for (int d = 0; d < 3; ++d)
      for (int sgn : {-1, 1}) {
        std::size_t j = i + std::size_t(sgn * stride[d]);
        s -= w[d] * total.data[j];
        if (unknown_of[j] >= 0) A(Eigen::Index(u), unknown_of[j]) = -w[d];
      }
    rhs(Eigen::Index(u)) = s;
  }
  Eigen::VectorXd x = A.llt().solve(rhs);

  LbvResult res = lbv_solve(total, roi, 1e-10);
  REQUIRE(res.converged);
  double max_err = 0.0, xmax = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    max_err = std::max(max_err, std::fabs(res.local_field.data[voxel_of[u]] - x(Eigen::Index(u))));
    xmax = std::max(xmax, std::fabs(x(Eigen::Index(u))));
  }
  CHECK(max_err <= 1e-6 * xmax);

  // solution lives only on the unknowns
  for (std::size_t i = 0; i < g.voxels(); ++i)
    if (unknown_of[i] < 0) CHECK(res.local_field.data[i] == 0.0);
}

TEST_CASE("A discretely harmonic background is removed to rounding error") {
  GridSpec g({14, 13, 12}, {1.0, 0.8, 1.1});
  RoiMask roi = ball_roi(g, 6.5, 6.0, 5.5, 4.8);
  ScalarVolume bg = harmonic_background(g);
  LbvResult res = lbv_solve(bg, roi, 1e-12);
  CHECK(linf_norm(res.local_field) <= 1e-10 * linf_norm(bg));
}

TEST_CASE("Interior-supported fields pass through the boundary-value solve unchanged") {
  GridSpec g({16, 16, 16}, {1, 1, 1});
  RoiMask roi = ball_roi(g, 7.5, 7.5, 7.5, 6.2);
  RoiMask deep = band_mask(roi, 2);  // within distance 2 of the boundary
  ScalarVolume u0(g);
  auto noise = oracle::random_data(g.voxels(), 77);
  for (std::size_t i = 0; i < g.voxels(); ++i)
    if (roi.member[i] && !deep.member[i]) u0.data[i] = noise[i];
  REQUIRE(linf_norm(u0) > 0.0);

  ScalarVolume total = harmonic_background(g);
  for (std::size_t i = 0; i < g.voxels(); ++i) total.data[i] += u0.data[i];

  LbvResult res = lbv_solve(total, roi, 1e-12);
  REQUIRE(res.converged);
  double max_err = 0.0;
  for (std::size_t i = 0; i < g.voxels(); ++i)
    max_err = std::max(max_err, std::fabs(res.local_field.data[i] - u0.data[i]));
  CHECK(max_err <= 1e-8 * linf_norm(u0));
}

TEST_CASE("Values outside the ROI never reach the solver") {
  GridSpec g({12, 12, 12}, {1, 1, 1});
  RoiMask roi = ball_roi(g, 5.5, 5.5, 5.5, 4.0);
  ScalarVolume total(g, oracle::random_data(g.voxels(), 88));
  LbvResult clean = lbv_solve(total, roi, 1e-10);
  ScalarVolume junk = total;
  for (std::size_t i = 0; i < g.voxels(); ++i)
    if (!roi.member[i]) junk.data[i] = 1e300;
  LbvResult poisoned = lbv_solve(junk, roi, 1e-10);
  CHECK(poisoned.local_field.data == clean.local_field.data);
}

TEST_CASE("Degenerate problems are reported as such") {
  SECTION("no interior: every ROI voxel touches the boundary") {
    GridSpec g({8, 8, 3}, {1, 1, 1});
    RoiMask slab(g);
    for (int i2 = 2; i2 < 6; ++i2)
      for (int i1 = 2; i1 < 6; ++i1) slab.member[g.index(i1, i2, 1)] = 1;
    ScalarVolume total(g, oracle::random_data(g.voxels(), 5));
    CHECK_THROWS_AS(lbv_solve(total, slab), NoInterior);
  }
  SECTION("zero right side converges immediately") {
    GridSpec g({10, 10, 10}, {1, 1, 1});
    RoiMask roi = ball_roi(g, 4.5, 4.5, 4.5, 3.4);
    ScalarVolume total(g);
    LbvResult res = lbv_solve(total, roi);
    CHECK(res.converged);
    CHECK(res.iterations == 0);
    CHECK(linf_norm(res.local_field) == 0.0);
  }
  SECTION("iteration cap reports non-convergence without throwing") {
    GridSpec g({12, 12, 12}, {1, 1, 1});
    RoiMask roi = ball_roi(g, 5.5, 5.5, 5.5, 4.4);
    ScalarVolume total(g, oracle::random_data(g.voxels(), 6));
    LbvResult res = lbv_solve(total, roi, 1e-14, 1);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 1);
    CHECK(res.rel_residual > 1e-14);
  }
  SECTION("bad tolerance") {
    GridSpec g({8, 8, 8}, {1, 1, 1});
    RoiMask roi = ball_roi(g, 3.5, 3.5, 3.5, 2.5);
    ScalarVolume total(g);
    CHECK_THROWS_AS(lbv_solve(total, roi, 0.0), QsmError);
  }
}

TEST_CASE("Incompatibility report masks to the ROI and localizes stencil mass") {
  GridSpec g({12, 12, 12}, {1, 1, 1});
  RoiMask roi = ball_roi(g, 5.5, 5.5, 5.5, 4.2);
  ScalarVolume f_true(g, oracle::random_data(g.voxels(), 21));
  ScalarVolume f_bv = f_true;
  // exterior disagreement must be invisible
  for (std::size_t i = 0; i < g.voxels(); ++i)
    if (!roi.member[i]) f_bv.data[i] += 100.0;
  IncompReport rep = analyze_incompatibility(f_bv, f_true, roi, {0, 1, 2, 8});
  CHECK(rep.v_l2 == 0.0);
  CHECK(rep.lap_mass_total == 0.0);
  for (const auto& [k, frac] : rep.band_fraction) CHECK(frac == 1.0);

  // a point disturbance deep inside: mass appears only once the band reaches it
  std::size_t center = g.index(5, 5, 5);
  f_bv = f_true;
  f_bv.data[center] += 1.0;
  rep = analyze_incompatibility(f_bv, f_true, roi, {0, 1, 2, 3, 4, 8});
  CHECK(rep.v.data[center] == Catch::Approx(1.0));
  CHECK(rep.lap_mass_total == Catch::Approx(12.0));  // |6| at the point, six |-1| around it

  auto dist = oracle::brute_chebyshev_to_boundary(roi);
  double prev = -1.0;
  for (const auto& [k, frac] : rep.band_fraction) {
    double expect = 0.0;
    for (std::size_t i = 0; i < g.voxels(); ++i)
      if (roi.member[i] && dist[i] <= k) expect += std::fabs(rep.lap_v.data[i]);
    CHECK(frac == Catch::Approx(expect / 12.0).margin(1e-12));
    CHECK(frac >= prev);
    prev = frac;
  }
  CHECK(rep.band_fraction.back().second == Catch::Approx(1.0));
}
