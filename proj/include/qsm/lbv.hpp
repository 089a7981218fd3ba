#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "qsm/spectral.hpp"
#include "qsm/volume.hpp"

namespace qsm {

// The ROI has no voxel with all six neighbors inside it; the Dirichlet
// problem has no unknowns.
struct NoInterior : QsmError {
  using QsmError::QsmError;
};

struct LbvResult {
  ScalarVolume local_field;  // solution on the interior, zero elsewhere
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// Background removal as a Laplacian boundary value problem: solve
//   -lap b_l = -lap b   on the ROI interior,   b_l = 0 on the ROI boundary,
// with the 7-point stencil. The boundary condition kills the harmonic
// (background) part; interior sources are kept. Solved by conjugate
// gradients on the SPD Dirichlet system; the right side only reads the total
// field at ROI voxels, so garbage outside the ROI cannot leak in.
// max_iter = 0 picks max(500, ceil(10 sqrt(#unknowns))). Non-convergence is
// reported, not thrown: the iterate and its residual come back with
// converged = false.
inline LbvResult lbv_solve(const ScalarVolume& total_field, const RoiMask& roi,
                           double tol = 1e-8, int max_iter = 0) {
  require_same_grid(total_field.grid, roi.grid, "lbv_solve");
  if (!(tol > 0)) throw QsmError("lbv_solve: tol must be positive");
  const auto& g = total_field.grid;

  RoiMask boundary = boundary_set(roi);
  std::vector<std::int64_t> unknown_of(g.voxels(), -1);
  std::vector<std::size_t> voxel_of;
  for (std::size_t i = 0; i < g.voxels(); ++i)
    if (roi.member[i] && !boundary.member[i]) {
      unknown_of[i] = std::int64_t(voxel_of.size());
      voxel_of.push_back(i);
    }
  const std::size_t n = voxel_of.size();
  if (n == 0) throw NoInterior("lbv_solve: ROI has no interior voxels");

  const double w[3] = {1.0 / (g.spacing[0] * g.spacing[0]), 1.0 / (g.spacing[1] * g.spacing[1]),
                       1.0 / (g.spacing[2] * g.spacing[2])};
  const double diag = 2.0 * (w[0] + w[1] + w[2]);
  const std::ptrdiff_t stride[3] = {1, g.dims[0], std::ptrdiff_t(g.dims[0]) * g.dims[1]};

  // Per-unknown neighbor table: index of the adjacent unknown, or -1 when the
  // neighbor carries the zero Dirichlet value. Interior voxels never touch
  // the grid edge (edges are exterior by construction), so the +-1 index
  // moves stay in range.
  std::vector<std::array<std::int64_t, 6>> nbr(n);
  for (std::size_t u = 0; u < n; ++u) {
    std::size_t i = voxel_of[u];
    for (int d = 0; d < 3; ++d) {
      nbr[u][2 * d] = unknown_of[i - std::size_t(stride[d])];
      nbr[u][2 * d + 1] = unknown_of[i + std::size_t(stride[d])];
    }
  }

  // rhs = 7-point negative Laplacian of the total field at each interior
  // voxel; all six neighbors of an interior voxel are ROI members.
  std::vector<double> rhs(n);
  for (std::size_t u = 0; u < n; ++u) {
    std::size_t i = voxel_of[u];
    double s = diag * total_field.data[i];
    for (int d = 0; d < 3; ++d)
      s -= w[d] * (total_field.data[i - std::size_t(stride[d])] +
                   total_field.data[i + std::size_t(stride[d])]);
    rhs[u] = s;
  }

  auto matvec = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t u = 0; u < n; ++u) {
      double s = diag * x[u];
      for (int d = 0; d < 3; ++d) {
        if (nbr[u][2 * d] >= 0) s -= w[d] * x[std::size_t(nbr[u][2 * d])];
        if (nbr[u][2 * d + 1] >= 0) s -= w[d] * x[std::size_t(nbr[u][2 * d + 1])];
      }
      y[u] = s;
    }
  };
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t u = 0; u < n; ++u) s += a[u] * b[u];
    return s;
  };

  if (max_iter <= 0) max_iter = std::max(500, int(std::ceil(10.0 * std::sqrt(double(n)))));

  LbvResult out;
  out.local_field = ScalarVolume(g);
  std::vector<double> x(n, 0.0), r = rhs, p = rhs, ap(n);
  double rhs_norm = std::sqrt(dot(rhs, rhs));
  if (rhs_norm == 0.0) {
    out.converged = true;
    return out;
  }
  double rr = dot(r, r);
  int it = 0;
  for (; it < max_iter; ++it) {
    if (std::sqrt(rr) / rhs_norm <= tol) break;
    matvec(p, ap);
    double alpha = rr / dot(p, ap);
    for (std::size_t u = 0; u < n; ++u) {
      x[u] += alpha * p[u];
      r[u] -= alpha * ap[u];
    }
    double rr_new = dot(r, r);
    double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t u = 0; u < n; ++u) p[u] = r[u] + beta * p[u];
  }
  out.iterations = it;
  out.rel_residual = std::sqrt(rr) / rhs_norm;
  out.converged = out.rel_residual <= tol;
  for (std::size_t u = 0; u < n; ++u) out.local_field.data[voxel_of[u]] = x[u];
  return out;
}

// Where the residual between a boundary-value local field and the true local
// field fails to be harmonic. v is their difference on the ROI (zero
// outside); the mass of lap v should sit in a thin shell at the ROI
// boundary.
struct IncompReport {
  ScalarVolume v;
  ScalarVolume lap_v;
  double v_l2 = 0.0;
  double lap_mass_total = 0.0;                    // sum of |lap v| over the ROI
  std::vector<std::pair<int, double>> band_fraction;  // Chebyshev band k -> mass fraction
};

// Band fractions are cumulative: entry k is the share of sum_ROI |lap v|
// carried by ROI voxels within Chebyshev distance k of the ROI boundary.
// A zero-mass field reports fraction 1 for every band.
inline IncompReport analyze_incompatibility(const ScalarVolume& field_bv,
                                            const ScalarVolume& field_true, const RoiMask& roi,
                                            const std::vector<int>& bands) {
  require_same_grid(field_bv.grid, field_true.grid, "analyze_incompatibility");
  require_same_grid(field_bv.grid, roi.grid, "analyze_incompatibility");
  IncompReport rep;
  rep.v = ScalarVolume(roi.grid);
  for (std::size_t i = 0; i < rep.v.data.size(); ++i)
    rep.v.data[i] = roi.member[i] ? field_bv.data[i] - field_true.data[i] : 0.0;
  rep.lap_v = neglap_stencil(rep.v);
  rep.v_l2 = l2_norm(rep.v);
  for (std::size_t i = 0; i < rep.lap_v.data.size(); ++i)
    if (roi.member[i]) rep.lap_mass_total += std::fabs(rep.lap_v.data[i]);
  for (int k : bands) {
    double frac = 1.0;
    if (rep.lap_mass_total > 0.0) {
      RoiMask band = band_mask(roi, k);
      double m = 0.0;
      for (std::size_t i = 0; i < band.member.size(); ++i)
        if (band.member[i]) m += std::fabs(rep.lap_v.data[i]);
      frac = m / rep.lap_mass_total;
    }
    rep.band_fraction.emplace_back(k, frac);
  }
  return rep;
}

}  // namespace qsm
