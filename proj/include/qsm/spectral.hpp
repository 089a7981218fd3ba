#pragma once

#include <cmath>
#include <numbers>

#include "qsm/fft.hpp"
#include "qsm/volume.hpp"

namespace qsm {

// The zero-frequency entry of the symbol vanishes and the system needs a rule
// for it: reject, or pin that Fourier coefficient to zero.
struct SingularSymbol : QsmError {
  using QsmError::QsmError;
};

// Real multiplier on the DFT lattice of a grid, stored x-fastest like volumes.
struct SpectralSymbol {
  GridSpec grid;
  std::vector<double> values;

  SpectralSymbol() = default;
  explicit SpectralSymbol(const GridSpec& g) : grid(g), values(g.voxels(), 0.0) {}
};

// Signed DFT index: j in [0,N) maps to k in [-N/2, N/2).
inline int signed_freq(int j, int n) { return (j < (n + 1) / 2) ? j : j - n; }

namespace detail {

template <class F>
SpectralSymbol make_symbol(const GridSpec& g, F&& f) {
  SpectralSymbol s(g);
  std::size_t idx = 0;
  for (int j3 = 0; j3 < g.dims[2]; ++j3) {
    double xi3 = double(signed_freq(j3, g.dims[2])) / (g.dims[2] * g.spacing[2]);
    for (int j2 = 0; j2 < g.dims[1]; ++j2) {
      double xi2 = double(signed_freq(j2, g.dims[1])) / (g.dims[1] * g.spacing[1]);
      for (int j1 = 0; j1 < g.dims[0]; ++j1, ++idx) {
        double xi1 = double(signed_freq(j1, g.dims[0])) / (g.dims[0] * g.spacing[0]);
        s.values[idx] = f(xi1, xi2, xi3, j1, j2, j3);
      }
    }
  }
  return s;
}

}  // namespace detail

// Unit dipole kernel in k-space, 1/3 - xi3^2/|xi|^2, zero at the origin.
// Values lie in [-2/3, 1/3] and vanish on the magic-angle cone
// xi1^2 + xi2^2 - 2 xi3^2 = 0.
inline SpectralSymbol dipole_symbol(const GridSpec& g) {
  return detail::make_symbol(g, [](double x1, double x2, double x3, int, int, int) {
    double r2 = x1 * x1 + x2 * x2 + x3 * x3;
    if (r2 == 0.0) return 0.0;
    return 1.0 / 3.0 - x3 * x3 / r2;
  });
}

// Symbol of the continuous negative Laplacian, |2 pi xi|^2.
inline SpectralSymbol neglap_continuous_symbol(const GridSpec& g) {
  const double c = 4.0 * std::numbers::pi * std::numbers::pi;
  return detail::make_symbol(g, [c](double x1, double x2, double x3, int, int, int) {
    return c * (x1 * x1 + x2 * x2 + x3 * x3);
  });
}

// Symbol of the 7-point negative Laplacian stencil on the periodic grid:
// sum_i (2 - 2 cos(2 pi k_i / N_i)) / h_i^2.
inline SpectralSymbol neglap_discrete_symbol(const GridSpec& g) {
  const double tau = 2.0 * std::numbers::pi;
  return detail::make_symbol(g, [&g, tau](double, double, double, int j1, int j2, int j3) {
    double s = 0.0;
    int j[3] = {j1, j2, j3};
    for (int i = 0; i < 3; ++i)
      s += (2.0 - 2.0 * std::cos(tau * j[i] / g.dims[i])) / (g.spacing[i] * g.spacing[i]);
    return s;
  });
}

// Symbol of (-Laplacian) composed with the dipole: |2 pi xi|^2 / 3 - (2 pi xi3)^2.
// Bounded on all of k-space, so the product survives where the dipole's own
// division by |xi|^2 would be ill-conditioned.
inline SpectralSymbol pdiff_symbol(const GridSpec& g) {
  const double c = 4.0 * std::numbers::pi * std::numbers::pi;
  return detail::make_symbol(g, [c](double x1, double x2, double x3, int, int, int) {
    return c * ((x1 * x1 + x2 * x2 + x3 * x3) / 3.0 - x3 * x3);
  });
}

// How apply_symbol treats the periodic wraparound of the grid.
struct ConvPolicy {
  enum class Mode { circular, zero_padded };
  Mode mode = Mode::circular;
  int pad_factor = 2;

  static ConvPolicy circular() { return {Mode::circular, 2}; }
  static ConvPolicy zero_padded(int factor = 2) {
    if (factor < 2) throw QsmError("ConvPolicy: pad factor must be >= 2");
    return {Mode::zero_padded, factor};
  }
};

namespace detail {

// F^-1 diag(sym) F, real in/out. Every symbol here is even on the DFT lattice
// (Nyquist rows pair with themselves), so the result is real up to roundoff;
// anything larger means a broken symbol and is treated as a bug.
inline ScalarVolume apply_symbol_circular(const SpectralSymbol& sym, const ScalarVolume& v) {
  require_same_grid(sym.grid, v.grid, "apply_symbol");
  auto z = fft::forward(v.data, v.grid.dims);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] *= sym.values[i];
  fft::backward(z, v.grid.dims);
  const double tol = 1e-10 * linf_norm(v);
  ScalarVolume out(v.grid);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (std::fabs(z[i].imag()) > tol)
      throw QsmError("apply_symbol: imaginary residue exceeds tolerance");
    out.data[i] = z[i].real();
  }
  return out;
}

}  // namespace detail

// Apply a spectral multiplier to a volume. Circular mode needs the symbol on
// the volume's grid. Zero-padded mode embeds the volume corner-first in a
// grid enlarged pad_factor times per axis (same spacing), applies the symbol
// there (it must be built on that enlarged grid), and crops back; sources
// then never wrap onto themselves, which is the free-space convolution used
// on the simulation side.
inline ScalarVolume apply_symbol(const SpectralSymbol& sym, const ScalarVolume& v,
                                 const ConvPolicy& policy = ConvPolicy::circular()) {
  if (policy.mode == ConvPolicy::Mode::circular) return detail::apply_symbol_circular(sym, v);
  GridSpec padded({v.grid.dims[0] * policy.pad_factor, v.grid.dims[1] * policy.pad_factor,
                   v.grid.dims[2] * policy.pad_factor},
                  v.grid.spacing);
  require_same_grid(sym.grid, padded, "apply_symbol(zero_padded): symbol grid");
  ScalarVolume big = detail::apply_symbol_circular(sym, pad_zero(v, policy.pad_factor));
  return crop_corner(big, v.grid);
}

// 7-point negative Laplacian applied directly in the voxel domain with
// periodic wrap. Matches apply_symbol with neglap_discrete_symbol to
// roundoff; kept as the authoritative spatial form.
inline ScalarVolume neglap_stencil(const ScalarVolume& v) {
  const auto& g = v.grid;
  ScalarVolume out(g);
  const double w1 = 1.0 / (g.spacing[0] * g.spacing[0]);
  const double w2 = 1.0 / (g.spacing[1] * g.spacing[1]);
  const double w3 = 1.0 / (g.spacing[2] * g.spacing[2]);
  for (int i3 = 0; i3 < g.dims[2]; ++i3) {
    int i3m = (i3 == 0) ? g.dims[2] - 1 : i3 - 1;
    int i3p = (i3 == g.dims[2] - 1) ? 0 : i3 + 1;
    for (int i2 = 0; i2 < g.dims[1]; ++i2) {
      int i2m = (i2 == 0) ? g.dims[1] - 1 : i2 - 1;
      int i2p = (i2 == g.dims[1] - 1) ? 0 : i2 + 1;
      for (int i1 = 0; i1 < g.dims[0]; ++i1) {
        int i1m = (i1 == 0) ? g.dims[0] - 1 : i1 - 1;
        int i1p = (i1 == g.dims[0] - 1) ? 0 : i1 + 1;
        double c = v.data[g.index(i1, i2, i3)];
        out.data[g.index(i1, i2, i3)] =
            w1 * (2.0 * c - v.data[g.index(i1m, i2, i3)] - v.data[g.index(i1p, i2, i3)]) +
            w2 * (2.0 * c - v.data[g.index(i1, i2m, i3)] - v.data[g.index(i1, i2p, i3)]) +
            w3 * (2.0 * c - v.data[g.index(i1, i2, i3m)] - v.data[g.index(i1, i2, i3p)]);
      }
    }
  }
  return out;
}

// Zero-frequency rule for solve_symbol when sym(0) + shift == 0.
enum class ZeroFreqRule { reject, zero };

// Solve (sym + shift) x = rhs in k-space: x_hat = rhs_hat / (sym + shift).
// A vanishing denominator at the origin is either rejected or resolved by
// pinning that coefficient to zero (the solution with zero mean); a vanishing
// denominator anywhere else is always rejected.
inline ScalarVolume solve_symbol(const SpectralSymbol& sym, const ScalarVolume& rhs, double shift,
                                 ZeroFreqRule zero_rule = ZeroFreqRule::reject) {
  require_same_grid(sym.grid, rhs.grid, "solve_symbol");
  auto z = fft::forward(rhs.data, rhs.grid.dims);
  for (std::size_t i = 0; i < z.size(); ++i) {
    double den = sym.values[i] + shift;
    if (den == 0.0) {
      if (i == 0 && zero_rule == ZeroFreqRule::zero) {
        z[i] = {0.0, 0.0};
        continue;
      }
      throw SingularSymbol("solve_symbol: vanishing denominator on the lattice");
    }
    z[i] /= den;
  }
  fft::backward(z, rhs.grid.dims);
  ScalarVolume out(rhs.grid);
  double out_linf = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.data[i] = z[i].real();
    out_linf = std::max(out_linf, std::fabs(out.data[i]));
  }
  // An amplifying solve scales roundoff with the solution, so bound the
  // residue against whichever of rhs/solution is larger.
  const double tol = 1e-10 * std::max(linf_norm(rhs), out_linf);
  for (std::size_t i = 0; i < z.size(); ++i)
    if (std::fabs(z[i].imag()) > tol)
      throw QsmError("solve_symbol: imaginary residue exceeds tolerance");
  return out;
}

}  // namespace qsm
