#pragma once

#include <fftw3.h>

#include <complex>
#include <vector>

#include "qsm/volume.hpp"

namespace qsm::fft {

// In-place 3D DFT on an x-fastest array. Forward is unnormalized, backward
// applies 1/M. Plans are created per call with FFTW_ESTIMATE: the planner
// then picks the same algorithm every run, which keeps outputs
// bit-deterministic (FFTW_MEASURE would race candidate plans against the
// clock). Single-threaded throughout.
inline void transform(std::vector<std::complex<double>>& data, const std::array<int, 3>& dims,
                      int sign) {
  if (data.size() != std::size_t(dims[0]) * dims[1] * dims[2])
    throw QsmError("fft: data size does not match dims");
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  // FFTW's row-major convention wants the contiguous axis last.
  fftw_plan plan = fftw_plan_dft_3d(dims[2], dims[1], dims[0], p, p, sign, FFTW_ESTIMATE);
  if (!plan) throw QsmError("fft: plan creation failed");
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  if (sign == FFTW_BACKWARD) {
    const double inv = 1.0 / (double(dims[0]) * dims[1] * dims[2]);
    for (auto& z : data) z *= inv;
  }
}

inline std::vector<std::complex<double>> forward(const std::vector<double>& re,
                                                 const std::array<int, 3>& dims) {
  std::vector<std::complex<double>> z(re.size());
  for (std::size_t i = 0; i < re.size(); ++i) z[i] = {re[i], 0.0};
  transform(z, dims, FFTW_FORWARD);
  return z;
}

inline void backward(std::vector<std::complex<double>>& z, const std::array<int, 3>& dims) {
  transform(z, dims, FFTW_BACKWARD);
}

}  // namespace qsm::fft
