#pragma once

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "qsm/volume.hpp"

namespace qsm {

namespace detail {

inline void be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back((v >> 24) & 0xFF);
  out.push_back((v >> 16) & 0xFF);
  out.push_back((v >> 8) & 0xFF);
  out.push_back(v & 0xFF);
}

inline void png_chunk(std::vector<unsigned char>& out, const char type[4],
                      const std::vector<unsigned char>& body) {
  be32(out, std::uint32_t(body.size()));
  std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), body.begin(), body.end());
  std::uint32_t crc =
      std::uint32_t(crc32(0L, out.data() + crc_start, uInt(out.size() - crc_start)));
  be32(out, crc);
}

}  // namespace detail

// 8-bit grayscale PNG. Rows run top to bottom, row 0 first; zlib level 9 with
// filter type 0 per scanline, so the byte stream is a pure function of the
// pixels.
inline void write_png_gray8(const std::string& path, int width, int height,
                            const std::vector<unsigned char>& pixels) {
  if (width < 1 || height < 1 || pixels.size() != std::size_t(width) * std::size_t(height))
    throw QsmError("write_png_gray8: bad dimensions");

  std::vector<unsigned char> raw;
  raw.reserve(std::size_t(height) * (std::size_t(width) + 1));
  for (int row = 0; row < height; ++row) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), pixels.begin() + std::size_t(row) * width,
               pixels.begin() + std::size_t(row + 1) * width);
  }
  uLongf bound = compressBound(uLong(raw.size()));
  std::vector<unsigned char> idat(bound);
  if (compress2(idat.data(), &bound, raw.data(), uLong(raw.size()), 9) != Z_OK)
    throw QsmError("write_png_gray8: deflate failed");
  idat.resize(bound);

  std::vector<unsigned char> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  std::vector<unsigned char> ihdr;
  detail::be32(ihdr, std::uint32_t(width));
  detail::be32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", idat);
  detail::png_chunk(out, "IEND", {});

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw QsmError("write_png_gray8: cannot create " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
  if (!f) throw QsmError("write_png_gray8: write failed for " + path);
}

// Extract one slice and window it to 8 bits: values clamp to [lo, hi], then
// map linearly to 0..255 with ties rounded away from zero. Slice axes:
//   axis 2 (z): width N1, height N2, pixel(col i1, row i2)
//   axis 1 (y): width N1, height N3, pixel(col i1, row i3)
//   axis 0 (x): width N2, height N3, pixel(col i2, row i3)
inline void export_slice(const std::string& path, const ScalarVolume& v, int axis, int index,
                         double lo, double hi) {
  if (axis < 0 || axis > 2) throw QsmError("export_slice: axis must be 0, 1, or 2");
  if (!(lo < hi)) throw QsmError("export_slice: window must satisfy lo < hi");
  const auto& g = v.grid;
  if (index < 0 || index >= g.dims[axis]) throw QsmError("export_slice: index out of range");

  const int uaxis = (axis == 0) ? 1 : 0;
  const int vaxis = (axis == 2) ? 1 : 2;
  const int width = g.dims[uaxis], height = g.dims[vaxis];
  std::vector<unsigned char> px(std::size_t(width) * std::size_t(height));
  for (int row = 0; row < height; ++row)
    for (int col = 0; col < width; ++col) {
      int c[3];
      c[axis] = index;
      c[uaxis] = col;
      c[vaxis] = row;
      double val = v.at(c[0], c[1], c[2]);
      double t = (std::min(std::max(val, lo), hi) - lo) / (hi - lo);
      px[std::size_t(row) * width + col] = static_cast<unsigned char>(std::llround(t * 255.0));
    }
  write_png_gray8(path, width, height, px);
}

}  // namespace qsm
