#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsm/volume.hpp"

namespace qsm {

// Volume container: 6-byte magic "QVOL1\n", one line of JSON metadata, then
// the raw little-endian payload, x-fastest. dtype is "f32" for scalar
// volumes and "u8" for masks.

struct BadMagic : QsmError {
  using QsmError::QsmError;
};
struct BadHeader : QsmError {
  using QsmError::QsmError;
};
struct TruncatedPayload : QsmError {
  using QsmError::QsmError;
};

namespace detail {

constexpr char kQvolMagic[6] = {'Q', 'V', 'O', 'L', '1', '\n'};

template <class T>
void store_le(std::vector<unsigned char>& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(b[sizeof(T) - 1 - i]);
  else
    out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T load_le(const unsigned char* p) {
  unsigned char b[sizeof(T)];
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = p[sizeof(T) - 1 - i];
  else
    std::memcpy(b, p, sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline std::string header_line(const GridSpec& g, const char* dtype) {
  nlohmann::ordered_json j;
  j["dims"] = {g.dims[0], g.dims[1], g.dims[2]};
  j["spacing"] = {g.spacing[0], g.spacing[1], g.spacing[2]};
  j["dtype"] = dtype;
  j["order"] = "x-fastest";
  return j.dump();
}

struct ParsedHeader {
  GridSpec grid;
  std::string dtype;
};

inline ParsedHeader open_qvol(std::ifstream& in, const std::string& path) {
  if (!in) throw QsmError("qvol: cannot open " + path);
  char magic[6];
  in.read(magic, 6);
  if (in.gcount() != 6 || std::memcmp(magic, kQvolMagic, 6) != 0)
    throw BadMagic("qvol: bad magic in " + path);
  std::string line;
  if (!std::getline(in, line) || line.size() > std::size_t(1) << 16)
    throw BadHeader("qvol: unterminated or oversized header in " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw BadHeader("qvol: header is not valid JSON in " + path);
  }
  ParsedHeader h;
  try {
    auto dims = j.at("dims");
    auto spacing = j.at("spacing");
    if (!dims.is_array() || dims.size() != 3 || !spacing.is_array() || spacing.size() != 3)
      throw BadHeader("qvol: dims/spacing must be arrays of 3 in " + path);
    std::array<int, 3> d;
    std::array<double, 3> s;
    for (int i = 0; i < 3; ++i) {
      if (!dims.at(i).is_number_integer()) throw BadHeader("qvol: dims must be integers in " + path);
      d[i] = dims.at(i).get<int>();
      s[i] = spacing.at(i).get<double>();
    }
    h.grid = GridSpec(d, s);
    h.dtype = j.at("dtype").get<std::string>();
    if (j.at("order").get<std::string>() != "x-fastest")
      throw BadHeader("qvol: unsupported sample order in " + path);
  } catch (const BadHeader&) {
    throw;
  } catch (const std::exception& e) {
    throw BadHeader("qvol: malformed header in " + path + ": " + e.what());
  }
  if (h.dtype != "f32" && h.dtype != "u8")
    throw BadHeader("qvol: unsupported dtype '" + h.dtype + "' in " + path);
  return h;
}

inline std::vector<unsigned char> read_payload(std::ifstream& in, std::size_t expected,
                                               const std::string& path) {
  std::vector<unsigned char> buf(expected);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(expected));
  if (std::size_t(in.gcount()) != expected)
    throw TruncatedPayload("qvol: payload shorter than header promises in " + path);
  char extra;
  if (in.read(&extra, 1); in.gcount() != 0)
    throw TruncatedPayload("qvol: trailing bytes after payload in " + path);
  return buf;
}

inline void write_file(const std::string& path, const std::string& header,
                       const std::vector<unsigned char>& payload) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw QsmError("qvol: cannot create " + path);
  out.write(kQvolMagic, 6);
  out.write(header.data(), std::streamsize(header.size()));
  out.put('\n');
  out.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
  if (!out) throw QsmError("qvol: write failed for " + path);
}

}  // namespace detail

// Samples are stored as float32; doubles round once on the way out.
inline void write_volume(const std::string& path, const ScalarVolume& v) {
  std::vector<unsigned char> payload;
  payload.reserve(v.data.size() * 4);
  for (double x : v.data) detail::store_le(payload, float(x));
  detail::write_file(path, detail::header_line(v.grid, "f32"), payload);
}

inline void write_mask(const std::string& path, const RoiMask& m) {
  std::vector<unsigned char> payload(m.member.begin(), m.member.end());
  detail::write_file(path, detail::header_line(m.grid, "u8"), payload);
}

inline ScalarVolume read_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  auto h = detail::open_qvol(in, path);
  if (h.dtype != "f32") throw BadHeader("qvol: expected dtype f32 in " + path);
  auto buf = detail::read_payload(in, h.grid.voxels() * 4, path);
  std::vector<double> data(h.grid.voxels());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = double(detail::load_le<float>(buf.data() + 4 * i));
  return ScalarVolume(h.grid, std::move(data));
}

inline RoiMask read_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  auto h = detail::open_qvol(in, path);
  if (h.dtype != "u8") throw BadHeader("qvol: expected dtype u8 in " + path);
  auto buf = detail::read_payload(in, h.grid.voxels(), path);
  return RoiMask(h.grid, std::vector<std::uint8_t>(buf.begin(), buf.end()));
}

}  // namespace qsm
