#pragma once

// Minimal PNG subset codec over zlib: 8-bit RGB/RGBA/gray, non-interlaced.
// Enough for the synthetic corpora and box-overlay rendering this toolkit
// deals in; writes are byte-deterministic for identical rasters.

#include <zlib.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "msg/errors.hpp"

namespace msg::png {

namespace fs = std::filesystem;

struct Raster {
  int width = 0;
  int height = 0;
  int channels = 3;  // 1, 3, or 4
  std::vector<uint8_t> data;  // row-major, tightly packed

  static Raster filled(int w, int h, std::array<uint8_t, 3> rgb) {
    Raster r;
    r.width = w;
    r.height = h;
    r.channels = 3;
    r.data.resize(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < r.data.size(); i += 3) {
      r.data[i] = rgb[0];
      r.data[i + 1] = rgb[1];
      r.data[i + 2] = rgb[2];
    }
    return r;
  }

  uint8_t* pixel(int x, int y) {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }
  const uint8_t* pixel(int x, int y) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * channels;
  }

  void set_pixel(int x, int y, std::array<uint8_t, 3> rgb) {
    uint8_t* p = pixel(x, y);
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
    if (channels == 4) p[3] = 255;
  }

  std::array<uint8_t, 3> rgb_at(int x, int y) const {
    const uint8_t* p = pixel(x, y);
    if (channels == 1) return {p[0], p[0], p[0]};
    return {p[0], p[1], p[2]};
  }

  void fill_rect(int x0, int y0, int x1, int y1, std::array<uint8_t, 3> rgb) {
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) set_pixel(x, y, rgb);
  }

  bool operator==(const Raster& o) const {
    return width == o.width && height == o.height && channels == o.channels && data == o.data;
  }
};

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

inline uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

inline void write_chunk(std::vector<uint8_t>& out, const char type[4],
                        const std::vector<uint8_t>& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  uint32_t crc = static_cast<uint32_t>(
      ::crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start)));
  put_u32(out, crc);
}

inline const std::array<uint8_t, 8>& signature() {
  static const std::array<uint8_t, 8> sig = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return sig;
}

inline int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

inline std::vector<uint8_t> encode(const Raster& img) {
  if (img.width <= 0 || img.height <= 0 ||
      (img.channels != 1 && img.channels != 3 && img.channels != 4))
    throw IoError("cannot encode raster: bad dimensions or channel count");

  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  std::vector<uint8_t> raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter type 0 per row
    const uint8_t* row = img.data.data() + y * stride;
    raw.insert(raw.end(), row, row + stride);
  }

  uLongf comp_len = ::compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (::compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("zlib compression failed");
  comp.resize(comp_len);

  std::vector<uint8_t> ihdr;
  detail::put_u32(ihdr, static_cast<uint32_t>(img.width));
  detail::put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : (img.channels == 3 ? 2 : 6));
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace

  std::vector<uint8_t> out(detail::signature().begin(), detail::signature().end());
  detail::write_chunk(out, "IHDR", ihdr);
  detail::write_chunk(out, "IDAT", comp);
  detail::write_chunk(out, "IEND", {});
  return out;
}

inline void write_file(const fs::path& path, const Raster& img) {
  auto bytes = encode(img);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, path);
}

inline std::vector<uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                              std::istreambuf_iterator<char>());
}

inline Raster decode(const std::vector<uint8_t>& bytes) {
  const auto& sig = detail::signature();
  if (bytes.size() < 8 || !std::equal(sig.begin(), sig.end(), bytes.begin()))
    throw IoError("not a PNG file");

  Raster img;
  int color_type = -1;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = detail::get_u32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) throw IoError("truncated PNG chunk");
    std::string type(reinterpret_cast<const char*>(bytes.data() + pos + 4), 4);
    const uint8_t* payload = bytes.data() + pos + 8;
    if (type == "IHDR") {
      if (len != 13) throw IoError("bad IHDR");
      img.width = static_cast<int>(detail::get_u32(payload));
      img.height = static_cast<int>(detail::get_u32(payload + 4));
      int bit_depth = payload[8];
      color_type = payload[9];
      int interlace = payload[12];
      if (bit_depth != 8) throw IoError("unsupported PNG bit depth (only 8 supported)");
      if (interlace != 0) throw IoError("interlaced PNG not supported");
      if (color_type == 0) img.channels = 1;
      else if (color_type == 2) img.channels = 3;
      else if (color_type == 6) img.channels = 4;
      else throw IoError("unsupported PNG color type " + std::to_string(color_type));
    } else if (type == "IDAT") {
      idat.insert(idat.end(), payload, payload + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (color_type < 0 || idat.empty()) throw IoError("PNG missing IHDR or IDAT");

  const size_t stride = static_cast<size_t>(img.width) * img.channels;
  uLongf raw_len = static_cast<uLongf>((stride + 1) * img.height);
  std::vector<uint8_t> raw(raw_len);
  if (::uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != (stride + 1) * static_cast<size_t>(img.height))
    throw IoError("PNG inflate failed");

  img.data.assign(stride * img.height, 0);
  const int bpp = img.channels;
  for (int y = 0; y < img.height; ++y) {
    const uint8_t filter = raw[y * (stride + 1)];
    const uint8_t* src = raw.data() + y * (stride + 1) + 1;
    uint8_t* dst = img.data.data() + y * stride;
    const uint8_t* prev = y > 0 ? img.data.data() + (y - 1) * stride : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
      int b = prev ? prev[x] : 0;
      int c = (prev && x >= static_cast<size_t>(bpp)) ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default: throw IoError("unknown PNG filter type");
      }
      dst[x] = static_cast<uint8_t>(v & 0xff);
    }
  }
  return img;
}

inline Raster read_file(const fs::path& path) { return decode(read_bytes(path)); }

// Width/height from the IHDR chunk without decoding pixel data.
inline std::pair<int, int> probe_dimensions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<uint8_t, 33> head{};
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  if (in.gcount() < 33) throw IoError(path.string() + ": too short to be a PNG");
  const auto& sig = detail::signature();
  if (!std::equal(sig.begin(), sig.end(), head.begin()))
    throw IoError(path.string() + ": not a PNG file");
  if (std::memcmp(head.data() + 12, "IHDR", 4) != 0)
    throw IoError(path.string() + ": first chunk is not IHDR");
  int w = static_cast<int>(detail::get_u32(head.data() + 16));
  int h = static_cast<int>(detail::get_u32(head.data() + 20));
  return {w, h};
}

}  // namespace msg::png
