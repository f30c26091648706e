// SPDX-License-Identifier: Apache-2.0
#include "contrastforge/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "contrastforge/errors.hpp"

namespace contrastforge {

namespace le {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::span<const std::uint8_t> Reader::raw(std::size_t n) {
  if (bytes_.size() - pos_ < n) throw IoError(origin_ + ": truncated file");
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t Reader::u8() { return raw(1)[0]; }

std::uint32_t Reader::u32() {
  auto b = raw(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  auto b = raw(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

}  // namespace le

std::vector<std::uint8_t> encode_volume(const Volume& v) {
  if (v.voxels.size() != v.depth * v.height * v.width) throw UsageError("encode_volume: inconsistent dims");
  std::vector<std::uint8_t> out(std::begin(kVolumeMagic), std::end(kVolumeMagic));
  out.reserve(8 + 12 + 2 + 24 + 8 * v.voxels.size());
  le::put_u32(out, static_cast<std::uint32_t>(v.depth));
  le::put_u32(out, static_cast<std::uint32_t>(v.height));
  le::put_u32(out, static_cast<std::uint32_t>(v.width));
  out.push_back(static_cast<std::uint8_t>(v.contrast));
  out.push_back(v.misaligned ? 1 : 0);
  le::put_f64(out, v.rigid.rotation_deg);
  le::put_f64(out, v.rigid.shift_x);
  le::put_f64(out, v.rigid.shift_y);
  for (double s : v.voxels) le::put_f64(out, s);
  return out;
}

Volume decode_volume(std::span<const std::uint8_t> bytes, const std::string& origin) {
  le::Reader in(bytes, origin);
  auto magic = in.raw(sizeof(kVolumeMagic));
  if (!std::equal(magic.begin(), magic.end(), std::begin(kVolumeMagic))) {
    throw IoError(origin + ": not a .cfv volume (bad magic or version)");
  }
  Volume v;
  v.depth = in.u32();
  v.height = in.u32();
  v.width = in.u32();
  const std::uint8_t tag = in.u8();
  if (tag > 2) throw IoError(origin + ": unknown contrast tag " + std::to_string(tag));
  v.contrast = static_cast<Contrast>(tag);
  const std::uint8_t flag = in.u8();
  if (flag > 1) throw IoError(origin + ": unknown alignment flag " + std::to_string(flag));
  v.misaligned = flag == 1;
  v.rigid.rotation_deg = in.f64();
  v.rigid.shift_x = in.f64();
  v.rigid.shift_y = in.f64();
  const std::size_t n = v.depth * v.height * v.width;
  if (n == 0) throw IoError(origin + ": empty volume");
  v.voxels.resize(n);
  for (double& s : v.voxels) s = in.f64();
  if (!in.done()) throw IoError(origin + ": trailing bytes after voxel data");
  return v;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": " + ec.message());
}

void write_file_text(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_volume(const std::filesystem::path& path, const Volume& v) { write_file_bytes(path, encode_volume(v)); }

Volume read_volume(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_volume(bytes, path.string());
}

void write_pgm16(const std::filesystem::path& path, std::span<const double> slice, std::size_t height,
                 std::size_t width) {
  if (slice.size() != height * width) throw UsageError("write_pgm16: slice size mismatch");
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : slice) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    out.push_back(static_cast<std::uint8_t>(q >> 8));
    out.push_back(static_cast<std::uint8_t>(q & 0xFF));
  }
  write_file_bytes(path, out);
}

}  // namespace contrastforge
