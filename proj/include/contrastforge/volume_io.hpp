// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "contrastforge/phantom.hpp"

namespace contrastforge {

// .cfv layout, all little endian:
//   8-byte magic "CFVOL\0\0\1"
//   u32 depth, u32 height, u32 width
//   u8 contrast tag, u8 alignment flag (0 registered, 1 misaligned)
//   3 x f64 rigid parameters (rotation_deg, shift_x, shift_y)
//   depth*height*width x f64 voxels
inline constexpr char kVolumeMagic[8] = {'C', 'F', 'V', 'O', 'L', '\0', '\0', '\1'};

std::vector<std::uint8_t> encode_volume(const Volume& v);
Volume decode_volume(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

void write_volume(const std::filesystem::path& path, const Volume& v);
Volume read_volume(const std::filesystem::path& path);

/// 16-bit binary PGM (P5, big-endian samples) of one slice, [0,1] -> [0,65535].
void write_pgm16(const std::filesystem::path& path, std::span<const double> slice, std::size_t height,
                 std::size_t width);

// Little-endian primitives shared by the binary formats.
namespace le {
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::span<const std::uint8_t> raw(std::size_t n);
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string origin_;
};
}  // namespace le

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);

}  // namespace contrastforge
