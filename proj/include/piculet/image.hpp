#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>

#include "piculet/digest.hpp"
#include "piculet/error.hpp"

namespace piculet {

enum class ImageFormat { unknown, png, jpeg, gif, bmp, webp, tiff };

inline ImageFormat sniff_image_format(std::span<const std::uint8_t> b) {
  auto starts = [&](std::initializer_list<int> magic, std::size_t offset = 0) {
    if (b.size() < offset + magic.size()) return false;
    return std::equal(magic.begin(), magic.end(), b.begin() + static_cast<std::ptrdiff_t>(offset),
                      [](int m, std::uint8_t v) { return static_cast<std::uint8_t>(m) == v; });
  };
  if (starts({0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A})) return ImageFormat::png;
  if (starts({0xFF, 0xD8, 0xFF})) return ImageFormat::jpeg;
  if (starts({'G', 'I', 'F', '8'})) return ImageFormat::gif;
  if (starts({'B', 'M'}) && b.size() >= 26) return ImageFormat::bmp;
  if (starts({'R', 'I', 'F', 'F'}) && starts({'W', 'E', 'B', 'P'}, 8)) return ImageFormat::webp;
  if (starts({'I', 'I', 0x2A, 0x00}) || starts({'M', 'M', 0x00, 0x2A})) return ImageFormat::tiff;
  return ImageFormat::unknown;
}

inline void require_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw input_error("image is empty");
  if (sniff_image_format(bytes) == ImageFormat::unknown)
    throw input_error("input is not a recognized image (png/jpeg/gif/bmp/webp/tiff)");
}

inline Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace piculet
