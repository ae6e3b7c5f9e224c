#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "geoagent/tiling.hpp"

namespace geoagent {

// Raw tensor file: "GATN", u16 version, u8 dtype, u8 ndim, u32 dims, then a
// row-major little-endian payload. Every field is little-endian.
enum class DType : std::uint8_t { U8 = 0, I32 = 1, F32 = 2, F64 = 3 };

inline constexpr std::uint16_t kTensorFileVersion = 1;

struct TensorFile {
  DType dtype = DType::F64;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;  // already little-endian
};

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file);
TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile read_tensor_file(const std::filesystem::path& path);

/// Raster as f64 with dims [channels, height, width].
void write_raster(const std::filesystem::path& path, const Raster& raster);
Raster read_raster(const std::filesystem::path& path);

/// LabelMask as u8 with dims [height, width]; the class count is not stored.
void write_labels(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_labels(const std::filesystem::path& path, int classes);

/// Binary PNM: P5 for one channel, P6 for three; values quantized to 8 bits.
void write_pnm(const std::filesystem::path& path, const Raster& raster);
Raster read_pnm(const std::filesystem::path& path);

/// Whole-file helpers; errors name the path.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Label map dispatch by extension: .pgm/.ppm via PNM (class index stored
/// as the gray level), anything else via the tensor format.
LabelMask read_label_map(const std::filesystem::path& path, int classes);
void write_label_map(const std::filesystem::path& path, const LabelMask& mask);

// Little-endian primitives shared by the tensor and checkpoint formats.
namespace le {
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::span<const std::uint8_t> take(std::size_t n);
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};
}  // namespace le

}  // namespace geoagent
