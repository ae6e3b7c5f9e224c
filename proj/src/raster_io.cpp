#include "geoagent/raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "geoagent/errors.hpp"

namespace geoagent {

namespace le {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::span<const std::uint8_t> Reader::take(std::size_t n) {
  if (remaining() < n) throw IoError("truncated binary data");
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t Reader::u8() { return take(1)[0]; }

std::uint16_t Reader::u16() {
  auto s = take(2);
  return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
}

std::uint32_t Reader::u32() {
  auto s = take(4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | s[i];
  return v;
}

std::uint64_t Reader::u64() {
  auto s = take(8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | s[i];
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

}  // namespace le

namespace {

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::U8: return 1;
    case DType::I32: return 4;
    case DType::F32: return 4;
    case DType::F64: return 8;
  }
  throw IoError("unknown dtype code");
}

}  // namespace

std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file) {
  std::size_t count = 1;
  for (auto d : file.dims) count *= d;
  if (file.dims.size() > 255) throw IoError("tensor file: too many dimensions");
  if (count * dtype_size(file.dtype) != file.payload.size()) {
    throw IoError("tensor file: payload size does not match dims");
  }
  std::vector<std::uint8_t> out = {'G', 'A', 'T', 'N'};
  le::put_u16(out, kTensorFileVersion);
  out.push_back(static_cast<std::uint8_t>(file.dtype));
  out.push_back(static_cast<std::uint8_t>(file.dims.size()));
  for (auto d : file.dims) le::put_u32(out, d);
  out.insert(out.end(), file.payload.begin(), file.payload.end());
  return out;
}

TensorFile decode_tensor_file(std::span<const std::uint8_t> bytes) {
  le::Reader in(bytes);
  auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), "GATN")) throw IoError("not a GATN tensor file");
  const auto version = in.u16();
  if (version != kTensorFileVersion) {
    throw IoError("unsupported GATN version " + std::to_string(version));
  }
  TensorFile file;
  const auto code = in.u8();
  if (code > 3) throw IoError("unknown dtype code " + std::to_string(code));
  file.dtype = static_cast<DType>(code);
  const auto ndim = in.u8();
  std::size_t count = 1;
  for (int i = 0; i < ndim; ++i) {
    file.dims.push_back(in.u32());
    count *= file.dims.back();
  }
  auto payload = in.take(count * dtype_size(file.dtype));
  if (in.remaining() != 0) throw IoError("trailing bytes after GATN payload");
  file.payload.assign(payload.begin(), payload.end());
  return file;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  write_file_bytes(tmp, bytes);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  write_file_bytes(path, encode_tensor_file(file));
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  try {
    return decode_tensor_file(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_raster(const std::filesystem::path& path, const Raster& raster) {
  TensorFile f;
  f.dtype = DType::F64;
  f.dims = {static_cast<std::uint32_t>(raster.channels), static_cast<std::uint32_t>(raster.height),
            static_cast<std::uint32_t>(raster.width)};
  f.payload.reserve(raster.data.size() * 8);
  for (double v : raster.data) le::put_f64(f.payload, v);
  write_tensor_file(path, f);
}

Raster read_raster(const std::filesystem::path& path) {
  const TensorFile f = read_tensor_file(path);
  if (f.dtype != DType::F64 || f.dims.size() != 3) {
    throw IoError(path.string() + ": expected f64 tensor with dims [C,H,W]");
  }
  Raster r(static_cast<int>(f.dims[0]), static_cast<int>(f.dims[1]), static_cast<int>(f.dims[2]));
  le::Reader in(f.payload);
  for (auto& v : r.data) {
    v = in.f64();
    if (!std::isfinite(v)) throw IoError(path.string() + ": non-finite pixel value");
  }
  return r;
}

void write_labels(const std::filesystem::path& path, const LabelMask& mask) {
  TensorFile f;
  f.dtype = DType::U8;
  f.dims = {static_cast<std::uint32_t>(mask.height), static_cast<std::uint32_t>(mask.width)};
  f.payload = mask.data;
  write_tensor_file(path, f);
}

LabelMask read_labels(const std::filesystem::path& path, int classes) {
  const TensorFile f = read_tensor_file(path);
  if (f.dtype != DType::U8 || f.dims.size() != 2) {
    throw IoError(path.string() + ": expected u8 tensor with dims [H,W]");
  }
  LabelMask m(static_cast<int>(f.dims[0]), static_cast<int>(f.dims[1]), classes);
  m.data = f.payload;
  for (auto v : m.data) {
    if (v >= classes) throw IoError(path.string() + ": label value out of class range");
  }
  return m;
}

void write_pnm(const std::filesystem::path& path, const Raster& raster) {
  if (raster.channels != 1 && raster.channels != 3) {
    throw IoError(path.string() + ": PNM supports 1 or 3 channels, got " +
                  std::to_string(raster.channels));
  }
  std::string header = std::string(raster.channels == 1 ? "P5" : "P6") + "\n" +
                       std::to_string(raster.width) + " " + std::to_string(raster.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + raster.data.size());
  for (int r = 0; r < raster.height; ++r) {
    for (int c = 0; c < raster.width; ++c) {
      for (int ch = 0; ch < raster.channels; ++ch) {
        const double v = std::clamp(raster.at(ch, r, c), 0.0, 1.0);
        bytes.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
      }
    }
  }
  write_file_bytes(path, bytes);
}

Raster read_pnm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < bytes.size()) {
      const char ch = static_cast<char>(bytes[pos]);
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        ++pos;
      } else {
        t.push_back(ch);
        ++pos;
      }
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P5" && magic != "P6") throw IoError(path.string() + ": not a binary PNM file");
  int w = 0;
  int h = 0;
  int maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PNM header");
  }
  if (maxval != 255 || w <= 0 || h <= 0) throw IoError(path.string() + ": unsupported PNM header");
  ++pos;  // single whitespace before the raster
  const int channels = magic == "P5" ? 1 : 3;
  if (bytes.size() - pos < static_cast<std::size_t>(w) * h * channels) {
    throw IoError(path.string() + ": truncated PNM data");
  }
  Raster r(channels, h, w);
  for (int row = 0; row < h; ++row) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < channels; ++ch) r.at(ch, row, c) = bytes[pos++] / 255.0;
    }
  }
  return r;
}

LabelMask read_label_map(const std::filesystem::path& path, int classes) {
  const auto ext = path.extension().string();
  if (ext == ".pgm" || ext == ".ppm") {
    const Raster r = read_pnm(path);
    LabelMask m(r.height, r.width, classes);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      const long v = std::lround(r.data[i] * 255.0);
      if (v < 0 || v >= classes) throw IoError(path.string() + ": label value out of class range");
      m.data[i] = static_cast<std::uint8_t>(v);
    }
    return m;
  }
  return read_labels(path, classes);
}

void write_label_map(const std::filesystem::path& path, const LabelMask& mask) {
  const auto ext = path.extension().string();
  if (ext == ".pgm") {
    Raster r(1, mask.height, mask.width);
    for (std::size_t i = 0; i < mask.data.size(); ++i) r.data[i] = mask.data[i] / 255.0;
    write_pnm(path, r);
    return;
  }
  write_labels(path, mask);
}

}  // namespace geoagent
