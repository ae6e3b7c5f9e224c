#include "geoagent/nn/checkpoint.hpp"

#include <algorithm>
#include <unordered_map>

#include "geoagent/errors.hpp"
#include "geoagent/raster_io.hpp"

namespace geoagent::nn {

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out = {'G', 'A', 'C', 'K'};
  le::put_u16(out, kCheckpointVersion);
  le::put_u32(out, static_cast<std::uint32_t>(ckpt.size()));
  for (const auto& e : ckpt) {
    le::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.dims.size()));
    std::size_t n = 1;
    for (int d : e.dims) {
      le::put_u32(out, static_cast<std::uint32_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    if (n != e.values.size()) throw IoError("checkpoint entry '" + e.name + "': dims do not match payload");
    for (double v : e.values) le::put_f64(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  le::Reader in(bytes);
  auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), "GACK")) throw IoError("not a GACK checkpoint");
  const auto version = in.u16();
  if (version != kCheckpointVersion) throw IoError("unsupported GACK version " + std::to_string(version));
  const auto count = in.u32();
  Checkpoint ckpt;
  ckpt.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    const auto len = in.u32();
    auto name = in.take(len);
    e.name.assign(name.begin(), name.end());
    const auto rank = in.u8();
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
      e.dims.push_back(static_cast<int>(in.u32()));
      n *= static_cast<std::size_t>(e.dims.back());
    }
    if (n * 8 > in.remaining()) throw IoError("checkpoint entry '" + e.name + "' truncated");
    e.values.resize(n);
    for (auto& v : e.values) v = in.f64();
    ckpt.push_back(std::move(e));
  }
  if (in.remaining() != 0) throw IoError("trailing bytes after GACK table");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Checkpoint snapshot(const ParameterStore& store, bool with_momentum) {
  Checkpoint ckpt;
  for (const Parameter* p : store.all()) {
    if (with_momentum) {
      ckpt.push_back({p->name + "#momentum", p->value.dims(), p->momentum});
    } else {
      ckpt.push_back({p->name, p->value.dims(), p->value.values()});
    }
  }
  return ckpt;
}

void restore(ParameterStore& store, const Checkpoint& ckpt, bool with_momentum) {
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& e : ckpt) by_name[e.name] = &e;
  for (Parameter* p : store.all()) {
    const std::string key = with_momentum ? p->name + "#momentum" : p->name;
    auto it = by_name.find(key);
    if (it == by_name.end()) throw IoError("checkpoint is missing '" + key + "'");
    if (it->second->dims != p->value.dims()) {
      throw IoError("checkpoint entry '" + key + "' has shape incompatible with " + p->value.shape_string());
    }
    if (with_momentum) {
      p->momentum = it->second->values;
    } else {
      p->value.values() = it->second->values;
    }
  }
}

}  // namespace geoagent::nn
