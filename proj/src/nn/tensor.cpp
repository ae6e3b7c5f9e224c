#include "geoagent/nn/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>

#include "geoagent/errors.hpp"

namespace geoagent::nn {

Tensor::Tensor(std::vector<int> dims, double fill) : dims_(std::move(dims)) {
  std::size_t n = 1;
  for (int d : dims_) {
    if (d < 0) throw DimensionError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  values_.assign(n, fill);
}

std::vector<double>& Tensor::grad() {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (grad_.size() != values_.size()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(values_.size(), 0.0); }

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

Parameter& ParameterStore::add(const std::string& name, std::vector<int> dims) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor(std::move(dims));
  p->momentum.assign(p->value.size(), 0.0);
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

std::vector<Parameter*> ParameterStore::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->value.zero_grad();
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

std::uint64_t checksum(const ParameterStore& store) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter* p : store.all()) {
    for (double v : p->value.values()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xff;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace geoagent::nn
