#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

namespace geoagent::nn {

/// Dense row-major f64 array with a same-shape gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> dims, double fill = 0.0);

  const std::vector<int>& dims() const { return dims_; }
  int dim(std::size_t i) const { return dims_[i]; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return values_.size(); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  /// Gradient buffer; allocated (zeroed) on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // (channel, row, col) access for rank-3 feature maps.
  double& at(int c, int y, int x) { return values_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x]; }
  double at(int c, int y, int x) const {
    return values_[(static_cast<std::size_t>(c) * dims_[1] + y) * dims_[2] + x];
  }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  std::string shape_string() const;

 private:
  std::vector<int> dims_;
  std::vector<double> values_;
  mutable std::vector<double> grad_;
};

/// A named trainable tensor plus its momentum buffer.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> momentum;
};

/// Owns the parameters of one network. Addresses stay stable for the
/// lifetime of the store, so layers keep plain pointers into it.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  /// Throws ConfigError if the name is already taken.
  Parameter& add(const std::string& name, std::vector<int> dims);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;

  void zero_grad();
  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// FNV-1a over the raw bits of every parameter value, in store order.
std::uint64_t checksum(const ParameterStore& store);

}  // namespace geoagent::nn
