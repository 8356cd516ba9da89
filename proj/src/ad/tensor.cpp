#include "styleforge/ad/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "styleforge/common/errors.hpp"

namespace styleforge::ad {

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

std::size_t ParameterSet::add(Parameter p) {
  if (contains(p.id)) throw ConfigError("duplicate parameter id '" + p.id + "'");
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].id == id) return i;
  throw ConfigError("no parameter with id '" + id + "'");
}

bool ParameterSet::contains(const std::string& id) const noexcept {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.id == id; });
}

void ParameterSet::set_trainable(bool trainable) {
  for (auto& p : params_) p.trainable = trainable;
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Gradients zero_gradients(const ParameterSet& params) {
  Gradients g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.value.shape());
  return g;
}

void add_into(Gradients& dst, const Gradients& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto d = dst[i].data();
    auto s = src[i].data();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
  }
}

}  // namespace styleforge::ad
