#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace styleforge::ad {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape) noexcept;

// Dense row-major double tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(double v);
  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

struct Parameter {
  std::string id;
  Tensor value;
  bool trainable = true;
};

// Ordered parameter collection; ids are unique.
class ParameterSet {
 public:
  std::size_t add(Parameter p);
  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_.at(i); }
  const Parameter& operator[](std::size_t i) const { return params_.at(i); }
  std::size_t index_of(const std::string& id) const;
  bool contains(const std::string& id) const noexcept;
  void set_trainable(bool trainable);
  std::size_t scalar_count() const noexcept;

  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }
  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

// One gradient tensor per parameter, index-aligned with a ParameterSet.
using Gradients = std::vector<Tensor>;
Gradients zero_gradients(const ParameterSet& params);
void add_into(Gradients& dst, const Gradients& src);

}  // namespace styleforge::ad
