#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace xclr {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Rank 2 arrays double as matrices
// (rows x cols); rank 3 holds time-series batches (sample, channel, time).
class Array {
 public:
  Array() = default;
  explicit Array(Shape shape, double fill = 0.0);
  // Throws ContractError if the value count does not match the shape or any value is non-finite.
  Array(Shape shape, std::vector<double> values);

  static Array matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Array({rows, cols}, fill);
  }
  static Array from_rows(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * shape_[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> row(std::size_t i) { return {values_.data() + i * stride0(), stride0()}; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * stride0(), stride0()};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool all_finite() const;
  void fill(double v);
  // Copies the listed leading-axis slices into a new array.
  Array gather(std::span<const std::size_t> indices) const;

  bool operator==(const Array& other) const = default;

 private:
  std::size_t stride0() const { return shape_.empty() ? 0 : values_.size() / shape_[0]; }

  Shape shape_;
  std::vector<double> values_;
};

struct NamedArray {
  std::string name;
  Array value;

  bool operator==(const NamedArray&) const = default;
};

// Ordered collection of named parameter arrays (weights and biases). Names are unique.
class ParameterSet {
 public:
  ParameterSet() = default;

  void add(std::string name, Array value);
  bool contains(const std::string& name) const;
  Array& get(const std::string& name);
  const Array& get(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t total_size() const;
  NamedArray& operator[](std::size_t i) { return entries_[i]; }
  const NamedArray& operator[](std::size_t i) const { return entries_[i]; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Same names and shapes, values zeroed.
  ParameterSet zeros_like() const;
  bool same_layout(const ParameterSet& other) const;
  void add_scaled(const ParameterSet& other, double scale);

  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<NamedArray> entries_;
};

}  // namespace xclr
