#include "xclr/array.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xclr/error.hpp"

namespace xclr {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Array::Array(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto e : shape_) require(e > 0, "array extents must be positive, got " + shape_string(shape_));
  require(std::isfinite(fill), "array fill value must be finite");
  values_.assign(shape_size(shape_), fill);
}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto e : shape_) require(e > 0, "array extents must be positive, got " + shape_string(shape_));
  require(shape_size(shape_) == values_.size(),
          "value count " + std::to_string(values_.size()) + " does not match shape " +
              shape_string(shape_));
  require(all_finite(), "array values must be finite");
}

Array Array::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  require(rows.size() > 0, "from_rows: need at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> v;
  v.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    require(r.size() == cols, "from_rows: ragged rows");
    v.insert(v.end(), r.begin(), r.end());
  }
  return Array({rows.size(), cols}, std::move(v));
}

bool Array::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

void Array::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Array Array::gather(std::span<const std::size_t> indices) const {
  require(rank() >= 1, "gather needs rank >= 1");
  require(!indices.empty(), "gather needs at least one index");
  Shape s = shape_;
  s[0] = indices.size();
  Array out(s);
  const std::size_t stride = stride0();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    require(indices[k] < shape_[0], "gather index out of range");
    std::copy_n(values_.data() + indices[k] * stride, stride, out.values_.data() + k * stride);
  }
  return out;
}

void ParameterSet::add(std::string name, Array value) {
  require(!contains(name), "duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const NamedArray& e) { return e.name == name; });
}

Array& ParameterSet::get(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.value;
  throw ContractError("no parameter named '" + name + "'");
}

const Array& ParameterSet::get(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw ContractError("no parameter named '" + name + "'");
}

std::size_t ParameterSet::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& e : entries_) out.add(e.name, Array(e.value.shape()));
  return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].value.shape() != other.entries_[i].value.shape()) return false;
  }
  return true;
}

void ParameterSet::add_scaled(const ParameterSet& other, double scale) {
  require(same_layout(other), "add_scaled: parameter layouts differ");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].value.values();
    auto src = other.entries_[i].value.values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
  }
}

}  // namespace xclr
