#include "devgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "devgan/errors.hpp"

namespace devgan {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_to_string(shape_));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  return shape_[axis];
}

float& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
float Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), std::move(data_));
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin >= end || end > shape_[0])
    throw ShapeError("row slice [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for shape " +
                     shape_to_string(shape_));
  const std::size_t stride = data_.size() / shape_[0];
  Shape out_shape = shape_;
  out_shape[0] = end - begin;
  return Tensor(std::move(out_shape),
                std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                   data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1))
    throw ShapeError("concat_rows: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  Shape shape = a.shape();
  shape[0] += b.shape()[0];
  std::vector<float> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor transpose(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("transpose expects a matrix, got " + shape_to_string(m.shape()));
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor out({cols, rows});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = m[i * cols + j];
  return out;
}

}  // namespace devgan
