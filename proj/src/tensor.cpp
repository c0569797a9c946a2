// Copyright 2026 The ccbp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ccbp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ccbp/error.hpp"

namespace ccbp {

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t ShapeSize(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  Require(data_.size() == ShapeSize(shape_), ErrorCode::kShapeMismatch,
          "tensor data size " + std::to_string(data_.size()) +
              " does not match shape " + ShapeString(shape_));
}

Tensor Tensor::Reshaped(Shape shape) const {
  Tensor out = *this;
  out.Reshape(std::move(shape));
  return out;
}

void Tensor::Reshape(Shape shape) {
  Require(ShapeSize(shape) == data_.size(), ErrorCode::kShapeMismatch,
          "cannot reshape " + ShapeString(shape_) + " to " +
              ShapeString(shape));
  shape_ = std::move(shape);
}

Tensor Tensor::Slice(std::size_t index) const {
  Require(!shape_.empty() && index < shape_[0], ErrorCode::kInvalidArgument,
          "slice index out of range");
  Shape inner(shape_.begin() + 1, shape_.end());
  const std::size_t n = ShapeSize(inner);
  std::vector<double> part(data_.begin() + static_cast<std::ptrdiff_t>(index * n),
                           data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
  return Tensor(std::move(inner), std::move(part));
}

void Tensor::SetSlice(std::size_t index, const Tensor& part) {
  Require(!shape_.empty() && index < shape_[0], ErrorCode::kInvalidArgument,
          "slice index out of range");
  const std::size_t n = data_.size() / shape_[0];
  Require(part.size() == n, ErrorCode::kShapeMismatch, "slice size mismatch");
  std::copy(part.data_.begin(), part.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(index * n));
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  Require(other.size() == size(), ErrorCode::kShapeMismatch,
          "add: " + ShapeString(shape_) + " vs " + ShapeString(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  Require(other.size() == size(), ErrorCode::kShapeMismatch,
          "sub: " + ShapeString(shape_) + " vs " + ShapeString(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void Tensor::Axpy(double a, const Tensor& x) {
  Require(x.size() == size(), ErrorCode::kShapeMismatch,
          "axpy: " + ShapeString(shape_) + " vs " + ShapeString(x.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
}

double Tensor::Sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

double Tensor::Min() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double Tensor::Max() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

double Tensor::MaxAbs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::Norm2() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor Stack(std::span<const Tensor> parts) {
  Require(!parts.empty(), ErrorCode::kInvalidArgument, "stack of nothing");
  Shape shape = parts.front().shape();
  shape.insert(shape.begin(), parts.size());
  Tensor out(shape);
  for (std::size_t i = 0; i < parts.size(); ++i) out.SetSlice(i, parts[i]);
  return out;
}

double MaxRelativeError(const Tensor& a, const Tensor& b, double floor) {
  Require(a.size() == b.size(), ErrorCode::kShapeMismatch,
          "compare: " + ShapeString(a.shape()) + " vs " +
              ShapeString(b.shape()));
  const double scale = std::max(b.MaxAbs(), floor);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return worst / scale;
}

double CosineDistance(const Tensor& a, const Tensor& b) {
  Require(a.size() == b.size(), ErrorCode::kShapeMismatch,
          "cosine: size mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double na = a.Norm2();
  const double nb = b.Norm2();
  if (na == 0.0 || nb == 0.0) return (na == nb) ? 0.0 : 1.0;
  return 1.0 - dot / (na * nb);
}

}  // namespace ccbp
