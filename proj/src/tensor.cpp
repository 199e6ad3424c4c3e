// SPDX-License-Identifier: Apache-2.0
#include "nilm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace nilm {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_to_string(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
  if (!all_finite()) throw NonFiniteError("tensor " + shape_to_string(shape_) + " contains NaN or Inf");
}

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape_));
  }
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  validate_shape(t.shape_);
  t.data_ = data_;
  return t;
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

#ifdef NDEBUG
#define NILM_CHECK_FINITE(t, op) (void)0
#else
#define NILM_CHECK_FINITE(t, op) \
  if (!(t).all_finite()) throw NonFiniteError(std::string(op) + " produced a non-finite value")
#endif

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  auto o = out.data();
  const auto av = a.values();
  const auto bv = b.values();
  // i-p-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  NILM_CHECK_FINITE(out, "matmul");
  return out;
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "elementwise");
  std::vector<double> out(a.size());
  const auto av = a.values();
  const auto bv = b.values();
  switch (op) {
    case BinaryOp::Add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
      break;
    case BinaryOp::Sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
      break;
    case BinaryOp::Mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      break;
  }
  return Tensor(a.shape(), std::move(out));
}

Tensor map(const Tensor& a, const std::function<double(double)>& f) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return Tensor(a.shape(), std::move(out));
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return Tensor(a.shape(), std::move(out));
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::uint64_t Rng::next_u64() {
  ++draws_;
  return engine_();
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw ArgumentError("Rng::below: bound must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return mean + stddev * (r * std::cos(theta));
}

Tensor sample_normal(Rng& rng, Shape shape, double mean, double stddev) {
  if (!(stddev >= 0.0)) throw ArgumentError("sample_normal: stddev must be non-negative");
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = rng.normal(mean, stddev);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace nilm
