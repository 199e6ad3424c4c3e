// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nilm/errors.hpp"

namespace nilm {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/*
 * Dense row-major fp64 tensor.
 *
 * Every extent is positive and the element count equals the product of the
 * extents. Non-finite values are rejected when a tensor is constructed from
 * caller-supplied data. The free functions below never modify their inputs;
 * mutable element access exists for the optimizer and the gradient checker,
 * which perturb parameters in place.
 */
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor from(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t i, std::size_t j) const { return data_[i * shape_.at(1) + j]; }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_.at(1) + i) * shape_.at(2) + j];
  }

  /// Same data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Throws DimensionError naming both shapes unless they are identical.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

Tensor matmul(const Tensor& a, const Tensor& b);

enum class BinaryOp { Add, Sub, Mul };

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor map(const Tensor& a, const std::function<double(double)>& f);

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Mul, a, b); }
Tensor scale(const Tensor& a, double factor);

/// Unrolled dot product with a fixed summation order.
double dot(std::span<const double> a, std::span<const double> b);

double max_abs_diff(const Tensor& a, const Tensor& b);

/*
 * Seeded random stream.
 *
 * Backed by mt19937_64, whose output sequence is fixed by the standard. The
 * uniform, normal and integer conversions are implemented here rather than
 * through <random> distributions, whose algorithms are implementation-defined,
 * so a seed yields the same samples on every platform.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  /// Independent stream for a sub-task: seed XOR stream index.
  static Rng split(std::uint64_t seed, std::uint64_t stream) { return Rng(seed ^ stream); }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t draws() const noexcept { return draws_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, bound) by rejection, bound > 0.
  std::uint64_t below(std::uint64_t bound);
  double normal(double mean = 0.0, double stddev = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor sample_normal(Rng& rng, Shape shape, double mean, double stddev);

}  // namespace nilm
