#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "charrnn/rng.hpp"

namespace charrnn {

/// Dense row-major array of doubles with rank 1 to 3.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * dims_[1] + c];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  /// Contiguous view of row `r` of a rank-2 tensor.
  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * dims_[1], dims_[1]);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * dims_[1], dims_[1]);
  }

  void fill(double value);
  bool same_dims(const Tensor& other) const noexcept {
    return dims_ == other.dims_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

std::string format_dims(const std::vector<std::size_t>& dims);

/// Throws a shape error unless `t` has exactly the given dims.
void require_dims(const Tensor& t, const std::vector<std::size_t>& dims,
                  const char* what);

Tensor matmul(const Tensor& a, const Tensor& b);

/// out (+)= op(a) * op(b) for rank-2 tensors, where op transposes when the
/// matching flag is set. `out` must already have the product's dims.
void matmul_into(const Tensor& a, bool transpose_a, const Tensor& b,
                 bool transpose_b, Tensor& out, bool accumulate);

namespace kernel {

// Raw strided GEMM used by the layers for column sub-blocks of weight
// matrices: C[m x n] = beta*C + A'[m x k] * B'[k x n], where A' is A or A^T
// (and likewise B'). Leading dimensions are row strides.
void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc);

}  // namespace kernel

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Softmax of a rank-1 tensor, max-subtracted.
Tensor softmax(const Tensor& logits);
void softmax_inplace(std::span<double> values);
double log_sum_exp(std::span<const double> values);

/// Inverse-CDF draw: first index whose cumulative sum reaches a uniform draw.
std::size_t sample_categorical(const Tensor& probs, Rng& rng);

std::size_t argmax(std::span<const double> values);

}  // namespace charrnn
