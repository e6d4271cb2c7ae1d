#include "charrnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "charrnn/error.hpp"

namespace charrnn {

namespace {

std::size_t element_count(const std::vector<std::size_t>& dims) {
  if (dims.empty() || dims.size() > 3) {
    throw Error(ErrorCode::shape,
                "tensor rank must be 1..3, got " + std::to_string(dims.size()));
  }
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) {
      throw Error(ErrorCode::shape,
                  "tensor dims must be positive: " + format_dims(dims));
    }
    n *= d;
  }
  return n;
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out = x;
  for (double& v : out.data()) v = f(v);
  return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* what, F f) {
  if (!a.same_dims(b)) {
    throw Error(ErrorCode::shape, std::string(what) + ": operand dims " +
                                      format_dims(a.dims()) + " vs " +
                                      format_dims(b.dims()));
  }
  Tensor out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(o[i], bd[i]);
  return out;
}

}  // namespace

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::usage: return "usage error";
    case ErrorCode::io: return "I/O error";
    case ErrorCode::encoding: return "encoding error";
    case ErrorCode::corpus: return "corpus error";
    case ErrorCode::vocabulary: return "vocabulary error";
    case ErrorCode::shape: return "shape error";
    case ErrorCode::config: return "config error";
    case ErrorCode::label: return "label error";
    case ErrorCode::distribution: return "distribution error";
    case ErrorCode::optimizer: return "optimizer error";
    case ErrorCode::numeric: return "numeric error";
    case ErrorCode::format: return "format error";
    case ErrorCode::integrity: return "integrity error";
  }
  return "unknown error";
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() noexcept {
  // 1 - uniform() lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  Rng r(seed ^ (stream * 0xD1B54A32D192ED03ULL));
  return r.next_u64();
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : dims_(std::move(dims)), data_(element_count(dims_), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), data_(std::move(values)) {
  if (element_count(dims_) != data_.size()) {
    throw Error(ErrorCode::shape, "tensor dims " + format_dims(dims_) +
                                      " do not match " +
                                      std::to_string(data_.size()) +
                                      " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

std::string format_dims(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << " x ";
    os << dims[i];
  }
  os << ']';
  return os.str();
}

void require_dims(const Tensor& t, const std::vector<std::size_t>& dims,
                  const char* what) {
  if (t.dims() != dims) {
    throw Error(ErrorCode::shape, std::string(what) + ": expected " +
                                      format_dims(dims) + ", got " +
                                      format_dims(t.dims()));
  }
}

namespace kernel {

void gemm(bool transpose_a, bool transpose_b, std::size_t m, std::size_t n,
          std::size_t k, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  if (beta == 0.0) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
  } else if (beta != 1.0) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] *= beta;
    }
  }

  if (!transpose_b) {
    // Row-axpy form: C[i,:] += A'(i,p) * B[p,:], contiguous in j.
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = transpose_a ? a[p * lda + i] : a[i * lda + p];
        if (aip == 0.0) continue;
        const double* bp = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
    return;
  }

  // B transposed: C[i,j] += dot(A'(i,:), B[j,:]).
  std::vector<double> arow;
  if (transpose_a) arow.resize(k);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * lda;
    if (transpose_a) {
      for (std::size_t p = 0; p < k; ++p) arow[p] = a[p * lda + i];
      ai = arow.data();
    }
    double* ci = c + i * ldc;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * ldb;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        s0 += ai[p] * bj[p];
        s1 += ai[p + 1] * bj[p + 1];
        s2 += ai[p + 2] * bj[p + 2];
        s3 += ai[p + 3] * bj[p + 3];
      }
      for (; p < k; ++p) s0 += ai[p] * bj[p];
      ci[j] += (s0 + s1) + (s2 + s3);
    }
  }
}

}  // namespace kernel

void matmul_into(const Tensor& a, bool transpose_a, const Tensor& b,
                 bool transpose_b, Tensor& out, bool accumulate) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw Error(ErrorCode::shape, "matmul: operands must be rank 2, got " +
                                      format_dims(a.dims()) + " and " +
                                      format_dims(b.dims()));
  }
  const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
  const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
  const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw Error(ErrorCode::shape, "matmul: inner dims differ (" +
                                      std::to_string(k) + " vs " +
                                      std::to_string(kb) + ") for " +
                                      format_dims(a.dims()) + " and " +
                                      format_dims(b.dims()));
  }
  require_dims(out, {m, n}, "matmul output");
  kernel::gemm(transpose_a, transpose_b, m, n, k, a.data().data(), a.dim(1),
               b.data().data(), b.dim(1), accumulate ? 1.0 : 0.0,
               out.data().data(), n);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw Error(ErrorCode::shape, "matmul: operands must be rank 2, got " +
                                      format_dims(a.dims()) + " and " +
                                      format_dims(b.dims()));
  }
  if (a.dim(1) != b.dim(0)) {
    throw Error(ErrorCode::shape, "matmul: inner dims differ (" +
                                      std::to_string(a.dim(1)) + " vs " +
                                      std::to_string(b.dim(0)) + ")");
  }
  Tensor out({a.dim(0), b.dim(1)});
  matmul_into(a, false, b, false, out, false);
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return map(x, [](double v) { return sigmoid(v); });
}

Tensor tanh(const Tensor& x) {
  return map(x, [](double v) { return std::tanh(v); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", std::multiplies<>{});
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", std::plus<>{});
}

void softmax_inplace(std::span<double> values) {
  if (values.empty()) throw Error(ErrorCode::shape, "softmax: empty input");
  const double peak = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double& v : values) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : values) v /= total;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1) {
    throw Error(ErrorCode::shape,
                "softmax: expected rank 1, got " + format_dims(logits.dims()));
  }
  Tensor out = logits;
  softmax_inplace(out.data());
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::shape, "log_sum_exp: empty input");
  const double peak = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += std::exp(v - peak);
  return peak + std::log(total);
}

std::size_t sample_categorical(const Tensor& probs, Rng& rng) {
  const auto p = probs.data();
  if (p.empty()) throw Error(ErrorCode::shape, "sample_categorical: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0)) {
      throw Error(ErrorCode::distribution,
                  "sample_categorical: entry " + std::to_string(i) +
                      " is negative or NaN");
    }
    total += p[i];
  }
  if (std::abs(total - 1.0) > 1e-9) {
    std::ostringstream os;
    os.precision(17);
    os << "sample_categorical: probabilities sum to " << total;
    throw Error(ErrorCode::distribution, os.str());
  }
  const double draw = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cumulative += p[i];
    if (cumulative >= draw && p[i] > 0.0) return i;
  }
  // Rounding left the total just under the draw: take the last nonzero entry.
  for (std::size_t i = p.size(); i-- > 0;) {
    if (p[i] > 0.0) return i;
  }
  return p.size() - 1;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(
      std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace charrnn
