#pragma once
// Minimal dense tensor substrate: 2-D matrices and 3-D tensors with explicit
// shape/stride metadata, zero-copy reshape/transpose views, and (batched)
// matrix products.
//
// Two rules hold everywhere:
//   * views never own or copy storage; materialize() is the explicit copy
//   * every product accumulates its contraction axis in ascending order, so
//     independent computation routes stay bit-comparable in 64-bit mode
//     (build with -ffp-contract=off)

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dyad {

using index_t = std::int64_t;

namespace instrument {

// Multiply counters covering matmul/bmm and their adjoint variants.
// Element-wise ops (bias adds, axpy) are not counted.
inline thread_local bool enabled = false;
inline thread_local std::uint64_t multiply_count = 0;

inline void enable(bool on) { enabled = on; }
inline void reset() { multiply_count = 0; }
inline std::uint64_t multiplies() { return multiply_count; }
inline void record(std::uint64_t n) {
  if (enabled) multiply_count += n;
}

}  // namespace instrument

template <typename T>
using Buffer = std::shared_ptr<std::vector<T>>;

template <typename T>
Buffer<T> make_buffer(index_t n) {
  return std::make_shared<std::vector<T>>(static_cast<std::size_t>(n), T{});
}

// Contiguous row-major 2-D matrix. Copies are shallow (shared buffer);
// treat matrices as immutable once they have been handed out.
template <typename T>
class Matrix {
 public:
  Matrix() = default;

  Matrix(index_t rows, index_t cols)
      : rows_(rows), cols_(cols), buffer_(make_buffer<T>(rows * cols)) {
    if (rows < 1 || cols < 1)
      throw std::invalid_argument("Matrix: rows and cols must be >= 1, got " +
                                  std::to_string(rows) + "x" + std::to_string(cols));
  }

  Matrix(index_t rows, index_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols),
        buffer_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (rows < 1 || cols < 1)
      throw std::invalid_argument("Matrix: rows and cols must be >= 1");
    if (static_cast<index_t>(buffer_->size()) != rows * cols)
      throw std::invalid_argument(
          "Matrix: value count " + std::to_string(buffer_->size()) +
          " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }

  // Wraps an existing buffer without copying; size must match exactly.
  Matrix(index_t rows, index_t cols, Buffer<T> buffer)
      : rows_(rows), cols_(cols), buffer_(std::move(buffer)) {
    if (static_cast<index_t>(buffer_->size()) != rows * cols)
      throw std::invalid_argument("Matrix: shared buffer size mismatch");
  }

  index_t rows() const { return rows_; }
  index_t cols() const { return cols_; }
  index_t size() const { return rows_ * cols_; }

  T* data() { return buffer_->data(); }
  const T* data() const { return buffer_->data(); }
  const Buffer<T>& buffer() const { return buffer_; }

  T& operator()(index_t i, index_t j) { return (*buffer_)[i * cols_ + j]; }
  const T& operator()(index_t i, index_t j) const { return (*buffer_)[i * cols_ + j]; }

  bool empty() const { return buffer_ == nullptr; }

 private:
  index_t rows_ = 0;
  index_t cols_ = 0;
  Buffer<T> buffer_;
};

// 3-axis tensor: shape, element strides, shared storage. A Tensor3 built by
// reshape3/transpose01 observes the same values as its source at all times.
template <typename T>
class Tensor3 {
 public:
  Tensor3() = default;

  // Owning contiguous tensor, zero-filled.
  Tensor3(index_t d0, index_t d1, index_t d2)
      : shape_{d0, d1, d2}, strides_{d1 * d2, d2, 1},
        buffer_(make_buffer<T>(d0 * d1 * d2)) {}

  static Tensor3 view(Buffer<T> buffer, index_t d0, index_t d1, index_t d2,
                      index_t s0, index_t s1, index_t s2) {
    Tensor3 t;
    t.shape_[0] = d0; t.shape_[1] = d1; t.shape_[2] = d2;
    t.strides_[0] = s0; t.strides_[1] = s1; t.strides_[2] = s2;
    t.buffer_ = std::move(buffer);
    return t;
  }

  index_t dim(int axis) const { return shape_[axis]; }
  index_t stride(int axis) const { return strides_[axis]; }
  index_t size() const { return shape_[0] * shape_[1] * shape_[2]; }

  bool is_contiguous() const {
    return strides_[2] == 1 && strides_[1] == shape_[2] &&
           strides_[0] == shape_[1] * shape_[2];
  }

  T* data() { return buffer_->data(); }
  const T* data() const { return buffer_->data(); }
  const Buffer<T>& buffer() const { return buffer_; }

  T& operator()(index_t i, index_t j, index_t k) {
    return (*buffer_)[i * strides_[0] + j * strides_[1] + k * strides_[2]];
  }
  const T& operator()(index_t i, index_t j, index_t k) const {
    return (*buffer_)[i * strides_[0] + j * strides_[1] + k * strides_[2]];
  }

  bool empty() const { return buffer_ == nullptr; }

 private:
  index_t shape_[3] = {0, 0, 0};
  index_t strides_[3] = {0, 0, 0};
  Buffer<T> buffer_;
};

// Zero-copy view of a contiguous row-major matrix as a (d0, d1, d2) tensor
// with standard strides (d1*d2, d2, 1). No data movement.
template <typename T>
Tensor3<T> reshape3(const Matrix<T>& m, index_t d0, index_t d1, index_t d2) {
  if (d0 * d1 * d2 != m.rows() * m.cols())
    throw std::invalid_argument(
        "reshape3: cannot view " + std::to_string(m.rows()) + "x" +
        std::to_string(m.cols()) + " matrix as (" + std::to_string(d0) + "," +
        std::to_string(d1) + "," + std::to_string(d2) + "): element count " +
        std::to_string(m.rows() * m.cols()) + " != " + std::to_string(d0 * d1 * d2));
  return Tensor3<T>::view(m.buffer(), d0, d1, d2, d1 * d2, d2, 1);
}

// Swaps axes 0 and 1 by exchanging metadata only. Involution.
template <typename T>
Tensor3<T> transpose01(const Tensor3<T>& t) {
  return Tensor3<T>::view(t.buffer(), t.dim(1), t.dim(0), t.dim(2),
                          t.stride(1), t.stride(0), t.stride(2));
}

// Explicit copy into a fresh contiguous tensor.
template <typename T>
Tensor3<T> materialize(const Tensor3<T>& t) {
  Tensor3<T> out(t.dim(0), t.dim(1), t.dim(2));
  T* op = out.data();
  for (index_t i = 0; i < t.dim(0); ++i)
    for (index_t j = 0; j < t.dim(1); ++j)
      for (index_t k = 0; k < t.dim(2); ++k) *op++ = t(i, j, k);
  return out;
}

// Reinterprets a contiguous tensor as a (rows x cols) matrix sharing storage.
template <typename T>
Matrix<T> flatten2(const Tensor3<T>& t, index_t rows, index_t cols) {
  if (!t.is_contiguous())
    throw std::invalid_argument("flatten2: tensor must be contiguous (materialize first)");
  if (rows * cols != t.size())
    throw std::invalid_argument("flatten2: element count mismatch");
  if (static_cast<index_t>(t.buffer()->size()) != t.size())
    throw std::invalid_argument("flatten2: tensor does not span its whole buffer");
  return Matrix<T>(rows, cols, t.buffer());
}

// out[b] = a[b] . x[b]; a is (B, M, K), x is (B, K, N), either may be a
// strided view. Accumulation over K is ascending, so the result is
// bit-identical whether the operands are views or materialized copies.
template <typename T>
Tensor3<T> bmm(const Tensor3<T>& a, const Tensor3<T>& x) {
  const index_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = x.dim(2);
  if (x.dim(0) != B)
    throw std::invalid_argument("bmm: batch axis mismatch (a d0=" + std::to_string(B) +
                                ", x d0=" + std::to_string(x.dim(0)) + ")");
  if (x.dim(1) != K)
    throw std::invalid_argument("bmm: contraction axis mismatch (a d2=" + std::to_string(K) +
                                ", x d1=" + std::to_string(x.dim(1)) + ")");
  Tensor3<T> out(B, M, N);
  const T* ap = a.data();
  const T* xp = x.data();
  T* op = out.data();
  const index_t as0 = a.stride(0), as1 = a.stride(1), as2 = a.stride(2);
  const index_t xs0 = x.stride(0), xs1 = x.stride(1), xs2 = x.stride(2);
  for (index_t b = 0; b < B; ++b) {
    for (index_t m = 0; m < M; ++m) {
      T* orow = op + (b * M + m) * N;
      const T* abase = ap + b * as0 + m * as1;
      for (index_t k = 0; k < K; ++k) {
        const T w = abase[k * as2];
        const T* xrow = xp + b * xs0 + k * xs1;
        if (xs2 == 1) {
          for (index_t n = 0; n < N; ++n) orow[n] += w * xrow[n];
        } else {
          for (index_t n = 0; n < N; ++n) orow[n] += w * xrow[n * xs2];
        }
      }
    }
  }
  instrument::record(static_cast<std::uint64_t>(B) * M * K * N);
  return out;
}

// out[b] = a[b]^T . x[b]; a is (B, M, K), x is (B, M, N) -> out (B, K, N).
template <typename T>
Tensor3<T> bmm_at(const Tensor3<T>& a, const Tensor3<T>& x) {
  const index_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = x.dim(2);
  if (x.dim(0) != B)
    throw std::invalid_argument("bmm_at: batch axis mismatch");
  if (x.dim(1) != M)
    throw std::invalid_argument("bmm_at: contraction axis mismatch (a d1=" + std::to_string(M) +
                                ", x d1=" + std::to_string(x.dim(1)) + ")");
  Tensor3<T> out(B, K, N);
  T* op = out.data();
  for (index_t b = 0; b < B; ++b) {
    for (index_t m = 0; m < M; ++m) {       // contraction axis, ascending
      for (index_t k = 0; k < K; ++k) {
        const T w = a(b, m, k);
        T* orow = op + (b * K + k) * N;
        for (index_t n = 0; n < N; ++n) orow[n] += w * x(b, m, n);
      }
    }
  }
  instrument::record(static_cast<std::uint64_t>(B) * M * K * N);
  return out;
}

// out[b] = a[b] . x[b]^T; a is (B, M, K), x is (B, N, K) -> out (B, M, N).
template <typename T>
Tensor3<T> bmm_bt(const Tensor3<T>& a, const Tensor3<T>& x) {
  const index_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = x.dim(1);
  if (x.dim(0) != B)
    throw std::invalid_argument("bmm_bt: batch axis mismatch");
  if (x.dim(2) != K)
    throw std::invalid_argument("bmm_bt: contraction axis mismatch (a d2=" + std::to_string(K) +
                                ", x d2=" + std::to_string(x.dim(2)) + ")");
  Tensor3<T> out(B, M, N);
  for (index_t b = 0; b < B; ++b)
    for (index_t m = 0; m < M; ++m)
      for (index_t n = 0; n < N; ++n) {
        T acc{};
        for (index_t k = 0; k < K; ++k) acc += a(b, m, k) * x(b, n, k);
        out(b, m, n) = acc;
      }
  instrument::record(static_cast<std::uint64_t>(B) * M * K * N);
  return out;
}

// Standard product a . x. Serves as the naive oracle everywhere; the loop
// nest is cache-friendly but the per-element summation order is identical to
// the classic i,j,k triple loop (ascending K).
template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& x) {
  if (a.cols() != x.rows())
    throw std::invalid_argument("matmul: inner dimension mismatch (a.cols=" +
                                std::to_string(a.cols()) + ", x.rows=" +
                                std::to_string(x.rows()) + ")");
  const index_t M = a.rows(), K = a.cols(), N = x.cols();
  Matrix<T> out(M, N);
  const T* ap = a.data();
  const T* xp = x.data();
  T* op = out.data();
  for (index_t m = 0; m < M; ++m) {
    T* orow = op + m * N;
    for (index_t k = 0; k < K; ++k) {
      const T w = ap[m * K + k];
      const T* xrow = xp + k * N;
      for (index_t n = 0; n < N; ++n) orow[n] += w * xrow[n];
    }
  }
  instrument::record(static_cast<std::uint64_t>(M) * K * N);
  return out;
}

// a^T . x
template <typename T>
Matrix<T> matmul_at(const Matrix<T>& a, const Matrix<T>& x) {
  if (a.rows() != x.rows())
    throw std::invalid_argument("matmul_at: contraction mismatch (a.rows=" +
                                std::to_string(a.rows()) + ", x.rows=" +
                                std::to_string(x.rows()) + ")");
  const index_t K = a.rows(), M = a.cols(), N = x.cols();
  Matrix<T> out(M, N);
  T* op = out.data();
  for (index_t k = 0; k < K; ++k)
    for (index_t m = 0; m < M; ++m) {
      const T w = a(k, m);
      T* orow = op + m * N;
      const T* xrow = x.data() + k * N;
      for (index_t n = 0; n < N; ++n) orow[n] += w * xrow[n];
    }
  instrument::record(static_cast<std::uint64_t>(M) * K * N);
  return out;
}

// a . x^T
template <typename T>
Matrix<T> matmul_bt(const Matrix<T>& a, const Matrix<T>& x) {
  if (a.cols() != x.cols())
    throw std::invalid_argument("matmul_bt: contraction mismatch (a.cols=" +
                                std::to_string(a.cols()) + ", x.cols=" +
                                std::to_string(x.cols()) + ")");
  const index_t M = a.rows(), K = a.cols(), N = x.rows();
  Matrix<T> out(M, N);
  for (index_t m = 0; m < M; ++m)
    for (index_t n = 0; n < N; ++n) {
      T acc{};
      for (index_t k = 0; k < K; ++k) acc += a(m, k) * x(n, k);
      out(m, n) = acc;
    }
  instrument::record(static_cast<std::uint64_t>(M) * K * N);
  return out;
}

template <typename T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (index_t i = 0; i < a.rows(); ++i)
    for (index_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
Matrix<T> add(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add: shape mismatch");
  Matrix<T> out(a.rows(), a.cols());
  const T* ap = a.data();
  const T* bp = b.data();
  T* op = out.data();
  for (index_t i = 0; i < a.size(); ++i) op[i] = ap[i] + bp[i];
  return out;
}

template <typename T>
void add_inplace(Matrix<T>& a, const Matrix<T>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("add_inplace: shape mismatch");
  T* ap = a.data();
  const T* bp = b.data();
  for (index_t i = 0; i < a.size(); ++i) ap[i] += bp[i];
}

// y(:, c) += bias for every column c; bias is (rows x 1).
template <typename T>
void add_bias_inplace(Matrix<T>& y, const Matrix<T>& bias) {
  if (bias.cols() != 1 || bias.rows() != y.rows())
    throw std::invalid_argument("add_bias_inplace: bias must be (" +
                                std::to_string(y.rows()) + " x 1)");
  for (index_t i = 0; i < y.rows(); ++i) {
    const T b = bias(i, 0);
    T* row = y.data() + i * y.cols();
    for (index_t j = 0; j < y.cols(); ++j) row[j] += b;
  }
}

template <typename T>
Matrix<T> rowsum(const Matrix<T>& a) {
  Matrix<T> out(a.rows(), 1);
  for (index_t i = 0; i < a.rows(); ++i) {
    T acc{};
    const T* row = a.data() + i * a.cols();
    for (index_t j = 0; j < a.cols(); ++j) acc += row[j];
    out(i, 0) = acc;
  }
  return out;
}

// y + alpha * x, fresh buffer
template <typename T>
Matrix<T> axpy(T alpha, const Matrix<T>& x, const Matrix<T>& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw std::invalid_argument("axpy: shape mismatch");
  Matrix<T> out(x.rows(), x.cols());
  const T* xp = x.data();
  const T* yp = y.data();
  T* op = out.data();
  for (index_t i = 0; i < x.size(); ++i) op[i] = yp[i] + alpha * xp[i];
  return out;
}

template <typename T>
Tensor3<T> axpy(T alpha, const Tensor3<T>& x, const Tensor3<T>& y) {
  Tensor3<T> out(y.dim(0), y.dim(1), y.dim(2));
  for (index_t i = 0; i < y.dim(0); ++i)
    for (index_t j = 0; j < y.dim(1); ++j)
      for (index_t k = 0; k < y.dim(2); ++k) out(i, j, k) = y(i, j, k) + alpha * x(i, j, k);
  return out;
}

// Flop conventions: one multiply-add counts as 2 flops. A Dyad layer runs two
// block components, each n_dyad times cheaper than the dense product at the
// matched full dimensions, so dyad/dense == 2/n_dyad whenever
// f_out = n_dyad*n_out and f_in = n_dyad*n_in.
inline std::uint64_t flop_count_dense(index_t f_out, index_t f_in, index_t n_batch) {
  return 2ull * f_out * f_in * n_batch;
}

inline std::uint64_t flop_count_dyad(index_t n_dyad, index_t n_out, index_t n_in,
                                     index_t n_batch) {
  return 2ull * 2ull * n_dyad * n_out * n_in * n_batch;
}

}  // namespace dyad
