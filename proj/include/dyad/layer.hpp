#pragma once
// The Dyad layer family. A Dyad layer approximates a dense f_out x f_in
// linear map by the sum of two structured components, each stored packed as
// an (n_dyad, n_out, n_in) tensor of blocks:
//   * w1 — block-diagonal component
//   * w2 — a component that becomes block-diagonal once its rows and/or
//     columns are permuted (which side depends on the variant)
// Variants: IT permutes the input, OT permutes the output, DT both. All run
// in O(f_out*f_in/n_dyad) multiplies per column instead of O(f_out*f_in).
// The permutations themselves are zero-copy stride tricks (see forward_it).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "dyad/rng.hpp"
#include "dyad/tensor.hpp"

namespace dyad {

enum class Variant { IT, OT, DT };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::IT: return "it";
    case Variant::OT: return "ot";
    case Variant::DT: return "dt";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "it") return Variant::IT;
  if (s == "ot") return Variant::OT;
  if (s == "dt") return Variant::DT;
  throw std::invalid_argument("unknown variant '" + s + "' (expected it|ot|dt)");
}

struct DyadConfig {
  index_t n_dyad = 1;  // number of blocks per component
  index_t n_in = 1;    // per-block input width
  index_t n_out = 1;   // per-block output width
  Variant variant = Variant::IT;
  bool has_bias = true;
  bool fused_cat = false;  // IT only: single concatenated bmm

  index_t f_in() const { return n_dyad * n_in; }
  index_t f_out() const { return n_dyad * n_out; }

  void validate() const {
    if (n_dyad < 1)
      throw std::invalid_argument("DyadConfig: n_dyad must be >= 1, got " +
                                  std::to_string(n_dyad));
    if (n_in < 1)
      throw std::invalid_argument("DyadConfig: n_in must be >= 1, got " +
                                  std::to_string(n_in));
    if (n_out < 1)
      throw std::invalid_argument("DyadConfig: n_out must be >= 1, got " +
                                  std::to_string(n_out));
    if (fused_cat && variant != Variant::IT)
      throw std::invalid_argument(
          "DyadConfig: the fused cat path is defined for the input-transpose "
          "variant only");
  }
};

template <typename T>
struct DyadLayer {
  DyadConfig config;
  Tensor3<T> w1;   // (n_dyad, n_out, n_in)
  Tensor3<T> w2;   // (n_dyad, n_out, n_in)
  Matrix<T> bias;  // (f_out x 1); empty when !has_bias
};

template <typename T>
struct DenseLayer {
  index_t f_out = 0;
  index_t f_in = 0;
  bool has_bias = true;
  Matrix<T> w;     // (f_out x f_in)
  Matrix<T> bias;  // (f_out x 1); empty when !has_bias
};

template <typename T>
struct DyadGradients {
  Tensor3<T> d_w1;
  Tensor3<T> d_w2;
  Matrix<T> d_bias;  // empty when !has_bias
  Matrix<T> d_x;     // (f_in x n_batch)
};

template <typename T>
struct DenseGradients {
  Matrix<T> d_w;
  Matrix<T> d_bias;
  Matrix<T> d_x;
};

// Draw order is fixed (w1, then w2, then bias) so a seed pins the layer
// bit-for-bit. Bound k = 1/sqrt(n_in * n_dyad) = 1/sqrt(f_in), i.e. the
// classic fan-in rule on the full input width; the bias uses the same bound.
template <typename T>
DyadLayer<T> init_uniform(const DyadConfig& config, std::uint64_t seed) {
  config.validate();
  DyadLayer<T> layer;
  layer.config = config;
  SplitMix64 rng(seed);
  const T k = T(1) / std::sqrt(static_cast<T>(config.n_in * config.n_dyad));
  layer.w1 = Tensor3<T>(config.n_dyad, config.n_out, config.n_in);
  layer.w2 = Tensor3<T>(config.n_dyad, config.n_out, config.n_in);
  T* p = layer.w1.data();
  for (index_t i = 0; i < layer.w1.size(); ++i) p[i] = rng.symmetric<T>(k);
  p = layer.w2.data();
  for (index_t i = 0; i < layer.w2.size(); ++i) p[i] = rng.symmetric<T>(k);
  if (config.has_bias) {
    layer.bias = Matrix<T>(config.f_out(), 1);
    p = layer.bias.data();
    for (index_t i = 0; i < layer.bias.size(); ++i) p[i] = rng.symmetric<T>(k);
  }
  return layer;
}

template <typename T>
DenseLayer<T> init_uniform_dense(index_t f_out, index_t f_in, std::uint64_t seed,
                                 bool has_bias = true) {
  if (f_out < 1 || f_in < 1)
    throw std::invalid_argument("init_uniform_dense: dims must be >= 1");
  DenseLayer<T> layer;
  layer.f_out = f_out;
  layer.f_in = f_in;
  layer.has_bias = has_bias;
  SplitMix64 rng(seed);
  const T k = T(1) / std::sqrt(static_cast<T>(f_in));
  layer.w = Matrix<T>(f_out, f_in);
  T* p = layer.w.data();
  for (index_t i = 0; i < layer.w.size(); ++i) p[i] = rng.symmetric<T>(k);
  if (has_bias) {
    layer.bias = Matrix<T>(f_out, 1);
    p = layer.bias.data();
    for (index_t i = 0; i < layer.bias.size(); ++i) p[i] = rng.symmetric<T>(k);
  }
  return layer;
}

namespace detail {

template <typename T>
void check_input_rows(const char* op, const DyadConfig& c, const Matrix<T>& x) {
  if (x.rows() != c.f_in())
    throw std::invalid_argument(std::string(op) + ": input has " +
                                std::to_string(x.rows()) + " rows, expected n_dyad*n_in = " +
                                std::to_string(c.f_in()));
}

// Block view of the input: block i holds rows [i*n_in, (i+1)*n_in). Zero-copy.
template <typename T>
Tensor3<T> input_blocks(const Matrix<T>& x, index_t n_dyad, index_t n_in) {
  return reshape3(x, n_dyad, n_in, x.cols());
}

// Input-side permutation as a stride trick: view x as (n_in, n_dyad, batch)
// and swap the leading axes. Block i of the result holds the input rows
// congruent to i mod n_dyad — exactly the column permutation that makes the
// second component block-diagonal. Zero-copy: only strides change.
template <typename T>
Tensor3<T> input_blocks_permuted(const Matrix<T>& x, index_t n_dyad, index_t n_in) {
  return transpose01(reshape3(x, n_in, n_dyad, x.cols()));
}

// Output-side permutation: the blocked result z (n_dyad, n_out, batch) is
// viewed as (n_out, n_dyad, batch) and copied once (the output must be
// contiguous), which interleaves block rows at stride n_dyad.
template <typename T>
Matrix<T> apply_output_permutation(const Tensor3<T>& z, index_t batch) {
  Tensor3<T> out = materialize(transpose01(z));
  return flatten2(out, out.dim(0) * out.dim(1), batch);
}

// Adjoint of the output permutation (it is orthogonal, so adjoint = inverse).
template <typename T>
Tensor3<T> unapply_output_permutation(const Matrix<T>& d_y, index_t n_dyad,
                                      index_t n_out) {
  return materialize(transpose01(reshape3(d_y, n_out, n_dyad, d_y.cols())));
}

// Adjoint of the input-side stride trick: route a gradient on the permuted
// blocks back to input order. Inverse of a transpose view is the transpose
// view back, materialized so it can be flattened.
template <typename T>
Matrix<T> unapply_input_permutation(const Tensor3<T>& d_blocks, index_t n_dyad,
                                    index_t n_in, index_t batch) {
  Tensor3<T> back = materialize(transpose01(d_blocks));  // (n_in, n_dyad, batch)
  return flatten2(back, n_dyad * n_in, batch);
}

template <typename T>
Matrix<T> finish(Tensor3<T> y1, Tensor3<T> y2, const DyadLayer<T>& layer,
                 index_t batch) {
  Matrix<T> y = add(flatten2(y1, layer.config.f_out(), batch),
                    flatten2(y2, layer.config.f_out(), batch));
  if (layer.config.has_bias) add_bias_inplace(y, layer.bias);
  return y;
}

}  // namespace detail

// Input-transpose forward: Y = flatten(w1.bmm(X1') + w2.bmm(X2')) + b, where
// X1' is the plain block view and X2' the stride-trick permuted view.
template <typename T>
Matrix<T> forward_it(const DyadLayer<T>& layer, const Matrix<T>& x) {
  const DyadConfig& c = layer.config;
  detail::check_input_rows("forward_it", c, x);
  const index_t batch = x.cols();
  Tensor3<T> x1 = detail::input_blocks(x, c.n_dyad, c.n_in);
  Tensor3<T> x2 = detail::input_blocks_permuted(x, c.n_dyad, c.n_in);
  return detail::finish(bmm(layer.w1, x1), bmm(layer.w2, x2), layer, batch);
}

// Output-transpose forward: the second component multiplies plain input
// blocks, then the block output rows are interleaved back to output order.
template <typename T>
Matrix<T> forward_ot(const DyadLayer<T>& layer, const Matrix<T>& x) {
  const DyadConfig& c = layer.config;
  detail::check_input_rows("forward_ot", c, x);
  const index_t batch = x.cols();
  Tensor3<T> x1 = detail::input_blocks(x, c.n_dyad, c.n_in);
  Tensor3<T> y1 = bmm(layer.w1, x1);
  Matrix<T> y2 = detail::apply_output_permutation(bmm(layer.w2, x1), batch);
  Matrix<T> y = add(flatten2(y1, c.f_out(), batch), y2);
  if (c.has_bias) add_bias_inplace(y, layer.bias);
  return y;
}

// Double-transpose forward: IT input transform and OT output transform.
template <typename T>
Matrix<T> forward_dt(const DyadLayer<T>& layer, const Matrix<T>& x) {
  const DyadConfig& c = layer.config;
  detail::check_input_rows("forward_dt", c, x);
  const index_t batch = x.cols();
  Tensor3<T> x1 = detail::input_blocks(x, c.n_dyad, c.n_in);
  Tensor3<T> x2 = detail::input_blocks_permuted(x, c.n_dyad, c.n_in);
  Tensor3<T> y1 = bmm(layer.w1, x1);
  Matrix<T> y2 = detail::apply_output_permutation(bmm(layer.w2, x2), batch);
  Matrix<T> y = add(flatten2(y1, c.f_out(), batch), y2);
  if (c.has_bias) add_bias_inplace(y, layer.bias);
  return y;
}

// Fused IT forward: both weight stacks in one (2*n_dyad, ...) bmm. The
// permuted input view must be copied into the concatenated activation tensor
// (the one copy this fusion concedes). Per-block arithmetic is identical to
// forward_it, so the two agree to the last bit.
template <typename T>
Matrix<T> forward_cat(const DyadLayer<T>& layer, const Matrix<T>& x) {
  const DyadConfig& c = layer.config;
  if (c.variant != Variant::IT)
    throw std::invalid_argument("forward_cat: fusion is defined for the input-transpose variant");
  detail::check_input_rows("forward_cat", c, x);
  const index_t batch = x.cols();
  const index_t nd = c.n_dyad;

  Tensor3<T> w_cat(2 * nd, c.n_out, c.n_in);
  std::copy(layer.w1.data(), layer.w1.data() + layer.w1.size(), w_cat.data());
  std::copy(layer.w2.data(), layer.w2.data() + layer.w2.size(),
            w_cat.data() + layer.w1.size());

  Tensor3<T> x_cat(2 * nd, c.n_in, batch);
  Tensor3<T> x1 = detail::input_blocks(x, nd, c.n_in);
  Tensor3<T> x2 = detail::input_blocks_permuted(x, nd, c.n_in);
  T* dst = x_cat.data();
  std::copy(x1.data(), x1.data() + x1.size(), dst);
  dst += x1.size();
  for (index_t i = 0; i < nd; ++i)
    for (index_t j = 0; j < c.n_in; ++j)
      for (index_t k = 0; k < batch; ++k) *dst++ = x2(i, j, k);

  Tensor3<T> z = bmm(w_cat, x_cat);  // (2*n_dyad, n_out, batch)
  // halves of z are the two components' block outputs; add them pairwise
  Matrix<T> y(c.f_out(), batch);
  const T* zp = z.data();
  const index_t half = nd * c.n_out * batch;
  T* yp = y.data();
  for (index_t i = 0; i < half; ++i) yp[i] = zp[i] + zp[half + i];
  if (c.has_bias) add_bias_inplace(y, layer.bias);
  return y;
}

// Dispatch on the configured variant (and the fused flag for IT).
template <typename T>
Matrix<T> forward(const DyadLayer<T>& layer, const Matrix<T>& x) {
  switch (layer.config.variant) {
    case Variant::IT:
      return layer.config.fused_cat ? forward_cat(layer, x) : forward_it(layer, x);
    case Variant::OT: return forward_ot(layer, x);
    case Variant::DT: return forward_dt(layer, x);
  }
  throw std::logic_error("forward: unreachable");
}

template <typename T>
Matrix<T> forward_dense(const DenseLayer<T>& layer, const Matrix<T>& x) {
  if (x.rows() != layer.w.cols())
    throw std::invalid_argument("forward_dense: input has " + std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(layer.w.cols()));
  Matrix<T> y = matmul(layer.w, x);
  if (layer.has_bias) add_bias_inplace(y, layer.bias);
  return y;
}

// Reverse-mode gradients. The forward is linear, so each piece is a plain
// adjoint: d_bias row-sums d_y; per block, d_w = dY_blk . X_blk^T and the
// input contribution is w^T . dY_blk; gradients cross the stride-trick views
// through their inverse views (a transpose is orthogonal).
template <typename T>
DyadGradients<T> backward(const DyadLayer<T>& layer, const Matrix<T>& x,
                          const Matrix<T>& d_y) {
  const DyadConfig& c = layer.config;
  detail::check_input_rows("backward", c, x);
  if (d_y.rows() != c.f_out() || d_y.cols() != x.cols())
    throw std::invalid_argument("backward: d_y must be (" + std::to_string(c.f_out()) +
                                " x " + std::to_string(x.cols()) + "), got (" +
                                std::to_string(d_y.rows()) + " x " +
                                std::to_string(d_y.cols()) + ")");
  const index_t batch = x.cols();
  DyadGradients<T> g;

  Tensor3<T> x1 = detail::input_blocks(x, c.n_dyad, c.n_in);
  Tensor3<T> dy1 = reshape3(d_y, c.n_dyad, c.n_out, batch);

  // BlockDiag component sees d_y in block order for every variant.
  g.d_w1 = bmm_bt(dy1, x1);
  Matrix<T> d_x1 = flatten2(bmm_at(layer.w1, dy1), c.f_in(), batch);

  // The BlockTrans component sees d_y routed back through the output
  // permutation (OT/DT) and its input routed through the input permutation
  // (IT/DT).
  const bool permute_in = (c.variant == Variant::IT || c.variant == Variant::DT);
  const bool permute_out = (c.variant == Variant::OT || c.variant == Variant::DT);

  Tensor3<T> dy2 = permute_out
                       ? detail::unapply_output_permutation(d_y, c.n_dyad, c.n_out)
                       : dy1;
  Tensor3<T> x2 = permute_in ? detail::input_blocks_permuted(x, c.n_dyad, c.n_in)
                             : x1;

  g.d_w2 = bmm_bt(dy2, x2);
  Tensor3<T> d_x2_blocks = bmm_at(layer.w2, dy2);  // (n_dyad, n_in, batch)
  Matrix<T> d_x2 = permute_in
                       ? detail::unapply_input_permutation(d_x2_blocks, c.n_dyad,
                                                           c.n_in, batch)
                       : flatten2(d_x2_blocks, c.f_in(), batch);

  g.d_x = add(d_x1, d_x2);
  if (c.has_bias) g.d_bias = rowsum(d_y);
  return g;
}

template <typename T>
DenseGradients<T> backward_dense(const DenseLayer<T>& layer, const Matrix<T>& x,
                                 const Matrix<T>& d_y) {
  if (x.rows() != layer.w.cols() || d_y.rows() != layer.w.rows() ||
      d_y.cols() != x.cols())
    throw std::invalid_argument("backward_dense: shape mismatch");
  DenseGradients<T> g;
  g.d_w = matmul_bt(d_y, x);
  g.d_x = matmul_at(layer.w, d_y);
  if (layer.has_bias) g.d_bias = rowsum(d_y);
  return g;
}

// Weight counts (bias listed separately by callers that care).
inline std::uint64_t param_count_dyad(const DyadConfig& c) {
  std::uint64_t n = 2ull * c.n_dyad * c.n_out * c.n_in;
  if (c.has_bias) n += static_cast<std::uint64_t>(c.n_dyad) * c.n_out;
  return n;
}

inline std::uint64_t param_count_dense(index_t f_out, index_t f_in,
                                       bool has_bias = false) {
  std::uint64_t n = static_cast<std::uint64_t>(f_out) * f_in;
  if (has_bias) n += static_cast<std::uint64_t>(f_out);
  return n;
}

struct DimCheck {
  bool ok = false;
  index_t padded_f_out = 0;
  index_t padded_f_in = 0;
};

// A Dyad layer needs n_dyad to divide both full dims. The library never pads
// silently (padding changes parameter counts and benchmarks); it reports the
// minimal zero-padding that would restore divisibility instead.
inline DimCheck validate_dims(index_t f_out, index_t f_in, index_t n_dyad) {
  if (f_out < 1 || f_in < 1 || n_dyad < 1)
    throw std::invalid_argument("validate_dims: dims must be >= 1");
  auto ceil_to = [n_dyad](index_t v) { return ((v + n_dyad - 1) / n_dyad) * n_dyad; };
  DimCheck r;
  r.padded_f_out = ceil_to(f_out);
  r.padded_f_in = ceil_to(f_in);
  r.ok = (r.padded_f_out == f_out) && (r.padded_f_in == f_in);
  return r;
}

inline void require_divisible(index_t f_out, index_t f_in, index_t n_dyad) {
  DimCheck r = validate_dims(f_out, f_in, n_dyad);
  if (!r.ok)
    throw std::invalid_argument(
        "dims (" + std::to_string(f_out) + ", " + std::to_string(f_in) +
        ") are not divisible by n_dyad=" + std::to_string(n_dyad) +
        "; pad to (" + std::to_string(r.padded_f_out) + ", " +
        std::to_string(r.padded_f_in) + ")");
}

// SGD step helpers: fresh parameter buffers (layers stay immutable once
// handed out; training replaces them wholesale).
template <typename T>
DyadLayer<T> sgd_step(const DyadLayer<T>& layer, const DyadGradients<T>& g, T lr) {
  DyadLayer<T> next;
  next.config = layer.config;
  next.w1 = axpy(-lr, g.d_w1, layer.w1);
  next.w2 = axpy(-lr, g.d_w2, layer.w2);
  if (layer.config.has_bias) next.bias = axpy(-lr, g.d_bias, layer.bias);
  return next;
}

template <typename T>
DenseLayer<T> sgd_step(const DenseLayer<T>& layer, const DenseGradients<T>& g, T lr) {
  DenseLayer<T> next;
  next.f_out = layer.f_out;
  next.f_in = layer.f_in;
  next.has_bias = layer.has_bias;
  next.w = axpy(-lr, g.d_w, layer.w);
  if (layer.has_bias) next.bias = axpy(-lr, g.d_bias, layer.bias);
  return next;
}

}  // namespace dyad
