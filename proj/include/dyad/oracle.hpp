#pragma once
// Ground-truth constructions the fast paths are tested against: explicit
// permutation matrices, dense materialization of Dyad layers, closed-form
// gradients through the dense route, and the two-layer connectivity
// brute-forcer.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dyad/layer.hpp"
#include "dyad/tensor.hpp"

namespace dyad {

// Square (n_dyad*n) permutation with P(i,j) = 1 iff j = n_dyad*(i mod n) + i div n.
// Each row and each column holds exactly one 1. For n == n_dyad the map is an
// involution, so P is symmetric.
template <typename T = double>
Matrix<T> permutation_matrix(index_t n_dyad, index_t n) {
  const index_t f = n_dyad * n;
  if (f < 1) throw std::invalid_argument("permutation_matrix: n_dyad*n must be >= 1");
  Matrix<T> p(f, f);
  for (index_t i = 0; i < f; ++i) p(i, n_dyad * (i % n) + i / n) = T(1);
  return p;
}

// (n_dyad*n_out x n_dyad*n_in) dense matrix with block b of w on the diagonal
// and zero elsewhere.
template <typename T>
Matrix<T> materialize_blockdiag(const Tensor3<T>& w) {
  const index_t nd = w.dim(0), n_out = w.dim(1), n_in = w.dim(2);
  Matrix<T> m(nd * n_out, nd * n_in);
  for (index_t b = 0; b < nd; ++b)
    for (index_t o = 0; o < n_out; ++o)
      for (index_t c = 0; c < n_in; ++c) m(b * n_out + o, b * n_in + c) = w(b, o, c);
  return m;
}

template <typename T>
struct OracleComponents {
  Matrix<T> w1mat;  // BlockDiag component, dense
  Matrix<T> u;      // BlockTrans component with its permutations undone, dense
};

// Reconstructs the two dense components of a Dyad layer. The stored w2 packs
// the permuted-to-block-diagonal form; undoing that means composing with the
// explicit permutation matrices: the input-side permutation acts on columns,
// the output-side permutation (transposed) on rows. The full dense weight is
// the SUM of the two components — overlapping positions add, mirroring the
// forward, which never de-duplicates.
template <typename T>
OracleComponents<T> oracle_components(const DyadLayer<T>& layer) {
  const DyadConfig& c = layer.config;
  OracleComponents<T> out;
  out.w1mat = materialize_blockdiag(layer.w1);
  Matrix<T> u = materialize_blockdiag(layer.w2);
  if (c.variant == Variant::IT || c.variant == Variant::DT)
    u = matmul(u, permutation_matrix<T>(c.n_dyad, c.n_in));
  if (c.variant == Variant::OT || c.variant == Variant::DT)
    u = matmul(transpose(permutation_matrix<T>(c.n_dyad, c.n_out)), u);
  out.u = std::move(u);
  return out;
}

template <typename T>
Matrix<T> materialize_variant(const DyadLayer<T>& layer) {
  OracleComponents<T> parts = oracle_components(layer);
  return add(parts.w1mat, parts.u);
}

// Closed-form gradients through the dense route: with W = W1mat + U and
// Y = W.x + b, dL/dW = dY.x^T lands on each packed weight exactly once (the
// permutations only move entries), so the packed gradients are block
// extractions of dY.x^T with the permutations undone. Agreement with
// backward() is limited only by summation-order rounding (~1e-15 relative),
// unlike finite differences.
template <typename T>
DyadGradients<T> oracle_gradients(const DyadLayer<T>& layer, const Matrix<T>& x,
                                  const Matrix<T>& d_y) {
  const DyadConfig& c = layer.config;
  DyadGradients<T> g;
  Matrix<T> dw_full = matmul_bt(d_y, x);  // (f_out x f_in)

  g.d_w1 = Tensor3<T>(c.n_dyad, c.n_out, c.n_in);
  for (index_t b = 0; b < c.n_dyad; ++b)
    for (index_t o = 0; o < c.n_out; ++o)
      for (index_t k = 0; k < c.n_in; ++k)
        g.d_w1(b, o, k) = dw_full(b * c.n_out + o, b * c.n_in + k);

  // dL/d(blockdiag(w2)): unwind U = A . blockdiag(w2) . C as A^T . dW . C^T.
  Matrix<T> g2 = dw_full;
  if (c.variant == Variant::IT || c.variant == Variant::DT)
    g2 = matmul(g2, transpose(permutation_matrix<T>(c.n_dyad, c.n_in)));
  if (c.variant == Variant::OT || c.variant == Variant::DT)
    g2 = matmul(permutation_matrix<T>(c.n_dyad, c.n_out), g2);
  g.d_w2 = Tensor3<T>(c.n_dyad, c.n_out, c.n_in);
  for (index_t b = 0; b < c.n_dyad; ++b)
    for (index_t o = 0; o < c.n_out; ++o)
      for (index_t k = 0; k < c.n_in; ++k)
        g.d_w2(b, o, k) = g2(b * c.n_out + o, b * c.n_in + k);

  g.d_x = matmul_at(materialize_variant(layer), d_y);
  if (c.has_bias) g.d_bias = rowsum(d_y);
  return g;
}

struct ConnectivityRow {
  index_t i = 0;            // input dimension
  index_t j = 0;            // output dimension
  bool same_block = false;  // i and j fall in the same BlockDiag block
  std::uint64_t path_count = 0;
  std::uint64_t dense_count = 0;  // two stacked dense layers: always n_dyad*n
};

struct ConnectivityTable {
  index_t n_dyad = 0;
  index_t n = 0;
  std::vector<ConnectivityRow> rows;  // sorted by (i, j)
  double same_block_mean = 0;
  double cross_block_mean = 0;
};

// Brute-force path counting through two stacked Dyad layers with square
// blocks (n_in = n_out = n). M is the 0/1 indicator of the materialized
// pattern (overlapping component positions clamp to 1: connectivity is about
// existence, not magnitude); paths from input i to output j across the
// middle layer number (M.M)[j,i].
inline ConnectivityTable count_paths(index_t n_dyad, index_t n, Variant variant) {
  const index_t f = n_dyad * n;
  DyadConfig config;
  config.n_dyad = n_dyad;
  config.n_in = n;
  config.n_out = n;
  config.variant = variant;
  config.has_bias = false;

  DyadLayer<double> ones;
  ones.config = config;
  ones.w1 = Tensor3<double>(n_dyad, n, n);
  ones.w2 = Tensor3<double>(n_dyad, n, n);
  for (index_t i = 0; i < ones.w1.size(); ++i) ones.w1.data()[i] = 1.0;
  for (index_t i = 0; i < ones.w2.size(); ++i) ones.w2.data()[i] = 1.0;
  Matrix<double> pattern = materialize_variant(ones);

  std::vector<std::uint64_t> m(f * f, 0);
  for (index_t r = 0; r < f; ++r)
    for (index_t s = 0; s < f; ++s) m[r * f + s] = pattern(r, s) != 0.0 ? 1 : 0;

  // c[j][i] = sum_k m[j][k] * m[k][i]
  std::vector<std::uint64_t> paths(f * f, 0);
  for (index_t j = 0; j < f; ++j)
    for (index_t k = 0; k < f; ++k) {
      if (!m[j * f + k]) continue;
      for (index_t i = 0; i < f; ++i) paths[j * f + i] += m[k * f + i];
    }

  ConnectivityTable table;
  table.n_dyad = n_dyad;
  table.n = n;
  table.rows.reserve(f * f);
  double same_sum = 0, cross_sum = 0;
  std::uint64_t same_n = 0, cross_n = 0;
  for (index_t i = 0; i < f; ++i)
    for (index_t j = 0; j < f; ++j) {
      ConnectivityRow row;
      row.i = i;
      row.j = j;
      row.same_block = (i / n) == (j / n);
      row.path_count = paths[j * f + i];
      row.dense_count = static_cast<std::uint64_t>(f);
      if (row.same_block) {
        same_sum += static_cast<double>(row.path_count);
        ++same_n;
      } else {
        cross_sum += static_cast<double>(row.path_count);
        ++cross_n;
      }
      table.rows.push_back(row);
    }
  table.same_block_mean = same_n ? same_sum / static_cast<double>(same_n) : 0.0;
  table.cross_block_mean = cross_n ? cross_sum / static_cast<double>(cross_n) : 0.0;
  return table;
}

inline void write_connectivity_csv(const ConnectivityTable& table, std::ostream& os) {
  os << "i,j,same_block,path_count,dense_count\n";
  for (const ConnectivityRow& r : table.rows)
    os << r.i << ',' << r.j << ',' << (r.same_block ? 1 : 0) << ',' << r.path_count
       << ',' << r.dense_count << '\n';
}

}  // namespace dyad
