#pragma once
// Wall-clock timing harness for dense vs Dyad layers: per-phase means over a
// timed loop, plus the width sweep that tracks how the speedup grows with
// layer width. Single-threaded by design; timings are only comparable within
// one unloaded machine.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dyad/layer.hpp"
#include "dyad/rng.hpp"
#include "dyad/tensor.hpp"

namespace dyad {

struct BenchRecord {
  std::string variant;  // "dense", "it", "ot", "dt", "cat"
  index_t n_dyad = 0;   // 0 marks dense rows (no block count applies)
  index_t f_in = 0;
  index_t f_out = 0;
  index_t batch = 0;
  double fwd_ms = 0;
  double bwd_ms = 0;
  double total_ms = 0;
  double speedup = 1.0;  // dense total / this row's total; 1 for dense rows
};

namespace detail {

// Consumes one scalar per phase so the optimizer cannot drop the work.
inline double& bench_sink() {
  static double sink = 0;
  return sink;
}

struct PhaseTimes {
  double fwd_ms = 0;
  double bwd_ms = 0;
};

template <typename T, typename LayerT, typename FwdFn, typename BwdFn>
PhaseTimes time_phases(const LayerT& layer, index_t f_in, index_t f_out,
                       index_t batch, index_t warmup_iters, index_t timed_iters,
                       std::uint64_t seed, FwdFn&& fwd, BwdFn&& bwd) {
  if (warmup_iters < 1) throw std::invalid_argument("time_phases: warmup_iters must be >= 1");
  if (timed_iters < 10) throw std::invalid_argument("time_phases: timed_iters must be >= 10");
  using clock = std::chrono::steady_clock;
  SplitMix64 rng(seed);
  PhaseTimes t;
  for (index_t it = 0; it < warmup_iters + timed_iters; ++it) {
    // fresh inputs every iteration, generated outside the timed region
    Matrix<T> x = random_matrix<T>(f_in, batch, rng);
    Matrix<T> d_y = random_matrix<T>(f_out, batch, rng);
    auto t0 = clock::now();
    Matrix<T> y = fwd(layer, x);
    auto t1 = clock::now();
    auto grads = bwd(layer, x, d_y);
    auto t2 = clock::now();
    bench_sink() += static_cast<double>(y(0, 0)) + static_cast<double>(grads.d_x(0, 0));
    if (it >= warmup_iters) {
      t.fwd_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
      t.bwd_ms += std::chrono::duration<double, std::milli>(t2 - t1).count();
    }
  }
  t.fwd_ms /= static_cast<double>(timed_iters);
  t.bwd_ms /= static_cast<double>(timed_iters);
  return t;
}

}  // namespace detail

// Means over timed_iters of forward+backward on fresh random inputs. The
// speedup field is filled by callers that also time the dense reference.
template <typename T>
BenchRecord time_layer(const DyadLayer<T>& layer, index_t batch,
                       index_t warmup_iters = 20, index_t timed_iters = 200,
                       std::uint64_t seed = 42) {
  const DyadConfig& c = layer.config;
  detail::PhaseTimes t = detail::time_phases<T>(
      layer, c.f_in(), c.f_out(), batch, warmup_iters, timed_iters, seed,
      [](const DyadLayer<T>& l, const Matrix<T>& x) { return forward(l, x); },
      [](const DyadLayer<T>& l, const Matrix<T>& x, const Matrix<T>& d_y) {
        return backward(l, x, d_y);
      });
  BenchRecord r;
  r.variant = c.fused_cat ? "cat" : variant_name(c.variant);
  r.n_dyad = c.n_dyad;
  r.f_in = c.f_in();
  r.f_out = c.f_out();
  r.batch = batch;
  r.fwd_ms = t.fwd_ms;
  r.bwd_ms = t.bwd_ms;
  r.total_ms = t.fwd_ms + t.bwd_ms;
  return r;
}

template <typename T>
BenchRecord time_layer(const DenseLayer<T>& layer, index_t batch,
                       index_t warmup_iters = 20, index_t timed_iters = 200,
                       std::uint64_t seed = 42) {
  detail::PhaseTimes t = detail::time_phases<T>(
      layer, layer.f_in, layer.f_out, batch, warmup_iters, timed_iters, seed,
      [](const DenseLayer<T>& l, const Matrix<T>& x) { return forward_dense(l, x); },
      [](const DenseLayer<T>& l, const Matrix<T>& x, const Matrix<T>& d_y) {
        return backward_dense(l, x, d_y);
      });
  BenchRecord r;
  r.variant = "dense";
  r.n_dyad = 0;
  r.f_in = layer.f_in;
  r.f_out = layer.f_out;
  r.batch = batch;
  r.fwd_ms = t.fwd_ms;
  r.bwd_ms = t.bwd_ms;
  r.total_ms = t.fwd_ms + t.bwd_ms;
  r.speedup = 1.0;
  return r;
}

// For each width w, times the ff projection pair (w -> 4w and 4w -> w) for a
// dense reference and a Dyad-IT layer, aggregating the pair into one record
// per kind per width. Speedup = dense pair total / dyad pair total.
template <typename T>
std::vector<BenchRecord> width_sweep(const std::vector<index_t>& widths,
                                     index_t n_dyad, index_t batch,
                                     index_t timed_iters = 200, index_t warmup_iters = 20,
                                     std::uint64_t seed = 42) {
  std::vector<BenchRecord> records;
  for (index_t w : widths) {
    require_divisible(4 * w, w, n_dyad);
    const index_t wide = 4 * w;

    DenseLayer<T> dense_up = init_uniform_dense<T>(wide, w, seed);
    DenseLayer<T> dense_down = init_uniform_dense<T>(w, wide, seed + 1);
    BenchRecord d_up = time_layer(dense_up, batch, warmup_iters, timed_iters, seed + 2);
    BenchRecord d_down = time_layer(dense_down, batch, warmup_iters, timed_iters, seed + 3);

    DyadConfig cfg_up{n_dyad, w / n_dyad, wide / n_dyad, Variant::IT, true, false};
    DyadConfig cfg_down{n_dyad, wide / n_dyad, w / n_dyad, Variant::IT, true, false};
    DyadLayer<T> dyad_up = init_uniform<T>(cfg_up, seed);
    DyadLayer<T> dyad_down = init_uniform<T>(cfg_down, seed + 1);
    BenchRecord y_up = time_layer(dyad_up, batch, warmup_iters, timed_iters, seed + 4);
    BenchRecord y_down = time_layer(dyad_down, batch, warmup_iters, timed_iters, seed + 5);

    BenchRecord dense_row;
    dense_row.variant = "dense";
    dense_row.n_dyad = 0;
    dense_row.f_in = w;
    dense_row.f_out = wide;
    dense_row.batch = batch;
    dense_row.fwd_ms = d_up.fwd_ms + d_down.fwd_ms;
    dense_row.bwd_ms = d_up.bwd_ms + d_down.bwd_ms;
    dense_row.total_ms = dense_row.fwd_ms + dense_row.bwd_ms;
    dense_row.speedup = 1.0;

    BenchRecord dyad_row;
    dyad_row.variant = "it";
    dyad_row.n_dyad = n_dyad;
    dyad_row.f_in = w;
    dyad_row.f_out = wide;
    dyad_row.batch = batch;
    dyad_row.fwd_ms = y_up.fwd_ms + y_down.fwd_ms;
    dyad_row.bwd_ms = y_up.bwd_ms + y_down.bwd_ms;
    dyad_row.total_ms = dyad_row.fwd_ms + dyad_row.bwd_ms;
    dyad_row.speedup = dense_row.total_ms / dyad_row.total_ms;

    records.push_back(dense_row);
    records.push_back(dyad_row);
  }
  return records;
}

// CSV serialization: 6 significant digits on timing columns; a parse of the
// output re-serializes to identical bytes.
inline std::string format_g6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string bench_csv_header() {
  return "variant,n_dyad,f_in,f_out,batch,fwd_ms,bwd_ms,total_ms,speedup";
}

inline std::string to_csv(const std::vector<BenchRecord>& records) {
  std::string out = bench_csv_header() + "\n";
  for (const BenchRecord& r : records) {
    out += r.variant + ',' + std::to_string(r.n_dyad) + ',' + std::to_string(r.f_in) +
           ',' + std::to_string(r.f_out) + ',' + std::to_string(r.batch) + ',' +
           format_g6(r.fwd_ms) + ',' + format_g6(r.bwd_ms) + ',' +
           format_g6(r.total_ms) + ',' + format_g6(r.speedup) + '\n';
  }
  return out;
}

inline std::vector<BenchRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != bench_csv_header())
    throw std::invalid_argument("bench CSV: missing or wrong header");
  std::vector<BenchRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string::size_type pos = 0;
    while (true) {
      auto comma = line.find(',', pos);
      fields.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (fields.size() != 9)
      throw std::invalid_argument("bench CSV: expected 9 fields, got " +
                                  std::to_string(fields.size()));
    BenchRecord r;
    r.variant = fields[0];
    r.n_dyad = std::stoll(fields[1]);
    r.f_in = std::stoll(fields[2]);
    r.f_out = std::stoll(fields[3]);
    r.batch = std::stoll(fields[4]);
    r.fwd_ms = std::stod(fields[5]);
    r.bwd_ms = std::stod(fields[6]);
    r.total_ms = std::stod(fields[7]);
    r.speedup = std::stod(fields[8]);
    records.push_back(r);
  }
  return records;
}

}  // namespace dyad
