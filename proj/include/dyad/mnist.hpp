#pragma once
// Desk-scale end-to-end harness: IDX digit datasets, a 2-layer MLP whose
// hidden projection is either Dense or Dyad-IT, softmax cross-entropy SGD
// training, evaluation, and a binary checkpoint format.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dyad/layer.hpp"
#include "dyad/rng.hpp"
#include "dyad/tensor.hpp"

namespace dyad {

template <typename T>
struct MnistDataset {
  Matrix<T> images;         // (pixels x n_examples), values in [0, 1]
  std::vector<int> labels;  // class ids 0..9
  std::string split;        // "train" or "test"

  index_t size() const { return static_cast<index_t>(labels.size()); }
};

namespace detail {

inline std::uint32_t read_u32_be(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in)
    throw std::runtime_error(std::string("IDX: truncated file while reading ") + what);
  return (static_cast<std::uint32_t>(b[0]) << 24) |
         (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace detail

// Parses the classic big-endian IDX pair: image file (magic 0x00000803,
// count, rows, cols, raw bytes) and label file (magic 0x00000801, count,
// raw bytes). Pixels normalize as byte/255.
template <typename T>
MnistDataset<T> load_idx(const std::string& images_path, const std::string& labels_path,
                         const std::string& split = "train") {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("IDX: cannot open " + images_path);
  const std::uint32_t img_magic = detail::read_u32_be(img, "image magic");
  if (img_magic != 0x00000803u)
    throw std::runtime_error("Bad magic (images): got " + std::to_string(img_magic) +
                             ", expected 2051");
  const std::uint32_t count = detail::read_u32_be(img, "image count");
  const std::uint32_t rows = detail::read_u32_be(img, "image rows");
  const std::uint32_t cols = detail::read_u32_be(img, "image cols");
  const index_t pixels = static_cast<index_t>(rows) * cols;
  if (count == 0 || pixels == 0) throw std::runtime_error("IDX: empty image file");

  std::vector<unsigned char> raw(static_cast<std::size_t>(count) * pixels);
  img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (img.gcount() != static_cast<std::streamsize>(raw.size()))
    throw std::runtime_error("IDX: truncated image payload in " + images_path);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("IDX: cannot open " + labels_path);
  const std::uint32_t lab_magic = detail::read_u32_be(lab, "label magic");
  if (lab_magic != 0x00000801u)
    throw std::runtime_error("Bad magic (labels): got " + std::to_string(lab_magic) +
                             ", expected 2049");
  const std::uint32_t lab_count = detail::read_u32_be(lab, "label count");
  if (lab_count != count)
    throw std::runtime_error("IDX: image/label count mismatch (" + std::to_string(count) +
                             " vs " + std::to_string(lab_count) + ")");
  std::vector<unsigned char> raw_labels(lab_count);
  lab.read(reinterpret_cast<char*>(raw_labels.data()),
           static_cast<std::streamsize>(raw_labels.size()));
  if (lab.gcount() != static_cast<std::streamsize>(raw_labels.size()))
    throw std::runtime_error("IDX: truncated label payload in " + labels_path);

  MnistDataset<T> ds;
  ds.split = split;
  ds.images = Matrix<T>(pixels, count);
  for (std::uint32_t e = 0; e < count; ++e)
    for (index_t p = 0; p < pixels; ++p)
      ds.images(p, e) = static_cast<T>(raw[static_cast<std::size_t>(e) * pixels + p]) / T(255);
  ds.labels.reserve(count);
  for (unsigned char b : raw_labels) {
    if (b > 9)
      throw std::runtime_error("IDX: label value " + std::to_string(int(b)) +
                               " out of range 0..9");
    ds.labels.push_back(b);
  }
  return ds;
}

// Two-layer MLP: layer1 (input -> hidden, Dense or Dyad-IT), ReLU, layer2
// (hidden -> output, always Dense — the 10-way head is not divisible by
// typical n_dyad and stays dense).
template <typename T>
struct MlpModel {
  bool layer1_dyad = false;
  DenseLayer<T> dense1;  // valid when !layer1_dyad
  DyadLayer<T> dyad1;    // valid when layer1_dyad
  DenseLayer<T> layer2;

  // training metadata carried into checkpoints
  std::uint32_t epoch = 0;
  std::uint64_t seed = 0;
  double final_loss = 0;

  index_t input_dim() const { return layer1_dyad ? dyad1.config.f_in() : dense1.f_in; }
  index_t hidden_dim() const { return layer1_dyad ? dyad1.config.f_out() : dense1.f_out; }
  index_t output_dim() const { return layer2.f_out; }
};

template <typename T>
MlpModel<T> make_mlp(bool layer1_dyad, index_t input_dim, index_t hidden_dim,
                     index_t output_dim, index_t n_dyad, std::uint64_t seed) {
  MlpModel<T> m;
  m.layer1_dyad = layer1_dyad;
  m.seed = seed;
  if (layer1_dyad) {
    require_divisible(hidden_dim, input_dim, n_dyad);
    DyadConfig cfg;
    cfg.n_dyad = n_dyad;
    cfg.n_in = input_dim / n_dyad;
    cfg.n_out = hidden_dim / n_dyad;
    cfg.variant = Variant::IT;
    cfg.has_bias = true;
    m.dyad1 = init_uniform<T>(cfg, seed);
  } else {
    m.dense1 = init_uniform_dense<T>(hidden_dim, input_dim, seed);
  }
  m.layer2 = init_uniform_dense<T>(output_dim, hidden_dim, seed + 1);
  return m;
}

namespace detail {

template <typename T>
Matrix<T> layer1_forward(const MlpModel<T>& m, const Matrix<T>& x) {
  return m.layer1_dyad ? forward(m.dyad1, x) : forward_dense(m.dense1, x);
}

template <typename T>
Matrix<T> relu(const Matrix<T>& a) {
  Matrix<T> out(a.rows(), a.cols());
  const T* ap = a.data();
  T* op = out.data();
  for (index_t i = 0; i < a.size(); ++i) op[i] = ap[i] > T(0) ? ap[i] : T(0);
  return out;
}

// Gathers dataset columns (and labels) for one minibatch.
template <typename T>
Matrix<T> gather_columns(const Matrix<T>& images, const std::vector<index_t>& order,
                         index_t from, index_t to) {
  Matrix<T> out(images.rows(), to - from);
  for (index_t b = from; b < to; ++b) {
    const index_t src = order[b];
    for (index_t p = 0; p < images.rows(); ++p) out(p, b - from) = images(p, src);
  }
  return out;
}

// Softmax cross-entropy over columns: returns summed loss over the batch and
// fills d_logits with (softmax - onehot) / batch (mean-loss gradient).
template <typename T>
double softmax_xent(const Matrix<T>& logits, const std::vector<int>& labels,
                    index_t label_offset, Matrix<T>& d_logits) {
  const index_t classes = logits.rows(), batch = logits.cols();
  double loss_sum = 0;
  for (index_t b = 0; b < batch; ++b) {
    T max_logit = logits(0, b);
    for (index_t o = 1; o < classes; ++o)
      if (logits(o, b) > max_logit) max_logit = logits(o, b);
    double sum_exp = 0;
    for (index_t o = 0; o < classes; ++o)
      sum_exp += std::exp(static_cast<double>(logits(o, b) - max_logit));
    const int label = labels[label_offset + b];
    loss_sum += std::log(sum_exp) + static_cast<double>(max_logit) -
                static_cast<double>(logits(label, b));
    for (index_t o = 0; o < classes; ++o) {
      const double p = std::exp(static_cast<double>(logits(o, b) - max_logit)) / sum_exp;
      d_logits(o, b) = static_cast<T>((p - (o == label ? 1.0 : 0.0)) /
                                      static_cast<double>(batch));
    }
  }
  return loss_sum;
}

}  // namespace detail

// Fraction of examples whose argmax logit equals the label; ties break to the
// lowest class id. Runs the forward in chunks.
template <typename T>
double evaluate(const MlpModel<T>& model, const MnistDataset<T>& data) {
  const index_t n = data.size();
  if (n == 0) throw std::invalid_argument("evaluate: empty dataset");
  const index_t chunk = 256;
  index_t correct = 0;
  std::vector<index_t> ident(n);
  for (index_t i = 0; i < n; ++i) ident[i] = i;
  for (index_t at = 0; at < n; at += chunk) {
    const index_t hi = std::min(n, at + chunk);
    Matrix<T> x = detail::gather_columns(data.images, ident, at, hi);
    Matrix<T> logits = forward_dense(model.layer2,
                                     detail::relu(detail::layer1_forward(model, x)));
    for (index_t b = 0; b < hi - at; ++b) {
      index_t best = 0;
      for (index_t o = 1; o < logits.rows(); ++o)
        if (logits(o, b) > logits(best, b)) best = o;
      if (best == data.labels[at + b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

struct EpochMetrics {
  index_t epoch = 0;        // 1-based
  double train_loss = 0;    // mean over the epoch's examples
  double test_accuracy = 0;
};

inline std::string metrics_csv(const std::vector<EpochMetrics>& rows) {
  std::string out = "epoch,train_loss,test_accuracy\n";
  char buf[96];
  for (const EpochMetrics& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%.6g,%.6g\n", static_cast<long long>(r.epoch),
                  r.train_loss, r.test_accuracy);
    out += buf;
  }
  return out;
}

// Minibatch SGD on softmax cross-entropy. Deterministic: shuffling derives
// from (seed, epoch) only. Aborts with diagnostics if the loss stops being
// finite. Returns per-epoch metrics; the model is updated in place.
template <typename T>
std::vector<EpochMetrics> train(MlpModel<T>& model, const MnistDataset<T>& train_data,
                                const MnistDataset<T>& test_data, index_t epochs,
                                T lr, index_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (train_data.images.rows() != model.input_dim())
    throw std::invalid_argument("train: dataset pixel count " +
                                std::to_string(train_data.images.rows()) +
                                " != model input dim " +
                                std::to_string(model.input_dim()));
  const index_t n = train_data.size();
  std::vector<EpochMetrics> metrics;
  std::vector<index_t> order(n);

  for (index_t epoch = 1; epoch <= epochs; ++epoch) {
    for (index_t i = 0; i < n; ++i) order[i] = i;
    SplitMix64 shuffle_rng(seed + static_cast<std::uint64_t>(epoch));
    for (index_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.below(i + 1)]);

    double loss_sum = 0;
    std::vector<int> batch_labels;
    for (index_t at = 0; at < n; at += batch_size) {
      const index_t hi = std::min(n, at + batch_size);
      const index_t b = hi - at;
      Matrix<T> x = detail::gather_columns(train_data.images, order, at, hi);
      batch_labels.assign(b, 0);
      for (index_t k = 0; k < b; ++k) batch_labels[k] = train_data.labels[order[at + k]];

      Matrix<T> h_pre = detail::layer1_forward(model, x);
      Matrix<T> h = detail::relu(h_pre);
      Matrix<T> logits = forward_dense(model.layer2, h);

      Matrix<T> d_logits(logits.rows(), logits.cols());
      const double batch_loss = detail::softmax_xent(logits, batch_labels, 0, d_logits);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch) + ", example offset " +
                                 std::to_string(at));
      loss_sum += batch_loss;

      DenseGradients<T> g2 = backward_dense(model.layer2, h, d_logits);
      Matrix<T> d_h_pre(h_pre.rows(), h_pre.cols());
      {
        const T* hp = h_pre.data();
        const T* dh = g2.d_x.data();
        T* out = d_h_pre.data();
        for (index_t i = 0; i < h_pre.size(); ++i) out[i] = hp[i] > T(0) ? dh[i] : T(0);
      }
      model.layer2 = sgd_step(model.layer2, g2, lr);
      if (model.layer1_dyad) {
        DyadGradients<T> g1 = backward(model.dyad1, x, d_h_pre);
        model.dyad1 = sgd_step(model.dyad1, g1, lr);
      } else {
        DenseGradients<T> g1 = backward_dense(model.dense1, x, d_h_pre);
        model.dense1 = sgd_step(model.dense1, g1, lr);
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(n);
    m.test_accuracy = evaluate(model, test_data);
    metrics.push_back(m);
    model.epoch = static_cast<std::uint32_t>(epoch);
    model.final_loss = m.train_loss;
  }
  return metrics;
}

// ---- checkpoint format ----
// magic 'DYAD' | u32 version=1 | u8 bytes-per-scalar | u8 layer1 kind
// (0 dense, 1 dyad) | u8 variant | u8 fused_cat | u32 input, hidden, output
// dims | u32 n_dyad | u32 epoch | u64 seed | f64 final_loss | raw
// little-endian parameter buffers: layer1 (dense: w, bias | dyad: w1, w2,
// bias), then layer2 (w, bias). Exact byte round-trip.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint32_t read_u32_le(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint64_t read_u64_le(std::istream& in, const char* what) {
  const std::uint64_t lo = read_u32_le(in, what);
  const std::uint64_t hi = read_u32_le(in, what);
  return lo | (hi << 32);
}

inline std::uint8_t read_u8(std::istream& in, const char* what) {
  char c;
  in.read(&c, 1);
  if (!in) throw std::runtime_error(std::string("checkpoint: truncated reading ") + what);
  return static_cast<std::uint8_t>(c);
}

template <typename T>
void write_scalars(std::ostream& os, const T* p, index_t n) {
  os.write(reinterpret_cast<const char*>(p),
           static_cast<std::streamsize>(n * static_cast<index_t>(sizeof(T))));
}

template <typename T>
void read_scalars(std::istream& in, T* p, index_t n, const char* what) {
  in.read(reinterpret_cast<char*>(p),
          static_cast<std::streamsize>(n * static_cast<index_t>(sizeof(T))));
  if (in.gcount() != static_cast<std::streamsize>(n * static_cast<index_t>(sizeof(T))))
    throw std::runtime_error(std::string("checkpoint: truncated parameter buffer (") +
                             what + ")");
}

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const MlpModel<T>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  os.write("DYAD", 4);
  detail::write_u32(os, kCheckpointVersion);
  os.put(static_cast<char>(sizeof(T)));
  os.put(static_cast<char>(model.layer1_dyad ? 1 : 0));
  os.put(static_cast<char>(model.layer1_dyad ? static_cast<int>(model.dyad1.config.variant) : 0));
  os.put(static_cast<char>(model.layer1_dyad && model.dyad1.config.fused_cat ? 1 : 0));
  detail::write_u32(os, static_cast<std::uint32_t>(model.input_dim()));
  detail::write_u32(os, static_cast<std::uint32_t>(model.hidden_dim()));
  detail::write_u32(os, static_cast<std::uint32_t>(model.output_dim()));
  detail::write_u32(os, static_cast<std::uint32_t>(model.layer1_dyad ? model.dyad1.config.n_dyad : 0));
  detail::write_u32(os, model.epoch);
  detail::write_u64(os, model.seed);
  double loss = model.final_loss;
  os.write(reinterpret_cast<const char*>(&loss), 8);

  if (model.layer1_dyad) {
    detail::write_scalars(os, model.dyad1.w1.data(), model.dyad1.w1.size());
    detail::write_scalars(os, model.dyad1.w2.data(), model.dyad1.w2.size());
    detail::write_scalars(os, model.dyad1.bias.data(), model.dyad1.bias.size());
  } else {
    detail::write_scalars(os, model.dense1.w.data(), model.dense1.w.size());
    detail::write_scalars(os, model.dense1.bias.data(), model.dense1.bias.size());
  }
  detail::write_scalars(os, model.layer2.w.data(), model.layer2.w.size());
  detail::write_scalars(os, model.layer2.bias.data(), model.layer2.bias.size());
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

template <typename T>
MlpModel<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DYAD", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const std::uint32_t version = detail::read_u32_le(in, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version) +
                             " (reader supports " + std::to_string(kCheckpointVersion) + ")");
  const std::uint8_t precision = detail::read_u8(in, "precision");
  if (precision != sizeof(T))
    throw std::runtime_error("checkpoint: precision mismatch (file holds " +
                             std::to_string(int(precision)) + "-byte scalars, reader expects " +
                             std::to_string(sizeof(T)) + ")");
  const bool layer1_dyad = detail::read_u8(in, "layer1 kind") != 0;
  const std::uint8_t variant_code = detail::read_u8(in, "variant");
  if (variant_code > 2)
    throw std::runtime_error("checkpoint: unknown variant code " +
                             std::to_string(int(variant_code)));
  const bool fused_cat = detail::read_u8(in, "fused flag") != 0;
  const index_t input_dim = detail::read_u32_le(in, "input dim");
  const index_t hidden_dim = detail::read_u32_le(in, "hidden dim");
  const index_t output_dim = detail::read_u32_le(in, "output dim");
  const index_t n_dyad = detail::read_u32_le(in, "n_dyad");
  const std::uint32_t epoch = detail::read_u32_le(in, "epoch");
  const std::uint64_t seed = detail::read_u64_le(in, "seed");
  double final_loss = 0;
  in.read(reinterpret_cast<char*>(&final_loss), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated reading final loss");

  MlpModel<T> m;
  m.layer1_dyad = layer1_dyad;
  m.epoch = epoch;
  m.seed = seed;
  m.final_loss = final_loss;
  if (layer1_dyad) {
    if (n_dyad < 1 || input_dim % n_dyad || hidden_dim % n_dyad)
      throw std::runtime_error("checkpoint: inconsistent dyad dims");
    DyadConfig cfg;
    cfg.n_dyad = n_dyad;
    cfg.n_in = input_dim / n_dyad;
    cfg.n_out = hidden_dim / n_dyad;
    cfg.variant = static_cast<Variant>(variant_code);
    cfg.has_bias = true;
    cfg.fused_cat = fused_cat;
    m.dyad1.config = cfg;
    m.dyad1.w1 = Tensor3<T>(n_dyad, cfg.n_out, cfg.n_in);
    m.dyad1.w2 = Tensor3<T>(n_dyad, cfg.n_out, cfg.n_in);
    m.dyad1.bias = Matrix<T>(hidden_dim, 1);
    detail::read_scalars(in, m.dyad1.w1.data(), m.dyad1.w1.size(), "dyad w1");
    detail::read_scalars(in, m.dyad1.w2.data(), m.dyad1.w2.size(), "dyad w2");
    detail::read_scalars(in, m.dyad1.bias.data(), m.dyad1.bias.size(), "dyad bias");
  } else {
    m.dense1.f_out = hidden_dim;
    m.dense1.f_in = input_dim;
    m.dense1.has_bias = true;
    m.dense1.w = Matrix<T>(hidden_dim, input_dim);
    m.dense1.bias = Matrix<T>(hidden_dim, 1);
    detail::read_scalars(in, m.dense1.w.data(), m.dense1.w.size(), "dense1 w");
    detail::read_scalars(in, m.dense1.bias.data(), m.dense1.bias.size(), "dense1 bias");
  }
  m.layer2.f_out = output_dim;
  m.layer2.f_in = hidden_dim;
  m.layer2.has_bias = true;
  m.layer2.w = Matrix<T>(output_dim, hidden_dim);
  m.layer2.bias = Matrix<T>(output_dim, 1);
  detail::read_scalars(in, m.layer2.w.data(), m.layer2.w.size(), "layer2 w");
  detail::read_scalars(in, m.layer2.bias.data(), m.layer2.bias.size(), "layer2 bias");

  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("checkpoint: trailing bytes after parameters in " + path);
  return m;
}

}  // namespace dyad
