// dyad — command-line surface for the structured-sparse layer library.
//
// Subcommands:
//   verify        forward + gradient checks against dense oracles
//   bench         time one dense/dyad pair at fixed dims, CSV out
//   sweep         width sweep at fixed n_dyad, CSV out
//   train         train the 2-layer digit classifier, metrics CSV + checkpoint
//   connectivity  brute-force path-count table, CSV out
//   synth-data    generate the deterministic synthetic digit corpus (IDX)
//
// Exit codes: 0 success, 1 check/runtime failure, 2 usage error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dyad/bench.hpp"
#include "dyad/datagen.hpp"
#include "dyad/layer.hpp"
#include "dyad/mnist.hpp"
#include "dyad/oracle.hpp"
#include "dyad/rng.hpp"
#include "dyad/tensor.hpp"

namespace {

using dyad::index_t;

// Writes text to the given file, or to stdout when path is empty.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open output file " + path);
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path);
}

// Infinity-norm relative disagreement: max|a-b| / max|b| (0 when identical).
template <typename T>
double rel_err_flat(const T* a, const T* b, index_t n) {
  double max_diff = 0, max_ref = 0;
  for (index_t i = 0; i < n; ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    const double r = std::abs(static_cast<double>(b[i]));
    if (d > max_diff) max_diff = d;
    if (r > max_ref) max_ref = r;
  }
  if (max_diff == 0) return 0;
  return max_diff / (max_ref > 0 ? max_ref : 1.0);
}

template <typename T>
double rel_err(const dyad::Matrix<T>& a, const dyad::Matrix<T>& b) {
  return rel_err_flat(a.data(), b.data(), a.size());
}

template <typename T>
double rel_err(const dyad::Tensor3<T>& a, const dyad::Tensor3<T>& b) {
  return rel_err_flat(a.data(), b.data(), a.size());
}

struct VerifyOpts {
  std::string variant = "all";
  index_t n_dyad = 4, n_in = 8, n_out = 8, batch = 4;
  std::uint64_t seed = 42;
  std::string precision = "f64";
  double tol = 1e-10;
};

dyad::DyadConfig config_for(const std::string& name, index_t n_dyad, index_t n_in,
                            index_t n_out) {
  dyad::DyadConfig c;
  c.n_dyad = n_dyad;
  c.n_in = n_in;
  c.n_out = n_out;
  c.has_bias = true;
  if (name == "cat") {
    c.variant = dyad::Variant::IT;
    c.fused_cat = true;
  } else {
    c.variant = dyad::variant_from_string(name);
  }
  return c;
}

template <typename T>
int run_verify(const VerifyOpts& o) {
  std::vector<std::string> names;
  if (o.variant == "all")
    names = {"it", "ot", "dt", "cat"};
  else
    names = {o.variant};

  bool all_ok = true;
  auto report = [&](const std::string& variant, const char* check, double err) {
    const bool ok = err <= o.tol;
    all_ok = all_ok && ok;
    std::printf("%-4s %-8s max rel err %.3e  %s\n", variant.c_str(), check, err,
                ok ? "ok" : "FAIL");
  };

  for (const std::string& name : names) {
    dyad::DyadConfig c = config_for(name, o.n_dyad, o.n_in, o.n_out);
    dyad::DyadLayer<T> layer = dyad::init_uniform<T>(c, o.seed);
    dyad::SplitMix64 rng(o.seed ^ 0xda3e39cb94b95bdbull);
    dyad::Matrix<T> x = dyad::random_matrix<T>(c.f_in(), o.batch, rng);
    dyad::Matrix<T> d_y = dyad::random_matrix<T>(c.f_out(), o.batch, rng);

    // forward vs the fully materialized equivalent dense map
    dyad::Matrix<T> y = dyad::forward(layer, x);
    dyad::Matrix<T> y_ref = dyad::matmul(dyad::materialize_variant(layer), x);
    dyad::add_bias_inplace(y_ref, layer.bias);
    report(name, "forward", rel_err(y, y_ref));

    // reverse-mode gradients vs closed-form dense adjoints
    dyad::DyadGradients<T> g = dyad::backward(layer, x, d_y);
    dyad::DyadGradients<T> ref = dyad::oracle_gradients(layer, x, d_y);
    report(name, "d_w1", rel_err(g.d_w1, ref.d_w1));
    report(name, "d_w2", rel_err(g.d_w2, ref.d_w2));
    report(name, "d_bias", rel_err(g.d_bias, ref.d_bias));
    report(name, "d_x", rel_err(g.d_x, ref.d_x));
  }

  if (!all_ok) {
    std::cerr << "verify: at least one check exceeded tol " << o.tol << "\n";
    return 1;
  }
  std::printf("all checks within tol %g\n", o.tol);
  return 0;
}

struct BenchOpts {
  index_t f_in = 768, f_out = 3072, n_dyad = 4, batch = 32;
  index_t iters = 200, warmup = 20;
  std::uint64_t seed = 42;
  std::string precision = "f32";
  std::string variant = "it";
  std::string out;
};

template <typename T>
void run_bench(const BenchOpts& o) {
  dyad::require_divisible(o.f_out, o.f_in, o.n_dyad);
  dyad::DenseLayer<T> dense = dyad::init_uniform_dense<T>(o.f_out, o.f_in, o.seed);
  dyad::BenchRecord dense_rec =
      dyad::time_layer(dense, o.batch, o.warmup, o.iters, o.seed + 1);

  dyad::DyadConfig c =
      config_for(o.variant, o.n_dyad, o.f_in / o.n_dyad, o.f_out / o.n_dyad);
  dyad::DyadLayer<T> layer = dyad::init_uniform<T>(c, o.seed);
  dyad::BenchRecord dyad_rec =
      dyad::time_layer(layer, o.batch, o.warmup, o.iters, o.seed + 1);
  dyad_rec.speedup = dyad_rec.total_ms > 0 ? dense_rec.total_ms / dyad_rec.total_ms : 0;

  emit(o.out, dyad::to_csv({dense_rec, dyad_rec}));
}

struct SweepOpts {
  std::vector<index_t> widths = {768, 1024, 1536, 2048};
  index_t n_dyad = 4, batch = 32;
  index_t iters = 200, warmup = 20;
  std::uint64_t seed = 42;
  std::string precision = "f32";
  std::string out;
};

template <typename T>
void run_sweep(const SweepOpts& o) {
  std::vector<dyad::BenchRecord> records =
      dyad::width_sweep<T>(o.widths, o.n_dyad, o.batch, o.iters, o.warmup, o.seed);
  emit(o.out, dyad::to_csv(records));
}

struct TrainOpts {
  std::string data_dir;
  std::string layer = "dense";
  index_t n_dyad = 4, hidden = 256, epochs = 5, batch_size = 64;
  double lr = 0.1;
  std::uint64_t seed = 42;
  std::string checkpoint;
  std::string precision = "f32";
  std::string out;
};

std::string require_file(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p))
    throw std::runtime_error("missing data file " + p.string());
  return p.string();
}

template <typename T>
int run_train(const TrainOpts& o) {
  namespace fs = std::filesystem;
  const fs::path root(o.data_dir);
  dyad::MnistDataset<T> train_ds =
      dyad::load_idx<T>(require_file(root / "train-images-idx3-ubyte"),
                        require_file(root / "train-labels-idx1-ubyte"), "train");
  dyad::MnistDataset<T> test_ds =
      dyad::load_idx<T>(require_file(root / "t10k-images-idx3-ubyte"),
                        require_file(root / "t10k-labels-idx1-ubyte"), "test");

  const bool use_dyad = (o.layer == "dyad-it");
  dyad::MlpModel<T> model = dyad::make_mlp<T>(use_dyad, train_ds.images.rows(),
                                              o.hidden, 10, o.n_dyad, o.seed);

  std::vector<dyad::EpochMetrics> metrics;
  if (o.epochs > 0)
    metrics = dyad::train(model, train_ds, test_ds, o.epochs, static_cast<T>(o.lr),
                          o.batch_size, o.seed);
  emit(o.out, dyad::metrics_csv(metrics));

  const double acc = o.epochs > 0 ? metrics.back().test_accuracy
                                  : dyad::evaluate(model, test_ds);
  std::cerr << "final test accuracy " << dyad::format_g6(acc)
            << (o.epochs > 0 ? "" : " (untrained)") << "\n";
  if (!o.checkpoint.empty()) dyad::save_checkpoint(model, o.checkpoint);
  return 0;
}

struct ConnOpts {
  index_t n_dyad = 4, n = 8;
  std::string variant = "it";
  std::string out;
};

void run_connectivity(const ConnOpts& o) {
  dyad::ConnectivityTable table =
      dyad::count_paths(o.n_dyad, o.n, dyad::variant_from_string(o.variant));
  std::ostringstream csv;
  dyad::write_connectivity_csv(table, csv);
  emit(o.out, csv.str());
  std::cerr << "same-block mean " << dyad::format_g6(table.same_block_mean)
            << ", cross-block mean " << dyad::format_g6(table.cross_block_mean) << "\n";
}

struct SynthOpts {
  std::string out_dir;
  index_t n_train = 20000, n_test = 4000;
  std::uint64_t seed = 20240601;
};

void run_synth(const SynthOpts& o) {
  const bool wrote = dyad::ensure_digit_files(o.out_dir, o.n_train, o.n_test, o.seed);
  std::cerr << (wrote ? "wrote synthetic digit corpus to "
                      : "digit files already present in ")
            << o.out_dir << "\n";
}

template <typename Fn>
int with_precision(const std::string& precision, Fn&& fn) {
  if (precision == "f32") return fn(float{});
  return fn(double{});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structured-sparse linear layers: verification, benchmarks, training"};
  app.require_subcommand(1);

  VerifyOpts vo;
  CLI::App* verify = app.add_subcommand("verify", "check forward/gradients against dense oracles");
  verify->add_option("--variant", vo.variant, "permutation placement, or all")
      ->capture_default_str()
      ->check(CLI::IsMember({"it", "ot", "dt", "cat", "all"}));
  verify->add_option("--n-dyad", vo.n_dyad, "blocks per component")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  verify->add_option("--n-in", vo.n_in, "per-block input width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  verify->add_option("--n-out", vo.n_out, "per-block output width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  verify->add_option("--batch", vo.batch, "input columns")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  verify->add_option("--seed", vo.seed, "weight/input generator seed")
      ->capture_default_str()
      ->envname("DYAD_SEED");
  verify->add_option("--precision", vo.precision, "element type")
      ->capture_default_str()
      ->check(CLI::IsMember({"f32", "f64"}));
  verify->add_option("--tol", vo.tol, "max relative error accepted per check")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);

  BenchOpts bo;
  CLI::App* bench = app.add_subcommand("bench", "time one dense/dyad pair, CSV out");
  bench->add_option("--f-in", bo.f_in, "full input width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--f-out", bo.f_out, "full output width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--n-dyad", bo.n_dyad, "blocks per component")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--batch", bo.batch, "input columns per iteration")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--iters", bo.iters, "timed iterations, mean-reported (min 10)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--warmup", bo.warmup, "untimed burn-in iterations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--seed", bo.seed, "weight/input generator seed")
      ->capture_default_str()
      ->envname("DYAD_SEED");
  bench->add_option("--precision", bo.precision, "element type")
      ->capture_default_str()
      ->check(CLI::IsMember({"f32", "f64"}));
  bench->add_option("--variant", bo.variant, "permutation placement")
      ->capture_default_str()
      ->check(CLI::IsMember({"it", "ot", "dt", "cat"}));
  bench->add_option("--out", bo.out, "write CSV here instead of stdout");

  SweepOpts so;
  CLI::App* sweep = app.add_subcommand("sweep", "width sweep at fixed n_dyad, CSV out");
  sweep->add_option("--widths", so.widths, "comma-separated widths w; each times w->4w and 4w->w")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  sweep->add_option("--n-dyad", so.n_dyad, "blocks per component")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep->add_option("--batch", so.batch, "input columns per iteration")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep->add_option("--iters", so.iters, "timed iterations, mean-reported (min 10)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep->add_option("--warmup", so.warmup, "untimed burn-in iterations")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  sweep->add_option("--seed", so.seed, "weight/input generator seed")
      ->capture_default_str()
      ->envname("DYAD_SEED");
  sweep->add_option("--precision", so.precision, "element type")
      ->capture_default_str()
      ->check(CLI::IsMember({"f32", "f64"}));
  sweep->add_option("--out", so.out, "write CSV here instead of stdout");

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "train the 2-layer digit classifier");
  train->add_option("--data-dir", to.data_dir, "directory holding the four IDX files")->required();
  train->add_option("--layer", to.layer, "first-layer kind")
      ->capture_default_str()
      ->check(CLI::IsMember({"dense", "dyad-it"}));
  train->add_option("--n-dyad", to.n_dyad, "blocks per component (dyad-it only)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--hidden", to.hidden, "hidden width (dyad-it: input and hidden must divide by n-dyad)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--epochs", to.epochs, "passes over the training set; 0 evaluates only")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train->add_option("--lr", to.lr, "SGD learning rate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--batch-size", to.batch_size, "examples per SGD step")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train->add_option("--seed", to.seed, "init and shuffle seed")
      ->capture_default_str()
      ->envname("DYAD_SEED");
  train->add_option("--checkpoint", to.checkpoint, "save the final model here");
  train->add_option("--precision", to.precision, "element type")
      ->capture_default_str()
      ->check(CLI::IsMember({"f32", "f64"}));
  train->add_option("--out", to.out, "write per-epoch metrics CSV here instead of stdout");

  ConnOpts co;
  CLI::App* conn = app.add_subcommand("connectivity", "brute-force path-count table, CSV out");
  conn->add_option("--n-dyad", co.n_dyad, "blocks per component")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  conn->add_option("--n", co.n, "square per-block width")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  conn->add_option("--variant", co.variant, "permutation placement")
      ->capture_default_str()
      ->check(CLI::IsMember({"it", "ot", "dt"}));
  conn->add_option("--out", co.out, "write CSV here instead of stdout");

  SynthOpts yo;
  CLI::App* synth = app.add_subcommand("synth-data", "generate the synthetic digit corpus");
  synth->add_option("--out-dir", yo.out_dir, "directory for the four IDX files (reused if present)")
      ->required();
  synth->add_option("--n-train", yo.n_train, "training examples")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth->add_option("--n-test", yo.n_test, "test examples")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  synth->add_option("--seed", yo.seed, "corpus generator seed")
      ->capture_default_str()
      ->envname("DYAD_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage error
    return code == 0 ? 0 : 2;
  }

  try {
    if (*verify) return with_precision(vo.precision, [&](auto tag) {
      return run_verify<decltype(tag)>(vo);
    });
    if (*bench) return with_precision(bo.precision, [&](auto tag) {
      run_bench<decltype(tag)>(bo);
      return 0;
    });
    if (*sweep) return with_precision(so.precision, [&](auto tag) {
      run_sweep<decltype(tag)>(so);
      return 0;
    });
    if (*train) return with_precision(to.precision, [&](auto tag) {
      return run_train<decltype(tag)>(to);
    });
    if (*conn) {
      run_connectivity(co);
      return 0;
    }
    if (*synth) {
      run_synth(yo);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
