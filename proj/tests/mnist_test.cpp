// End-to-end harness checks: IDX parsing (including corrupted inputs), the
// synthetic digit generator, evaluation semantics, deterministic training,
// divergence detection, and checkpoint round-trips.

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dyad/datagen.hpp"
#include "dyad/layer.hpp"
#include "dyad/mnist.hpp"
#include "dyad/rng.hpp"
#include "dyad/tensor.hpp"

namespace {

namespace fs = std::filesystem;
using dyad::index_t;
using dyad::Matrix;

std::string test_dir() {
  const ::testing::TestInfo* info = ::testing::UnitTest::GetInstance()->current_test_info();
  fs::path dir = fs::path(::testing::TempDir()) /
                 (std::string("dyad_") + info->test_suite_name() + "_" + info->name());
  fs::remove_all(dir);  // leftovers from a previous run would alias fixed file names
  fs::create_directories(dir);
  return dir.string();
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
}

TEST(SyntheticDigits, DeterministicAndWellFormed) {
  dyad::SyntheticDigits a = dyad::generate_digits(64, 7);
  dyad::SyntheticDigits b = dyad::generate_digits(64, 7);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.labels, b.labels);
  ASSERT_EQ(a.pixels.size(), 64u * 784u);
  ASSERT_EQ(a.labels.size(), 64u);
  for (unsigned char l : a.labels) ASSERT_LE(l, 9);

  dyad::SyntheticDigits c = dyad::generate_digits(64, 8);
  EXPECT_NE(a.pixels, c.pixels);

  // images carry actual ink
  std::size_t lit = 0;
  for (unsigned char p : a.pixels)
    if (p > 128) ++lit;
  EXPECT_GT(lit, 64u * 20u);
}

TEST(LoadIdx, RoundTripsGeneratedFiles) {
  const std::string dir = test_dir();
  dyad::SyntheticDigits data = dyad::generate_digits(16, 3);
  dyad::write_idx_images(dir + "/imgs", data.pixels, 16);
  dyad::write_idx_labels(dir + "/labs", data.labels);

  dyad::MnistDataset<float> ds = dyad::load_idx<float>(dir + "/imgs", dir + "/labs", "train");
  EXPECT_EQ(ds.size(), 16);
  EXPECT_EQ(ds.images.rows(), 784);
  EXPECT_EQ(ds.images.cols(), 16);
  EXPECT_EQ(ds.split, "train");
  for (index_t e = 0; e < 16; ++e) ASSERT_EQ(ds.labels[e], data.labels[e]);
  // byte/255 normalization, column-per-example layout
  for (index_t p = 0; p < 784; ++p)
    ASSERT_FLOAT_EQ(ds.images(p, 3), data.pixels[3 * 784 + p] / 255.0f);
}

TEST(LoadIdx, RejectsCorruptedInputs) {
  const std::string dir = test_dir();
  dyad::SyntheticDigits data = dyad::generate_digits(4, 5);
  dyad::write_idx_images(dir + "/imgs", data.pixels, 4);
  dyad::write_idx_labels(dir + "/labs", data.labels);

  // corrupted image magic
  {
    std::vector<unsigned char> bytes = read_bytes(dir + "/imgs");
    bytes[3] = 0x99;
    write_bytes(dir + "/imgs_badmagic", bytes);
    try {
      dyad::load_idx<float>(dir + "/imgs_badmagic", dir + "/labs");
      FAIL() << "expected bad-magic error";
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
  }
  // corrupted label magic
  {
    std::vector<unsigned char> bytes = read_bytes(dir + "/labs");
    bytes[3] = 0x11;
    write_bytes(dir + "/labs_badmagic", bytes);
    EXPECT_THROW(dyad::load_idx<float>(dir + "/imgs", dir + "/labs_badmagic"),
                 std::runtime_error);
  }
  // count mismatch between the pair
  {
    dyad::SyntheticDigits five = dyad::generate_digits(5, 5);
    dyad::write_idx_labels(dir + "/labs5", five.labels);
    try {
      dyad::load_idx<float>(dir + "/imgs", dir + "/labs5");
      FAIL() << "expected count mismatch";
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find("mismatch"), std::string::npos);
    }
  }
  // truncated image payload
  {
    std::vector<unsigned char> bytes = read_bytes(dir + "/imgs");
    bytes.resize(bytes.size() - 100);
    write_bytes(dir + "/imgs_short", bytes);
    EXPECT_THROW(dyad::load_idx<float>(dir + "/imgs_short", dir + "/labs"),
                 std::runtime_error);
  }
  // label byte out of range
  {
    std::vector<unsigned char> bytes = read_bytes(dir + "/labs");
    bytes[8] = 12;  // first label byte
    write_bytes(dir + "/labs_range", bytes);
    EXPECT_THROW(dyad::load_idx<float>(dir + "/imgs", dir + "/labs_range"),
                 std::runtime_error);
  }
  // missing files
  EXPECT_THROW(dyad::load_idx<float>(dir + "/nope", dir + "/labs"), std::runtime_error);
}

TEST(EnsureDigitFiles, WritesOnceThenReuses) {
  const std::string dir = test_dir();
  EXPECT_TRUE(dyad::ensure_digit_files(dir, 12, 6, 99));
  EXPECT_FALSE(dyad::ensure_digit_files(dir, 12, 6, 99));  // already present
  dyad::MnistDataset<float> train =
      dyad::load_idx<float>(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
  dyad::MnistDataset<float> test =
      dyad::load_idx<float>(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
  EXPECT_EQ(train.size(), 12);
  EXPECT_EQ(test.size(), 6);
}

// Small hand-built model: identity layers so logits == relu(x).
dyad::MlpModel<float> identity_model() {
  dyad::MlpModel<float> m = dyad::make_mlp<float>(false, 10, 10, 10, 1, 1);
  for (index_t i = 0; i < m.dense1.w.size(); ++i) m.dense1.w.data()[i] = 0.0f;
  for (index_t i = 0; i < 10; ++i) m.dense1.w(i, i) = 1.0f;
  for (index_t i = 0; i < m.dense1.bias.size(); ++i) m.dense1.bias.data()[i] = 0.0f;
  for (index_t i = 0; i < m.layer2.w.size(); ++i) m.layer2.w.data()[i] = 0.0f;
  for (index_t i = 0; i < 10; ++i) m.layer2.w(i, i) = 1.0f;
  for (index_t i = 0; i < m.layer2.bias.size(); ++i) m.layer2.bias.data()[i] = 0.0f;
  return m;
}

dyad::MnistDataset<float> one_hot_dataset(const std::vector<int>& labels) {
  dyad::MnistDataset<float> ds;
  ds.split = "test";
  ds.images = Matrix<float>(10, static_cast<index_t>(labels.size()));
  ds.labels = labels;
  for (index_t e = 0; e < static_cast<index_t>(labels.size()); ++e)
    ds.images(labels[e], e) = 1.0f;
  return ds;
}

TEST(Evaluate, PerfectPredictorScoresOne) {
  dyad::MlpModel<float> m = identity_model();
  dyad::MnistDataset<float> ds = one_hot_dataset({0, 3, 7, 9, 1, 5});
  EXPECT_DOUBLE_EQ(dyad::evaluate(m, ds), 1.0);
}

TEST(Evaluate, TiesBreakToLowestClassId) {
  dyad::MlpModel<float> m = identity_model();
  // zero weights everywhere: all logits equal -> always predicts class 0
  for (index_t i = 0; i < 10; ++i) m.dense1.w(i, i) = 0.0f;
  for (index_t i = 0; i < 10; ++i) m.layer2.w(i, i) = 0.0f;
  dyad::MnistDataset<float> ds = one_hot_dataset({0, 0, 1, 2});
  EXPECT_DOUBLE_EQ(dyad::evaluate(m, ds), 0.5);
}

TEST(Evaluate, RejectsEmptyDataset) {
  dyad::MlpModel<float> m = identity_model();
  dyad::MnistDataset<float> ds;
  ds.images = Matrix<float>(10, 1);
  ds.labels = {};  // size() == 0
  EXPECT_THROW(dyad::evaluate(m, ds), std::invalid_argument);
}

// Builds a small shared corpus once for the training tests.
struct SmallCorpus {
  dyad::MnistDataset<float> train;
  dyad::MnistDataset<float> test;
};

SmallCorpus small_corpus(index_t n_train, index_t n_test, std::uint64_t seed) {
  static int counter = 0;
  const std::string dir =
      (fs::path(::testing::TempDir()) / ("dyad_corpus_" + std::to_string(counter++))).string();
  fs::create_directories(dir);
  dyad::SyntheticDigits tr = dyad::generate_digits(n_train, seed);
  dyad::SyntheticDigits te = dyad::generate_digits(n_test, seed + 1);
  dyad::write_idx_images(dir + "/ti", tr.pixels, n_train);
  dyad::write_idx_labels(dir + "/tl", tr.labels);
  dyad::write_idx_images(dir + "/ei", te.pixels, n_test);
  dyad::write_idx_labels(dir + "/el", te.labels);
  SmallCorpus c;
  c.train = dyad::load_idx<float>(dir + "/ti", dir + "/tl", "train");
  c.test = dyad::load_idx<float>(dir + "/ei", dir + "/el", "test");
  return c;
}

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
  SmallCorpus c = small_corpus(32, 16, 11);
  dyad::MlpModel<float> model = dyad::make_mlp<float>(false, 784, 32, 10, 1, 5);
  const std::vector<float> w_before = *model.dense1.w.buffer();
  std::vector<dyad::EpochMetrics> metrics =
      dyad::train(model, c.train, c.test, 2, 0.0f, 8, 5);
  ASSERT_EQ(metrics.size(), 2u);
  EXPECT_EQ(*model.dense1.w.buffer(), w_before);
  EXPECT_DOUBLE_EQ(metrics[0].test_accuracy, metrics[1].test_accuracy);
  EXPECT_DOUBLE_EQ(metrics[0].train_loss, metrics[1].train_loss);
}

TEST(Train, MemorizesTinyCorpus) {
  SmallCorpus c = small_corpus(8, 8, 21);
  // evaluate on the training set itself: loss must collapse
  dyad::MlpModel<float> model = dyad::make_mlp<float>(false, 784, 32, 10, 1, 7);
  std::vector<dyad::EpochMetrics> metrics =
      dyad::train(model, c.train, c.train, 60, 0.2f, 8, 7);
  EXPECT_LT(metrics.back().train_loss, 0.05);
  EXPECT_DOUBLE_EQ(metrics.back().test_accuracy, 1.0);
  EXPECT_LT(metrics.back().train_loss, metrics.front().train_loss);
}

TEST(Train, DyadLayerLearnsToo) {
  SmallCorpus c = small_corpus(64, 32, 31);
  dyad::MlpModel<float> model = dyad::make_mlp<float>(true, 784, 32, 10, 4, 9);
  EXPECT_TRUE(model.layer1_dyad);
  std::vector<dyad::EpochMetrics> metrics =
      dyad::train(model, c.train, c.train, 40, 0.2f, 16, 9);
  EXPECT_LT(metrics.back().train_loss, 0.2);
  EXPECT_GT(metrics.back().test_accuracy, 0.9);
}

TEST(Train, DeterministicGivenSeed) {
  SmallCorpus c = small_corpus(48, 16, 41);
  dyad::MlpModel<float> m1 = dyad::make_mlp<float>(false, 784, 16, 10, 1, 13);
  dyad::MlpModel<float> m2 = dyad::make_mlp<float>(false, 784, 16, 10, 1, 13);
  std::vector<dyad::EpochMetrics> r1 = dyad::train(m1, c.train, c.test, 3, 0.1f, 16, 13);
  std::vector<dyad::EpochMetrics> r2 = dyad::train(m2, c.train, c.test, 3, 0.1f, 16, 13);
  EXPECT_EQ(dyad::metrics_csv(r1), dyad::metrics_csv(r2));
  EXPECT_EQ(*m1.dense1.w.buffer(), *m2.dense1.w.buffer());
  EXPECT_EQ(*m1.layer2.w.buffer(), *m2.layer2.w.buffer());

  dyad::MlpModel<float> m3 = dyad::make_mlp<float>(false, 784, 16, 10, 1, 14);
  std::vector<dyad::EpochMetrics> r3 = dyad::train(m3, c.train, c.test, 3, 0.1f, 16, 14);
  EXPECT_NE(dyad::metrics_csv(r1), dyad::metrics_csv(r3));
}

TEST(Train, DivergenceAbortsWithDiagnostics) {
  SmallCorpus c = small_corpus(32, 8, 51);
  dyad::MlpModel<float> model = dyad::make_mlp<float>(false, 784, 16, 10, 1, 15);
  try {
    dyad::train(model, c.train, c.test, 5, 1e20f, 8, 15);
    FAIL() << "expected divergence abort";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("diverged"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsBadShapes) {
  SmallCorpus c = small_corpus(8, 8, 61);
  dyad::MlpModel<float> model = dyad::make_mlp<float>(false, 100, 16, 10, 1, 15);
  EXPECT_THROW(dyad::train(model, c.train, c.test, 1, 0.1f, 8, 1), std::invalid_argument);
  dyad::MlpModel<float> ok = dyad::make_mlp<float>(false, 784, 16, 10, 1, 15);
  EXPECT_THROW(dyad::train(ok, c.train, c.test, 1, 0.1f, 0, 1), std::invalid_argument);
  // hidden width must be divisible by n_dyad for the dyad layer
  EXPECT_THROW(dyad::make_mlp<float>(true, 784, 30, 10, 4, 1), std::invalid_argument);
}

TEST(MetricsCsv, HeaderAndSixSignificantDigits) {
  std::vector<dyad::EpochMetrics> rows(2);
  rows[0].epoch = 1;
  rows[0].train_loss = 0.123456789;
  rows[0].test_accuracy = 0.987654321;
  rows[1].epoch = 2;
  rows[1].train_loss = 0.0654321;
  rows[1].test_accuracy = 1.0;
  EXPECT_EQ(dyad::metrics_csv(rows),
            "epoch,train_loss,test_accuracy\n"
            "1,0.123457,0.987654\n"
            "2,0.0654321,1\n");
}

// ---- checkpoints ----

TEST(Checkpoint, DenseRoundTripIsBitIdentical) {
  const std::string dir = test_dir();
  SmallCorpus c = small_corpus(16, 8, 71);
  dyad::MlpModel<float> model = dyad::make_mlp<float>(false, 784, 16, 10, 1, 17);
  dyad::train(model, c.train, c.test, 1, 0.1f, 8, 17);
  const std::string path = dir + "/dense.ckpt";
  dyad::save_checkpoint(model, path);
  dyad::MlpModel<float> loaded = dyad::load_checkpoint<float>(path);

  EXPECT_FALSE(loaded.layer1_dyad);
  EXPECT_EQ(loaded.epoch, model.epoch);
  EXPECT_EQ(loaded.seed, model.seed);
  EXPECT_EQ(loaded.final_loss, model.final_loss);
  EXPECT_EQ(*loaded.dense1.w.buffer(), *model.dense1.w.buffer());
  EXPECT_EQ(*loaded.dense1.bias.buffer(), *model.dense1.bias.buffer());
  EXPECT_EQ(*loaded.layer2.w.buffer(), *model.layer2.w.buffer());
  EXPECT_EQ(*loaded.layer2.bias.buffer(), *model.layer2.bias.buffer());

  // a re-save of the loaded model is byte-identical to the first file
  const std::string path2 = dir + "/dense2.ckpt";
  dyad::save_checkpoint(loaded, path2);
  EXPECT_EQ(read_bytes(path), read_bytes(path2));
}

TEST(Checkpoint, DyadRoundTripIsBitIdentical) {
  const std::string dir = test_dir();
  dyad::MlpModel<float> model = dyad::make_mlp<float>(true, 784, 32, 10, 4, 19);
  model.epoch = 3;
  model.final_loss = 0.25;
  const std::string path = dir + "/dyad.ckpt";
  dyad::save_checkpoint(model, path);
  dyad::MlpModel<float> loaded = dyad::load_checkpoint<float>(path);

  EXPECT_TRUE(loaded.layer1_dyad);
  EXPECT_EQ(loaded.dyad1.config.n_dyad, 4);
  EXPECT_EQ(loaded.dyad1.config.n_in, 196);
  EXPECT_EQ(loaded.dyad1.config.n_out, 8);
  EXPECT_EQ(loaded.dyad1.config.variant, dyad::Variant::IT);
  EXPECT_EQ(*loaded.dyad1.w1.buffer(), *model.dyad1.w1.buffer());
  EXPECT_EQ(*loaded.dyad1.w2.buffer(), *model.dyad1.w2.buffer());
  EXPECT_EQ(*loaded.dyad1.bias.buffer(), *model.dyad1.bias.buffer());
  EXPECT_EQ(*loaded.layer2.w.buffer(), *model.layer2.w.buffer());
}

TEST(Checkpoint, RejectsCorruptedFiles) {
  const std::string dir = test_dir();
  dyad::MlpModel<float> model = dyad::make_mlp<float>(false, 20, 8, 10, 1, 23);
  const std::string path = dir + "/m.ckpt";
  dyad::save_checkpoint(model, path);
  std::vector<unsigned char> good = read_bytes(path);

  // corrupted magic
  {
    std::vector<unsigned char> bad = good;
    bad[0] = 'X';
    write_bytes(dir + "/bad_magic", bad);
    try {
      dyad::load_checkpoint<float>(dir + "/bad_magic");
      FAIL() << "expected magic error";
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
  }
  // future version: error names both versions
  {
    std::vector<unsigned char> bad = good;
    bad[4] = 2;
    write_bytes(dir + "/bad_version", bad);
    try {
      dyad::load_checkpoint<float>(dir + "/bad_version");
      FAIL() << "expected version error";
    } catch (const std::runtime_error& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("2"), std::string::npos) << msg;
      EXPECT_NE(msg.find("1"), std::string::npos) << msg;
    }
  }
  // precision mismatch
  {
    try {
      dyad::load_checkpoint<double>(path);
      FAIL() << "expected precision error";
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find("precision"), std::string::npos);
    }
  }
  // truncated parameter buffer
  {
    std::vector<unsigned char> bad = good;
    bad.resize(bad.size() - 16);
    write_bytes(dir + "/short", bad);
    EXPECT_THROW(dyad::load_checkpoint<float>(dir + "/short"), std::runtime_error);
  }
  // trailing bytes
  {
    std::vector<unsigned char> bad = good;
    bad.push_back(0);
    write_bytes(dir + "/long", bad);
    try {
      dyad::load_checkpoint<float>(dir + "/long");
      FAIL() << "expected trailing-bytes error";
    } catch (const std::runtime_error& e) {
      EXPECT_NE(std::string(e.what()).find("trailing"), std::string::npos);
    }
  }
  // still loads fine untouched
  EXPECT_NO_THROW(dyad::load_checkpoint<float>(path));
}

}  // namespace
