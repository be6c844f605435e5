#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <limits>

#include "kgan/embeddings.hpp"
#include "kgan/error.hpp"
#include "kgan/training.hpp"
#include "synthetic.hpp"

using namespace kgan;

namespace {

struct Setup {
  testing::SyntheticOptions opts;
  evaluation::ExperimentInputs in;
  training::TrainingData data;

  explicit Setup(std::size_t train = 32, std::size_t test = 16) {
    opts.train = train;
    opts.test = test;
    in = testing::make_synthetic(opts);
    data.train = evaluation::build_inputs(in.vocab, in.train, in.train_parses, true, true);
    data.test = evaluation::build_inputs(in.vocab, in.test, in.test_parses, true, true);
  }

  network::KganModel model(network::KganConfig cfg) const {
    return network::KganModel(cfg, in.word_matrix, embeddings::knowledge_matrix(in.vocab, in.knowledge));
  }
};

training::TrainConfig quick(int epochs) {
  training::TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.lr = 1e-2;
  return c;
}

}  // namespace

TEST_CASE("train config validation and round trip") {
  training::TrainConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(training::TrainConfig::from_json(c.to_json()) == c);
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.noise_ratio = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(training::default_batch_size(corpus::DatasetName::kRestaurant14) == 64);
  CHECK(training::default_batch_size(corpus::DatasetName::kLaptop14) == 32);
}

TEST_CASE("overfits a small synthetic set") {
  Setup s;
  auto cfg = testing::tiny_config(s.opts, 8);
  auto result = training::train(s.model(cfg), quick(60), s.data);
  const auto train_metrics = training::evaluate(result.model, s.data.train);
  CHECK(train_metrics.accuracy == 1.0);
  CHECK(result.record.epochs.back().train_loss < result.record.epochs.front().train_loss);
}

TEST_CASE("identical seeds give identical records and checkpoints") {
  Setup s(16, 8);
  auto cfg = testing::tiny_config(s.opts);
  cfg.dropout = 0.5;
  auto a = training::train(s.model(cfg), quick(3), s.data);
  auto b = training::train(s.model(cfg), quick(3), s.data);
  CHECK(a.record.to_jsonl() == b.record.to_jsonl());
  CHECK(network::checkpoint_bytes(a.model, s.in.vocab) == network::checkpoint_bytes(b.model, s.in.vocab));

  auto other = quick(3);
  other.seed = 15;
  auto c = training::train(s.model(cfg), other, s.data);
  CHECK(c.record.to_jsonl() != a.record.to_jsonl());
}

TEST_CASE("wall time stays out of the record unless requested") {
  Setup s(8, 4);
  auto cfg = testing::tiny_config(s.opts);
  auto a = training::train(s.model(cfg), quick(1), s.data);
  CHECK(a.record.to_jsonl().find("wall_seconds") == std::string::npos);
  auto timed = quick(1);
  timed.record_wall_time = true;
  auto b = training::train(s.model(cfg), timed, s.data);
  CHECK(b.record.to_jsonl().find("wall_seconds") != std::string::npos);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  Setup s(16, 4);
  auto cfg = testing::tiny_config(s.opts);
  const auto initial = s.model(cfg);
  auto tc = quick(2);
  tc.lr = 0.0;
  auto result = training::train(s.model(cfg), tc, s.data);
  for (std::size_t i = 0; i < initial.parameters().size(); ++i)
    CHECK(result.model.parameters()[i].value == initial.parameters()[i].value);
}

TEST_CASE("knowledge table and PAD row are never updated") {
  Setup s(16, 4);
  auto cfg = testing::tiny_config(s.opts);
  const auto initial = s.model(cfg);
  auto result = training::train(s.model(cfg), quick(3), s.data);
  CHECK(result.model.knowledge() == initial.knowledge());
  const auto& e = result.model.parameter("embedding.word").value;
  CHECK(e.row(corpus::Vocabulary::kPad).isZero(0.0));
  CHECK(e != initial.parameter("embedding.word").value);
}

TEST_CASE("batch loss is invariant to instance order") {
  Setup s(12, 4);
  auto m = s.model(testing::tiny_config(s.opts));
  auto batch = s.data.train;
  const double a = training::batch_loss(m, batch, false);
  std::reverse(batch.begin(), batch.end());
  std::rotate(batch.begin(), batch.begin() + 5, batch.end());
  CHECK(training::batch_loss(m, batch, false) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  Setup s(8, 4);
  auto m = s.model(testing::tiny_config(s.opts));
  m.parameter("fusion.conv.bias").value(0, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    training::train(std::move(m), quick(1), s.data);
    FAIL("expected a NumericError");
  } catch (const NumericError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("batch 0") != std::string::npos);
    CHECK(what.find("grad") != std::string::npos);
    CHECK(e.code() == ExitCode::kNumeric);
  }
}

TEST_CASE("checkpoint save, load and evaluate reproduces the metrics") {
  Setup s(16, 8);
  auto result = training::train(s.model(testing::tiny_config(s.opts)), quick(3), s.data);
  const auto dir = testing::temp_dir("train-ckpt");
  network::save_checkpoint(dir / "best.ckpt", result.model, s.in.vocab);
  auto loaded = network::load_checkpoint(dir / "best.ckpt");
  CHECK(training::evaluate(loaded.model, s.data.test) == result.record.best);
}

TEST_CASE("held-out selection trains on the remaining instances") {
  Setup s(20, 6);
  auto tc = quick(2);
  tc.selection = training::Selection::kHeldOut;
  tc.holdout_fraction = 0.25;
  auto result = training::train(s.model(testing::tiny_config(s.opts)), tc, s.data);
  REQUIRE(result.record.epochs.back().dev.has_value());
  CHECK(result.record.epochs.back().dev->total() == 5);
  CHECK(result.record.epochs.back().test->total() == 6);
}

TEST_CASE("noise attack") {
  std::vector<std::string> names;
  for (int i = 0; i < 1000; ++i) names.push_back("e" + std::to_string(i));
  Matrix v = Matrix::Constant(1000, 4, 5.0);
  kge::KnowledgeTable t(names, v);

  CHECK(training::apply_noise_attack(t, 0.0, 1) == t);

  auto count_changed = [&](const kge::KnowledgeTable& out) {
    int n = 0;
    for (Eigen::Index r = 0; r < 1000; ++r) n += out.vectors().row(r) != t.vectors().row(r);
    return n;
  };
  const auto five = training::apply_noise_attack(t, 0.05, 3);
  CHECK(count_changed(five) == 50);
  CHECK(five.vectors().cwiseAbs().minCoeff() < 0.1);
  for (Eigen::Index r = 0; r < 1000; ++r)
    if (five.vectors().row(r) != t.vectors().row(r)) CHECK(five.vectors().row(r).cwiseAbs().maxCoeff() < 0.1);
  CHECK(training::apply_noise_attack(t, 0.05, 3) == five);
  CHECK(count_changed(training::apply_noise_attack(t, 1.0, 3)) == 1000);
  CHECK(count_changed(training::apply_noise_attack(t, 0.29, 3)) == 290);
  CHECK_THROWS_AS(training::apply_noise_attack(t, -0.1, 3), ConfigError);
}
