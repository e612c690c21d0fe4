#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "qsonn/training.hpp"

using namespace qsonn;
namespace fs = std::filesystem;

namespace {

ModelSpec small_spec(LayerKind kind, int q, QuadMode mode = QuadMode::FullBlock) {
  ModelSpec s;
  s.layer_kind = kind;
  s.q_max = q;
  s.quad_mode = mode;
  s.input_shape = {1, 8, 10};
  s.channels = {3, 4};
  s.fc_out = 10;
  s.kernel.pad = 1;
  return s;
}

// Two classes of 8x10 maps: a horizontal or a vertical stripe plus noise.
FeatureSet stripes(std::size_t per_class, std::uint64_t seed) {
  FeatureSet set;
  set.feature_shape = {1, 8, 10};
  Rng rng(seed);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (int label : {3, 6}) {
      Tensor x({1, 8, 10});
      oracle::fill_uniform(x, rng, -0.3, 0.3);
      for (std::size_t k = 0; k < 8; ++k) {
        if (label == 3) {
          x.at(0, 3, k) += 0.7f;
        } else {
          x.at(0, k, 4) += 0.7f;
        }
      }
      set.append(x, label);
    }
  }
  return set;
}

FeatureCache stripe_cache() {
  FeatureCache cache;
  cache.at(Split::Train) = stripes(12, 1);
  cache.at(Split::Val) = stripes(4, 2);
  cache.at(Split::Test) = stripes(4, 3);
  return cache;
}

TrainConfig quick_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_epochs = 6;
  cfg.patience = 6;
  cfg.seed = seed;
  return cfg;
}

Model fresh(const ModelSpec& s, std::uint64_t seed) {
  auto m = build_model(s);
  init_params(m, seed);
  return m;
}

void check_same_report(const TrainReport& a, const TrainReport& b) {
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].epoch == b.epochs[i].epoch);
    CHECK(a.epochs[i].train_loss == b.epochs[i].train_loss);
    CHECK(a.epochs[i].train_acc == b.epochs[i].train_acc);
    CHECK(a.epochs[i].val_acc == b.epochs[i].val_acc);
  }
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.best_val_acc == b.best_val_acc);
  CHECK(a.test_acc == b.test_acc);
}

void check_same_params(const Model& a, const Model& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].tensor == *pb[i].tensor);
}

}  // namespace

TEST_CASE("sgd examples") {
  Tensor p({1}, 0.0f), v({1}, 0.0f);
  sgd_step(p, Tensor({1}, 1.0f), v, 0.01, 0.0);
  CHECK(p[0] == doctest::Approx(-0.01));

  Tensor q({3}, {1, 2, 3}), vq({3});
  sgd_step(q, Tensor({3}), vq, 0.01, 0.9);
  CHECK(q == Tensor({3}, {1, 2, 3}));

  Tensor r({1}), vr({1});
  sgd_step(r, Tensor({1}, 1.0f), vr, 0.01, 0.9);
  CHECK(r[0] == doctest::Approx(-0.01).epsilon(1e-6));
  sgd_step(r, Tensor({1}, 1.0f), vr, 0.01, 0.9);
  CHECK(r[0] == doctest::Approx(-0.029).epsilon(1e-6));

  CHECK_THROWS_AS(sgd_step(r, Tensor({2}), vr, 0.01, 0.9), ShapeError);
}

TEST_CASE("early stopping on scripted sequences") {
  SUBCASE("strictly decreasing stops at epoch 11") {
    EarlyStopper s(10, 100);
    int epochs = 0;
    double acc = 0.9;
    while (true) {
      ++epochs;
      const bool go = s.update(acc);
      acc -= 0.01;
      if (!go) break;
    }
    CHECK(epochs == 11);
    CHECK(s.best_epoch() == 1);
  }
  SUBCASE("max_epochs = 1 stops after one epoch") {
    EarlyStopper s(1, 1);
    CHECK_FALSE(s.update(0.5));
  }
  SUBCASE("matching the best resets the count, ties keep the earliest epoch") {
    EarlyStopper s(3, 100);
    const std::vector<double> seq{0.5, 0.4, 0.4, 0.5, 0.3, 0.3, 0.3};
    std::vector<bool> go;
    for (double a : seq) go.push_back(s.update(a));
    CHECK(go == std::vector<bool>{true, true, true, true, true, true, false});
    CHECK(s.best_epoch() == 1);
    CHECK(s.best() == 0.5);
  }
  SUBCASE("steady improvement runs to the cap") {
    EarlyStopper s(10, 25);
    int epochs = 0;
    while (s.update(0.01 * ++epochs)) {
    }
    CHECK(epochs == 25);
    CHECK(s.best_epoch() == 25);
  }
}

TEST_CASE("softmax cross-entropy and argmax") {
  Tensor g;
  CHECK(softmax_cross_entropy(Tensor({10}), 4, &g) == doctest::Approx(std::log(10.0)));
  double sum = 0;
  for (float v : g.data()) sum += v;
  CHECK(std::abs(sum) < 1e-6);
  CHECK(g[4] == doctest::Approx(0.1 - 1.0));
  CHECK(softmax_cross_entropy(Tensor({3}, {1000, 0, 0}), 0, nullptr) < 1e-12);
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor({3}), 3, nullptr), DataError);

  CHECK(argmax(Tensor({4}, {1, 3, 3, 2})) == 1);
  CHECK(argmax(Tensor({3}, 0.5f)) == 0);
}

TEST_CASE("evaluate and the confusion matrix") {
  auto m = build_model(small_spec(LayerKind::Conv, 1));
  FeatureSet balanced;
  balanced.feature_shape = {1, 8, 10};
  Rng rng(5);
  for (int i = 0; i < 30; ++i) {
    Tensor x({1, 8, 10});
    oracle::fill_uniform(x, rng, -1, 1);
    balanced.append(x, i % 10);
  }
  // All-zero dense layer: constant logits, predictions tie-break to class 0.
  CHECK(evaluate(m, balanced) == doctest::Approx(0.1));

  init_params(m, 2);
  const auto cm = confusion_matrix(m, balanced);
  std::size_t trace = 0, total = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 10; ++j) total += cm[i][j];
    trace += cm[i][i];
  }
  CHECK(total == 30);
  CHECK(evaluate(m, balanced) == doctest::Approx(double(trace) / double(total)));
  CHECK_THROWS_AS(evaluate(m, FeatureSet{}), DataError);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto cache = stripe_cache();
  for (LayerKind kind : {LayerKind::Conv, LayerKind::SelfONN, LayerKind::QSelfONN}) {
    const int q = kind == LayerKind::Conv ? 1 : 2;
    const auto spec = small_spec(kind, q);
    const auto a = train(fresh(spec, 4), cache, quick_config(4));
    const auto b = train(fresh(spec, 4), cache, quick_config(4));
    check_same_report(a.report, b.report);
    check_same_params(a.final_model, b.final_model);
    CHECK(a.report.epochs.back().train_loss < a.report.epochs.front().train_loss);
    CHECK(a.report.test_acc.has_value());
    double best = 0;
    for (const auto& e : a.report.epochs) best = std::max(best, e.val_acc);
    CHECK(a.report.best_val_acc == best);
    CHECK(evaluate(a.best_model, cache.at(Split::Val)) == a.report.best_val_acc);
  }
}

TEST_CASE("max_epochs = 1 runs one epoch") {
  auto cfg = quick_config(1);
  cfg.max_epochs = 1;
  cfg.patience = 1;
  const auto r = train(fresh(small_spec(LayerKind::Conv, 1), 1), stripe_cache(), cfg);
  CHECK(r.report.epochs.size() == 1);
  CHECK(r.report.stop_reason == "max_epochs");
}

TEST_CASE("resume reproduces the uninterrupted run") {
  const auto cache = stripe_cache();
  const auto spec = small_spec(LayerKind::QSelfONN, 2, QuadMode::UpperTriangular);
  const auto dir_a = fs::temp_directory_path() / "qsonn_test_training" / "full";
  const auto dir_b = fs::temp_directory_path() / "qsonn_test_training" / "split";
  fs::create_directories(dir_a);
  fs::create_directories(dir_b);

  TrainOptions full_opts;
  full_opts.checkpoint_dir = dir_a;
  const auto full = train(fresh(spec, 8), cache, quick_config(8), full_opts);

  TrainOptions first_opts;
  first_opts.checkpoint_dir = dir_b;
  first_opts.on_epoch = [](const EpochRecord& r, const Model&) { return r.epoch < 3; };
  const auto first = train(fresh(spec, 8), cache, quick_config(8), first_opts);
  CHECK(first.report.epochs.size() == 3);
  CHECK(first.report.stop_reason == "callback");

  TrainOptions second_opts;
  second_opts.checkpoint_dir = dir_b;
  second_opts.resume_from = dir_b / "last.ckpt";
  const auto resumed = train(fresh(spec, 123), cache, quick_config(8), second_opts);
  check_same_report(full.report, resumed.report);
  check_same_params(full.final_model, resumed.final_model);
  check_same_params(full.best_model, resumed.best_model);

  const auto best = load_checkpoint(dir_a / "best.ckpt", spec);
  check_same_params(best.model, full.best_model);

  TrainOptions wrong_seed;
  wrong_seed.resume_from = dir_b / "last.ckpt";
  CHECK_THROWS_AS(train(fresh(spec, 8), cache, quick_config(9), wrong_seed), ConfigError);
}

TEST_CASE("training errors") {
  auto cache = stripe_cache();
  const auto spec = small_spec(LayerKind::Conv, 1);
  auto no_val = cache;
  no_val.at(Split::Val) = FeatureSet{};
  CHECK_THROWS_AS(train(fresh(spec, 1), no_val, quick_config(1)), DataError);

  auto poisoned = cache;
  poisoned.at(Split::Train).values[5] = std::nanf("");
  CHECK_THROWS_AS(train(fresh(spec, 1), poisoned, quick_config(1)), DivergenceError);

  auto bad = quick_config(1);
  bad.patience = 10;
  CHECK_THROWS_AS(train(fresh(spec, 1), cache, bad), ConfigError);
}

TEST_CASE("report serialization") {
  TrainReport r;
  r.epochs = {{1, 2.25, 0.5, 0.25, 1.5}, {2, 1.0 / 3.0, 0.75, 0.5, 1.25}};
  r.best_epoch = 2;
  r.best_val_acc = 0.5;
  r.test_acc = 0.4;
  r.stop_reason = "patience";
  CHECK(r.to_csv().starts_with("epoch,train_loss,train_acc,val_acc,seconds\n1,2.25,0.5,0.25,1.5\n"));
  const auto back = TrainReport::from_json(r.to_json());
  check_same_report(r, back);
  CHECK(back.epochs[1].train_loss == 1.0 / 3.0);
  CHECK(back.stop_reason == "patience");
  CHECK_THROWS_AS(TrainReport::from_json("{}"), FormatError);
}

TEST_CASE("grad_check on small layers") {
  CHECK(grad_check(LayerKind::Conv, 1, QuadMode::Off, 1).max_rel_error < 1e-4);
  const auto full = grad_check(LayerKind::QSelfONN, 4, QuadMode::FullBlock, 1);
  CHECK(full.max_rel_error < 1e-4);
  const auto upper = grad_check(LayerKind::QSelfONN, 2, QuadMode::UpperTriangular, 1);
  CHECK(upper.max_rel_error < 1e-4);
  CHECK(upper.structural_zeros);
  CHECK(grad_check(LayerKind::SelfONN, 3, QuadMode::Off, 2).structural_zeros);
  CHECK_THROWS_AS(grad_check(LayerKind::Conv, 2, QuadMode::Off, 1), ConfigError);
}
