#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qsonn/checkpoint.hpp"
#include "qsonn/dataset.hpp"
#include "qsonn/model.hpp"

namespace qsonn {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 50;
  int max_epochs = 100;
  int patience = 10;
  double dropout_rate = 0.2;
  std::uint64_t seed = 0;
  LayerKind layer_kind = LayerKind::QSelfONN;
  int q_max = 3;
  QuadMode quad_mode = QuadMode::FullBlock;

  /// ConfigError unless every field is positive and patience <= max_epochs.
  void validate() const;
  /// Default geometry with this config's layer kind, Q, quad mode and dropout.
  ModelSpec model_spec() const;
};

/// Classical momentum: v <- momentum * v - lr * g; p <- p + v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum);
void sgd_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, double lr, double momentum);

/// Stop rule: continue while epoch < max_epochs and the validation accuracy
/// has reached (>=) the running best at least once in the last `patience`
/// epochs.
class EarlyStopper {
 public:
  EarlyStopper(int patience, int max_epochs);

  /// Records the accuracy of the next epoch; returns true to keep training.
  bool update(double val_acc);

  int epoch() const { return epoch_; }
  double best() const { return best_; }
  /// Earliest epoch that achieved best().
  int best_epoch() const { return best_epoch_; }
  int epochs_since_best() const { return since_best_; }
  bool improved() const { return improved_; }

  void restore(int epoch, double best, int best_epoch, int since_best);

 private:
  int patience_;
  int max_epochs_;
  int epoch_ = 0;
  double best_ = -1.0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  bool improved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_acc = 0;
  double seconds = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_acc = 0;
  std::optional<double> test_acc;  // at the best epoch, when a test split exists
  std::string stop_reason;

  /// Header: epoch,train_loss,train_acc,val_acc,seconds
  std::string to_csv() const;
  std::string to_json() const;
  /// Round trip of to_json (used to carry history across a resume).
  static TrainReport from_json(const std::string& text);
};

struct TrainResult {
  TrainReport report;
  Model best_model;
  Model final_model;
};

struct TrainOptions {
  /// If set, "<dir>/last.ckpt" is written after every epoch and
  /// "<dir>/best.ckpt" whenever the best validation accuracy improves.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Continue from a "last.ckpt" written by an earlier run of the same config.
  std::optional<std::filesystem::path> resume_from;
  /// Called after each epoch; returning false ends training early.
  std::function<bool(const EpochRecord&, const Model&)> on_epoch;
  /// Evaluation of the test split at the best epoch.
  bool evaluate_test = true;
};

/// Per-example softmax cross-entropy and its gradient w.r.t. the logits.
double softmax_cross_entropy(const Tensor& logits, int label, Tensor* grad);

/// Index of the largest logit; ties go to the lowest index.
int argmax(const Tensor& logits);

/// Trains `model` (already initialized) on the cache's train split,
/// validating on its val split after every epoch with dropout disabled.
TrainResult train(Model model, const FeatureCache& data, const TrainConfig& cfg,
                  const TrainOptions& options = {});

/// Accuracy on a feature set; DataError when it is empty.
double evaluate(const Model& model, const FeatureSet& set);

/// counts[true][predicted] over `classes` labels.
std::vector<std::vector<std::size_t>> confusion_matrix(const Model& model, const FeatureSet& set,
                                                       std::size_t classes = 10);

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  bool structural_zeros = true;  // gradients of non-learnable entries are exactly 0
};

/// Small random layer (3 input channels, 4 output channels, 6x6 input,
/// 3x3 kernel, pad 1) in double precision; analytic gradients against central
/// differences with step 1e-5 for every input and parameter coordinate.
/// Relative error is |a - n| / max(|a|, |n|, 1e-3).
GradCheckResult grad_check(LayerKind kind, int q_max, QuadMode quad_mode, std::uint64_t seed);

}  // namespace qsonn
