#include "qsonn/training.hpp"

#include <chrono>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "qsonn/rng.hpp"

namespace qsonn {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
  if (patience <= 0) throw ConfigError("patience must be positive");
  if (patience > max_epochs) throw ConfigError("patience must not exceed max_epochs");
  if (dropout_rate < 0 || dropout_rate >= 1) throw ConfigError("dropout_rate must be in [0, 1)");
  model_spec().validate();
}

ModelSpec TrainConfig::model_spec() const {
  ModelSpec s;
  s.layer_kind = layer_kind;
  s.q_max = q_max;
  s.quad_mode = layer_kind == LayerKind::QSelfONN ? quad_mode : QuadMode::Off;
  s.dropout_rate = dropout_rate;
  return s;
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum) {
  if (param.shape() != grad.shape() || param.shape() != velocity.shape()) {
    throw ShapeError("sgd_step: parameter " + shape_str(param.shape()) + ", gradient " +
                     shape_str(grad.shape()) + ", velocity " + shape_str(velocity.shape()));
  }
  const auto m = static_cast<float>(momentum);
  const auto eta = static_cast<float>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = m * velocity[i] - eta * grad[i];
    param[i] += velocity[i];
  }
}

void sgd_step(const std::vector<ParamRef>& params, const std::vector<Tensor>& grads,
              std::vector<Tensor>& velocity, double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: parameter, gradient and velocity lists differ in length");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_step(*params[i].tensor, grads[i], velocity[i], lr, momentum);
  }
}

EarlyStopper::EarlyStopper(int patience, int max_epochs)
    : patience_(patience), max_epochs_(max_epochs) {}

bool EarlyStopper::update(double val_acc) {
  ++epoch_;
  improved_ = false;
  if (epoch_ == 1 || val_acc > best_) {
    best_ = val_acc;
    best_epoch_ = epoch_;
    since_best_ = 0;
    improved_ = true;
  } else if (val_acc >= best_) {
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return epoch_ < max_epochs_ && since_best_ < patience_;
}

void EarlyStopper::restore(int epoch, double best, int best_epoch, int since_best) {
  epoch_ = epoch;
  best_ = best;
  best_epoch_ = best_epoch;
  since_best_ = since_best;
  improved_ = false;
}

std::string TrainReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,train_acc,val_acc,seconds\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_acc << ','
       << e.seconds << '\n';
  }
  return os.str();
}

std::string TrainReport::to_json() const {
  nlohmann::json j;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : epochs) {
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_acc", e.train_acc},
                           {"val_acc", e.val_acc},
                           {"seconds", e.seconds}});
  }
  j["best_epoch"] = best_epoch;
  j["best_val_acc"] = best_val_acc;
  j["test_acc"] = test_acc ? nlohmann::json(*test_acc) : nlohmann::json(nullptr);
  j["stop_reason"] = stop_reason;
  return j.dump(2);
}

TrainReport TrainReport::from_json(const std::string& text) {
  TrainReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& e : j.at("epochs")) {
      r.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                          e.at("train_acc").get<double>(), e.at("val_acc").get<double>(),
                          e.at("seconds").get<double>()});
    }
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val_acc = j.at("best_val_acc").get<double>();
    if (!j.at("test_acc").is_null()) r.test_acc = j.at("test_acc").get<double>();
    r.stop_reason = j.at("stop_reason").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train report: ") + e.what());
  }
  return r;
}

double softmax_cross_entropy(const Tensor& logits, int label, Tensor* grad) {
  const std::size_t n = logits.size();
  if (label < 0 || static_cast<std::size_t>(label) >= n) {
    throw DataError("label " + std::to_string(label) + " outside " + std::to_string(n) +
                    " classes");
  }
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double sum = 0;
  std::vector<double> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += e[i];
  }
  const auto y = static_cast<std::size_t>(label);
  const double loss = std::log(sum) - (static_cast<double>(logits[y]) - mx);
  if (grad) {
    *grad = Tensor(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
      (*grad)[i] = static_cast<float>(e[i] / sum - (i == y ? 1.0 : 0.0));
    }
  }
  return loss;
}

int argmax(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

double evaluate(const Model& model, const FeatureSet& set) {
  if (set.size() == 0) throw DataError("cannot evaluate on an empty split");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (argmax(model.forward(set.feature(i))) == set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(const Model& model, const FeatureSet& set,
                                                       std::size_t classes) {
  if (set.size() == 0) throw DataError("cannot evaluate on an empty split");
  std::vector<std::vector<std::size_t>> counts(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto pred = static_cast<std::size_t>(argmax(model.forward(set.feature(i))));
    counts.at(static_cast<std::size_t>(set.labels[i])).at(pred)++;
  }
  return counts;
}

namespace {

std::vector<NamedTensor> prefixed(const std::string& prefix, const std::vector<ParamRef>& refs,
                                  const std::vector<Tensor>& values) {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < refs.size(); ++i) out.push_back({prefix + refs[i].name, values[i]});
  return out;
}

std::vector<Tensor> snapshot(const Model& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(*p.tensor);
  return out;
}

}  // namespace

TrainResult train(Model model, const FeatureCache& data, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  const FeatureSet& train_set = data.at(Split::Train);
  const FeatureSet& val_set = data.at(Split::Val);
  if (train_set.size() == 0) throw DataError("training split is empty");
  if (val_set.size() == 0) throw DataError("validation split is empty");

  auto params = model.parameters();
  std::vector<Tensor> velocity;
  for (const auto& p : params) velocity.emplace_back(p.tensor->shape());

  TrainReport report;
  EarlyStopper stopper(cfg.patience, cfg.max_epochs);
  Model best = model;
  std::uint64_t step = 0;

  if (options.resume_from) {
    const Checkpoint ck = load_checkpoint(*options.resume_from, model.spec());
    if (ck.meta.seed != cfg.seed) {
      throw ConfigError("resume checkpoint was trained with seed " + std::to_string(ck.meta.seed) +
                        ", config has " + std::to_string(cfg.seed));
    }
    model = ck.model;
    params = model.parameters();
    best = ck.model;
    auto best_params = best.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor* v = ck.extra("velocity." + params[i].name);
      const Tensor* b = ck.extra("best." + params[i].name);
      if (!v || !b) throw FormatError("resume checkpoint lacks optimizer state for " + params[i].name);
      velocity[i] = *v;
      *best_params[i].tensor = *b;
    }
    report = TrainReport::from_json(ck.meta.history);
    stopper.restore(static_cast<int>(ck.meta.epoch), ck.meta.best_val_acc,
                    static_cast<int>(ck.meta.best_epoch),
                    static_cast<int>(ck.meta.epochs_since_best));
    step = ck.meta.step;
  }

  const std::uint64_t epoch_seed = mix_key({cfg.seed, 0xE9});
  const std::uint64_t dropout_seed = mix_key({cfg.seed, 0xD0});
  bool keep_going = stopper.epoch() < cfg.max_epochs;
  if (!keep_going && report.stop_reason.empty()) report.stop_reason = "max_epochs";

  while (keep_going) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto epoch = static_cast<std::uint64_t>(stopper.epoch() + 1);
    double loss_sum = 0;
    std::size_t correct = 0;

    for (const auto& idx : batch_order(train_set.size(), cfg.batch_size, epoch_seed, epoch)) {
      std::vector<Tensor> grads;
      double batch_loss = 0;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto trace =
            model.forward_trace(train_set.feature(idx[k]), true, mix_key({dropout_seed, step, k}));
        Tensor g_logits;
        const double loss = softmax_cross_entropy(trace.logits, train_set.labels[idx[k]], &g_logits);
        batch_loss += loss;
        if (argmax(trace.logits) == train_set.labels[idx[k]]) ++correct;
        auto g = model.backward(trace, g_logits);
        if (grads.empty()) {
          grads = std::move(g);
        } else {
          for (std::size_t i = 0; i < grads.size(); ++i) {
            for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += g[i][j];
          }
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("loss is not finite at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + " (lr " + std::to_string(cfg.lr) + ")");
      }
      const float inv = 1.0f / static_cast<float>(idx.size());
      for (auto& g : grads) {
        for (auto& v : g.data()) v *= inv;
      }
      sgd_step(params, grads, velocity, cfg.lr, cfg.momentum);
      model.enforce_structure();
      loss_sum += batch_loss;
      ++step;
    }

    EpochRecord rec;
    rec.epoch = static_cast<int>(epoch);
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    rec.val_acc = evaluate(model, val_set);
    keep_going = stopper.update(rec.val_acc);
    if (stopper.improved()) best = model;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(rec);
    report.best_epoch = stopper.best_epoch();
    report.best_val_acc = stopper.best();
    if (!keep_going) {
      report.stop_reason = stopper.epoch() >= cfg.max_epochs ? "max_epochs" : "patience";
    }
    if (keep_going && options.on_epoch && !options.on_epoch(rec, model)) {
      keep_going = false;
      report.stop_reason = "callback";
    }

    if (options.checkpoint_dir) {
      if (stopper.improved()) save_checkpoint(best, *options.checkpoint_dir / "best.ckpt");
      TrainingMeta meta;
      meta.epoch = static_cast<std::uint32_t>(stopper.epoch());
      meta.best_epoch = static_cast<std::uint32_t>(stopper.best_epoch());
      meta.epochs_since_best = static_cast<std::uint32_t>(stopper.epochs_since_best());
      meta.best_val_acc = stopper.best();
      meta.seed = cfg.seed;
      meta.step = step;
      meta.history = report.to_json();
      auto extras = prefixed("velocity.", params, velocity);
      for (auto& e : prefixed("best.", params, snapshot(best))) extras.push_back(std::move(e));
      save_checkpoint(model, *options.checkpoint_dir / "last.ckpt", meta, extras);
    }
  }

  if (options.evaluate_test && data.at(Split::Test).size() > 0) {
    report.test_acc = evaluate(best, data.at(Split::Test));
  }
  return {std::move(report), std::move(best), std::move(model)};
}

namespace {

double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
}

template <typename Forward>
void check_tensor(TensorD& t, const TensorD& analytic, const TensorD& weights, Forward&& forward,
                  GradCheckResult& result) {
  const double h = 1e-5;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double saved = t[i];
    t[i] = saved + h;
    const TensorD yp = forward();
    t[i] = saved - h;
    const TensorD ym = forward();
    t[i] = saved;
    double fp = 0, fm = 0;
    for (std::size_t j = 0; j < yp.size(); ++j) {
      fp += yp[j] * weights[j];
      fm += ym[j] * weights[j];
    }
    result.max_rel_error = std::max(result.max_rel_error, rel_error(analytic[i], (fp - fm) / (2 * h)));
    ++result.coordinates;
  }
}

}  // namespace

GradCheckResult grad_check(LayerKind kind, int q_max, QuadMode quad_mode, std::uint64_t seed) {
  const KernelSpec spec{3, 3, 1, 1, 1};
  const std::size_t c_in = 3, c_out = 4, side = 6;
  Rng rng(mix_key({seed, 0x6C}));
  auto fill = [&](TensorD& t) {
    for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  };
  TensorD x({c_in, side, side});
  fill(x);
  const std::size_t out_side = spec.out_h(side);
  TensorD weights({c_out, out_side, out_side});
  fill(weights);

  GradCheckResult result;
  if (kind == LayerKind::Conv) {
    if (q_max != 1) throw ConfigError("conv gradcheck requires Q = 1");
    auto p = BasicConvParams<double>::zeros(c_out, c_in, spec);
    fill(p.weights);
    fill(p.bias);
    const auto g = conv2d_backward(x, p, spec, weights);
    auto fwd = [&] { return conv2d_forward(x, p, spec); };
    check_tensor(x, g.grad_x, weights, fwd, result);
    check_tensor(p.weights, g.grad_params.weights, weights, fwd, result);
    check_tensor(p.bias, g.grad_params.bias, weights, fwd, result);
    return result;
  }

  const QuadMode mode = kind == LayerKind::SelfONN ? QuadMode::Off : quad_mode;
  if (kind == LayerKind::QSelfONN && mode == QuadMode::Off) {
    throw ConfigError("qselfonn gradcheck needs quad mode upper or full");
  }
  auto p = BasicQSelfOnnParams<double>::zeros(q_max, mode, c_out, c_in, spec);
  // Keep x^q and the quadratic terms on a comparable scale for every q.
  for (auto& v : x.data()) v *= 0.9;
  fill(p.linear_weights);
  if (mode != QuadMode::Off) {
    fill(p.quad_blocks);
    for (auto& v : p.quad_blocks.data()) v *= 0.3;
  }
  fill(p.bias);
  p.enforce_structure();
  const auto g = qselfonn_backward(x, p, spec, weights);
  auto fwd = [&] { return qselfonn_forward(x, p, spec); };
  check_tensor(x, g.grad_x, weights, fwd, result);
  check_tensor(p.linear_weights, g.grad_params.linear_weights, weights, fwd, result);
  check_tensor(p.bias, g.grad_params.bias, weights, fwd, result);

  const std::size_t n = spec.receptive_size();
  const auto& gq = g.grad_params.quad_blocks;
  if (mode == QuadMode::Off) {
    for (double v : gq.data()) result.structural_zeros = result.structural_zeros && v == 0.0;
  } else if (mode == QuadMode::UpperTriangular) {
    for (std::size_t i = 0; i < gq.size(); ++i) {
      const std::size_t a = (i / n) % n, b = i % n;
      if (a > b && gq[i] != 0.0) result.structural_zeros = false;
    }
    // Only the upper triangle is a free coordinate.
    GradCheckResult upper;
    const double h = 1e-5;
    for (std::size_t i = 0; i < p.quad_blocks.size(); ++i) {
      const std::size_t a = (i / n) % n, b = i % n;
      if (a > b) continue;
      const double saved = p.quad_blocks[i];
      p.quad_blocks[i] = saved + h;
      const TensorD yp = fwd();
      p.quad_blocks[i] = saved - h;
      const TensorD ym = fwd();
      p.quad_blocks[i] = saved;
      double d = 0;
      for (std::size_t j = 0; j < yp.size(); ++j) d += (yp[j] - ym[j]) * weights[j];
      upper.max_rel_error = std::max(upper.max_rel_error, rel_error(gq[i], d / (2 * h)));
      ++upper.coordinates;
    }
    result.max_rel_error = std::max(result.max_rel_error, upper.max_rel_error);
    result.coordinates += upper.coordinates;
  } else {
    check_tensor(p.quad_blocks, gq, weights, fwd, result);
  }
  return result;
}

}  // namespace qsonn
