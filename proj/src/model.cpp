#include "qsonn/model.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "qsonn/rng.hpp"

namespace qsonn {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv:
      return "conv";
    case LayerKind::SelfONN:
      return "selfonn";
    case LayerKind::QSelfONN:
      return "qselfonn";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& name) {
  if (name == "conv") return LayerKind::Conv;
  if (name == "selfonn") return LayerKind::SelfONN;
  if (name == "qselfonn") return LayerKind::QSelfONN;
  throw ConfigError("unknown layer kind '" + name + "' (expected conv, selfonn or qselfonn)");
}

void ModelSpec::validate() const {
  if (q_max < 1) throw ConfigError("q_max must be >= 1");
  if (layer_kind == LayerKind::Conv && q_max != 1) {
    throw ConfigError("conv layers require q_max == 1 (got " + std::to_string(q_max) + ")");
  }
  if (layer_kind == LayerKind::QSelfONN && quad_mode == QuadMode::Off) {
    throw ConfigError("qselfonn needs quad_mode upper or full; use selfonn for no quadratic term");
  }
  if (channels[0] == 0 || channels[1] == 0 || fc_out == 0) {
    throw ConfigError("channel and class counts must be positive");
  }
  if (pool == 0) throw ConfigError("pool size must be positive");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0, 1)");
  if (input_shape.size() != 3) throw ConfigError("input_shape must be [C, H, W]");
  try {
    kernel.validate();
    (void)geometry();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("model geometry: ") + e.what());
  }
}

QuadMode ModelSpec::effective_quad_mode() const {
  return layer_kind == LayerKind::QSelfONN ? quad_mode : QuadMode::Off;
}

Geometry ModelSpec::geometry() const {
  auto pooled = [&](const Shape& s) {
    if (s[1] < pool || s[2] < pool) {
      throw ShapeError("pooling window larger than feature map " + shape_str(s));
    }
    return Shape{s[0], (s[1] - pool) / pool + 1, (s[2] - pool) / pool + 1};
  };
  Geometry g;
  g.input = input_shape;
  g.block1 = {channels[0], kernel.out_h(input_shape[1]), kernel.out_w(input_shape[2])};
  g.pool1 = pooled(g.block1);
  g.block2 = {channels[1], kernel.out_h(g.pool1[1]), kernel.out_w(g.pool1[2])};
  g.pool2 = pooled(g.block2);
  g.dense_in = shape_size(g.pool2);
  return g;
}

std::string ModelSpec::describe() const {
  std::ostringstream os;
  os << to_string(layer_kind) << " Q=" << q_max;
  if (layer_kind == LayerKind::QSelfONN) os << " quad=" << to_string(quad_mode);
  return os.str();
}

namespace {

BlockParams make_block(const ModelSpec& spec, std::size_t c_out, std::size_t c_in) {
  if (spec.layer_kind == LayerKind::Conv) return ConvParams::zeros(c_out, c_in, spec.kernel);
  return QSelfOnnParams::zeros(spec.q_max, spec.effective_quad_mode(), c_out, c_in, spec.kernel);
}

Tensor block_forward(const BlockParams& block, const Tensor& x, const KernelSpec& spec) {
  if (const auto* conv = std::get_if<ConvParams>(&block)) return conv2d_forward(x, *conv, spec);
  const auto& gen = std::get<QSelfOnnParams>(block);
  if (gen.quad_mode == QuadMode::Off) return selfonn_forward(x, gen, spec);
  return qselfonn_forward(x, gen, spec);
}

// Gradients of one block, in the order its tensors appear in parameters().
std::vector<Tensor> block_backward(const BlockParams& block, const Tensor& x,
                                   const KernelSpec& spec, const Tensor& grad_out,
                                   Tensor* grad_x) {
  std::vector<Tensor> grads;
  if (const auto* conv = std::get_if<ConvParams>(&block)) {
    auto g = conv2d_backward(x, *conv, spec, grad_out);
    grads.push_back(std::move(g.grad_params.weights));
    grads.push_back(std::move(g.grad_params.bias));
    if (grad_x) *grad_x = std::move(g.grad_x);
    return grads;
  }
  const auto& gen = std::get<QSelfOnnParams>(block);
  auto g = qselfonn_backward(x, gen, spec, grad_out);
  grads.push_back(std::move(g.grad_params.linear_weights));
  if (gen.quad_mode != QuadMode::Off) grads.push_back(std::move(g.grad_params.quad_blocks));
  grads.push_back(std::move(g.grad_params.bias));
  if (grad_x) *grad_x = std::move(g.grad_x);
  return grads;
}

template <typename Ref, typename BlockT, typename TensorT>
void append_block(std::vector<Ref>& out, const std::string& prefix, BlockT& block) {
  if (auto* conv = std::get_if<ConvParams>(&block)) {
    out.push_back({prefix + ".weight", static_cast<TensorT*>(&conv->weights)});
    out.push_back({prefix + ".bias", static_cast<TensorT*>(&conv->bias)});
    return;
  }
  auto& gen = std::get<QSelfOnnParams>(block);
  out.push_back({prefix + ".linear", static_cast<TensorT*>(&gen.linear_weights)});
  if (gen.quad_mode != QuadMode::Off) {
    out.push_back({prefix + ".quad", static_cast<TensorT*>(&gen.quad_blocks)});
  }
  out.push_back({prefix + ".bias", static_cast<TensorT*>(&gen.bias)});
}

}  // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const std::size_t c_in = spec_.input_shape[0];
  blocks_ = {make_block(spec_, spec_.channels[0], c_in),
             make_block(spec_, spec_.channels[1], spec_.channels[0])};
  dense_w_ = Tensor({spec_.fc_out, spec_.geometry().dense_in});
  dense_b_ = Tensor({spec_.fc_out});
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> refs;
  append_block<ParamRef, BlockParams, Tensor>(refs, "block1", blocks_[0]);
  append_block<ParamRef, BlockParams, Tensor>(refs, "block2", blocks_[1]);
  refs.push_back({"dense.weight", &dense_w_});
  refs.push_back({"dense.bias", &dense_b_});
  return refs;
}

std::vector<ConstParamRef> Model::parameters() const {
  std::vector<ConstParamRef> refs;
  append_block<ConstParamRef, const BlockParams, const Tensor>(refs, "block1", blocks_[0]);
  append_block<ConstParamRef, const BlockParams, const Tensor>(refs, "block2", blocks_[1]);
  refs.push_back({"dense.weight", &dense_w_});
  refs.push_back({"dense.bias", &dense_b_});
  return refs;
}

std::size_t Model::parameter_count() const {
  std::size_t total = dense_w_.size() + dense_b_.size();
  for (const auto& b : blocks_) {
    if (const auto* conv = std::get_if<ConvParams>(&b)) {
      total += conv->count();
    } else {
      total += std::get<QSelfOnnParams>(b).learnable_count();
    }
  }
  return total;
}

void Model::enforce_structure() {
  for (auto& b : blocks_) {
    if (auto* gen = std::get_if<QSelfOnnParams>(&b)) gen->enforce_structure();
  }
}

ForwardTrace Model::forward_trace(const Tensor& x, bool training,
                                  std::uint64_t dropout_key) const {
  if (x.shape() != spec_.input_shape) {
    throw ShapeError("model input " + shape_str(x.shape()) + ", expected " +
                     shape_str(spec_.input_shape));
  }
  const std::size_t pool = spec_.pool;
  const double rate = spec_.dropout_rate;
  ForwardTrace t;
  t.input = x;

  Tensor h = block_forward(blocks_[0], x, spec_.kernel);
  t.block1_shape = h.shape();
  auto p1 = maxpool_forward(h, pool, pool, pool);
  t.pool1_argmax = std::move(p1.argmax);
  t.act1 = tanh_forward(p1.y);
  auto d1 = dropout_forward(t.act1, rate, training, mix_key({dropout_key, 1}));
  t.mask1 = std::move(d1.mask);
  t.drop1 = std::move(d1.y);

  h = block_forward(blocks_[1], t.drop1, spec_.kernel);
  t.block2_shape = h.shape();
  auto p2 = maxpool_forward(h, pool, pool, pool);
  t.pool2_argmax = std::move(p2.argmax);
  t.act2 = tanh_forward(p2.y);
  auto d2 = dropout_forward(t.act2, rate, training, mix_key({dropout_key, 2}));
  t.mask2 = std::move(d2.mask);
  t.flat = std::move(d2.y).reshaped({t.act2.size()});

  t.logits = dense_forward(t.flat, dense_w_, dense_b_);
  return t;
}

Tensor Model::forward(const Tensor& x) const {
  return forward_trace(x, false, 0).logits;
}

std::vector<Tensor> Model::backward(const ForwardTrace& t, const Tensor& grad_logits) const {
  if (grad_logits.shape() != t.logits.shape()) throw ShapeError("grad_logits shape mismatch");
  auto dense = dense_backward(t.flat, dense_w_, grad_logits);

  Tensor g = dropout_backward(std::move(dense.grad_x).reshaped(t.act2.shape()), t.mask2);
  g = tanh_backward(t.act2, g);
  g = maxpool_backward(g, t.pool2_argmax, t.block2_shape);
  Tensor grad_drop1;
  auto grads2 = block_backward(blocks_[1], t.drop1, spec_.kernel, g, &grad_drop1);

  g = dropout_backward(grad_drop1, t.mask1);
  g = tanh_backward(t.act1, g);
  g = maxpool_backward(g, t.pool1_argmax, t.block1_shape);
  auto grads1 = block_backward(blocks_[0], t.input, spec_.kernel, g, nullptr);

  std::vector<Tensor> all;
  all.reserve(grads1.size() + grads2.size() + 2);
  for (auto& v : grads1) all.push_back(std::move(v));
  for (auto& v : grads2) all.push_back(std::move(v));
  all.push_back(std::move(dense.grad_weights));
  all.push_back(std::move(dense.grad_bias));
  return all;
}

Model build_model(const ModelSpec& spec) { return Model(spec); }

void init_params(Model& model, std::uint64_t seed) {
  Rng rng(mix_key({seed, 0x1A17}));
  auto draw = [&](Tensor& t, std::size_t begin, std::size_t end, double bound) {
    for (std::size_t i = begin; i < end; ++i) t[i] = static_cast<float>(rng.uniform(-bound, bound));
  };
  const KernelSpec& k = model.spec().kernel;
  for (std::size_t b = 0; b < 2; ++b) {
    auto& block = model.block(b);
    if (auto* conv = std::get_if<ConvParams>(&block)) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(conv->c_in() * k.receptive_size()));
      draw(conv->weights, 0, conv->weights.size(), bound);
      conv->bias.fill(0.0f);
      continue;
    }
    auto& gen = std::get<QSelfOnnParams>(block);
    const double bound = 1.0 / std::sqrt(static_cast<double>(gen.c_in() * k.receptive_size()));
    const std::size_t per_q_lin = gen.linear_weights.size() / static_cast<std::size_t>(gen.q_max);
    const std::size_t per_q_quad = gen.quad_blocks.size() / static_cast<std::size_t>(gen.q_max);
    for (int q = 1; q <= gen.q_max; ++q) {
      const auto qi = static_cast<std::size_t>(q - 1);
      draw(gen.linear_weights, qi * per_q_lin, (qi + 1) * per_q_lin, bound / q);
    }
    if (gen.quad_mode != QuadMode::Off) {
      for (int q = 1; q <= gen.q_max; ++q) {
        const auto qi = static_cast<std::size_t>(q - 1);
        draw(gen.quad_blocks, qi * per_q_quad, (qi + 1) * per_q_quad, bound / q);
      }
    }
    gen.bias.fill(0.0f);
    gen.enforce_structure();
  }
  const double dense_bound =
      1.0 / std::sqrt(static_cast<double>(model.dense_weights().dim(1)));
  draw(model.dense_weights(), 0, model.dense_weights().size(), dense_bound);
  model.dense_bias().fill(0.0f);
}

CostReport count_costs(const ModelSpec& spec) {
  spec.validate();
  const Geometry g = spec.geometry();
  const std::size_t n = spec.kernel.receptive_size();
  const auto q = static_cast<std::uint64_t>(spec.q_max);
  const QuadMode mode = spec.effective_quad_mode();

  auto block_cost = [&](const std::string& name, std::size_t c_in, const Shape& out) {
    const std::uint64_t positions = out[1] * out[2];
    const std::uint64_t c_out = out[0];
    const std::uint64_t k = c_in * n;
    LayerCost c{name, out, 0, 0};
    if (spec.layer_kind == LayerKind::Conv) {
      c.params = c_out * k + c_out;
      c.macs = positions * c_out * k;
      return c;
    }
    c.params = q * c_out * k + c_out;
    c.macs = q * positions * c_out * k + (q - 1) * positions * k;
    if (mode != QuadMode::Off) {
      const std::uint64_t block_entries = mode == QuadMode::FullBlock ? n * n : n * (n + 1) / 2;
      c.params += q * c_out * c_in * block_entries;
      c.macs += q * positions * c_out * c_in * (block_entries + n);
    }
    return c;
  };

  CostReport r;
  r.layers.push_back(block_cost("block1." + to_string(spec.layer_kind), g.input[0], g.block1));
  r.layers.push_back({"pool1+tanh+dropout", g.pool1, 0, 0});
  r.layers.push_back(block_cost("block2." + to_string(spec.layer_kind), g.pool1[0], g.block2));
  r.layers.push_back({"pool2+tanh+dropout", g.pool2, 0, 0});
  r.layers.push_back({"dense", Shape{spec.fc_out}, g.dense_in * spec.fc_out + spec.fc_out,
                      static_cast<std::uint64_t>(g.dense_in) * spec.fc_out});
  for (const auto& l : r.layers) {
    r.params += l.params;
    r.macs += l.macs;
  }
  return r;
}

double time_inference(const Model& model, const std::vector<Tensor>& inputs) {
  if (inputs.empty()) throw DataError("no inputs to time");
  float sink = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& x : inputs) sink += model.forward(x)[0];
  const auto t1 = std::chrono::steady_clock::now();
  volatile float keep = sink;
  (void)keep;
  return std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(inputs.size());
}

}  // namespace qsonn
