#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "qsonn/layers.hpp"

namespace qsonn {

enum class LayerKind : std::uint8_t { Conv = 0, SelfONN = 1, QSelfONN = 2 };

std::string to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

/// Shapes of every stage of the two-block network for one ModelSpec.
struct Geometry {
  Shape input;
  Shape block1;  // conv-like output
  Shape pool1;
  Shape block2;
  Shape pool2;
  std::size_t dense_in = 0;
};

/// Two conv-like blocks (each followed by 2x2 max pooling, tanh and dropout)
/// and one dense classifier, LeNet-1 style.
struct ModelSpec {
  LayerKind layer_kind = LayerKind::QSelfONN;
  int q_max = 3;
  QuadMode quad_mode = QuadMode::FullBlock;  // QSelfONN only
  std::array<std::size_t, 2> channels{20, 20};
  std::size_t fc_out = 10;
  KernelSpec kernel{3, 3, 1, 1, 2};
  std::size_t pool = 2;
  double dropout_rate = 0.2;
  Shape input_shape{1, 20, 51};

  /// Throws ConfigError on inconsistent settings (e.g. Conv with q_max != 1).
  void validate() const;
  /// Off for Conv and SelfONN, quad_mode for QSelfONN.
  QuadMode effective_quad_mode() const;
  Geometry geometry() const;
  std::string describe() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Learnable state of one conv-like block.
using BlockParams = std::variant<ConvParams, QSelfOnnParams>;

/// A named view of one parameter tensor, in a fixed order shared by the
/// optimizer, checkpoints and gradient buffers.
struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};

/// Everything the backward pass needs from one training-mode forward pass.
struct ForwardTrace {
  Tensor input;
  Shape block1_shape;
  std::vector<std::size_t> pool1_argmax;
  Tensor act1;   // tanh output after block 1
  Tensor mask1;  // dropout mask (empty in eval mode)
  Tensor drop1;  // input to block 2
  Shape block2_shape;
  std::vector<std::size_t> pool2_argmax;
  Tensor act2;
  Tensor mask2;
  Tensor flat;  // dense input
  Tensor logits;
};

class Model {
 public:
  /// Zero-initialized parameters; see init_params.
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }

  std::vector<ParamRef> parameters();
  std::vector<ConstParamRef> parameters() const;
  /// Learnable scalars (strictly-lower triangle excluded in UpperTriangular mode).
  std::size_t parameter_count() const;

  BlockParams& block(std::size_t i) { return blocks_.at(i); }
  const BlockParams& block(std::size_t i) const { return blocks_.at(i); }
  Tensor& dense_weights() { return dense_w_; }
  const Tensor& dense_weights() const { return dense_w_; }
  Tensor& dense_bias() { return dense_b_; }
  const Tensor& dense_bias() const { return dense_b_; }

  /// Evaluation-mode logits for one [1, 20, 51] input.
  Tensor forward(const Tensor& x) const;

  /// Forward pass keeping intermediates; dropout active when `training`.
  ForwardTrace forward_trace(const Tensor& x, bool training, std::uint64_t dropout_key) const;

  /// Parameter gradients, aligned with parameters(), for upstream grad_logits.
  std::vector<Tensor> backward(const ForwardTrace& trace, const Tensor& grad_logits) const;

  /// Zeroes whatever the block structure declares non-learnable.
  void enforce_structure();

 private:
  ModelSpec spec_;
  std::array<BlockParams, 2> blocks_;
  Tensor dense_w_;
  Tensor dense_b_;
};

Model build_model(const ModelSpec& spec);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight, fan_in =
/// C_in * kh * kw for conv-like blocks and the flattened size for the dense
/// layer. Power-q linear weights (q >= 2) and all power-q quadratic blocks are
/// further scaled by 1/q. Biases are zero.
void init_params(Model& model, std::uint64_t seed);

struct LayerCost {
  std::string name;
  Shape output_shape;
  std::size_t params = 0;
  std::uint64_t macs = 0;
};

/// Analytic per-utterance cost. MACs for a block at P output positions,
/// K = C_in * n inputs per position:
///   conv      P * C_out * K
///   selfonn   Q * P * C_out * K  +  (Q - 1) * P * K   (powers)
///   qselfonn  selfonn + Q * P * C_out * C_in * (m + n), m = n^2 (full) or
///             n(n+1)/2 (upper triangular): the Omega x product then the dot.
struct CostReport {
  std::vector<LayerCost> layers;
  std::size_t params = 0;
  std::uint64_t macs = 0;
};

CostReport count_costs(const ModelSpec& spec);

/// Mean wall-clock seconds of one evaluation-mode forward pass over `inputs`.
double time_inference(const Model& model, const std::vector<Tensor>& inputs);

}  // namespace qsonn
