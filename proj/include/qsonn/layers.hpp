#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "qsonn/tensor.hpp"

namespace qsonn {

/// How the second-order (Volterra) term of a generative layer is treated.
///   Off             - no quadratic term; the layer is a SelfONN layer.
///   UpperTriangular - each per-channel block is upper triangular; strictly
///                     lower entries stay zero.
///   FullBlock       - every entry of every diagonal block is learnable.
enum class QuadMode : std::uint8_t { Off = 0, UpperTriangular = 1, FullBlock = 2 };

std::string to_string(QuadMode mode);
QuadMode parse_quad_mode(const std::string& name);

template <typename T>
struct BasicConvParams {
  BasicTensor<T> weights;  // [C_out, C_in, kh, kw]
  BasicTensor<T> bias;     // [C_out]

  static BasicConvParams zeros(std::size_t c_out, std::size_t c_in,
                               const KernelSpec& spec);
  std::size_t c_out() const { return weights.dim(0); }
  std::size_t c_in() const { return weights.dim(1); }
  std::size_t count() const { return weights.size() + bias.size(); }
};

/// Learnable state of a generative (Taylor-expanded) layer with an optional
/// block-diagonal quadratic form per power q.
template <typename T>
struct BasicQSelfOnnParams {
  int q_max = 1;
  QuadMode quad_mode = QuadMode::FullBlock;
  BasicTensor<T> linear_weights;  // [Q, C_out, C_in, kh, kw]
  BasicTensor<T> quad_blocks;     // [Q, C_out, C_in, n, n], n = kh * kw
  BasicTensor<T> bias;            // [C_out]

  static BasicQSelfOnnParams zeros(int q_max, QuadMode mode, std::size_t c_out,
                                   std::size_t c_in, const KernelSpec& spec);
  std::size_t c_out() const { return linear_weights.dim(1); }
  std::size_t c_in() const { return linear_weights.dim(2); }
  std::size_t receptive() const { return linear_weights.dim(3) * linear_weights.dim(4); }

  /// Stored parameters that are actually learnable: zero blocks count for
  /// nothing when quad_mode is Off, and only the upper triangle counts in
  /// UpperTriangular mode.
  std::size_t learnable_count() const;

  /// Zeroes whatever the mode declares non-learnable.
  void enforce_structure();
};

using ConvParams = BasicConvParams<float>;
using QSelfOnnParams = BasicQSelfOnnParams<float>;

template <typename T>
struct ConvGrads {
  BasicTensor<T> grad_x;
  BasicConvParams<T> grad_params;
};

template <typename T>
struct QSelfOnnGrads {
  BasicTensor<T> grad_x;
  BasicQSelfOnnParams<T> grad_params;
};

// Convolution: Y(i,j) = w^T x_(i,j) + b.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                              const KernelSpec& spec);
template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                             const KernelSpec& spec, const BasicTensor<T>& grad_out);

// SelfONN: Y(i,j) = sum_q w_q^T x_(i,j)^q + b. Requires quad_mode == Off.
template <typename T>
BasicTensor<T> selfonn_forward(const BasicTensor<T>& x,
                               const BasicQSelfOnnParams<T>& p, const KernelSpec& spec);

// Quadratic SelfONN: adds sum_q (x^q)^T Omega_q x^q with block-diagonal Omega_q.
// Accepts every quad_mode; Off evaluates exactly like selfonn_forward.
template <typename T>
BasicTensor<T> qselfonn_forward(const BasicTensor<T>& x,
                                const BasicQSelfOnnParams<T>& p, const KernelSpec& spec);
template <typename T>
QSelfOnnGrads<T> qselfonn_backward(const BasicTensor<T>& x,
                                   const BasicQSelfOnnParams<T>& p,
                                   const KernelSpec& spec,
                                   const BasicTensor<T>& grad_out);

template <typename T>
struct PoolResult {
  BasicTensor<T> y;
  std::vector<std::size_t> argmax;  // flat index into the input per output element
};

/// Max pooling over [C, H, W], floor mode; ties go to the first element in
/// row-major window order.
template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& x, std::size_t pool_h,
                              std::size_t pool_w, std::size_t stride);
template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& grad_y,
                                const std::vector<std::size_t>& argmax,
                                const Shape& input_shape);

template <typename T>
BasicTensor<T> tanh_forward(const BasicTensor<T>& x);
/// Takes the forward *output* y: dy/dx = 1 - y^2.
template <typename T>
BasicTensor<T> tanh_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_y);

template <typename T>
struct DropoutResult {
  BasicTensor<T> y;
  BasicTensor<T> mask;  // 0 or 1/(1-rate) per element; empty in eval mode
};

/// Inverted dropout. The keep/drop decision for element i is the i-th draw of
/// the counter-based stream `key`, so it depends on nothing but (key, i).
template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double rate, bool training,
                                 std::uint64_t key);
template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_y, const BasicTensor<T>& mask);

template <typename T>
struct DenseGrads {
  BasicTensor<T> grad_x;
  BasicTensor<T> grad_weights;
  BasicTensor<T> grad_bias;
};

/// y = W x + b over the flattened input. W is [out, in].
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& b);
template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& grad_y);

}  // namespace qsonn
