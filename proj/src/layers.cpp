#include "qsonn/layers.hpp"

#include <cmath>

#include "qsonn/kernels.hpp"
#include "qsonn/rng.hpp"

namespace qsonn {

std::string to_string(QuadMode mode) {
  switch (mode) {
    case QuadMode::Off:
      return "off";
    case QuadMode::UpperTriangular:
      return "upper";
    case QuadMode::FullBlock:
      return "full";
  }
  return "?";
}

QuadMode parse_quad_mode(const std::string& name) {
  if (name == "off") return QuadMode::Off;
  if (name == "upper" || name == "triangular") return QuadMode::UpperTriangular;
  if (name == "full") return QuadMode::FullBlock;
  throw ConfigError("unknown quad mode '" + name + "' (expected off, upper or full)");
}

template <typename T>
BasicConvParams<T> BasicConvParams<T>::zeros(std::size_t c_out, std::size_t c_in,
                                             const KernelSpec& spec) {
  return {BasicTensor<T>({c_out, c_in, spec.kernel_h, spec.kernel_w}),
          BasicTensor<T>({c_out})};
}

template <typename T>
BasicQSelfOnnParams<T> BasicQSelfOnnParams<T>::zeros(int q_max, QuadMode mode,
                                                     std::size_t c_out, std::size_t c_in,
                                                     const KernelSpec& spec) {
  if (q_max < 1) throw ConfigError("q_max must be >= 1");
  const auto q = static_cast<std::size_t>(q_max);
  const std::size_t n = spec.receptive_size();
  BasicQSelfOnnParams p;
  p.q_max = q_max;
  p.quad_mode = mode;
  p.linear_weights = BasicTensor<T>({q, c_out, c_in, spec.kernel_h, spec.kernel_w});
  p.quad_blocks = BasicTensor<T>({q, c_out, c_in, n, n});
  p.bias = BasicTensor<T>({c_out});
  return p;
}

template <typename T>
std::size_t BasicQSelfOnnParams<T>::learnable_count() const {
  const std::size_t n = receptive();
  const std::size_t blocks = static_cast<std::size_t>(q_max) * c_out() * c_in();
  std::size_t quad = 0;
  if (quad_mode == QuadMode::FullBlock) quad = blocks * n * n;
  if (quad_mode == QuadMode::UpperTriangular) quad = blocks * n * (n + 1) / 2;
  return linear_weights.size() + quad + bias.size();
}

template <typename T>
void BasicQSelfOnnParams<T>::enforce_structure() {
  if (quad_mode == QuadMode::FullBlock) return;
  if (quad_mode == QuadMode::Off) {
    quad_blocks.fill(T{0});
    return;
  }
  const std::size_t n = receptive();
  for (std::size_t base = 0; base < quad_blocks.size(); base += n * n) {
    for (std::size_t a = 1; a < n; ++a) {
      for (std::size_t b = 0; b < a; ++b) quad_blocks[base + a * n + b] = T{0};
    }
  }
}

namespace {

void check_input(const Shape& x, std::size_t c_in, const char* layer) {
  if (x.size() != 3 || x[0] != c_in) {
    throw ShapeError(std::string(layer) + ": expected input [" + std::to_string(c_in) +
                     ", H, W], got " + shape_str(x));
  }
}

template <typename T>
void check_params(const BasicQSelfOnnParams<T>& p, const KernelSpec& spec) {
  const auto q = static_cast<std::size_t>(p.q_max);
  const std::size_t n = spec.receptive_size();
  const Shape& lw = p.linear_weights.shape();
  if (p.q_max < 1 || lw.size() != 5 || lw[0] != q || lw[3] != spec.kernel_h ||
      lw[4] != spec.kernel_w) {
    throw ShapeError("generative layer: linear weights " + shape_str(lw) +
                     " do not match Q=" + std::to_string(p.q_max) + " and the kernel");
  }
  const Shape expect_quad{q, lw[1], lw[2], n, n};
  if (p.quad_blocks.shape() != expect_quad) {
    throw ShapeError("generative layer: quadratic blocks " +
                     shape_str(p.quad_blocks.shape()) + ", expected " +
                     shape_str(expect_quad));
  }
  if (p.bias.shape() != Shape{lw[1]}) {
    throw ShapeError("generative layer: bias " + shape_str(p.bias.shape()));
  }
}

template <typename T>
void check_conv(const BasicConvParams<T>& p, const KernelSpec& spec) {
  const Shape& w = p.weights.shape();
  if (w.size() != 4 || w[2] != spec.kernel_h || w[3] != spec.kernel_w ||
      p.bias.shape() != Shape{w[0]}) {
    throw ShapeError("conv: weights " + shape_str(w) + " / bias " +
                     shape_str(p.bias.shape()) + " inconsistent with kernel");
  }
}

Shape output_shape(const Shape& in, std::size_t c_out, const KernelSpec& spec) {
  return {c_out, spec.out_h(in[1]), spec.out_w(in[2])};
}

std::size_t pair_count(std::size_t n) { return n * (n + 1) / 2; }

// Pair products z[(c, a<=b), p] = x[c*n+a, p] * x[c*n+b, p] of a column matrix.
template <typename T>
std::vector<T> pair_products(const BasicTensor<T>& cols, std::size_t c_in, std::size_t n) {
  const std::size_t positions = cols.dim(1);
  const std::size_t pairs = pair_count(n);
  std::vector<T> z(c_in * pairs * positions);
  const T* x = cols.data().data();
  T* out = z.data();
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t a = 0; a < n; ++a) {
      const T* xa = x + (c * n + a) * positions;
      for (std::size_t b = a; b < n; ++b) {
        const T* xb = x + (c * n + b) * positions;
        for (std::size_t p = 0; p < positions; ++p) out[p] = xa[p] * xb[p];
        out += positions;
      }
    }
  }
  return z;
}

// Packs one power's blocks into the coefficients of the pair products:
// U_aa = O_aa, U_ab = O_ab + O_ba (full) or O_ab (upper triangular), a < b.
// Result is [C_out, C_in * pairs].
template <typename T>
std::vector<T> pack_blocks(const BasicQSelfOnnParams<T>& p, std::size_t q) {
  const std::size_t c_out = p.c_out(), c_in = p.c_in(), n = p.receptive();
  const std::size_t pairs = pair_count(n);
  std::vector<T> u(c_out * c_in * pairs);
  const bool full = p.quad_mode == QuadMode::FullBlock;
  std::size_t k = 0;
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t c = 0; c < c_in; ++c) {
      const T* block = p.quad_blocks.data().data() + ((q * c_out + o) * c_in + c) * n * n;
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a; b < n; ++b, ++k) {
          u[k] = block[a * n + b];
          if (full && a != b) u[k] += block[b * n + a];
        }
      }
    }
  }
  return u;
}

template <typename T>
const T* slice(const BasicTensor<T>& t, std::size_t index, std::size_t stride) {
  return t.data().data() + index * stride;
}

// Sum over q of W_q * X^q, accumulated into `out` ([C_out, P]) one power at a
// time. With Q = 1 this is exactly the convolution product.
template <typename T>
void linear_terms(const BasicTensor<T>& cols, const BasicQSelfOnnParams<T>& p,
                  BasicTensor<T>& out, std::vector<BasicTensor<T>>* powers) {
  const std::size_t k = cols.dim(0), positions = cols.dim(1), c_out = p.c_out();
  BasicTensor<T> xq = cols;
  for (int q = 1; q <= p.q_max; ++q) {
    if (q > 1) {
      for (std::size_t i = 0; i < xq.size(); ++i) xq[i] *= cols[i];
    }
    detail::gemm_acc(c_out, positions, k,
                     slice(p.linear_weights, static_cast<std::size_t>(q - 1), c_out * k),
                     xq.data().data(), out.data().data());
    if (powers) powers->push_back(xq);
  }
}

template <typename T>
void add_bias(BasicTensor<T>& y, const BasicTensor<T>& bias) {
  const std::size_t positions = y.size() / bias.size();
  for (std::size_t o = 0; o < bias.size(); ++o) {
    T* row = y.data().data() + o * positions;
    for (std::size_t i = 0; i < positions; ++i) row[i] += bias[o];
  }
}

template <typename T>
BasicTensor<T> bias_grad(const BasicTensor<T>& grad_out, std::size_t c_out) {
  const std::size_t positions = grad_out.size() / c_out;
  BasicTensor<T> gb({c_out});
  for (std::size_t o = 0; o < c_out; ++o) {
    T s{0};
    for (std::size_t i = 0; i < positions; ++i) s += grad_out[o * positions + i];
    gb[o] = s;
  }
  return gb;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                              const KernelSpec& spec) {
  check_conv(p, spec);
  check_input(x.shape(), p.c_in(), "conv2d");
  const BasicTensor<T> cols = im2col(x, spec);
  BasicTensor<T> y(output_shape(x.shape(), p.c_out(), spec));
  detail::gemm_acc(p.c_out(), cols.dim(1), cols.dim(0), p.weights.data().data(),
                   cols.data().data(), y.data().data());
  add_bias(y, p.bias);
  return y;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicConvParams<T>& p,
                             const KernelSpec& spec, const BasicTensor<T>& grad_out) {
  check_conv(p, spec);
  check_input(x.shape(), p.c_in(), "conv2d");
  const Shape out_shape = output_shape(x.shape(), p.c_out(), spec);
  if (grad_out.shape() != out_shape) {
    throw ShapeError("conv2d_backward: grad_out " + shape_str(grad_out.shape()) +
                     ", expected " + shape_str(out_shape));
  }
  const BasicTensor<T> cols = im2col(x, spec);
  const std::size_t k = cols.dim(0), positions = cols.dim(1), c_out = p.c_out();

  ConvGrads<T> g{BasicTensor<T>(), BasicConvParams<T>::zeros(c_out, p.c_in(), spec)};
  const auto cols_t = detail::transpose(k, positions, cols.data().data());
  detail::gemm_acc(c_out, k, positions, grad_out.data().data(), cols_t.data(),
                   g.grad_params.weights.data().data());
  g.grad_params.bias = bias_grad(grad_out, c_out);

  const auto w_t = detail::transpose(c_out, k, p.weights.data().data());
  BasicTensor<T> grad_cols({k, positions});
  detail::gemm_acc(k, positions, c_out, w_t.data(), grad_out.data().data(),
                   grad_cols.data().data());
  g.grad_x = col2im(grad_cols, x.shape(), spec);
  return g;
}

template <typename T>
BasicTensor<T> selfonn_forward(const BasicTensor<T>& x, const BasicQSelfOnnParams<T>& p,
                               const KernelSpec& spec) {
  if (p.quad_mode != QuadMode::Off) {
    throw ShapeError("selfonn_forward requires quad_mode == off");
  }
  check_params(p, spec);
  check_input(x.shape(), p.c_in(), "selfonn");
  const BasicTensor<T> cols = im2col(x, spec);
  BasicTensor<T> y(output_shape(x.shape(), p.c_out(), spec));
  linear_terms<T>(cols, p, y, nullptr);
  add_bias(y, p.bias);
  return y;
}

template <typename T>
BasicTensor<T> qselfonn_forward(const BasicTensor<T>& x, const BasicQSelfOnnParams<T>& p,
                                const KernelSpec& spec) {
  check_params(p, spec);
  check_input(x.shape(), p.c_in(), "qselfonn");
  const BasicTensor<T> cols = im2col(x, spec);
  BasicTensor<T> y(output_shape(x.shape(), p.c_out(), spec));
  const bool quad = p.quad_mode != QuadMode::Off;
  std::vector<BasicTensor<T>> powers;
  linear_terms(cols, p, y, quad ? &powers : nullptr);
  if (quad) {
    const std::size_t c_out = p.c_out(), c_in = p.c_in(), n = p.receptive();
    const std::size_t positions = cols.dim(1), width = c_in * pair_count(n);
    BasicTensor<T> quad_sum(y.shape());
    for (std::size_t q = 0; q < powers.size(); ++q) {
      const auto z = pair_products(powers[q], c_in, n);
      const auto u = pack_blocks(p, q);
      detail::gemm_acc(c_out, positions, width, u.data(), z.data(),
                       quad_sum.data().data());
    }
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += quad_sum[i];
  }
  add_bias(y, p.bias);
  return y;
}

template <typename T>
QSelfOnnGrads<T> qselfonn_backward(const BasicTensor<T>& x, const BasicQSelfOnnParams<T>& p,
                                   const KernelSpec& spec, const BasicTensor<T>& grad_out) {
  check_params(p, spec);
  check_input(x.shape(), p.c_in(), "qselfonn");
  const std::size_t c_out = p.c_out(), c_in = p.c_in(), n = p.receptive();
  const Shape out_shape = output_shape(x.shape(), c_out, spec);
  if (grad_out.shape() != out_shape) {
    throw ShapeError("qselfonn_backward: grad_out " + shape_str(grad_out.shape()) +
                     ", expected " + shape_str(out_shape));
  }
  const BasicTensor<T> cols = im2col(x, spec);
  const std::size_t k = cols.dim(0), positions = cols.dim(1);
  const std::size_t pairs = pair_count(n), width = c_in * pairs;
  const bool quad = p.quad_mode != QuadMode::Off;
  const T* g = grad_out.data().data();

  QSelfOnnGrads<T> out{BasicTensor<T>(),
                       BasicQSelfOnnParams<T>::zeros(p.q_max, p.quad_mode, c_out, c_in, spec)};
  auto& gp = out.grad_params;
  gp.bias = bias_grad(grad_out, c_out);

  BasicTensor<T> grad_cols({k, positions});
  BasicTensor<T> prev_power(cols.shape(), T{1});  // x^(q-1)
  BasicTensor<T> xq = cols;
  std::vector<T> gq(k * positions);
  for (int qi = 1; qi <= p.q_max; ++qi) {
    const auto q = static_cast<std::size_t>(qi - 1);
    if (qi > 1) {
      prev_power = xq;
      for (std::size_t i = 0; i < xq.size(); ++i) xq[i] *= cols[i];
    }
    // Linear weights: dW_q = G (X^q)^T ; upstream: W_q^T G.
    const auto xq_t = detail::transpose(k, positions, xq.data().data());
    detail::gemm_acc(c_out, k, positions, g, xq_t.data(),
                     gp.linear_weights.data().data() + q * c_out * k);
    std::fill(gq.begin(), gq.end(), T{0});
    const auto w_t = detail::transpose(c_out, k, slice(p.linear_weights, q, c_out * k));
    detail::gemm_acc(k, positions, c_out, w_t.data(), g, gq.data());

    if (quad) {
      const auto z = pair_products(xq, c_in, n);
      const auto z_t = detail::transpose(width, positions, z.data());
      std::vector<T> du(c_out * width);
      detail::gemm_acc(c_out, width, positions, g, z_t.data(), du.data());

      // Expand packed pair gradients onto the stored blocks.
      T* blocks = gp.quad_blocks.data().data() + q * c_out * c_in * n * n;
      const bool full = p.quad_mode == QuadMode::FullBlock;
      std::size_t idx = 0;
      for (std::size_t oc = 0; oc < c_out * c_in; ++oc) {
        T* block = blocks + oc * n * n;
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = a; b < n; ++b, ++idx) {
            block[a * n + b] = du[idx];
            if (full && a != b) block[b * n + a] = du[idx];
          }
        }
      }

      // Upstream through the quadratic form: (O + O^T) x^q, via the packed
      // coefficients T_pair = U^T G.
      const auto u = pack_blocks(p, q);
      const auto u_t = detail::transpose(c_out, width, u.data());
      std::vector<T> tp(width * positions);
      detail::gemm_acc(width, positions, c_out, u_t.data(), g, tp.data());
      const T* xv = xq.data().data();
      std::size_t row = 0;
      for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = a; b < n; ++b, ++row) {
            const T* t = tp.data() + row * positions;
            T* ga = gq.data() + (c * n + a) * positions;
            const T* xa = xv + (c * n + a) * positions;
            if (a == b) {
              for (std::size_t i = 0; i < positions; ++i) ga[i] += T{2} * t[i] * xa[i];
            } else {
              T* gb = gq.data() + (c * n + b) * positions;
              const T* xb = xv + (c * n + b) * positions;
              for (std::size_t i = 0; i < positions; ++i) {
                ga[i] += t[i] * xb[i];
                gb[i] += t[i] * xa[i];
              }
            }
          }
        }
      }
    }

    // Chain through x^q: d/dx = q * x^(q-1).
    const T scale = static_cast<T>(qi);
    for (std::size_t i = 0; i < gq.size(); ++i) {
      grad_cols[i] += gq[i] * scale * prev_power[i];
    }
  }
  gp.enforce_structure();
  out.grad_x = col2im(grad_cols, x.shape(), spec);
  return out;
}

template <typename T>
PoolResult<T> maxpool_forward(const BasicTensor<T>& x, std::size_t pool_h,
                              std::size_t pool_w, std::size_t stride) {
  if (x.rank() != 3) throw ShapeError("maxpool expects [C, H, W], got " + shape_str(x.shape()));
  if (pool_h < 1 || pool_w < 1 || stride < 1) throw ShapeError("maxpool: bad window");
  const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
  if (pool_h > height || pool_w > width) {
    throw ShapeError("maxpool window larger than input " + shape_str(x.shape()));
  }
  const std::size_t oh = (height - pool_h) / stride + 1;
  const std::size_t ow = (width - pool_w) / stride + 1;
  PoolResult<T> r{BasicTensor<T>({channels, oh, ow}), {}};
  r.argmax.resize(r.y.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        std::size_t best = (c * height + i * stride) * width + j * stride;
        for (std::size_t di = 0; di < pool_h; ++di) {
          for (std::size_t dj = 0; dj < pool_w; ++dj) {
            const std::size_t idx = (c * height + i * stride + di) * width + j * stride + dj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        r.y[o] = x[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool_backward(const BasicTensor<T>& grad_y,
                                const std::vector<std::size_t>& argmax,
                                const Shape& input_shape) {
  if (grad_y.size() != argmax.size()) throw ShapeError("maxpool_backward: size mismatch");
  BasicTensor<T> gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_y[i];
  return gx;
}

template <typename T>
BasicTensor<T> tanh_forward(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

template <typename T>
BasicTensor<T> tanh_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_y) {
  if (y.shape() != grad_y.shape()) throw ShapeError("tanh_backward: shape mismatch");
  BasicTensor<T> gx = grad_y;
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= T{1} - y[i] * y[i];
  return gx;
}

template <typename T>
DropoutResult<T> dropout_forward(const BasicTensor<T>& x, double rate, bool training,
                                 std::uint64_t key) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return {x, BasicTensor<T>()};
  DropoutResult<T> r{x, BasicTensor<T>(x.shape())};
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = counter_uniform(key, i) < rate ? T{0} : keep_scale;
    r.mask[i] = m;
    r.y[i] *= m;
  }
  return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& grad_y, const BasicTensor<T>& mask) {
  if (mask.empty()) return grad_y;
  if (mask.shape() != grad_y.shape()) throw ShapeError("dropout_backward: shape mismatch");
  BasicTensor<T> gx = grad_y;
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask[i];
  return gx;
}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& b) {
  if (w.rank() != 2 || w.dim(1) != x.size() || b.shape() != Shape{w.dim(0)}) {
    throw ShapeError("dense: weights " + shape_str(w.shape()) + " vs input of " +
                     std::to_string(x.size()) + " values");
  }
  const std::size_t out = w.dim(0), in = w.dim(1);
  BasicTensor<T> y({out});
  for (std::size_t o = 0; o < out; ++o) {
    T s{0};
    const T* row = w.data().data() + o * in;
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s + b[o];
  }
  return y;
}

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& w,
                             const BasicTensor<T>& grad_y) {
  if (w.rank() != 2 || w.dim(1) != x.size() || grad_y.size() != w.dim(0)) {
    throw ShapeError("dense_backward: shape mismatch");
  }
  const std::size_t out = w.dim(0), in = w.dim(1);
  DenseGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(w.shape()), grad_y.reshaped({out})};
  for (std::size_t o = 0; o < out; ++o) {
    const T go = grad_y[o];
    const T* row = w.data().data() + o * in;
    T* grow = g.grad_weights.data().data() + o * in;
    for (std::size_t i = 0; i < in; ++i) {
      grow[i] = go * x[i];
      g.grad_x[i] += go * row[i];
    }
  }
  return g;
}

#define QSONN_INSTANTIATE(T)                                                              \
  template struct BasicConvParams<T>;                                                     \
  template struct BasicQSelfOnnParams<T>;                                                 \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicConvParams<T>&, \
                                         const KernelSpec&);                              \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicConvParams<T>&,  \
                                        const KernelSpec&, const BasicTensor<T>&);        \
  template BasicTensor<T> selfonn_forward(const BasicTensor<T>&,                          \
                                          const BasicQSelfOnnParams<T>&, const KernelSpec&); \
  template BasicTensor<T> qselfonn_forward(const BasicTensor<T>&,                         \
                                           const BasicQSelfOnnParams<T>&, const KernelSpec&); \
  template QSelfOnnGrads<T> qselfonn_backward(const BasicTensor<T>&,                      \
                                              const BasicQSelfOnnParams<T>&,              \
                                              const KernelSpec&, const BasicTensor<T>&);  \
  template PoolResult<T> maxpool_forward(const BasicTensor<T>&, std::size_t, std::size_t, \
                                         std::size_t);                                    \
  template BasicTensor<T> maxpool_backward(const BasicTensor<T>&,                         \
                                           const std::vector<std::size_t>&, const Shape&); \
  template BasicTensor<T> tanh_forward(const BasicTensor<T>&);                            \
  template BasicTensor<T> tanh_backward(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template DropoutResult<T> dropout_forward(const BasicTensor<T>&, double, bool,          \
                                            std::uint64_t);                               \
  template BasicTensor<T> dropout_backward(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> dense_forward(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                        const BasicTensor<T>&);                           \
  template DenseGrads<T> dense_backward(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                        const BasicTensor<T>&);

QSONN_INSTANTIATE(float)
QSONN_INSTANTIATE(double)

#undef QSONN_INSTANTIATE

}  // namespace qsonn
