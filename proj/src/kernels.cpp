#include "qsonn/kernels.hpp"

namespace qsonn {

namespace {

void require_chw(const Shape& s, const char* what) {
  if (s.size() != 3) {
    throw ShapeError(std::string(what) + " expects a [C, H, W] tensor, got " +
                     shape_str(s));
  }
}

// Visits every (row k of the patch vector, output position p, source index or
// -1 for padding).
template <typename F>
void for_each_tap(const Shape& in, const KernelSpec& spec, F&& f) {
  const std::size_t channels = in[0], height = in[1], width = in[2];
  const std::size_t oh = spec.out_h(height), ow = spec.out_w(width);
  const auto pad = static_cast<std::ptrdiff_t>(spec.pad);
  std::size_t k = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < spec.kernel_h; ++ki) {
      for (std::size_t kj = 0; kj < spec.kernel_w; ++kj, ++k) {
        for (std::size_t i = 0; i < oh; ++i) {
          const std::ptrdiff_t r =
              static_cast<std::ptrdiff_t>(i * spec.stride + ki * spec.dilation) - pad;
          for (std::size_t j = 0; j < ow; ++j) {
            const std::ptrdiff_t col =
                static_cast<std::ptrdiff_t>(j * spec.stride + kj * spec.dilation) - pad;
            const bool inside = r >= 0 && col >= 0 &&
                                r < static_cast<std::ptrdiff_t>(height) &&
                                col < static_cast<std::ptrdiff_t>(width);
            const std::ptrdiff_t src =
                inside ? static_cast<std::ptrdiff_t>((c * height + r) * width + col) : -1;
            f(k, i * ow + j, src);
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> im2col(const BasicTensor<T>& x, const KernelSpec& spec) {
  require_chw(x.shape(), "im2col");
  const std::size_t positions = spec.out_h(x.dim(1)) * spec.out_w(x.dim(2));
  BasicTensor<T> cols({x.dim(0) * spec.receptive_size(), positions});
  T* out = cols.data().data();
  for_each_tap(x.shape(), spec, [&](std::size_t k, std::size_t p, std::ptrdiff_t src) {
    out[k * positions + p] = src < 0 ? T{0} : x[static_cast<std::size_t>(src)];
  });
  return cols;
}

template <typename T>
BasicTensor<T> extract_patches(const BasicTensor<T>& x, const KernelSpec& spec) {
  const BasicTensor<T> cols = im2col(x, spec);
  const std::size_t rows = cols.dim(0), positions = cols.dim(1);
  return BasicTensor<T>({positions, rows},
                        detail::transpose(rows, positions, cols.data().data()));
}

template <typename T>
BasicTensor<T> col2im(const BasicTensor<T>& cols, const Shape& input_shape,
                      const KernelSpec& spec) {
  require_chw(input_shape, "col2im");
  const std::size_t positions =
      spec.out_h(input_shape[1]) * spec.out_w(input_shape[2]);
  if (cols.rank() != 2 || cols.dim(0) != input_shape[0] * spec.receptive_size() ||
      cols.dim(1) != positions) {
    throw ShapeError("col2im: column matrix " + shape_str(cols.shape()) +
                     " does not match input " + shape_str(input_shape));
  }
  BasicTensor<T> x(input_shape);
  const T* in = cols.data().data();
  for_each_tap(input_shape, spec, [&](std::size_t k, std::size_t p, std::ptrdiff_t src) {
    if (src >= 0) x[static_cast<std::size_t>(src)] += in[k * positions + p];
  });
  return x;
}

template <typename T>
BasicTensor<T> elementwise_power(const BasicTensor<T>& x, int q) {
  if (q < 1) throw ShapeError("elementwise_power needs q >= 1");
  BasicTensor<T> y = x;
  if (q == 1) return y;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const T v = x[i];
    T acc = v;
    for (int e = 1; e < q; ++e) acc *= v;
    y[i] = acc;
  }
  return y;
}

template <typename T>
T blockdiag_quadratic_form(std::span<const T> patch,
                           std::span<const BasicTensor<T>> blocks) {
  if (blocks.empty()) throw ShapeError("blockdiag_quadratic_form: no blocks");
  if (patch.size() % blocks.size() != 0) {
    throw ShapeError("blockdiag_quadratic_form: patch length not divisible by block count");
  }
  const std::size_t n = patch.size() / blocks.size();
  T total{0};
  for (std::size_t c = 0; c < blocks.size(); ++c) {
    const auto& b = blocks[c];
    if (b.rank() != 2 || b.dim(0) != n || b.dim(1) != n) {
      throw ShapeError("blockdiag_quadratic_form: block " + std::to_string(c) +
                       " has shape " + shape_str(b.shape()) + ", expected [" +
                       std::to_string(n) + ", " + std::to_string(n) + "]");
    }
    const T* p = patch.data() + c * n;
    for (std::size_t a = 0; a < n; ++a) {
      T row{0};
      for (std::size_t j = 0; j < n; ++j) row += b[a * n + j] * p[j];
      total += p[a] * row;
    }
  }
  return total;
}

namespace detail {

template <typename T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a,
              const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const T av = arow[l];
      if (av == T{0}) continue;
      const T* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* src) {
  std::vector<T> dst(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
  return dst;
}

}  // namespace detail

#define QSONN_INSTANTIATE(T)                                                    \
  template BasicTensor<T> extract_patches(const BasicTensor<T>&, const KernelSpec&); \
  template BasicTensor<T> im2col(const BasicTensor<T>&, const KernelSpec&);     \
  template BasicTensor<T> col2im(const BasicTensor<T>&, const Shape&,           \
                                 const KernelSpec&);                            \
  template BasicTensor<T> elementwise_power(const BasicTensor<T>&, int);        \
  template T blockdiag_quadratic_form(std::span<const T>,                       \
                                      std::span<const BasicTensor<T>>);         \
  template void detail::gemm_acc(std::size_t, std::size_t, std::size_t,         \
                                 const T*, const T*, T*);                       \
  template std::vector<T> detail::transpose(std::size_t, std::size_t, const T*);

QSONN_INSTANTIATE(float)
QSONN_INSTANTIATE(double)

#undef QSONN_INSTANTIATE

}  // namespace qsonn
