#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qsonn/tensor.hpp"

namespace qsonn {

/// Rows are the vectorized receptive fields x_(i,j), one per output position.
/// Within a row the order is channel-major, then kernel row, then kernel
/// column; padding is zero. Shape [out_h * out_w, C_in * kh * kw].
template <typename T>
BasicTensor<T> extract_patches(const BasicTensor<T>& x, const KernelSpec& spec);

/// Column layout of the same data: [C_in * kh * kw, out_h * out_w]. This is
/// what the layers consume, since it keeps the position axis contiguous for
/// the matrix products.
template <typename T>
BasicTensor<T> im2col(const BasicTensor<T>& x, const KernelSpec& spec);

/// Adjoint of im2col: scatters column gradients back onto an input of
/// `input_shape` ([C_in, H, W]), summing overlapping contributions.
template <typename T>
BasicTensor<T> col2im(const BasicTensor<T>& cols, const Shape& input_shape,
                      const KernelSpec& spec);

template <typename T>
BasicTensor<T> elementwise_power(const BasicTensor<T>& x, int q);

/// Sum over input channels of p_c^T B_c p_c, where p_c is the c-th length-n
/// slice of `patch` and B_c is the c-th row-major n x n block.
template <typename T>
T blockdiag_quadratic_form(std::span<const T> patch,
                           std::span<const BasicTensor<T>> blocks);

namespace detail {

/// C[M x N] += A[M x K] * B[K x N], all row-major. Fixed summation order, so
/// equal inputs give bit-identical outputs.
template <typename T>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const T* a,
              const T* b, T* c);

template <typename T>
std::vector<T> transpose(std::size_t rows, std::size_t cols, const T* src);

}  // namespace detail

}  // namespace qsonn
