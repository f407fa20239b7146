#pragma once

#include <cstddef>

#include "slide/im2col.hpp"
#include "slide/tensor.hpp"
#include "slide/window.hpp"

namespace slide {

/// out[n,i,j,:] = f[n, i+u, j+v, :] where that position exists, else zero.
/// Implemented with bounds-checked copies; it does not go through pad_zero.
template <typename T>
Tensor<T> shift_feature(const Tensor<T>& f, int u, int v);

/// The k*k fixed depthwise kernels that reproduce feature shifts.
///
/// kernels is [k,k,C,k*k]. Group g = direction_index(u, v, k) holds, for
/// every channel, a delta with 1 at (u + k/2, v + k/2), so convolving with it
/// yields shift_feature(f, u, v).
template <typename T>
struct ShiftKernelBank {
  std::size_t k = 0;
  std::size_t channels = 0;
  Tensor<T> kernels;

  std::size_t directions() const { return k * k; }

  /// [k,k,C] depthwise kernel of one direction.
  Tensor<T> slice(std::size_t direction) const;
};

template <typename T>
ShiftKernelBank<T> build_shift_kernel_bank(std::size_t k, std::size_t channels);

/// Row-based Im2Col: shift the map towards each of the k*k directions and
/// stack the flattened results as rows.
template <typename T>
Im2ColMatrix<T> im2col_via_shifts(const Tensor<T>& feature, std::size_t k);

/// Im2Col through depthwise convolutions with the bank's kernels.
/// fused = true runs one grouped convolution; false runs k*k separate
/// depthwise convolutions.
template <typename T>
Im2ColMatrix<T> im2col_via_dwconv(const Tensor<T>& feature, const ShiftKernelBank<T>& bank, bool fused = true);

/// Rearranges a [1,H,W,C*k*k] grouped-convolution output into Im2Col layout.
template <typename T>
Im2ColMatrix<T> grouped_to_im2col(const Tensor<T>& grouped, std::size_t k);

}  // namespace slide
