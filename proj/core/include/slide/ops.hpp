#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "slide/tensor.hpp"

namespace slide {

/// Output channel of a grouped convolution. Groups are the major index:
/// channel (c, g) lives at g * C + c, so the output is the G depthwise
/// results concatenated along channels and each group's C values are
/// contiguous per pixel.
constexpr std::size_t grouped_channel(std::size_t c, std::size_t g, std::size_t channels) {
  return g * channels + c;
}

/// Zero border of pad_h rows above/below and pad_w columns left/right.
template <typename T>
Tensor<T> pad_zero(const Tensor<T>& t, std::size_t pad_h, std::size_t pad_w);

/// Inverse of pad_zero: drops crop_h rows and crop_w columns on each side.
template <typename T>
Tensor<T> center_crop(const Tensor<T>& t, std::size_t crop_h, std::size_t crop_w);

/// Numerically stable softmax along the last axis (max subtracted first).
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& t);

/// Gradient of softmax_lastdim given its output y and upstream grad dy.
template <typename T>
Tensor<T> softmax_lastdim_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// Per-channel cross-correlation with zero padding:
///   out[n,i,j,c] = sum_{p,q} kernel[p,q,c] * t[n, i+p-pad, j+q-pad, c]
/// kernel is [k,k,C] with k odd and pad == k/2, so the output keeps the input shape.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& t, const Tensor<T>& kernel, std::size_t pad);

/// Depthwise convolution with `groups` kernels per input channel.
/// kernels is [k,k,C,G]; the output is [N,H,W,C*G] laid out by grouped_channel().
/// Kernel taps whose slice is zero for every channel are skipped.
template <typename T>
Tensor<T> grouped_conv2d(const Tensor<T>& t, const Tensor<T>& kernels, std::size_t pad);

/// A grouped convolution prepared once and evaluated over row ranges, so a
/// caller can stream the output in tiles that stay in cache. Evaluating every
/// row gives exactly grouped_conv2d's output. Op counts record multiply-adds
/// only; the caller decides what counts as one convolution.
template <typename T>
class GroupedConvPlan {
 public:
  GroupedConvPlan(const Tensor<T>& kernels, std::size_t pad);

  std::size_t window() const { return k_; }
  std::size_t channels() const { return channels_; }
  std::size_t groups() const { return groups_; }

  /// Output rows [row_begin, row_end) of image `image`, written to `out`,
  /// which must hold (row_end - row_begin) * W * C * G values.
  void rows(const Tensor<T>& t, std::size_t image, std::size_t row_begin, std::size_t row_end,
            std::span<T> out) const;

 private:
  struct ActiveGroup {
    std::size_t g;
    bool unit;
  };
  std::size_t k_ = 0;
  std::size_t channels_ = 0;
  std::size_t groups_ = 0;
  std::vector<T> weights_;
  std::vector<std::vector<ActiveGroup>> active_;
  std::vector<std::ptrdiff_t> gather_taps_;  // per group, -1 for none; empty unless one-hot
};

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernel;
};

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& t, const Tensor<T>& kernel,
                                       const Tensor<T>& grad_out, std::size_t pad);

template <typename T>
ConvGrads<T> grouped_conv2d_backward(const Tensor<T>& t, const Tensor<T>& kernels,
                                     const Tensor<T>& grad_out, std::size_t pad);

/// [M,K] x [K,N] -> [M,N]. Accumulates in T.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// [B,M,K] x [B,K,N] -> [B,M,N].
template <typename T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct MatmulGrads {
  Tensor<T> a;
  Tensor<T> b;
};

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& m);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Sum of all elements, accumulated in double.
template <typename T>
double sum(const Tensor<T>& t);

/// Largest |a - b| over all elements; shapes must agree.
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
bool all_finite(const Tensor<T>& t);

}  // namespace slide
