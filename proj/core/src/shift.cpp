#include "slide/shift.hpp"

#include <algorithm>
#include <string>

#include "slide/ops.hpp"

namespace slide {

template <typename T>
Tensor<T> shift_feature(const Tensor<T>& f, int u, int v) {
  const Nhwc d = f.dims4();
  Tensor<T> out(f.shape());
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t i = 0; i < d.h; ++i) {
      for (std::size_t j = 0; j < d.w; ++j) {
        if (!in_bounds(i, j, Offset{u, v}, d.h, d.w)) continue;
        const auto y = static_cast<std::size_t>(static_cast<long long>(i) + u);
        const auto x = static_cast<std::size_t>(static_cast<long long>(j) + v);
        const auto src = f.data().begin() + static_cast<std::ptrdiff_t>(d.index(n, y, x, 0));
        std::copy(src, src + static_cast<std::ptrdiff_t>(d.c),
                  out.data().begin() + static_cast<std::ptrdiff_t>(d.index(n, i, j, 0)));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> ShiftKernelBank<T>::slice(std::size_t direction) const {
  if (direction >= directions()) {
    throw ShapeError("direction " + std::to_string(direction) + " out of range for k=" + std::to_string(k));
  }
  const std::size_t groups = kernels.dim(3);
  Tensor<T> out(Shape{k, k, channels});
  for (std::size_t tap = 0; tap < k * k; ++tap)
    for (std::size_t c = 0; c < channels; ++c)
      out[tap * channels + c] = kernels[(tap * channels + c) * groups + direction];
  return out;
}

template <typename T>
ShiftKernelBank<T> build_shift_kernel_bank(std::size_t k, std::size_t channels) {
  require_odd_window(k);
  const std::size_t dirs = k * k;
  ShiftKernelBank<T> bank{k, channels, Tensor<T>(Shape{k, k, channels, dirs})};
  const int r = window_radius(k);
  for (std::size_t g = 0; g < dirs; ++g) {
    const Offset o = direction_offset(g, k);
    const auto p = static_cast<std::size_t>(o.u + r);
    const auto q = static_cast<std::size_t>(o.v + r);
    for (std::size_t c = 0; c < channels; ++c) {
      bank.kernels[((p * k + q) * channels + c) * dirs + g] = T{1};
    }
  }
  return bank;
}

template <typename T>
Im2ColMatrix<T> im2col_via_shifts(const Tensor<T>& feature, std::size_t k) {
  require_odd_window(k);
  const Nhwc d = feature.dims4();
  if (d.n != 1) throw ShapeError("im2col_via_shifts expects [1,H,W,C], got " + shape_to_string(feature.shape()));
  Im2ColMatrix<T> m{Tensor<T>(Shape{k * k, d.h * d.w, d.c}), k, d.h, d.w, d.c};
  const std::size_t row_len = d.h * d.w * d.c;
  for (std::size_t r = 0; r < k * k; ++r) {
    const Offset o = direction_offset(r, k);
    const Tensor<T> shifted = shift_feature(feature, o.u, o.v);
    std::copy(shifted.data().begin(), shifted.data().end(),
              m.data.data().begin() + static_cast<std::ptrdiff_t>(r * row_len));
  }
  return m;
}

template <typename T>
Im2ColMatrix<T> grouped_to_im2col(const Tensor<T>& grouped, std::size_t k) {
  require_odd_window(k);
  const Nhwc d = grouped.dims4();
  const std::size_t dirs = k * k;
  if (d.n != 1 || d.c % dirs != 0) {
    throw ShapeError("grouped_to_im2col expects [1,H,W,C*k*k], got " + shape_to_string(grouped.shape()));
  }
  const std::size_t channels = d.c / dirs;
  Im2ColMatrix<T> m{Tensor<T>(Shape{dirs, d.h * d.w, channels}), k, d.h, d.w, channels};
  for (std::size_t px = 0; px < d.h * d.w; ++px) {
    const T* src = grouped.data().data() + px * d.c;
    for (std::size_t r = 0; r < dirs; ++r) {
      T* dst = m.entry(r, px);
      for (std::size_t c = 0; c < channels; ++c) dst[c] = src[grouped_channel(c, r, channels)];
    }
  }
  return m;
}

template <typename T>
Im2ColMatrix<T> im2col_via_dwconv(const Tensor<T>& feature, const ShiftKernelBank<T>& bank, bool fused) {
  const Nhwc d = feature.dims4();
  if (d.n != 1) throw ShapeError("im2col_via_dwconv expects [1,H,W,C], got " + shape_to_string(feature.shape()));
  if (bank.channels != d.c) {
    throw ShapeError("shift bank has " + std::to_string(bank.channels) + " channels, feature has " +
                     std::to_string(d.c));
  }
  const std::size_t k = bank.k;
  if (fused) return grouped_to_im2col(grouped_conv2d(feature, bank.kernels, k / 2), k);

  Im2ColMatrix<T> m{Tensor<T>(Shape{k * k, d.h * d.w, d.c}), k, d.h, d.w, d.c};
  const std::size_t row_len = d.h * d.w * d.c;
  for (std::size_t r = 0; r < k * k; ++r) {
    const Tensor<T> out = depthwise_conv2d(feature, bank.slice(r), k / 2);
    std::copy(out.data().begin(), out.data().end(), m.data.data().begin() + static_cast<std::ptrdiff_t>(r * row_len));
  }
  return m;
}

#define SLIDE_INSTANTIATE_SHIFT(T)                                                              \
  template Tensor<T> shift_feature(const Tensor<T>&, int, int);                                 \
  template struct ShiftKernelBank<T>;                                                           \
  template ShiftKernelBank<T> build_shift_kernel_bank(std::size_t, std::size_t);                \
  template Im2ColMatrix<T> im2col_via_shifts(const Tensor<T>&, std::size_t);                    \
  template Im2ColMatrix<T> im2col_via_dwconv(const Tensor<T>&, const ShiftKernelBank<T>&, bool); \
  template Im2ColMatrix<T> grouped_to_im2col(const Tensor<T>&, std::size_t);

SLIDE_INSTANTIATE_SHIFT(float)
SLIDE_INSTANTIATE_SHIFT(double)

}  // namespace slide
