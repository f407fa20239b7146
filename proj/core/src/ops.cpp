#include "slide/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "slide/op_counter.hpp"

namespace slide {
namespace {

struct ConvGeometry {
  Nhwc in;
  std::size_t k = 0;
  std::size_t groups = 0;
};

template <typename T>
ConvGeometry check_conv(const Tensor<T>& t, const Tensor<T>& kernels, std::size_t pad,
                        bool depthwise) {
  ConvGeometry g;
  g.in = t.dims4();
  const std::size_t want_rank = depthwise ? 3 : 4;
  if (kernels.rank() != want_rank) {
    throw ShapeError("convolution kernel must be rank " + std::to_string(want_rank) + ", got " +
                     shape_to_string(kernels.shape()));
  }
  g.k = kernels.dim(0);
  if (kernels.dim(1) != g.k) {
    throw ShapeError("convolution kernel must be square, got " + shape_to_string(kernels.shape()));
  }
  if (g.k % 2 == 0) {
    throw ConfigError("convolution window size must be odd, got " + std::to_string(g.k));
  }
  if (pad != g.k / 2) {
    throw ConfigError("padding must be k/2 = " + std::to_string(g.k / 2) + " for same-size output, got " +
                      std::to_string(pad));
  }
  if (kernels.dim(2) != g.in.c) {
    throw ShapeError("kernel has " + std::to_string(kernels.dim(2)) + " channels, input has " +
                     std::to_string(g.in.c));
  }
  g.groups = depthwise ? 1 : kernels.dim(3);
  if (g.groups == 0) throw ShapeError("grouped convolution needs at least one group");
  return g;
}

// Valid output column range [lo, hi) for a tap reading column w + off.
inline void valid_range(std::size_t extent, std::ptrdiff_t off, std::size_t& lo, std::size_t& hi) {
  const auto e = static_cast<std::ptrdiff_t>(extent);
  lo = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(-off, 0, e));
  hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(e - off, 0, e));
}

// Kernels [k,k,C,G] rearranged to [k*k, G, C] so each group's channel vector
// is contiguous, matching the output layout.
template <typename T>
std::vector<T> group_major_kernels(const Tensor<T>& kernels, std::size_t taps, std::size_t channels,
                                   std::size_t groups) {
  std::vector<T> out(taps * groups * channels);
  const T* kd = kernels.data().data();
  for (std::size_t tap = 0; tap < taps; ++tap)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t g = 0; g < groups; ++g)
        out[(tap * groups + g) * channels + c] = kd[(tap * channels + c) * groups + g];
  return out;
}

template <typename T>
Tensor<T> grouped_forward(const Tensor<T>& t, const Tensor<T>& kernels, const ConvGeometry& geo) {
  const auto [n_, h_, w_, c_] = geo.in;
  Tensor<T> out(Shape{n_, h_, w_, c_ * geo.groups});
  const GroupedConvPlan<T> plan(kernels, geo.k / 2);
  const std::size_t image_size = h_ * w_ * c_ * geo.groups;
  for (std::size_t n = 0; n < n_; ++n) plan.rows(t, n, 0, h_, out.data().subspan(n * image_size, image_size));
  return out;
}

template <typename T>
ConvGrads<T> grouped_backward(const Tensor<T>& t, const Tensor<T>& kernels, const Tensor<T>& grad_out,
                              const ConvGeometry& geo) {
  const auto [n_, h_, w_, c_] = geo.in;
  const std::size_t k = geo.k;
  const std::size_t groups = geo.groups;
  const std::size_t out_c = c_ * groups;
  if (grad_out.shape() != Shape{n_, h_, w_, out_c}) {
    throw ShapeError("convolution grad_out shape " + shape_to_string(grad_out.shape()) +
                     " does not match output " + shape_to_string(Shape{n_, h_, w_, out_c}));
  }
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const std::vector<T> kg = group_major_kernels(kernels, k * k, c_, groups);
  std::vector<T> gk_major(kg.size(), T{0});
  Tensor<T> grad_in(t.shape());
  const T* in = t.data().data();
  const T* go = grad_out.data().data();
  T* gi = grad_in.data().data();

  for (std::size_t n = 0; n < n_; ++n) {
    for (std::size_t h = 0; h < h_; ++h) {
      for (std::size_t p = 0; p < k; ++p) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h) + static_cast<std::ptrdiff_t>(p) - r;
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h_)) continue;
        for (std::size_t q = 0; q < k; ++q) {
          const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(q) - r;
          std::size_t w_lo = 0;
          std::size_t w_hi = 0;
          valid_range(w_, off, w_lo, w_hi);
          const std::size_t tap = p * k + q;
          for (std::size_t w = w_lo; w < w_hi; ++w) {
            const std::size_t src_idx = ((n * h_ + static_cast<std::size_t>(ih)) * w_ +
                                         static_cast<std::size_t>(static_cast<std::ptrdiff_t>(w) + off)) *
                                        c_;
            const T* g_row = go + ((n * h_ + h) * w_ + w) * out_c;
            for (std::size_t g = 0; g < groups; ++g) {
              const T* kc = kg.data() + (tap * groups + g) * c_;
              T* gkc = gk_major.data() + (tap * groups + g) * c_;
              const T* gg = g_row + g * c_;
              for (std::size_t c = 0; c < c_; ++c) {
                gi[src_idx + c] += kc[c] * gg[c];
                gkc[c] += in[src_idx + c] * gg[c];
              }
            }
          }
        }
      }
    }
  }

  Tensor<T> grad_k(kernels.shape());
  for (std::size_t tap = 0; tap < k * k; ++tap)
    for (std::size_t c = 0; c < c_; ++c)
      for (std::size_t g = 0; g < groups; ++g)
        grad_k[(tap * c_ + c) * groups + g] = gk_major[(tap * groups + g) * c_ + c];
  return {std::move(grad_in), std::move(grad_k)};
}

}  // namespace

template <typename T>
GroupedConvPlan<T>::GroupedConvPlan(const Tensor<T>& kernels, std::size_t pad) {
  if (kernels.rank() != 4) {
    throw ShapeError("grouped convolution kernel must be rank 4, got " + shape_to_string(kernels.shape()));
  }
  k_ = kernels.dim(0);
  channels_ = kernels.dim(2);
  groups_ = kernels.dim(3);
  if (kernels.dim(1) != k_) {
    throw ShapeError("convolution kernel must be square, got " + shape_to_string(kernels.shape()));
  }
  if (k_ % 2 == 0) throw ConfigError("convolution window size must be odd, got " + std::to_string(k_));
  if (pad != k_ / 2) {
    throw ConfigError("padding must be k/2 = " + std::to_string(k_ / 2) + " for same-size output, got " +
                      std::to_string(pad));
  }
  if (groups_ == 0) throw ShapeError("grouped convolution needs at least one group");
  weights_ = group_major_kernels(kernels, k_ * k_, channels_, groups_);

  // A (tap, group) slice that is zero for every channel contributes nothing
  // and is dropped from the inner loops. A slice of all ones is a pure copy,
  // which is what every shift kernel reduces to.
  active_.resize(k_ * k_);
  for (std::size_t tap = 0; tap < k_ * k_; ++tap) {
    for (std::size_t g = 0; g < groups_; ++g) {
      const T* kc = weights_.data() + (tap * groups_ + g) * channels_;
      if (std::any_of(kc, kc + channels_, [](T v) { return v != T{0}; })) {
        active_[tap].push_back({g, std::all_of(kc, kc + channels_, [](T v) { return v == T{1}; })});
      }
    }
  }

  // When every group reads at most one unit tap the convolution is a gather.
  std::vector<std::ptrdiff_t> pick(groups_, -1);
  bool gather = true;
  for (std::size_t tap = 0; tap < k_ * k_ && gather; ++tap) {
    for (const ActiveGroup& a : active_[tap]) {
      if (!a.unit || pick[a.g] >= 0) {
        gather = false;
        break;
      }
      pick[a.g] = static_cast<std::ptrdiff_t>(tap);
    }
  }
  if (gather) gather_taps_ = std::move(pick);
}

template <typename T>
void GroupedConvPlan<T>::rows(const Tensor<T>& t, std::size_t image, std::size_t row_begin,
                              std::size_t row_end, std::span<T> out) const {
  const auto [n_, h_, w_, c_] = t.dims4();
  if (c_ != channels_) {
    throw ShapeError("kernel has " + std::to_string(channels_) + " channels, input has " + std::to_string(c_));
  }
  if (image >= n_ || row_begin > row_end || row_end > h_) {
    throw ShapeError("row range [" + std::to_string(row_begin) + ", " + std::to_string(row_end) +
                     ") of image " + std::to_string(image) + " is outside " + shape_to_string(t.shape()));
  }
  const std::size_t out_c = c_ * groups_;
  if (out.size() != (row_end - row_begin) * w_ * out_c) {
    throw ShapeError("row buffer holds " + std::to_string(out.size()) + " values, need " +
                     std::to_string((row_end - row_begin) * w_ * out_c));
  }
  const auto r = static_cast<std::ptrdiff_t>(k_ / 2);
  const T* in = t.data().data() + image * h_ * w_ * c_;
  T* o = out.data();
  op_counts().multiply_adds += static_cast<std::uint64_t>((row_end - row_begin) * w_ * out_c * k_ * k_);
  if (!gather_taps_.empty()) {
    const auto hh = static_cast<std::ptrdiff_t>(h_);
    const auto ww = static_cast<std::ptrdiff_t>(w_);
    for (std::size_t h = row_begin; h < row_end; ++h) {
      for (std::size_t w = 0; w < w_; ++w) {
        T* dst = o + ((h - row_begin) * w_ + w) * out_c;
        for (std::size_t g = 0; g < groups_; ++g) {
          T* dg = dst + g * c_;
          const std::ptrdiff_t tap = gather_taps_[g];
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h) + tap / static_cast<std::ptrdiff_t>(k_) - r;
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(w) + tap % static_cast<std::ptrdiff_t>(k_) - r;
          if (tap < 0 || ih < 0 || ih >= hh || iw < 0 || iw >= ww) {
            std::fill(dg, dg + c_, T{0});
          } else {
            const T* src = in + (static_cast<std::size_t>(ih) * w_ + static_cast<std::size_t>(iw)) * c_;
            std::copy(src, src + c_, dg);
          }
        }
      }
    }
    return;
  }
  std::fill(out.begin(), out.end(), T{0});
  for (std::size_t h = row_begin; h < row_end; ++h) {
    for (std::size_t p = 0; p < k_; ++p) {
      const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(h) + static_cast<std::ptrdiff_t>(p) - r;
      if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h_)) continue;
      for (std::size_t q = 0; q < k_; ++q) {
        const std::size_t tap = p * k_ + q;
        if (active_[tap].empty()) continue;
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(q) - r;
        std::size_t w_lo = 0;
        std::size_t w_hi = 0;
        valid_range(w_, off, w_lo, w_hi);
        for (std::size_t w = w_lo; w < w_hi; ++w) {
          const T* src =
              in + (static_cast<std::size_t>(ih) * w_ + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(w) + off)) *
                       c_;
          T* dst = o + ((h - row_begin) * w_ + w) * out_c;
          for (const ActiveGroup& a : active_[tap]) {
            T* dg = dst + a.g * c_;
            if (a.unit) {
              for (std::size_t c = 0; c < c_; ++c) dg[c] += src[c];
            } else {
              const T* kc = weights_.data() + (tap * groups_ + a.g) * c_;
              for (std::size_t c = 0; c < c_; ++c) dg[c] += kc[c] * src[c];
            }
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> pad_zero(const Tensor<T>& t, std::size_t pad_h, std::size_t pad_w) {
  const Nhwc d = t.dims4();
  const Nhwc o{d.n, d.h + 2 * pad_h, d.w + 2 * pad_w, d.c};
  Tensor<T> out(Shape{o.n, o.h, o.w, o.c});
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t h = 0; h < d.h; ++h)
      for (std::size_t w = 0; w < d.w; ++w)
        for (std::size_t c = 0; c < d.c; ++c)
          out[o.index(n, h + pad_h, w + pad_w, c)] = t[d.index(n, h, w, c)];
  return out;
}

template <typename T>
Tensor<T> center_crop(const Tensor<T>& t, std::size_t crop_h, std::size_t crop_w) {
  const Nhwc d = t.dims4();
  if (2 * crop_h > d.h || 2 * crop_w > d.w) {
    throw ShapeError("crop of " + std::to_string(crop_h) + "x" + std::to_string(crop_w) +
                     " exceeds tensor " + shape_to_string(t.shape()));
  }
  const Nhwc o{d.n, d.h - 2 * crop_h, d.w - 2 * crop_w, d.c};
  Tensor<T> out(Shape{o.n, o.h, o.w, o.c});
  for (std::size_t n = 0; n < o.n; ++n)
    for (std::size_t h = 0; h < o.h; ++h)
      for (std::size_t w = 0; w < o.w; ++w)
        for (std::size_t c = 0; c < o.c; ++c)
          out[o.index(n, h, w, c)] = t[d.index(n, h + crop_h, w + crop_w, c)];
  return out;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& t) {
  if (t.rank() == 0 || t.shape().back() == 0) {
    throw ShapeError("softmax needs a non-empty last dimension, got " + shape_to_string(t.shape()));
  }
  const std::size_t len = t.shape().back();
  const std::size_t rows = t.size() / len;
  Tensor<T> out(t.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = t.data().data() + r * len;
    T* y = out.data().data() + r * len;
    const T m = *std::max_element(x, x + len);
    T total{0};
    for (std::size_t i = 0; i < len; ++i) {
      y[i] = std::exp(x[i] - m);
      total += y[i];
    }
    for (std::size_t i = 0; i < len; ++i) y[i] /= total;
  }
  return out;
}

template <typename T>
Tensor<T> softmax_lastdim_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  if (y.shape() != dy.shape()) {
    throw ShapeError("softmax backward shape mismatch: " + shape_to_string(y.shape()) + " vs " +
                     shape_to_string(dy.shape()));
  }
  if (y.rank() == 0 || y.shape().back() == 0) throw ShapeError("softmax needs a non-empty last dimension");
  const std::size_t len = y.shape().back();
  const std::size_t rows = y.size() / len;
  Tensor<T> dx(y.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * len;
    T dot{0};
    for (std::size_t i = 0; i < len; ++i) dot += y[base + i] * dy[base + i];
    for (std::size_t i = 0; i < len; ++i) dx[base + i] = y[base + i] * (dy[base + i] - dot);
  }
  return dx;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& t, const Tensor<T>& kernel, std::size_t pad) {
  const ConvGeometry geo = check_conv(t, kernel, pad, true);
  ++op_counts().depthwise_convs;
  const Tensor<T> k4 = kernel.reshaped(Shape{geo.k, geo.k, geo.in.c, 1});
  return grouped_forward(t, k4, geo);
}

template <typename T>
Tensor<T> grouped_conv2d(const Tensor<T>& t, const Tensor<T>& kernels, std::size_t pad) {
  const ConvGeometry geo = check_conv(t, kernels, pad, false);
  ++op_counts().grouped_convs;
  return grouped_forward(t, kernels, geo);
}

template <typename T>
ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>& t, const Tensor<T>& kernel,
                                       const Tensor<T>& grad_out, std::size_t pad) {
  const ConvGeometry geo = check_conv(t, kernel, pad, true);
  ConvGrads<T> g = grouped_backward(t, kernel.reshaped(Shape{geo.k, geo.k, geo.in.c, 1}), grad_out, geo);
  g.kernel = std::move(g.kernel).reshaped(kernel.shape());
  return g;
}

template <typename T>
ConvGrads<T> grouped_conv2d_backward(const Tensor<T>& t, const Tensor<T>& kernels,
                                     const Tensor<T>& grad_out, std::size_t pad) {
  const ConvGeometry geo = check_conv(t, kernels, pad, false);
  return grouped_backward(t, kernels, grad_out, geo);
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0);
  const std::size_t kk = a.dim(1);
  const std::size_t n = b.dim(1);
  Tensor<T> out(Shape{m, n});
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* od = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = od + i * n;
    for (std::size_t p = 0; p < kk; ++p) {
      const T av = ad[i * kk + p];
      const T* brow = bd + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  ++op_counts().matmuls;
  op_counts().multiply_adds += static_cast<std::uint64_t>(m * kk * n);
  return out;
}

template <typename T>
Tensor<T> batched_matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1)) {
    throw ShapeError("batched matmul shape mismatch: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t kk = a.dim(2);
  const std::size_t n = b.dim(2);
  Tensor<T> out(Shape{batch, m, n});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    Tensor<T> am(Shape{m, kk}, std::vector<T>(a.data().begin() + bi * m * kk, a.data().begin() + (bi + 1) * m * kk));
    Tensor<T> bm(Shape{kk, n}, std::vector<T>(b.data().begin() + bi * kk * n, b.data().begin() + (bi + 1) * kk * n));
    const Tensor<T> om = matmul(am, bm);
    std::copy(om.data().begin(), om.data().end(), out.data().begin() + bi * m * n);
  }
  return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& m) {
  if (m.rank() != 2) throw ShapeError("transpose2d needs a matrix, got " + shape_to_string(m.shape()));
  Tensor<T> out(Shape{m.dim(1), m.dim(0)});
  for (std::size_t i = 0; i < m.dim(0); ++i)
    for (std::size_t j = 0; j < m.dim(1); ++j) out.at(j, i) = m.at(i, j);
  return out;
}

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& grad_out) {
  if (grad_out.rank() != 2 || a.rank() != 2 || b.rank() != 2 || grad_out.dim(0) != a.dim(0) ||
      grad_out.dim(1) != b.dim(1)) {
    throw ShapeError("matmul backward shape mismatch: grad " + shape_to_string(grad_out.shape()));
  }
  return {matmul(grad_out, transpose2d(b)), matmul(transpose2d(a), grad_out)};
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
double sum(const Tensor<T>& t) {
  double s = 0.0;
  for (const T x : t.data()) s += static_cast<double>(x);
  return s;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff shape mismatch: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T x) { return std::isfinite(x); });
}

#define SLIDE_INSTANTIATE_OPS(T)                                                                       \
  template class GroupedConvPlan<T>;                                                                   \
  template Tensor<T> pad_zero(const Tensor<T>&, std::size_t, std::size_t);                             \
  template Tensor<T> center_crop(const Tensor<T>&, std::size_t, std::size_t);                          \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                                                \
  template Tensor<T> softmax_lastdim_backward(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> depthwise_conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t);                \
  template Tensor<T> grouped_conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t);                  \
  template ConvGrads<T> depthwise_conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                                  std::size_t);                                        \
  template ConvGrads<T> grouped_conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                                std::size_t);                                          \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> batched_matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template MatmulGrads<T> matmul_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);       \
  template Tensor<T> transpose2d(const Tensor<T>&);                                                    \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
  template double sum(const Tensor<T>&);                                                               \
  template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);                                    \
  template bool all_finite(const Tensor<T>&);

SLIDE_INSTANTIATE_OPS(float)
SLIDE_INSTANTIATE_OPS(double)

#undef SLIDE_INSTANTIATE_OPS

}  // namespace slide
