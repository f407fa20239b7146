#include "slide/attention.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slide/im2col.hpp"
#include "slide/op_counter.hpp"
#include "slide/ops.hpp"
#include "slide/random.hpp"
#include "slide/shift.hpp"

namespace slide {

AttentionConfig AttentionConfig::make(std::size_t embed_dim, std::size_t num_heads, std::size_t window_size,
                                      bool mask_padding, bool use_deformed) {
  if (num_heads == 0) throw ConfigError("num_heads must be positive");
  return {embed_dim, num_heads, embed_dim / num_heads, window_size, mask_padding, use_deformed};
}

void AttentionConfig::validate() const {
  if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
  if (num_heads == 0 || head_dim == 0 || num_heads * head_dim != embed_dim) {
    throw ConfigError("embed_dim (" + std::to_string(embed_dim) + ") must equal num_heads (" +
                      std::to_string(num_heads) + ") * head_dim (" + std::to_string(head_dim) + ")");
  }
  require_odd_window(window_size);
}

std::string_view to_string(Implementation impl) {
  switch (impl) {
    case Implementation::im2col:
      return "im2col";
    case Implementation::shift:
      return "shift";
    case Implementation::dwconv_fused:
      return "dwconv_fused";
  }
  return "unknown";
}

std::optional<Implementation> parse_implementation(std::string_view name) {
  for (auto impl : {Implementation::im2col, Implementation::shift, Implementation::dwconv_fused}) {
    if (to_string(impl) == name) return impl;
  }
  return std::nullopt;
}

namespace {

constexpr std::size_t kMaxTaps = 1024;

template <typename T>
Nhwc check_input(const Tensor<T>& x, const AttentionConfig& cfg, const AttentionParams<T>& p) {
  cfg.validate();
  const Nhwc d = x.dims4();
  if (d.n != 1) throw ShapeError("slide attention expects a single image [1,H,W,C], got " + shape_to_string(x.shape()));
  if (d.c != cfg.embed_dim) {
    throw ShapeError("input has " + std::to_string(d.c) + " channels, config expects " + std::to_string(cfg.embed_dim));
  }
  const Shape square{cfg.embed_dim, cfg.embed_dim};
  for (const Tensor<T>* w : {&p.w_q, &p.w_k, &p.w_v, &p.w_o}) {
    if (w->shape() != square) {
      throw ShapeError("projection weight " + shape_to_string(w->shape()) + " must be " + shape_to_string(square));
    }
  }
  if (cfg.use_deformed) {
    for (const auto* dp : {&p.deformed_k, &p.deformed_v}) {
      if (dp->k != cfg.window_size || dp->channels() != cfg.embed_dim) {
        throw ConfigError("deformed shift params (k=" + std::to_string(dp->k) + ", C=" + std::to_string(dp->channels()) +
                          ") do not match the attention config");
      }
    }
  }
  return d;
}

template <typename T>
Tensor<T> generate_windows(const Tensor<T>& feature, const AttentionConfig& cfg, const DeformedShiftParams<T>& dp) {
  if (!cfg.use_deformed) {
    return grouped_conv2d(feature, build_shift_kernel_bank<T>(cfg.window_size, cfg.embed_dim).kernels,
                          cfg.window_size / 2);
  }
  return dp.is_merged() ? forward_merged(feature, dp) : forward_two_path(feature, dp);
}

// Forward intermediates kept for the backward pass.
template <typename T>
struct ForwardState {
  Qkv<T> qkv;
  Tensor<T> keys;
  Tensor<T> values;
  Tensor<T> probs;  // [H*W, heads, k*k]
  Tensor<T> z;
  Tensor<T> out;
};

// Where the key (or value) vector of query pixel px and tap g starts:
// base + px * pixel_stride + g * tap_stride. The grouped layout has
// (k*k*C, C); an Im2ColMatrix has (C, H*W*C).
template <typename T>
struct WindowView {
  const T* base;
  std::size_t pixel_stride;
  std::size_t tap_stride;
  const T* at(std::size_t px, std::size_t g) const { return base + px * pixel_stride + g * tap_stride; }
};

// Attention for query rows [row_begin, row_end). Pixel indices into the views
// are relative to row_begin; z and probs are full size.
template <typename T>
void attend_rows(const Tensor<T>& q, WindowView<T> keys, WindowView<T> values, std::size_t row_begin,
                 std::size_t row_end, std::size_t k, std::size_t head_dim, bool mask_padding, Tensor<T>& z,
                 Tensor<T>* probs) {
  const Nhwc d = q.dims4();
  const std::size_t taps = k * k;
  const std::size_t heads = d.c / head_dim;
  const T scale = T{1} / std::sqrt(static_cast<T>(head_dim));
  T logits[kMaxTaps];
  const T* key_rows[kMaxTaps];
  const T* value_rows[kMaxTaps];
  unsigned char valid[kMaxTaps];
  std::fill(valid, valid + taps, static_cast<unsigned char>(1));
  const T* qd = q.data().data();
  T* zd = z.data().data();

  for (std::size_t i = row_begin; i < row_end; ++i) {
    for (std::size_t j = 0; j < d.w; ++j) {
      const std::size_t px = query_index(i, j, d.w);
      const std::size_t local = px - row_begin * d.w;
      if (mask_padding) {
        for (std::size_t g = 0; g < taps; ++g) valid[g] = in_bounds(i, j, direction_offset(g, k), d.h, d.w);
      }
      for (std::size_t g = 0; g < taps; ++g) {
        key_rows[g] = keys.at(local, g);
        value_rows[g] = values.at(local, g);
      }
      const T* qp = qd + px * d.c;
      T* zp = zd + px * d.c;
      for (std::size_t m = 0; m < heads; ++m) {
        const std::size_t c0 = m * head_dim;
        // All taps accumulate side by side; each logit still sums over c in
        // order, so the result matches a tap-at-a-time dot product exactly.
        std::fill(logits, logits + taps, T{0});
        for (std::size_t c = c0; c < c0 + head_dim; ++c) {
          const T qc = qp[c];
          for (std::size_t g = 0; g < taps; ++g) logits[g] += qc * key_rows[g][c];
        }
        T max_logit = -std::numeric_limits<T>::infinity();
        for (std::size_t g = 0; g < taps; ++g) {
          logits[g] *= scale;
          if (valid[g]) max_logit = std::max(max_logit, logits[g]);
        }
        assert(std::isfinite(max_logit));
        T total{0};
        for (std::size_t g = 0; g < taps; ++g) {
          logits[g] = valid[g] ? std::exp(logits[g] - max_logit) : T{0};
          total += logits[g];
        }
        for (std::size_t g = 0; g < taps; ++g) logits[g] /= total;
        if (probs != nullptr) std::copy(logits, logits + taps, probs->data().begin() + (px * heads + m) * taps);
        for (std::size_t c = c0; c < c0 + head_dim; ++c) zp[c] = T{0};
        for (std::size_t g = 0; g < taps; ++g) {
          const T a = logits[g];
          const T* vg = value_rows[g];
          for (std::size_t c = c0; c < c0 + head_dim; ++c) zp[c] += a * vg[c];
        }
      }
    }
  }
}

template <typename T>
void check_window_attention(const Tensor<T>& q, std::size_t k, std::size_t head_dim) {
  const Nhwc d = q.dims4();
  if (d.n != 1) throw ShapeError("window attention expects a single image, got " + shape_to_string(q.shape()));
  if (k * k > kMaxTaps) throw ConfigError("window size " + std::to_string(k) + " is too large");
  if (head_dim == 0 || d.c % head_dim != 0) {
    throw ShapeError("head_dim " + std::to_string(head_dim) + " does not divide channels " + std::to_string(d.c));
  }
}

template <typename T>
void window_attention_impl(const Tensor<T>& q, const Tensor<T>& keys, const Tensor<T>& values, std::size_t k,
                           std::size_t head_dim, bool mask_padding, Tensor<T>& z, Tensor<T>* probs) {
  check_window_attention(q, k, head_dim);
  const Nhwc d = q.dims4();
  if (keys.shape() != Shape{d.n, d.h, d.w, d.c * k * k} || values.shape() != keys.shape()) {
    throw ShapeError("window attention: keys/values must be [1,H,W,C*k*k], got " + shape_to_string(keys.shape()) +
                     " and " + shape_to_string(values.shape()));
  }
  z = Tensor<T>(q.shape());
  const std::size_t block = d.c * k * k;
  attend_rows<T>(q, {keys.data().data(), block, d.c}, {values.data().data(), block, d.c}, 0, d.h, k, head_dim,
                 mask_padding, z, probs);
}

// Key or value windows produced a few rows at a time. The windows are a
// convolution of the projected map, so a tile of output rows only needs the
// input rows around it and never has to exist as a full [H,W,C*k*k] tensor.
template <typename T>
class WindowSource {
 public:
  WindowSource(const AttentionConfig& cfg, const DeformedShiftParams<T>& dp) {
    const std::size_t pad = cfg.window_size / 2;
    if (!cfg.use_deformed) {
      main_.emplace(build_shift_kernel_bank<T>(cfg.window_size, cfg.embed_dim).kernels, pad);
    } else if (dp.is_merged()) {
      main_.emplace(*dp.merged, pad);
    } else {
      main_.emplace(dp.fixed_bank.kernels, pad);
      extra_.emplace(dp.learnable, pad);
    }
    op_counts().grouped_convs += extra_ ? 2 : 1;
  }

  void rows(const Tensor<T>& f, std::size_t row_begin, std::size_t row_end, std::span<T> out,
            std::vector<T>& scratch) const {
    main_->rows(f, 0, row_begin, row_end, out);
    if (!extra_) return;
    scratch.resize(out.size());
    extra_->rows(f, 0, row_begin, row_end, scratch);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += scratch[i];
  }

 private:
  std::optional<GroupedConvPlan<T>> main_;
  std::optional<GroupedConvPlan<T>> extra_;
};

// Rows per tile so that the key and value tiles together stay near kTileBytes.
inline std::size_t tile_rows(std::size_t row_values, std::size_t value_size, std::size_t height) {
  constexpr std::size_t kTileBytes = std::size_t{256} << 10;
  const std::size_t rows = kTileBytes / std::max<std::size_t>(1, 2 * row_values * value_size);
  return std::clamp<std::size_t>(rows, 1, std::max<std::size_t>(1, height));
}

template <typename T>
void check_qkv(const Qkv<T>& qkv, std::size_t k, std::size_t head_dim) {
  check_window_attention(qkv.q, k, head_dim);
  if (qkv.k.shape() != qkv.q.shape() || qkv.v.shape() != qkv.q.shape()) {
    throw ShapeError("q, k and v must share a shape, got " + shape_to_string(qkv.q.shape()) + ", " +
                     shape_to_string(qkv.k.shape()) + ", " + shape_to_string(qkv.v.shape()));
  }
}

template <typename T>
Tensor<T> tiled_local_attention(const Qkv<T>& qkv, const AttentionConfig& cfg, const AttentionParams<T>& p) {
  const std::size_t k = cfg.window_size;
  check_qkv(qkv, k, cfg.head_dim);
  const Nhwc d = qkv.q.dims4();
  const WindowSource<T> key_src(cfg, p.deformed_k);
  const WindowSource<T> value_src(cfg, p.deformed_v);
  const std::size_t row_values = d.w * d.c * k * k;
  const std::size_t step = tile_rows(row_values, sizeof(T), d.h);
  std::vector<T> kbuf(step * row_values);
  std::vector<T> vbuf(step * row_values);
  std::vector<T> scratch;
  Tensor<T> z(qkv.q.shape());
  for (std::size_t h0 = 0; h0 < d.h; h0 += step) {
    const std::size_t h1 = std::min(d.h, h0 + step);
    const std::size_t n = (h1 - h0) * row_values;
    key_src.rows(qkv.k, h0, h1, std::span<T>(kbuf.data(), n), scratch);
    value_src.rows(qkv.v, h0, h1, std::span<T>(vbuf.data(), n), scratch);
    const std::size_t block = d.c * k * k;
    attend_rows<T>(qkv.q, {kbuf.data(), block, d.c}, {vbuf.data(), block, d.c}, h0, h1, k, cfg.head_dim,
                   cfg.mask_padding, z, nullptr);
  }
  return z;
}

template <typename T>
ForwardState<T> run_forward(const Tensor<T>& x, const AttentionConfig& cfg, const AttentionParams<T>& p) {
  const Nhwc d = check_input(x, cfg, p);
  ForwardState<T> s;
  s.qkv = project_qkv(x, p);
  s.keys = generate_windows(s.qkv.k, cfg, p.deformed_k);
  s.values = generate_windows(s.qkv.v, cfg, p.deformed_v);
  const std::size_t taps = cfg.window_size * cfg.window_size;
  s.probs = Tensor<T>(Shape{d.h * d.w, cfg.num_heads, taps});
  window_attention_impl(s.qkv.q, s.keys, s.values, cfg.window_size, cfg.head_dim, cfg.mask_padding, s.z,
                        &s.probs);
  s.out = project_pixels(s.z, p.w_o);
  return s;
}

}  // namespace

template <typename T>
AttentionParams<T> init_attention_params(const AttentionConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t c = cfg.embed_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c));
  Rng rng(seed);
  AttentionParams<T> p;
  p.w_q = random_uniform<T>(Shape{c, c}, rng, -bound, bound);
  p.w_k = random_uniform<T>(Shape{c, c}, rng, -bound, bound);
  p.w_v = random_uniform<T>(Shape{c, c}, rng, -bound, bound);
  p.w_o = random_uniform<T>(Shape{c, c}, rng, -bound, bound);
  p.deformed_k = init_deformed<T>(cfg.window_size, c, rng());
  p.deformed_v = init_deformed<T>(cfg.window_size, c, rng());
  return p;
}

template <typename T>
AttentionParams<T> identity_attention_params(const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.embed_dim;
  Tensor<T> eye(Shape{c, c});
  for (std::size_t i = 0; i < c; ++i) eye.at(i, i) = T{1};
  AttentionParams<T> p{eye, eye, eye, eye, {}, {}};
  const auto bank = build_shift_kernel_bank<T>(cfg.window_size, c);
  p.deformed_k = deformed_from_parts(bank, Tensor<T>(bank.kernels.shape()));
  p.deformed_v = p.deformed_k;
  return p;
}

template <typename T>
Tensor<T> project_pixels(const Tensor<T>& x, const Tensor<T>& w) {
  const Nhwc d = x.dims4();
  if (w.rank() != 2 || w.dim(0) != d.c) {
    throw ShapeError("projection " + shape_to_string(w.shape()) + " does not match input " + shape_to_string(x.shape()));
  }
  return matmul(x.reshaped(Shape{d.n * d.h * d.w, d.c}), w).reshaped(Shape{d.n, d.h, d.w, w.dim(1)});
}

template <typename T>
Qkv<T> project_qkv(const Tensor<T>& x, const AttentionParams<T>& p) {
  return {project_pixels(x, p.w_q), project_pixels(x, p.w_k), project_pixels(x, p.w_v)};
}

template <typename T>
Tensor<T> grouped_window_attention(const Tensor<T>& q, const Tensor<T>& keys, const Tensor<T>& values,
                                   std::size_t k, std::size_t head_dim, bool mask_padding) {
  require_odd_window(k);
  Tensor<T> z;
  window_attention_impl<T>(q, keys, values, k, head_dim, mask_padding, z, nullptr);
  return z;
}

template <typename T>
Tensor<T> slide_attention_forward(const Tensor<T>& x, const AttentionConfig& cfg, const AttentionParams<T>& p) {
  check_input(x, cfg, p);
  return project_pixels(tiled_local_attention(project_qkv(x, p), cfg, p), p.w_o);
}

template <typename T>
AttentionGrads<T> slide_attention_backward(const Tensor<T>& x, const AttentionConfig& cfg,
                                           const AttentionParams<T>& p, const Tensor<T>& upstream_grad) {
  ForwardState<T> s = run_forward(x, cfg, p);
  if (upstream_grad.shape() != x.shape()) {
    throw ShapeError("upstream gradient " + shape_to_string(upstream_grad.shape()) + " must match input " +
                     shape_to_string(x.shape()));
  }
  const Nhwc d = x.dims4();
  const std::size_t pixels = d.h * d.w;
  const std::size_t c_ = d.c;
  const std::size_t k = cfg.window_size;
  const std::size_t taps = k * k;
  const std::size_t block = c_ * taps;
  const std::size_t heads = cfg.num_heads;
  const std::size_t hd = cfg.head_dim;
  const T scale = T{1} / std::sqrt(static_cast<T>(hd));

  AttentionGrads<T> g;
  const Tensor<T> up2 = upstream_grad.reshaped(Shape{pixels, c_});
  const Tensor<T> z2 = s.z.reshaped(Shape{pixels, c_});
  MatmulGrads<T> out_grads = matmul_backward(z2, p.w_o, up2);
  g.w_o = std::move(out_grads.b);
  const Tensor<T>& dz = out_grads.a;

  Tensor<T> dq(Shape{pixels, c_});
  Tensor<T> dkeys(s.keys.shape());
  Tensor<T> dvalues(s.values.shape());
  std::vector<T> da(taps);
  const T* qd = s.qkv.q.data().data();
  const T* kd = s.keys.data().data();
  const T* vd = s.values.data().data();
  for (std::size_t px = 0; px < pixels; ++px) {
    for (std::size_t m = 0; m < heads; ++m) {
      const T* a = s.probs.data().data() + (px * heads + m) * taps;
      const std::size_t c0 = m * hd;
      for (std::size_t t = 0; t < taps; ++t) {
        const std::size_t base = px * block + t * c_;
        T acc{0};
        for (std::size_t c = c0; c < c0 + hd; ++c) {
          const T dzc = dz[px * c_ + c];
          acc += dzc * vd[base + c];
          dvalues[base + c] = a[t] * dzc;
        }
        da[t] = acc;
      }
      T dot{0};
      for (std::size_t t = 0; t < taps; ++t) dot += a[t] * da[t];
      // Masked entries have a == 0 and therefore a zero logit gradient.
      for (std::size_t t = 0; t < taps; ++t) da[t] = a[t] * (da[t] - dot) * scale;
      for (std::size_t t = 0; t < taps; ++t) {
        const std::size_t base = px * block + t * c_;
        for (std::size_t c = c0; c < c0 + hd; ++c) {
          dq[px * c_ + c] += da[t] * kd[base + c];
          dkeys[base + c] = da[t] * qd[px * c_ + c];
        }
      }
    }
  }

  Tensor<T> dk;
  Tensor<T> dv;
  if (cfg.use_deformed) {
    DeformedGrads<T> gk = forward_two_path_backward(s.qkv.k, p.deformed_k, dkeys);
    DeformedGrads<T> gv = forward_two_path_backward(s.qkv.v, p.deformed_v, dvalues);
    dk = std::move(gk.input);
    dv = std::move(gv.input);
    g.deformed_k = std::move(gk.learnable);
    g.deformed_v = std::move(gv.learnable);
  } else {
    const auto bank = build_shift_kernel_bank<T>(k, c_);
    dk = grouped_conv2d_backward(s.qkv.k, bank.kernels, dkeys, k / 2).input;
    dv = grouped_conv2d_backward(s.qkv.v, bank.kernels, dvalues, k / 2).input;
  }

  const Tensor<T> x2 = x.reshaped(Shape{pixels, c_});
  MatmulGrads<T> gq = matmul_backward(x2, p.w_q, dq);
  MatmulGrads<T> gk = matmul_backward(x2, p.w_k, std::move(dk).reshaped(Shape{pixels, c_}));
  MatmulGrads<T> gv = matmul_backward(x2, p.w_v, std::move(dv).reshaped(Shape{pixels, c_}));
  g.w_q = std::move(gq.b);
  g.w_k = std::move(gk.b);
  g.w_v = std::move(gv.b);
  g.x = add(add(gq.a, gk.a), gv.a).reshaped(x.shape());
  return g;
}

template <typename T>
Tensor<T> local_attention(Implementation impl, const Qkv<T>& qkv, const AttentionConfig& cfg,
                          const AttentionParams<T>& p) {
  cfg.validate();
  const std::size_t k = cfg.window_size;
  if (impl == Implementation::dwconv_fused) return tiled_local_attention(qkv, cfg, p);
  if (cfg.use_deformed) {
    throw ConfigError(std::string(to_string(impl)) + " has no deformed variant; use dwconv_fused");
  }
  check_qkv(qkv, k, cfg.head_dim);
  const bool columns = impl == Implementation::im2col;
  const Im2ColMatrix<T> kmat = columns ? im2col(qkv.k, k) : im2col_via_shifts(qkv.k, k);
  const Im2ColMatrix<T> vmat = columns ? im2col(qkv.v, k) : im2col_via_shifts(qkv.v, k);
  // Same attention kernel as dwconv_fused, reading the dense matrices in
  // place; only how the windows are produced and stored differs.
  const Nhwc d = qkv.q.dims4();
  const std::size_t tap_stride = d.h * d.w * d.c;
  Tensor<T> z(qkv.q.shape());
  attend_rows<T>(qkv.q, {kmat.data.data().data(), d.c, tap_stride}, {vmat.data.data().data(), d.c, tap_stride}, 0,
                 d.h, k, cfg.head_dim, cfg.mask_padding, z, nullptr);
  return z;
}

template <typename T>
Tensor<T> attention_forward(Implementation impl, const Tensor<T>& x, const AttentionConfig& cfg,
                            const AttentionParams<T>& p) {
  if (impl == Implementation::dwconv_fused) return slide_attention_forward(x, cfg, p);
  check_input(x, cfg, p);
  return project_pixels(local_attention(impl, project_qkv(x, p), cfg, p), p.w_o);
}

#define SLIDE_INSTANTIATE_ATTENTION(T)                                                                        \
  template AttentionParams<T> init_attention_params(const AttentionConfig&, std::uint64_t);                   \
  template AttentionParams<T> identity_attention_params(const AttentionConfig&);                              \
  template Tensor<T> project_pixels(const Tensor<T>&, const Tensor<T>&);                                      \
  template Qkv<T> project_qkv(const Tensor<T>&, const AttentionParams<T>&);                                   \
  template Tensor<T> grouped_window_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                              std::size_t, std::size_t, bool);                                \
  template Tensor<T> slide_attention_forward(const Tensor<T>&, const AttentionConfig&,                        \
                                             const AttentionParams<T>&);                                      \
  template AttentionGrads<T> slide_attention_backward(const Tensor<T>&, const AttentionConfig&,               \
                                                      const AttentionParams<T>&, const Tensor<T>&);           \
  template Tensor<T> local_attention(Implementation, const Qkv<T>&, const AttentionConfig&,                   \
                                     const AttentionParams<T>&);                                              \
  template Tensor<T> attention_forward(Implementation, const Tensor<T>&, const AttentionConfig&,              \
                                       const AttentionParams<T>&);

SLIDE_INSTANTIATE_ATTENTION(float)
SLIDE_INSTANTIATE_ATTENTION(double)

}  // namespace slide
