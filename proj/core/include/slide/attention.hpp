#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "slide/deformed.hpp"
#include "slide/tensor.hpp"

namespace slide {

struct AttentionConfig {
  std::size_t embed_dim = 0;
  std::size_t num_heads = 1;
  std::size_t head_dim = 0;
  std::size_t window_size = 3;
  bool mask_padding = false;
  bool use_deformed = false;

  /// Config with head_dim = embed_dim / num_heads.
  static AttentionConfig make(std::size_t embed_dim, std::size_t num_heads, std::size_t window_size,
                              bool mask_padding = false, bool use_deformed = false);

  /// Throws ConfigError when embed_dim != num_heads * head_dim or the window is even.
  void validate() const;
};

template <typename T>
struct AttentionParams {
  Tensor<T> w_q;
  Tensor<T> w_k;
  Tensor<T> w_v;
  Tensor<T> w_o;
  DeformedShiftParams<T> deformed_k;
  DeformedShiftParams<T> deformed_v;
};

/// Projections ~ uniform(-1/sqrt(C), 1/sqrt(C)); independent deformed
/// parameters for keys and values.
template <typename T>
AttentionParams<T> init_attention_params(const AttentionConfig& cfg, std::uint64_t seed);

/// Identity projections and zero learnable kernels.
template <typename T>
AttentionParams<T> identity_attention_params(const AttentionConfig& cfg);

template <typename T>
struct Qkv {
  Tensor<T> q;
  Tensor<T> k;
  Tensor<T> v;
};

/// Per-pixel q = x W_q, k = x W_k, v = x W_v (no bias). x is [1,H,W,C].
template <typename T>
Qkv<T> project_qkv(const Tensor<T>& x, const AttentionParams<T>& p);

/// Per-pixel x W for x [1,H,W,C] and W [C,C'].
template <typename T>
Tensor<T> project_pixels(const Tensor<T>& x, const Tensor<T>& w);

/// Multi-head local attention over grouped-convolution keys and values.
///
/// keys and values are [1,H,W,C*k*k] in grouped_channel() layout, so each
/// pixel's window sits in one contiguous block. Direction g of query (i, j)
/// is masked when mask_padding is set and (i+u, j+v) falls outside the map.
template <typename T>
Tensor<T> grouped_window_attention(const Tensor<T>& q, const Tensor<T>& keys, const Tensor<T>& values,
                                   std::size_t k, std::size_t head_dim, bool mask_padding);

/// Full block: projections, key/value generation through depthwise
/// convolution (fixed shift bank, or the deformed module when use_deformed),
/// local attention, head concat and output projection.
template <typename T>
Tensor<T> slide_attention_forward(const Tensor<T>& x, const AttentionConfig& cfg, const AttentionParams<T>& p);

template <typename T>
struct AttentionGrads {
  Tensor<T> x;
  Tensor<T> w_q;
  Tensor<T> w_k;
  Tensor<T> w_v;
  Tensor<T> w_o;
  std::optional<Tensor<T>> deformed_k;  // learnable kernels, only when use_deformed
  std::optional<Tensor<T>> deformed_v;
};

template <typename T>
AttentionGrads<T> slide_attention_backward(const Tensor<T>& x, const AttentionConfig& cfg,
                                           const AttentionParams<T>& p, const Tensor<T>& upstream_grad);

/// The three interchangeable ways of computing fixed-window local attention.
enum class Implementation { im2col, shift, dwconv_fused };

std::string_view to_string(Implementation impl);
std::optional<Implementation> parse_implementation(std::string_view name);

/// Local-attention stage only: keys/values from the projected q, k, v,
/// softmax over each window and the weighted value sum, before W_o.
/// im2col and shift go through an Im2Col matrix and local_attention_reference;
/// dwconv_fused uses grouped convolution and grouped_window_attention.
template <typename T>
Tensor<T> local_attention(Implementation impl, const Qkv<T>& qkv, const AttentionConfig& cfg,
                          const AttentionParams<T>& p);

/// Runs the full block through the chosen key/value path. im2col and shift
/// build an Im2Col matrix and use local_attention_reference; they have no
/// deformed variant and reject cfg.use_deformed.
template <typename T>
Tensor<T> attention_forward(Implementation impl, const Tensor<T>& x, const AttentionConfig& cfg,
                            const AttentionParams<T>& p);

}  // namespace slide
