#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "slide/ops.hpp"
#include "slide/shift.hpp"
#include "slide/tensor.hpp"

namespace slide {

/// Fixed shift kernels plus a parallel learnable depthwise path.
///
/// During training both paths run and their outputs are summed. For
/// inference reparameterize() folds them into a single kernel tensor
/// (merged = fixed + learnable), which gives the same output with one
/// grouped convolution instead of two.
template <typename T>
struct DeformedShiftParams {
  std::size_t k = 0;
  ShiftKernelBank<T> fixed_bank;
  Tensor<T> learnable;  // [k,k,C,k*k], one kernel per direction and channel
  std::optional<Tensor<T>> merged;

  std::size_t channels() const { return fixed_bank.channels; }
  bool is_merged() const { return merged.has_value(); }
};

/// Default half-width of the uniform init range: 1 / k^2.
inline double default_deformed_init_scale(std::size_t k) { return 1.0 / static_cast<double>(k * k); }

/// Delta bank for k plus learnable kernels drawn from
/// uniform(-init_scale, init_scale) with a seeded generator.
template <typename T>
DeformedShiftParams<T> init_deformed(std::size_t k, std::size_t channels, std::uint64_t seed,
                                     std::optional<double> init_scale = std::nullopt);

/// Assembles params from explicit parts without checking that fixed is the
/// delta bank. Meant for tests that need to switch a path off.
template <typename T>
DeformedShiftParams<T> deformed_from_parts(ShiftKernelBank<T> fixed, Tensor<T> learnable);

/// grouped_conv2d(f, fixed) + grouped_conv2d(f, learnable).
template <typename T>
Tensor<T> forward_two_path(const Tensor<T>& f, const DeformedShiftParams<T>& p);

/// Returns a copy with merged = fixed + learnable. Throws StateError if p is
/// already merged.
template <typename T>
DeformedShiftParams<T> reparameterize(const DeformedShiftParams<T>& p);

/// One grouped convolution with the merged kernels. Throws StateError if p
/// has not been reparameterized.
template <typename T>
Tensor<T> forward_merged(const Tensor<T>& f, const DeformedShiftParams<T>& p);

/// Gradients of forward_two_path. Only the learnable path has a kernel
/// gradient; the fixed bank is constant.
template <typename T>
struct DeformedGrads {
  Tensor<T> input;
  Tensor<T> learnable;
};

template <typename T>
DeformedGrads<T> forward_two_path_backward(const Tensor<T>& f, const DeformedShiftParams<T>& p,
                                           const Tensor<T>& grad_out);

}  // namespace slide
