#include "slide/deformed.hpp"

#include <string>

#include "slide/random.hpp"

namespace slide {
namespace {

template <typename T>
void check_params(const Tensor<T>& f, const DeformedShiftParams<T>& p) {
  const Nhwc d = f.dims4();
  if (d.c != p.channels()) {
    throw ShapeError("deformed shift params have " + std::to_string(p.channels()) + " channels, input has " +
                     std::to_string(d.c));
  }
  if (p.learnable.shape() != p.fixed_bank.kernels.shape()) {
    throw ShapeError("learnable kernels " + shape_to_string(p.learnable.shape()) + " do not match fixed bank " +
                     shape_to_string(p.fixed_bank.kernels.shape()));
  }
}

}  // namespace

template <typename T>
DeformedShiftParams<T> init_deformed(std::size_t k, std::size_t channels, std::uint64_t seed,
                                     std::optional<double> init_scale) {
  require_odd_window(k);
  const double scale = init_scale.value_or(default_deformed_init_scale(k));
  if (!(scale >= 0.0)) throw ConfigError("deformed init scale must be non-negative");
  DeformedShiftParams<T> p;
  p.k = k;
  p.fixed_bank = build_shift_kernel_bank<T>(k, channels);
  Rng rng(seed);
  p.learnable = random_uniform<T>(p.fixed_bank.kernels.shape(), rng, -scale, scale);
  return p;
}

template <typename T>
DeformedShiftParams<T> deformed_from_parts(ShiftKernelBank<T> fixed, Tensor<T> learnable) {
  if (learnable.shape() != fixed.kernels.shape()) {
    throw ShapeError("learnable kernels " + shape_to_string(learnable.shape()) + " do not match fixed bank " +
                     shape_to_string(fixed.kernels.shape()));
  }
  DeformedShiftParams<T> p;
  p.k = fixed.k;
  p.fixed_bank = std::move(fixed);
  p.learnable = std::move(learnable);
  return p;
}

template <typename T>
Tensor<T> forward_two_path(const Tensor<T>& f, const DeformedShiftParams<T>& p) {
  check_params(f, p);
  const std::size_t pad = p.k / 2;
  return add(grouped_conv2d(f, p.fixed_bank.kernels, pad), grouped_conv2d(f, p.learnable, pad));
}

template <typename T>
DeformedShiftParams<T> reparameterize(const DeformedShiftParams<T>& p) {
  if (p.is_merged()) throw StateError("deformed shift params are already reparameterized");
  DeformedShiftParams<T> out = p;
  out.merged = add(p.fixed_bank.kernels, p.learnable);
  return out;
}

template <typename T>
Tensor<T> forward_merged(const Tensor<T>& f, const DeformedShiftParams<T>& p) {
  if (!p.is_merged()) throw StateError("forward_merged called before reparameterize");
  check_params(f, p);
  return grouped_conv2d(f, *p.merged, p.k / 2);
}

template <typename T>
DeformedGrads<T> forward_two_path_backward(const Tensor<T>& f, const DeformedShiftParams<T>& p,
                                           const Tensor<T>& grad_out) {
  check_params(f, p);
  const std::size_t pad = p.k / 2;
  // Both paths see the same input, so the input gradient is that of a single
  // convolution with the summed kernels.
  const Tensor<T> combined = add(p.fixed_bank.kernels, p.learnable);
  ConvGrads<T> g = grouped_conv2d_backward(f, combined, grad_out, pad);
  return {std::move(g.input), std::move(g.kernel)};
}

#define SLIDE_INSTANTIATE_DEFORMED(T)                                                                       \
  template DeformedShiftParams<T> init_deformed(std::size_t, std::size_t, std::uint64_t, std::optional<double>); \
  template DeformedShiftParams<T> deformed_from_parts(ShiftKernelBank<T>, Tensor<T>);                        \
  template Tensor<T> forward_two_path(const Tensor<T>&, const DeformedShiftParams<T>&);                      \
  template DeformedShiftParams<T> reparameterize(const DeformedShiftParams<T>&);                             \
  template Tensor<T> forward_merged(const Tensor<T>&, const DeformedShiftParams<T>&);                        \
  template DeformedGrads<T> forward_two_path_backward(const Tensor<T>&, const DeformedShiftParams<T>&,       \
                                                      const Tensor<T>&);

SLIDE_INSTANTIATE_DEFORMED(float)
SLIDE_INSTANTIATE_DEFORMED(double)

}  // namespace slide
