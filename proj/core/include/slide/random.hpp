#pragma once

#include <cstdint>
#include <random>

#include "slide/tensor.hpp"

namespace slide {

using Rng = std::mt19937_64;

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& x : t.data()) x = static_cast<T>(dist(rng));
}

template <typename T>
Tensor<T> random_uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  fill_uniform(t, rng, lo, hi);
  return t;
}

}  // namespace slide
