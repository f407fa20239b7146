#pragma once

#include <cstddef>
#include <string>

#include "slide/error.hpp"

namespace slide {

/// Offset of a key/value relative to its query: row offset u, column offset v,
/// both in [-k/2, k/2].
struct Offset {
  int u = 0;
  int v = 0;
};

inline void require_odd_window(std::size_t k) {
  if (k == 0 || k % 2 == 0) {
    throw ConfigError("window size must be odd and >= 1, got " + std::to_string(k));
  }
}

constexpr int window_radius(std::size_t k) { return static_cast<int>(k / 2); }

/// Direction ordering shared by Im2Col rows, shift-kernel banks and
/// grouped-convolution groups: u-major, (u + r) * k + (v + r).
constexpr std::size_t direction_index(int u, int v, std::size_t k) {
  const int r = window_radius(k);
  return static_cast<std::size_t>((u + r) * static_cast<int>(k) + (v + r));
}

constexpr Offset direction_offset(std::size_t index, std::size_t k) {
  const int r = window_radius(k);
  return {static_cast<int>(index / k) - r, static_cast<int>(index % k) - r};
}

/// Column of query (i, j) in a flattened H x W map.
constexpr std::size_t query_index(std::size_t i, std::size_t j, std::size_t width) { return i * width + j; }

/// True when (i + u, j + v) lies inside an h x w map.
constexpr bool in_bounds(std::size_t i, std::size_t j, Offset o, std::size_t h, std::size_t w) {
  const long long y = static_cast<long long>(i) + o.u;
  const long long x = static_cast<long long>(j) + o.v;
  return y >= 0 && x >= 0 && y < static_cast<long long>(h) && x < static_cast<long long>(w);
}

}  // namespace slide
