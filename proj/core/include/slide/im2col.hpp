#pragma once

#include <cstddef>

#include "slide/tensor.hpp"
#include "slide/window.hpp"

namespace slide {

/// Dense Im2Col key/value matrix, stored as [k*k, H*W, C].
///
/// Row r = direction_index(u, v, k) is one shift offset; column
/// q = query_index(i, j, W) is one query position. Entry (r, q, :) holds the
/// feature at (i + u, j + v), or zeros when that position is outside the map.
template <typename T>
struct Im2ColMatrix {
  Tensor<T> data;
  std::size_t k = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;

  std::size_t rows() const { return k * k; }
  std::size_t cols() const { return height * width; }

  const T* entry(std::size_t row, std::size_t col) const {
    return data.data().data() + (row * cols() + col) * channels;
  }
  T* entry(std::size_t row, std::size_t col) { return data.data().data() + (row * cols() + col) * channels; }

  friend bool operator==(const Im2ColMatrix& a, const Im2ColMatrix& b) {
    return a.k == b.k && a.height == b.height && a.width == b.width && a.channels == b.channels &&
           a.data == b.data;
  }
};

/// Column-based Im2Col: visits each query and copies its k x k window.
/// feature must be [1,H,W,C]; k must be odd.
template <typename T>
Im2ColMatrix<T> im2col(const Tensor<T>& feature, std::size_t k);

/// Window of query (i, j) read back from its column, as [k,k,C].
template <typename T>
Tensor<T> column_window(const Im2ColMatrix<T>& m, std::size_t i, std::size_t j);

/// Row r of the matrix as a [1,H,W,C] feature map.
template <typename T>
Tensor<T> row_as_feature(const Im2ColMatrix<T>& m, std::size_t row);

/// Naive multi-head local attention over Im2Col keys and values.
///
/// q is [1,H,W,C]; heads are contiguous channel slices of width head_dim.
/// Each query attends over the k*k entries of its column with logits
/// dot(q, key) / sqrt(head_dim). With mask_padding, entries whose source
/// position lies outside the map are excluded from the softmax; otherwise
/// they take part as zero keys and zero values.
template <typename T>
Tensor<T> local_attention_reference(const Tensor<T>& q, const Im2ColMatrix<T>& kmat,
                                    const Im2ColMatrix<T>& vmat, std::size_t head_dim, bool mask_padding);

}  // namespace slide
