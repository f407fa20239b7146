#include "slide/im2col.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace slide {
namespace {

template <typename T>
Nhwc single_image(const Tensor<T>& t, const char* what) {
  const Nhwc d = t.dims4();
  if (d.n != 1) {
    throw ShapeError(std::string(what) + " expects a single image [1,H,W,C], got " + shape_to_string(t.shape()));
  }
  return d;
}

}  // namespace

template <typename T>
Im2ColMatrix<T> im2col(const Tensor<T>& feature, std::size_t k) {
  require_odd_window(k);
  const Nhwc d = single_image(feature, "im2col");
  Im2ColMatrix<T> m{Tensor<T>(Shape{k * k, d.h * d.w, d.c}), k, d.h, d.w, d.c};
  for (std::size_t i = 0; i < d.h; ++i) {
    for (std::size_t j = 0; j < d.w; ++j) {
      const std::size_t col = query_index(i, j, d.w);
      for (std::size_t r = 0; r < k * k; ++r) {
        const Offset o = direction_offset(r, k);
        T* dst = m.entry(r, col);
        if (!in_bounds(i, j, o, d.h, d.w)) continue;
        const std::size_t y = static_cast<std::size_t>(static_cast<int>(i) + o.u);
        const std::size_t x = static_cast<std::size_t>(static_cast<int>(j) + o.v);
        for (std::size_t c = 0; c < d.c; ++c) dst[c] = feature.at(0, y, x, c);
      }
    }
  }
  return m;
}

template <typename T>
Tensor<T> column_window(const Im2ColMatrix<T>& m, std::size_t i, std::size_t j) {
  if (i >= m.height || j >= m.width) throw ShapeError("column_window query out of range");
  Tensor<T> win(Shape{m.k, m.k, m.channels});
  const std::size_t col = query_index(i, j, m.width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const T* src = m.entry(r, col);
    std::copy(src, src + m.channels, win.data().begin() + r * m.channels);
  }
  return win;
}

template <typename T>
Tensor<T> row_as_feature(const Im2ColMatrix<T>& m, std::size_t row) {
  if (row >= m.rows()) throw ShapeError("row_as_feature row out of range");
  const T* src = m.entry(row, 0);
  return Tensor<T>(Shape{1, m.height, m.width, m.channels},
                   std::vector<T>(src, src + m.cols() * m.channels));
}

template <typename T>
Tensor<T> local_attention_reference(const Tensor<T>& q, const Im2ColMatrix<T>& kmat,
                                    const Im2ColMatrix<T>& vmat, std::size_t head_dim, bool mask_padding) {
  const Nhwc d = single_image(q, "local_attention_reference");
  for (const auto* m : {&kmat, &vmat}) {
    if (m->height != d.h || m->width != d.w || m->channels != d.c || m->k != kmat.k) {
      throw ShapeError("local_attention_reference: key/value matrices do not match query " +
                       shape_to_string(q.shape()));
    }
  }
  if (head_dim == 0 || d.c % head_dim != 0) {
    throw ShapeError("head_dim " + std::to_string(head_dim) + " does not divide channels " + std::to_string(d.c));
  }
  const std::size_t k = kmat.k;
  const std::size_t taps = k * k;
  const std::size_t heads = d.c / head_dim;
  const T scale = T{1} / std::sqrt(static_cast<T>(head_dim));
  Tensor<T> out(q.shape());
  std::vector<T> logits(taps);
  std::vector<bool> valid(taps);

  for (std::size_t i = 0; i < d.h; ++i) {
    for (std::size_t j = 0; j < d.w; ++j) {
      const std::size_t col = query_index(i, j, d.w);
      for (std::size_t r = 0; r < taps; ++r) {
        valid[r] = !mask_padding || in_bounds(i, j, direction_offset(r, k), d.h, d.w);
      }
      const T* qp = &q.at(0, i, j, 0);
      T* zp = &out.at(0, i, j, 0);
      for (std::size_t m = 0; m < heads; ++m) {
        const std::size_t c0 = m * head_dim;
        T max_logit = -std::numeric_limits<T>::infinity();
        for (std::size_t r = 0; r < taps; ++r) {
          if (!valid[r]) continue;
          const T* key = kmat.entry(r, col);
          T dot{0};
          for (std::size_t c = c0; c < c0 + head_dim; ++c) dot += qp[c] * key[c];
          logits[r] = dot * scale;
          max_logit = std::max(max_logit, logits[r]);
        }
        assert(std::isfinite(max_logit) && "window has no unmasked entry");
        T total{0};
        for (std::size_t r = 0; r < taps; ++r) {
          logits[r] = valid[r] ? std::exp(logits[r] - max_logit) : T{0};
          total += logits[r];
        }
        for (std::size_t c = c0; c < c0 + head_dim; ++c) zp[c] = T{0};
        for (std::size_t r = 0; r < taps; ++r) {
          if (!valid[r]) continue;
          const T* value = vmat.entry(r, col);
          for (std::size_t c = c0; c < c0 + head_dim; ++c) zp[c] += logits[r] * value[c];
        }
        for (std::size_t c = c0; c < c0 + head_dim; ++c) zp[c] /= total;
      }
    }
  }
  return out;
}

#define SLIDE_INSTANTIATE_IM2COL(T)                                                                  \
  template struct Im2ColMatrix<T>;                                                                   \
  template Im2ColMatrix<T> im2col(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> column_window(const Im2ColMatrix<T>&, std::size_t, std::size_t);                \
  template Tensor<T> row_as_feature(const Im2ColMatrix<T>&, std::size_t);                            \
  template Tensor<T> local_attention_reference(const Tensor<T>&, const Im2ColMatrix<T>&,             \
                                               const Im2ColMatrix<T>&, std::size_t, bool);

SLIDE_INSTANTIATE_IM2COL(float)
SLIDE_INSTANTIATE_IM2COL(double)

}  // namespace slide
