#include <algorithm>
#include <cmath>
#include <numbers>

#include "ustar/kernels.hpp"

namespace ustar::kernels {

std::vector<std::size_t> AttentionLayout::prob_offsets() const {
  std::vector<std::size_t> off(segments() + 1, 0);
  for (std::size_t s = 0; s < segments(); ++s) {
    const std::size_t nq = q_offsets[s + 1] - q_offsets[s];
    const std::size_t nk = k_offsets[s + 1] - k_offsets[s];
    off[s + 1] = off[s] + heads * nq * nk;
  }
  return off;
}

namespace reference {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = 0;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        sum += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

template <typename T>
void gelu_forward(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
  }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
  const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * cols;
    T* out = y.data() + r * cols;
    T mx = in[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (std::size_t c = 0; c < cols; ++c) out[c] /= sum;
  }
}

template <typename T>
void attention_forward(const AttentionLayout& layout, std::span<const T> q, std::span<const T> k,
                       std::span<const T> v, std::span<T> out, std::span<T> probs) {
  const std::size_t w = layout.width;
  const std::size_t dh = w / layout.heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto poff = layout.prob_offsets();
  for (std::size_t s = 0; s < layout.segments(); ++s) {
    const std::size_t q0 = layout.q_offsets[s], nq = layout.q_offsets[s + 1] - q0;
    const std::size_t k0 = layout.k_offsets[s], nk = layout.k_offsets[s + 1] - k0;
    for (std::size_t h = 0; h < layout.heads; ++h) {
      for (std::size_t i = 0; i < nq; ++i) {
        T* p = probs.data() + poff[s] + (h * nq + i) * nk;
        for (std::size_t j = 0; j < nk; ++j) {
          T dot = 0;
          for (std::size_t d = 0; d < dh; ++d) dot += q[(q0 + i) * w + h * dh + d] * k[(k0 + j) * w + h * dh + d];
          p[j] = dot * scale;
        }
        if (nk > 0) softmax_rows<T>(1, nk, std::span<const T>(p, nk), std::span<T>(p, nk));
        for (std::size_t d = 0; d < dh; ++d) {
          T acc = 0;
          for (std::size_t j = 0; j < nk; ++j) acc += p[j] * v[(k0 + j) * w + h * dh + d];
          out[(q0 + i) * w + h * dh + d] = acc;
        }
      }
    }
  }
}

template <typename T>
void attention_backward(const AttentionLayout& layout, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> probs, std::span<const T> dout,
                        std::span<T> dq, std::span<T> dk, std::span<T> dv) {
  const std::size_t w = layout.width;
  const std::size_t dh = w / layout.heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto poff = layout.prob_offsets();
  std::vector<T> ds;
  for (std::size_t s = 0; s < layout.segments(); ++s) {
    const std::size_t q0 = layout.q_offsets[s], nq = layout.q_offsets[s + 1] - q0;
    const std::size_t k0 = layout.k_offsets[s], nk = layout.k_offsets[s + 1] - k0;
    ds.assign(nk, T(0));
    for (std::size_t h = 0; h < layout.heads; ++h) {
      for (std::size_t i = 0; i < nq; ++i) {
        const T* p = probs.data() + poff[s] + (h * nq + i) * nk;
        const T* go = dout.data() + (q0 + i) * w + h * dh;
        T weighted = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          T dp = 0;
          for (std::size_t d = 0; d < dh; ++d) dp += go[d] * v[(k0 + j) * w + h * dh + d];
          ds[j] = dp;
          weighted += p[j] * dp;
        }
        for (std::size_t j = 0; j < nk; ++j) {
          const T g = p[j] * (ds[j] - weighted) * scale;
          for (std::size_t d = 0; d < dh; ++d) {
            dq[(q0 + i) * w + h * dh + d] += g * k[(k0 + j) * w + h * dh + d];
            dk[(k0 + j) * w + h * dh + d] += g * q[(q0 + i) * w + h * dh + d];
            dv[(k0 + j) * w + h * dh + d] += p[j] * go[d];
          }
        }
      }
    }
  }
}

#define USTAR_INSTANTIATE(T)                                                                   \
  template void gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, std::span<const T>, \
                        std::span<const T>, std::span<T>, bool);                               \
  template void gelu_forward<T>(std::span<const T>, std::span<T>);                             \
  template void gelu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);        \
  template void softmax_rows<T>(std::size_t, std::size_t, std::span<const T>, std::span<T>);   \
  template void attention_forward<T>(const AttentionLayout&, std::span<const T>,               \
                                     std::span<const T>, std::span<const T>, std::span<T>,     \
                                     std::span<T>);                                            \
  template void attention_backward<T>(const AttentionLayout&, std::span<const T>,              \
                                      std::span<const T>, std::span<const T>,                  \
                                      std::span<const T>, std::span<const T>, std::span<T>,    \
                                      std::span<T>, std::span<T>);

USTAR_INSTANTIATE(float)
USTAR_INSTANTIATE(double)

#undef USTAR_INSTANTIATE

}  // namespace reference
}  // namespace ustar::kernels
