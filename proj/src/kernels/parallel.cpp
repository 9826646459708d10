#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <vector>

#include "ustar/kernels.hpp"

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

namespace ustar::kernels {

#if defined(__SSE__)
FlushDenormals::FlushDenormals() : saved_(_mm_getcsr()) {
  const unsigned mode = saved_ | 0x8040u;  // FTZ | DAZ
#pragma omp parallel
  _mm_setcsr(mode);
  _mm_setcsr(mode);
}

FlushDenormals::~FlushDenormals() {
  const unsigned mode = saved_;
#pragma omp parallel
  _mm_setcsr(mode);
  _mm_setcsr(mode);
}
#else
FlushDenormals::FlushDenormals() = default;
FlushDenormals::~FlushDenormals() = default;
#endif

}  // namespace ustar::kernels

namespace ustar::kernels::parallel {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;
// Register tile of the gemm micro-kernel: kMr rows by two 512-bit vectors.
constexpr std::size_t kMr = 6;
template <typename T>
constexpr std::size_t kNr = 128 / sizeof(T);

// Copies op(b) into column panels of width kNr, zero-padded, so the
// micro-kernel streams one contiguous panel per output tile.
template <typename T>
void pack_b(bool trans_b, std::size_t n, std::size_t k, const T* b, T* out) {
  constexpr std::size_t nr = kNr<T>;
  for (std::size_t j0 = 0; j0 < n; j0 += nr) {
    const std::size_t w = std::min(nr, n - j0);
    T* panel = out + j0 * k;
    for (std::size_t p = 0; p < k; ++p) {
      T* row = panel + p * nr;
      for (std::size_t jj = 0; jj < w; ++jj) row[jj] = trans_b ? b[(j0 + jj) * k + p] : b[p * n + j0 + jj];
      std::fill(row + w, row + nr, T(0));
    }
  }
}

// One kMr-row strip of op(a) as [k, kMr], zero-padded.
template <typename T>
void pack_a(bool trans_a, std::size_t m, std::size_t k, std::size_t i0, const T* a, T* out) {
  const std::size_t h = std::min(kMr, m - i0);
  for (std::size_t p = 0; p < k; ++p) {
    T* col = out + p * kMr;
    for (std::size_t r = 0; r < h; ++r) col[r] = trans_a ? a[p * m + i0 + r] : a[(i0 + r) * k + p];
    std::fill(col + h, col + kMr, T(0));
  }
}

template <typename T>
void micro_kernel(std::size_t k, const T* __restrict ap, const T* __restrict bp, T* c, std::size_t ldc,
                  std::size_t rows, std::size_t cols, bool accumulate) {
  typedef T Vec __attribute__((vector_size(64)));
  constexpr std::size_t lanes = 64 / sizeof(T);
  Vec acc[kMr][2] = {};
  for (std::size_t p = 0; p < k; ++p) {
    Vec b0, b1;
    std::memcpy(&b0, bp + p * 2 * lanes, sizeof(Vec));
    std::memcpy(&b1, bp + p * 2 * lanes + lanes, sizeof(Vec));
    for (std::size_t r = 0; r < kMr; ++r) {
      const T av = ap[p * kMr + r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < rows; ++r) {
    T* cr = c + r * ldc;
    for (std::size_t j = 0; j < cols; ++j) {
      const T v = acc[r][j / lanes][j % lanes];
      cr[j] = accumulate ? cr[j] + v : v;
    }
  }
}

}  // namespace

// Each c[i,j] sums a[i,p] * b[p,j] in ascending p inside one tile before it
// touches c, so the result does not depend on how tiles are spread over threads.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), T(0));
    return;
  }
  constexpr std::size_t nr = kNr<T>;
  const std::size_t panels = (n + nr - 1) / nr;
  const std::size_t strips = (m + kMr - 1) / kMr;
  std::vector<T> bp(panels * nr * k);
  pack_b(trans_b, n, k, b.data(), bp.data());
#pragma omp parallel if (m * n * k > kParallelWork)
  {
    std::vector<T> ap(kMr * k);
#pragma omp for schedule(static)
    for (std::size_t s = 0; s < strips; ++s) {
      const std::size_t i0 = s * kMr;
      pack_a(trans_a, m, k, i0, a.data(), ap.data());
      for (std::size_t q = 0; q < panels; ++q) {
        const std::size_t j0 = q * nr;
        micro_kernel(k, ap.data(), bp.data() + j0 * k, c.data() + i0 * n + j0, n,
                     std::min(kMr, m - i0), std::min(nr, n - j0), accumulate);
      }
    }
  }
}

template <typename T>
void gelu_forward(std::span<const T> x, std::span<T> y) {
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelWork / 8)
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
  }
}

template <typename T>
void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
  const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>;
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelWork / 8)
  for (std::size_t i = 0; i < n; ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] / std::numbers::sqrt2_v<T>));
    const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

template <typename T>
void softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> y) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * cols;
    T* out = y.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    const T inv = T(1) / sum;
    for (std::size_t c = 0; c < cols; ++c) out[c] *= inv;
  }
}

template <typename T>
void attention_forward(const AttentionLayout& layout, std::span<const T> q, std::span<const T> k,
                       std::span<const T> v, std::span<T> out, std::span<T> probs) {
  const std::size_t w = layout.width;
  const std::size_t dh = w / layout.heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto poff = layout.prob_offsets();
  const std::size_t segs = layout.segments();
#pragma omp parallel for schedule(static) if (segs > 16)
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t q0 = layout.q_offsets[s], nq = layout.q_offsets[s + 1] - q0;
    const std::size_t k0 = layout.k_offsets[s], nk = layout.k_offsets[s + 1] - k0;
    for (std::size_t i = 0; i < nq; ++i) {
      T* __restrict orow = out.data() + (q0 + i) * w;
      std::fill(orow, orow + w, T(0));
      if (nk == 0) continue;
      for (std::size_t h = 0; h < layout.heads; ++h) {
        const T* qr = q.data() + (q0 + i) * w + h * dh;
        T* p = probs.data() + poff[s] + (h * nq + i) * nk;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < nk; ++j) {
          const T* kr = k.data() + (k0 + j) * w + h * dh;
          T dot = 0;
          for (std::size_t d = 0; d < dh; ++d) dot += qr[d] * kr[d];
          p[j] = dot * scale;
          mx = std::max(mx, p[j]);
        }
        T sum = 0;
        for (std::size_t j = 0; j < nk; ++j) {
          p[j] = std::exp(p[j] - mx);
          sum += p[j];
        }
        const T inv = T(1) / sum;
        for (std::size_t j = 0; j < nk; ++j) p[j] *= inv;
        T* __restrict oh = orow + h * dh;
        for (std::size_t j = 0; j < nk; ++j) {
          const T* __restrict vr = v.data() + (k0 + j) * w + h * dh;
          for (std::size_t d = 0; d < dh; ++d) oh[d] += p[j] * vr[d];
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
  const std::size_t segs = layout.segments();
#pragma omp parallel if (segs > 16)
  {
    std::vector<T> ds;
#pragma omp for schedule(static)
    for (std::size_t s = 0; s < segs; ++s) {
      const std::size_t q0 = layout.q_offsets[s], nq = layout.q_offsets[s + 1] - q0;
      const std::size_t k0 = layout.k_offsets[s], nk = layout.k_offsets[s + 1] - k0;
      ds.resize(nk);
      for (std::size_t h = 0; h < layout.heads; ++h) {
        for (std::size_t i = 0; i < nq; ++i) {
          const T* p = probs.data() + poff[s] + (h * nq + i) * nk;
          const T* go = dout.data() + (q0 + i) * w + h * dh;
          const T* qr = q.data() + (q0 + i) * w + h * dh;
          T* __restrict dqr = dq.data() + (q0 + i) * w + h * dh;
          T weighted = 0;
          for (std::size_t j = 0; j < nk; ++j) {
            const T* vr = v.data() + (k0 + j) * w + h * dh;
            T dp = 0;
            for (std::size_t d = 0; d < dh; ++d) dp += go[d] * vr[d];
            ds[j] = dp;
            weighted += p[j] * dp;
          }
          for (std::size_t j = 0; j < nk; ++j) {
            const T g = p[j] * (ds[j] - weighted) * scale;
            const T* kr = k.data() + (k0 + j) * w + h * dh;
            T* __restrict dkr = dk.data() + (k0 + j) * w + h * dh;
            T* __restrict dvr = dv.data() + (k0 + j) * w + h * dh;
            for (std::size_t d = 0; d < dh; ++d) {
              dqr[d] += g * kr[d];
              dkr[d] += g * qr[d];
              dvr[d] += p[j] * go[d];
            }
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

}  // namespace ustar::kernels::parallel
