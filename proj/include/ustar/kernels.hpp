#pragma once

// Dense compute kernels behind the autograd engine.
//
// Two implementations with identical signatures:
//   kernels::reference  straightforward serial loops, kept as the test oracle;
//   kernels::parallel   OpenMP loops over independent output rows/segments.
// The parallel versions never split a reduction across threads, so their
// results do not depend on the thread count.
//
// All matrices are dense row-major.

#include <cstddef>
#include <span>
#include <vector>

namespace ustar::kernels {

/// Segment layout for batched attention: segment s owns query rows
/// [q_offsets[s], q_offsets[s+1]) and key/value rows [k_offsets[s], k_offsets[s+1]).
/// Rows only attend within their own segment.
struct AttentionLayout {
  std::size_t heads = 1;
  std::size_t width = 0;  // model width; head width is width / heads
  std::span<const std::size_t> q_offsets;
  std::span<const std::size_t> k_offsets;

  std::size_t segments() const { return q_offsets.size() - 1; }
  /// Offsets of each segment's [heads, nq, nk] probability block.
  std::vector<std::size_t> prob_offsets() const;
};

#define USTAR_KERNEL_DECLS                                                                   \
  /* c[m,n] (+)= op(a) * op(b); a is [m,k] (or [k,m] when trans_a), b is [k,n] (or [n,k]). */ \
  template <typename T>                                                                      \
  void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,        \
            std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate);    \
                                                                                             \
  template <typename T>                                                                      \
  void gelu_forward(std::span<const T> x, std::span<T> y);                                   \
  /* dx += dy * gelu'(x) */                                                                  \
  template <typename T>                                                                      \
  void gelu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx);          \
                                                                                             \
  template <typename T>                                                                      \
  void softmax_rows(std::size_t rows, std::size_t cols, std::span<const T> x, std::span<T> y); \
                                                                                             \
  /* out = softmax(q k^T / sqrt(dh)) v per head and segment; probs saved for backward. */    \
  template <typename T>                                                                      \
  void attention_forward(const AttentionLayout& layout, std::span<const T> q,                \
                         std::span<const T> k, std::span<const T> v, std::span<T> out,       \
                         std::span<T> probs);                                                \
  /* Accumulates into dq, dk, dv. */                                                         \
  template <typename T>                                                                      \
  void attention_backward(const AttentionLayout& layout, std::span<const T> q,               \
                          std::span<const T> k, std::span<const T> v,                        \
                          std::span<const T> probs, std::span<const T> dout, std::span<T> dq, \
                          std::span<T> dk, std::span<T> dv);

namespace reference {
USTAR_KERNEL_DECLS
}  // namespace reference

namespace parallel {
USTAR_KERNEL_DECLS
}  // namespace parallel

#undef USTAR_KERNEL_DECLS

/// Sets flush-to-zero and denormals-are-zero on the calling thread and every
/// OpenMP worker for its lifetime. Attention probabilities underflow into the
/// subnormal range during training, and subnormal operands slow the gemm
/// inner loop several fold. No-op on targets without SSE control registers.
class FlushDenormals {
 public:
  FlushDenormals();
  ~FlushDenormals();
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

using parallel::attention_backward;
using parallel::attention_forward;
using parallel::gelu_backward;
using parallel::gelu_forward;
using parallel::gemm;
using parallel::softmax_rows;

}  // namespace ustar::kernels
