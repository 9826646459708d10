// Reference vs OpenMP kernels at the shapes a training step actually uses.
#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "ustar/kernels.hpp"
#include "ustar/rng.hpp"

namespace {

using namespace ustar;

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> out(n);
  for (auto& x : out) x = static_cast<float>(rng.normal());
  return out;
}

// args: m, n, k, trans_a, trans_b
template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const bool ta = state.range(3) != 0, tb = state.range(4) != 0;
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::gemm<float>(ta, tb, m, n, k, a, b, c, false);
    } else {
      kernels::reference::gemm<float>(ta, tb, m, n, k, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * m * n * k * state.iterations(),
                                                 benchmark::Counter::kIsRate, benchmark::Counter::kIs1000);
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  // 128 samples x 9 tokens at width 128: forward, weight gradient, input gradient.
  b->Args({1152, 128, 128, 0, 0})->Args({128, 128, 1152, 1, 0})->Args({1152, 128, 128, 0, 1});
  // Per-view decoders and the current-frame query path: 128 rows at width 64.
  b->Args({128, 64, 64, 0, 1})->Args({64, 64, 128, 1, 0})->Args({128, 6, 64, 0, 0});
}

BENCHMARK(BM_Gemm<false>)->Apply(gemm_shapes)->Name("gemm/reference");
BENCHMARK(BM_Gemm<true>)->Apply(gemm_shapes)->Name("gemm/parallel");

struct AttentionCase {
  std::vector<std::size_t> q_offsets, k_offsets;
  kernels::AttentionLayout layout;
  std::vector<float> q, k, v, out, probs, dout, dq, dk, dv;

  AttentionCase(std::size_t segments, std::size_t tokens, std::size_t width, std::size_t heads) {
    q_offsets.resize(segments + 1);
    for (std::size_t s = 0; s <= segments; ++s) q_offsets[s] = s * tokens;
    k_offsets = q_offsets;
    layout = {heads, width, q_offsets, k_offsets};
    const std::size_t rows = segments * tokens;
    q = random_values(rows * width, 3);
    k = random_values(rows * width, 4);
    v = random_values(rows * width, 5);
    dout = random_values(rows * width, 6);
    out.resize(rows * width);
    dq = dk = dv = out;
    probs.resize(segments * heads * tokens * tokens);
  }
};

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  AttentionCase c(static_cast<std::size_t>(state.range(0)), 9, 128, 4);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::attention_forward<float>(c.layout, c.q, c.k, c.v, c.out, c.probs);
      kernels::parallel::attention_backward<float>(c.layout, c.q, c.k, c.v, c.probs, c.dout, c.dq, c.dk, c.dv);
    } else {
      kernels::reference::attention_forward<float>(c.layout, c.q, c.k, c.v, c.out, c.probs);
      kernels::reference::attention_backward<float>(c.layout, c.q, c.k, c.v, c.probs, c.dout, c.dq, c.dk, c.dv);
    }
    benchmark::DoNotOptimize(c.dq.data());
  }
}

BENCHMARK(BM_Attention<false>)->Arg(128)->Name("attention/reference");
BENCHMARK(BM_Attention<true>)->Arg(128)->Name("attention/parallel");

}  // namespace

BENCHMARK_MAIN();
