#include <benchmark/benchmark.h>

#include <vector>

#include "splice/numcore/kernels.hpp"
#include "splice/numcore/rng.hpp"

namespace k = splice::nc::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  splice::nc::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <auto Gemm>
void bm_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, b, c, n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

template <auto Fwd>
void bm_attention_forward(benchmark::State& state) {
  const k::AttentionShape s{4, static_cast<std::size_t>(state.range(0)), 2, 16};
  const std::size_t rows = s.batch * s.seq;
  const auto q = random_vec(rows * s.width(), 3), kk = random_vec(rows * s.width(), 4),
             v = random_vec(rows * s.width(), 5);
  std::vector<double> probs(s.batch * s.heads * s.seq * s.seq), out(rows * s.width());
  for (auto _ : state) {
    Fwd(s, q, kk, v, {}, probs, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fwd, auto Bwd>
void bm_attention_backward(benchmark::State& state) {
  const k::AttentionShape s{4, static_cast<std::size_t>(state.range(0)), 2, 16};
  const std::size_t rows = s.batch * s.seq;
  const auto q = random_vec(rows * s.width(), 3), kk = random_vec(rows * s.width(), 4),
             v = random_vec(rows * s.width(), 5), dout = random_vec(rows * s.width(), 6);
  std::vector<double> probs(s.batch * s.heads * s.seq * s.seq), out(rows * s.width());
  Fwd(s, q, kk, v, {}, probs, out);
  std::vector<double> dq(q.size()), dk(q.size()), dv(q.size());
  for (auto _ : state) {
    Bwd(s, q, kk, v, probs, dout, dq, dk, dv);
    benchmark::DoNotOptimize(dq.data());
  }
}

}  // namespace

BENCHMARK(bm_gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<k::parallel::gemm_nn>)->Name("gemm_nn/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<k::parallel::gemm_nt>)->Name("gemm_nt/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_gemm<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Arg(64)->Arg(256);
BENCHMARK(bm_attention_forward<k::serial::attention_forward>)->Name("attention_fwd/serial")->Arg(28)->Arg(456);
BENCHMARK(bm_attention_forward<k::parallel::attention_forward>)->Name("attention_fwd/parallel")->Arg(28)->Arg(456);
BENCHMARK(bm_attention_backward<k::serial::attention_forward, k::serial::attention_backward>)
    ->Name("attention_bwd/serial")
    ->Arg(28)
    ->Arg(456);
BENCHMARK(bm_attention_backward<k::parallel::attention_forward, k::parallel::attention_backward>)
    ->Name("attention_bwd/parallel")
    ->Arg(28)
    ->Arg(456);

BENCHMARK_MAIN();
