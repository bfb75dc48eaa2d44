#include <benchmark/benchmark.h>

#include "roomsonde/mfcc.hpp"
#include "roomsonde/nn/network.hpp"
#include "roomsonde/rir_analysis.hpp"
#include "roomsonde/rng.hpp"
#include "roomsonde/signal.hpp"
#include "roomsonde/synth.hpp"

using namespace roomsonde;

namespace {

void BM_ConvolveFft(benchmark::State& state) {
  const Signal speech = make_speechlike(16000, double(state.range(0)), 1);
  const Signal rir = make_noisy_exp_rir(16000, 0.6, 1.0, 2, 3.0);
  for (auto _ : state) benchmark::DoNotOptimize(convolve(speech, rir));
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(speech.samples.size()));
}
BENCHMARK(BM_ConvolveFft)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Mfcc(benchmark::State& state) {
  const Signal speech = make_speechlike(16000, double(state.range(0)), 3);
  const MfccConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(compute_mfcc(speech, cfg));
  state.SetItemsProcessed(int64_t(state.iterations()) * int64_t(speech.samples.size()));
}
BENCHMARK(BM_Mfcc)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SchroederRt60(benchmark::State& state) {
  const Signal h = make_noisy_exp_rir(16000, 0.5, 1.2, 4, 6.0);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_rt60(schroeder_decay(h)));
}
BENCHMARK(BM_SchroederRt60)->Unit(benchmark::kMillisecond);

void BM_Sti(benchmark::State& state) {
  const Signal h = make_noisy_exp_rir(16000, 0.5, 1.2, 5, 6.0);
  for (auto _ : state) benchmark::DoNotOptimize(compute_sti(h).sti);
}
BENCHMARK(BM_Sti)->Unit(benchmark::kMillisecond);

void BM_ModelForward(benchmark::State& state) {
  const char* name = state.range(0) == 0 ? "baseline_cnn" : "crnn";
  const int64_t frames = 198, coeffs = 32, batch = 8;
  nn::Network<float> net(nn::build_model(name), frames, coeffs);
  net.init_params(7);
  auto x = nn::make_tensor<float>({batch, frames, coeffs});
  Rng rng(8);
  for (auto& v : x->data) v = float(rng.gaussian());
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, false, 9));
  state.SetItemsProcessed(int64_t(state.iterations()) * batch);
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
