#include <benchmark/benchmark.h>

#include <random>

#include "scqa/attention.hpp"
#include "scqa/corpus.hpp"
#include "scqa/distill.hpp"
#include "scqa/qa_model.hpp"

namespace {

using namespace scqa;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, bool grad = false) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(r * c);
  for (auto& x : v) x = g(rng);
  return Tensor::matrix(r, c, std::move(v), grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(8, 128)->Complexity(benchmark::oNCubed);

void BM_AttentionBlock(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto p = AttentionParams::init(32, 4, 64, rng);
  const Tensor x = random_matrix(n, 32, rng);
  NoGrad guard;
  for (auto _ : state) benchmark::DoNotOptimize(self_attention(x, p));
}
BENCHMARK(BM_AttentionBlock)->Arg(16)->Arg(48)->Arg(96);

struct ModelFixture {
  Corpus corpus;
  TrainedModel model;
  QAInput input;
  GoldSpan gold;

  explicit ModelFixture(FusionMechanism fusion) {
    SynthConfig sc;
    sc.conversations = 4;
    sc.doc_length = 20;
    NoiseConfig nc;
    nc.target_wer = 0.2;
    nc.confusion = synth_vocabulary(sc.vocab_size);
    corpus = filter(apply_asr_channel(synth(sc), nc)).corpus;
    TrainConfig tc;
    tc.model.fusion = fusion;
    tc.input.max_len = 48;
    tc.kd.steps = 1;
    model = train(corpus, View::asr, tc);
    input = build_input(corpus.conversations[0], 1, View::asr, model.vocab, model.speech, model.input);
    gold = gold_span(corpus.conversations[0], 1, View::asr);
  }
};

void BM_ForwardBackward(benchmark::State& state) {
  const auto fusion = static_cast<FusionMechanism>(state.range(0));
  ModelFixture f(fusion);
  for (auto _ : state) {
    const Tensor loss = span_loss(forward(f.model.model, f.input), f.gold);
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
  state.SetLabel(to_string(fusion));
}
BENCHMARK(BM_ForwardBackward)
    ->Arg(static_cast<int>(FusionMechanism::dual_attention))
    ->Arg(static_cast<int>(FusionMechanism::con_fusion))
    ->Arg(static_cast<int>(FusionMechanism::text_only))
    ->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  ModelFixture f(FusionMechanism::dual_attention);
  NoGrad guard;
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.model.model, f.input));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_Wer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SynthConfig sc;
  sc.conversations = 1;
  sc.doc_length = n;
  const auto ref = synth(sc).conversations[0].document_clean;
  NoiseConfig nc;
  nc.target_wer = 0.2;
  nc.confusion = synth_vocabulary(sc.vocab_size);
  const auto hyp = asr_channel(ref, nc);
  for (auto _ : state) benchmark::DoNotOptimize(wer(ref, hyp));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Wer)->RangeMultiplier(4)->Range(16, 1024)->Complexity(benchmark::oNSquared);

void BM_DecodeSpan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  std::normal_distribution<double> g;
  std::vector<double> s(n), e(n);
  for (auto& x : s) x = g(rng);
  for (auto& x : e) x = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(decode_span(s, e, 30));
}
BENCHMARK(BM_DecodeSpan)->Arg(24)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
