#include <benchmark/benchmark.h>

#include <sstream>
#include <vector>

#include "fl4s/detect.hpp"
#include "fl4s/embed/as2s.hpp"
#include "fl4s/embed/lstm.hpp"
#include "fl4s/features.hpp"
#include "fl4s/matrix.hpp"
#include "fl4s/rng.hpp"
#include "fl4s/synth.hpp"
#include "fl4s/tape.hpp"

using namespace fl4s;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Matrix a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_LstmStep(benchmark::State& state) {
  Rng rng(2);
  const auto params = lstm_init(64, 32, rng);
  const Matrix x = random_matrix(1, 64, rng);
  LstmState s{std::vector<double>(32, 0.0), std::vector<double>(32, 0.0)};
  for (auto _ : state) benchmark::DoNotOptimize(lstm_step(params, x.row(0), s));
}
BENCHMARK(BM_LstmStep);

// One training step's worth of work: forward, loss and backward on a batch.
void BM_As2sBatch(benchmark::State& state) {
  const auto batch_size = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  EmbedderConfig cfg;
  const auto model = as2s_init(64, 5, cfg);
  std::vector<Matrix> seqs;
  for (std::size_t i = 0; i < batch_size; ++i) seqs.push_back(random_matrix(5, 64, rng));
  std::vector<const Matrix*> batch;
  for (const auto& s : seqs) batch.push_back(&s);
  for (auto _ : state) {
    ad::Tape tape;
    const auto vars = as2s_record(tape, model, true);
    const auto trace = as2s_trace(tape, vars, batch, DecoderInput::teacher_forcing);
    benchmark::DoNotOptimize(tape.backward(trace.loss));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch_size));
}
BENCHMARK(BM_As2sBatch)->Arg(1)->Arg(16)->Arg(64);

void BM_KnnScore(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  const KnnScorer scorer(random_matrix(n, 32, rng), 5);
  const Matrix q = random_matrix(1, 32, rng);
  for (auto _ : state) benchmark::DoNotOptimize(scorer.score(q.row(0)));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_KnnScore)->Arg(200)->Arg(1000)->Arg(10000);

void BM_ExtractWindow(benchmark::State& state) {
  Rng rng(5);
  const auto spec = default_netflow_spec();
  std::vector<FlowRecord> recs(static_cast<std::size_t>(state.range(0)));
  for (auto& r : recs) {
    r.src_id = "u";
    r.dst_id = "h" + std::to_string(rng.below(20));
    r.dst_port = static_cast<std::uint16_t>(rng.below(2000));
    r.bytes = rng.below(100000);
    r.packets = 1 + rng.below(50);
    r.tcp_flags = static_cast<std::uint8_t>(rng.below(256));
  }
  for (auto _ : state) benchmark::DoNotOptimize(extract_window(recs, spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ExtractWindow)->Arg(50)->Arg(1000);

void BM_SynthSmall(benchmark::State& state) {
  SynthConfig cfg = default_synth_config();
  cfg.n_users = 20;
  cfg.n_weeks = 2;
  for (auto _ : state) {
    std::ostringstream flows, labels;
    benchmark::DoNotOptimize(generate(cfg, flows, labels));
  }
}
BENCHMARK(BM_SynthSmall)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
