#include <benchmark/benchmark.h>

#include <cstddef>
#include <random>
#include <vector>

#include "cpga/adaptation.hpp"
#include "cpga/autograd.hpp"
#include "cpga/domains.hpp"
#include "cpga/functional.hpp"
#include "cpga/prototype_generation.hpp"
#include "cpga/source_model.hpp"

using namespace cpga;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist;
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = dist(gen);
  return t;
}

void BM_MatmulNtForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor(n, 64, 1);
  Tensor b = random_tensor(64, 64, 2);
  for (auto _ : state) {
    Tape tape;
    tape.backward(ag::sum(ag::matmul_nt(tape.param(a), tape.param(b))));
    benchmark::DoNotOptimize(a.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_MatmulNtForwardBackward)->Arg(64)->Arg(512)->Arg(2048);

void BM_PseudoLabels(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor q = random_tensor(n, 32, 3);
  const Tensor c = random_tensor(8, 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pseudo_labels(q, c, 0.07));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_PseudoLabels)->Arg(500)->Arg(2000);

void BM_NeighborhoodLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const FeatureBank bank(random_tensor(n, 32, 5));
  const Tensor batch = random_tensor(64, 32, 6);
  std::vector<std::size_t> idx(64);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(loss_nc(tape.constant(batch), bank, idx, 0.05).value().item());
  }
}
BENCHMARK(BM_NeighborhoodLoss)->Arg(500)->Arg(2000);

struct Fixture {
  DomainPair data;
  SourceModel source;
  PrototypeGenerator generator;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    DomainShiftSpec shift;
    shift.rotation_angle = 0.5;
    shift.translation_scale = 3.0;
    shift.mean_separation = 5.0;
    DomainPair data = generate_domain_pair(1, 8, 16, std::vector<std::size_t>(8, 250),
                                           std::vector<std::size_t>(8, 250), shift);
    SourceTrainConfig sc;
    sc.seed = 1;
    sc.epochs = 5;
    SourceModel source = train_source(data.source, sc);
    Stage1Config s1;
    s1.seed = 1;
    s1.epochs = 20;
    PrototypeGenerator g = make_generator(8, sc.feature_dim, s1);
    train_stage1(g, source.classifier, s1);
    return Fixture{std::move(data), std::move(source), std::move(g)};
  }();
  return f;
}

void BM_SourceTrainingEpoch(benchmark::State& state) {
  const Fixture& f = fixture();
  SourceTrainConfig sc;
  sc.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_source(f.data.source, sc));
}
BENCHMARK(BM_SourceTrainingEpoch)->Unit(benchmark::kMillisecond);

void BM_Stage1Epoch(benchmark::State& state) {
  const Fixture& f = fixture();
  Stage1Config s1;
  s1.epochs = 1;
  for (auto _ : state) {
    PrototypeGenerator g = make_generator(8, 32, s1);
    benchmark::DoNotOptimize(train_stage1(g, f.source.classifier, s1));
  }
}
BENCHMARK(BM_Stage1Epoch)->Unit(benchmark::kMillisecond);

void BM_CpgaEpoch(benchmark::State& state) {
  const Fixture& f = fixture();
  CpgaConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(adapt_cpga(f.source, f.generator, f.data.target.x, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(f.data.target.size()));
}
BENCHMARK(BM_CpgaEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
