#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cpga/domains.hpp"
#include "cpga/errors.hpp"
#include "cpga/functional.hpp"
#include "cpga/optim.hpp"
#include "cpga/serialization.hpp"
#include "cpga/tcpga.hpp"
#include "support/reference.hpp"

namespace cpga {
namespace {

using Labels = std::vector<std::size_t>;
using Probs = std::vector<double>;

TEST(Oracle, PerfectOracleIsOneHot) {
  const Labels y{2, 0, 1};
  const ZeroShotOracle o = ZeroShotOracle::simulated(y, 3, 1.0, 0.0, 5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(o.predict(i)[k], k == y[i] ? 1.0 : 0.0);
}

TEST(Oracle, SmoothedPrediction) {
  const ZeroShotOracle o = ZeroShotOracle::simulated(Labels{0}, 4, 1.0, 0.2, 1);
  EXPECT_NEAR(o.predict(0)[0], 0.85, 1e-15);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(o.predict(0)[k], 0.05, 1e-15);
}

TEST(Oracle, EmpiricalAccuracyNearTarget) {
  std::mt19937_64 gen(3);
  const Labels y = ref::random_labels(gen, 10000, 8);
  const ZeroShotOracle o = ZeroShotOracle::simulated(y, 8, 0.85, 0.2, 11);
  const auto pred = argmax_rows(o.probabilities());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i] ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(hit) / 10000.0, 0.85, 0.02);
}

TEST(Oracle, RepeatedQueriesAgree) {
  const ZeroShotOracle o = ZeroShotOracle::simulated(Labels{0, 1, 2, 3}, 4, 0.5, 0.1, 9);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto a = o.predict(i), b = o.predict(i);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  const ZeroShotOracle again = ZeroShotOracle::simulated(Labels{0, 1, 2, 3}, 4, 0.5, 0.1, 9);
  EXPECT_EQ(again.probabilities(), o.probabilities());
}

TEST(Oracle, Preconditions) {
  EXPECT_THROW(ZeroShotOracle::simulated(Labels{0}, 3, 0.0, 0.1, 1), InvalidArgument);
  EXPECT_THROW(ZeroShotOracle::simulated(Labels{0}, 3, 0.9, 1.0, 1), InvalidArgument);
  EXPECT_THROW(ZeroShotOracle::simulated(Labels{3}, 3, 0.9, 0.1, 1), InvalidArgument);
  EXPECT_THROW(ZeroShotOracle::from_probabilities(Tensor::from_rows({{0.5, 0.6}})), InvalidArgument);
  const ZeroShotOracle o = ZeroShotOracle::from_probabilities(Tensor::from_rows({{0.5, 0.5}}));
  EXPECT_THROW(o.require_size(2), InvalidArgument);
  EXPECT_NO_THROW(o.require_size(1));
}

TEST(Oracle, CsvRoundTrip) {
  const ZeroShotOracle o = ZeroShotOracle::simulated(Labels{0, 1, 2, 1}, 3, 0.7, 0.3, 4);
  std::stringstream ss;
  write_oracle_csv(o, ss);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "p0,p1,p2");
  const ZeroShotOracle back = read_oracle_csv(ss);
  EXPECT_EQ(back.probabilities(), o.probabilities());

  std::stringstream bad("p0,p1\n0.5,0.5\n0.2,abc\n");
  try {
    read_oracle_csv(bad);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Ensemble, Examples) {
  const EnsembleWeights eq = ensemble_weights(Probs{0.7, 0.3}, Probs{0.3, 0.7});
  EXPECT_EQ(eq.oracle, 0.5);
  EXPECT_EQ(eq.model, 0.5);

  const EnsembleWeights w = ensemble_weights(Probs{0.9, 0.1}, Probs{0.5, 0.5});
  EXPECT_NEAR(w.oracle, std::exp(0.8) / (std::exp(0.8) + 1.0), 1e-12);
  EXPECT_NEAR(w.oracle, 0.68997, 1e-5);
  EXPECT_NEAR(w.model, 0.31003, 1e-5);

  const Probs mix = ensemble_prediction(Probs{0.8, 0.2}, Probs{0.6, 0.4}, {0.5, 0.5});
  EXPECT_NEAR(mix[0], 0.7, 1e-15);
  EXPECT_NEAR(mix[1], 0.3, 1e-15);
  EXPECT_EQ(ensemble_prediction(Probs{0.8, 0.2}, Probs{0.6, 0.4}, {1.0, 0.0}), (Probs{0.8, 0.2}));
}

TEST(Ensemble, Preconditions) {
  EXPECT_THROW(ensemble_weights(Probs{1.0}, Probs{1.0}), InvalidArgument);
  EXPECT_THROW(ensemble_weights(Probs{0.5, 0.5}, Probs{0.2, 0.3, 0.5}), InvalidArgument);
}

TEST(Ensemble, MoreConfidentSourceGetsMoreWeight) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = unit(gen), b = unit(gen);
    const Probs sharp{0.5 + std::max(a, b) / 2, 0.5 - std::max(a, b) / 2};
    const Probs soft{0.5 + std::min(a, b) / 2, 0.5 - std::min(a, b) / 2};
    EXPECT_GE(ensemble_weights(sharp, soft).oracle, 0.5);
    EXPECT_LE(ensemble_weights(soft, sharp).oracle, 0.5);
  }
}

TEST(ConfidenceT, Examples) {
  EXPECT_EQ(confidence_t(Probs{0.2, 0.5, 0.3}), 0.5);
  EXPECT_EQ(confidence_t(Probs{0, 1, 0}), 1.0);
  EXPECT_NEAR(confidence_t(Probs(8, 0.125)), 0.125, 1e-15);
}

TEST(TargetCe, Examples) {
  Tape tape;
  const Tensor onehot = one_hot(Labels{1, 0}, 2);
  const Var sharp = tape.constant(Tensor::from_rows({{-800, 800}, {800, -800}}));
  EXPECT_NEAR(loss_target_ce(sharp, onehot).value().item(), 0.0, 1e-12);
  const Var flat = tape.constant(Tensor::zeros(3, 8));
  EXPECT_NEAR(loss_target_ce(flat, Tensor::full(3, 8, 0.125)).value().item(), std::log(8.0), 1e-12);
  EXPECT_NEAR(std::log(8.0), 2.0794, 1e-4);
}

TEST(TargetCe, GradientMatchesFiniteDifferences) {
  std::mt19937_64 gen(14);
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(trial);
    const TargetClassifier head(4, 3, rng);
    const Tensor targets = ref::random_simplex_rows(gen, 5, 3);
    const ScalarFunction f = [&](Tape& t, const Var& q) {
      return loss_target_ce(head.layer().forward_frozen(t, q), targets);
    };
    EXPECT_LT(grad_check(f, ref::random_tensor(gen, 5, 4)), 1e-6);
  }
}

// Weighted InfoNCE with w = max ỹ and labels argmax ỹ is the target-aware
// contrastive loss; the ensemble labels feed the same loss unchanged.
TEST(TargetCe, EnsembleLabelsFeedWeightedAlignment) {
  const Probs mix = ensemble_prediction(Probs{0.1, 0.9}, Probs{0.4, 0.6}, {0.6, 0.4});
  EXPECT_EQ(argmax(mix), 1u);
  EXPECT_NEAR(confidence_t(mix), 0.6 * 0.9 + 0.4 * 0.6, 1e-15);
}

TEST(TargetClassifier, SerializationRoundTrip) {
  Rng rng(3);
  const TargetClassifier head(5, 4, rng);
  std::stringstream ss;
  write_model(to_model_file(head), ss);
  const TargetClassifier back = target_classifier_from_model_file(read_model(ss));
  EXPECT_EQ(back.layer().weight, head.layer().weight);
  EXPECT_EQ(back.layer().bias, head.layer().bias);
}

TEST(PredictFinal, MeanOfBothHeads) {
  // Identity extractor, two-class heads with known outputs.
  Linear id;
  id.weight = Tensor::from_rows({{1, 0}, {0, 1}});
  id.bias = Tensor::zeros(1, 2);
  const FeatureExtractor extractor(std::vector<Linear>{id});
  const WeightNormClassifier gy(Tensor::from_rows({{1, 0}, {0, 1}}), Tensor::from_rows({{1, 1}}));
  Linear head;
  head.weight = Tensor::from_rows({{1, 0}, {0, 1}});
  head.bias = Tensor::zeros(1, 2);
  const TargetClassifier gt(head);
  const Tensor x = Tensor::from_rows({{std::log(4.0), 0}, {0.3, -1.2}});
  const Tensor out = predict_final(extractor, gy, gt, x);
  const Tensor py = classify(gy, x);
  const Tensor pt = gt.probabilities(x);
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], 0.5 * (py[i] + pt[i]), 1e-15);
  // First row: unit-norm directions give the same logits for both heads.
  EXPECT_NEAR(out(0, 0), 0.8, 1e-12);
  EXPECT_NEAR(out(0, 0), py(0, 0), 1e-12);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(out(i, 0) + out(i, 1), 1.0, 1e-12);
}

TEST(PredictFinal, AverageArgmaxOnlyMovesWhenHeadsDisagree) {
  std::mt19937_64 gen(31);
  std::size_t disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + gen() % 6;
    const Tensor pair = ref::random_simplex_rows(gen, 2, k);
    const std::size_t a = argmax(pair.row(0)), b = argmax(pair.row(1));
    Probs mean(k);
    for (std::size_t j = 0; j < k; ++j) mean[j] = 0.5 * (pair(0, j) + pair(1, j));
    const std::size_t m = argmax(mean);
    if (a == b) {
      EXPECT_EQ(m, a);
    } else {
      ++disagreements;
    }
  }
  EXPECT_GT(disagreements, 0u);
}

TEST(PredictFinal, IdenticalHeadsReturnEither) {
  Linear id;
  id.weight = Tensor::from_rows({{1, 0}, {0, 1}});
  id.bias = Tensor::zeros(1, 2);
  const FeatureExtractor extractor(std::vector<Linear>{id});
  const WeightNormClassifier gy(Tensor::from_rows({{1, 0}, {0, 1}}), Tensor::from_rows({{1, 1}}));
  const TargetClassifier gt(id);
  const Tensor x = Tensor::from_rows({{0.2, -0.7}, {1.5, 0.1}});
  const Tensor out = predict_final(extractor, gy, gt, x);
  const Tensor py = classify(gy, x);
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], py[i], 1e-15);
}

struct Pipeline {
  DomainPair data;
  SourceModel source;
  PrototypeGenerator generator;
};

Pipeline small_pipeline(std::uint64_t seed, const std::vector<std::size_t>& target_counts) {
  DomainShiftSpec shift;
  shift.rotation_angle = 0.3;
  shift.translation_scale = 1.0;
  shift.mean_separation = 5.0;
  DomainPair data = generate_domain_pair(seed, 4, 8, std::vector<std::size_t>(4, 60),
                                         target_counts, shift);
  SourceTrainConfig sc;
  sc.seed = seed;
  sc.epochs = 10;
  sc.feature_dim = 16;
  SourceModel source = train_source(data.source, sc);
  Stage1Config s1;
  s1.seed = seed;
  s1.epochs = 30;
  PrototypeGenerator g = make_generator(4, 16, s1);
  train_stage1(g, source.classifier, s1);
  return {std::move(data), std::move(source), std::move(g)};
}

TEST(AdaptTcpga, PerfectOracleGivesPerfectPseudoLabels) {
  const Pipeline p = small_pipeline(1, std::vector<std::size_t>(4, 40));
  const ZeroShotOracle oracle = ZeroShotOracle::simulated(p.data.target.y, 4, 1.0, 0.0, 1);
  TcpgaConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 1;
  const TcpgaResult r =
      adapt_tcpga(p.source, p.generator, p.data.target.x, oracle, cfg, p.data.target.y);
  ASSERT_EQ(r.report.epochs.size(), 6u);
  for (std::size_t e = 1; e < r.report.epochs.size(); ++e) {
    ASSERT_TRUE(r.report.epochs[e].pseudo_label_acc.has_value());
    EXPECT_EQ(*r.report.epochs[e].pseudo_label_acc, 1.0) << "epoch " << e;
  }
  EXPECT_EQ(r.classifier.direction(), p.source.classifier.direction());
}

TEST(AdaptTcpga, GeneratorUntouched) {
  const Pipeline p = small_pipeline(4, std::vector<std::size_t>(4, 20));
  const PrototypeGenerator before = p.generator;
  const ZeroShotOracle oracle = ZeroShotOracle::simulated(p.data.target.y, 4, 0.85, 0.2, 4);
  TcpgaConfig cfg;
  cfg.epochs = 2;
  adapt_tcpga(p.source, p.generator, p.data.target.x, oracle, cfg);
  EXPECT_EQ(p.generator.embedding(), before.embedding());
  for (std::size_t l = 0; l < before.head().layers().size(); ++l)
    EXPECT_EQ(p.generator.head().layers()[l].weight, before.head().layers()[l].weight);
}

TEST(AdaptTcpga, OracleSizeMismatchRejected) {
  const Pipeline p = small_pipeline(2, std::vector<std::size_t>(4, 20));
  const ZeroShotOracle oracle = ZeroShotOracle::simulated(Labels{0, 1}, 4, 0.9, 0.1, 1);
  TcpgaConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(adapt_tcpga(p.source, p.generator, p.data.target.x, oracle, cfg), InvalidArgument);
}

TEST(AdaptTcpga, DeterministicGivenSeed) {
  const Pipeline p = small_pipeline(3, {60, 30, 15, 5});
  const ZeroShotOracle oracle = ZeroShotOracle::simulated(p.data.target.y, 4, 0.85, 0.2, 3);
  TcpgaConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 3;
  std::ostringstream a, b;
  write_report_csv(adapt_tcpga(p.source, p.generator, p.data.target.x, oracle, cfg, p.data.target.y).report, a);
  write_report_csv(adapt_tcpga(p.source, p.generator, p.data.target.x, oracle, cfg, p.data.target.y).report, b);
  EXPECT_EQ(a.str(), b.str());
}

}  // namespace
}  // namespace cpga
