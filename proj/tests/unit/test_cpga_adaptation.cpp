#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "cpga/adaptation.hpp"
#include "cpga/domains.hpp"
#include "cpga/errors.hpp"
#include "cpga/functional.hpp"
#include "cpga/optim.hpp"
#include "support/reference.hpp"

namespace cpga {
namespace {

using Labels = std::vector<std::size_t>;

void expect_matrix_near(const Tensor& actual, const ref::Matrix& expected, double tol) {
  ASSERT_EQ(actual.rows(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i)
    for (std::size_t j = 0; j < expected[i].size(); ++j)
      EXPECT_NEAR(actual(i, j), expected[i][j], tol) << "(" << i << "," << j << ")";
}

TEST(Centroids, OneHotGivesClassMeans) {
  const Tensor q = Tensor::from_rows({{1, 2}, {3, 4}, {10, 0}});
  const Tensor c = init_centroids(q, one_hot(Labels{0, 0, 1}, 2));
  EXPECT_NEAR(c(0, 0), 2.0, 1e-15);
  EXPECT_NEAR(c(0, 1), 3.0, 1e-15);
  EXPECT_NEAR(c(1, 0), 10.0, 1e-15);
}

TEST(Centroids, UniformGivesGlobalMean) {
  const Tensor q = Tensor::from_rows({{1, 2}, {3, 4}, {5, 0}});
  const Tensor c = init_centroids(q, Tensor::full(3, 3, 1.0 / 3.0));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(c(k, 0), 3.0, 1e-14);
    EXPECT_NEAR(c(k, 1), 2.0, 1e-14);
  }
}

TEST(Centroids, ZeroWeightClassFlagged) {
  const Tensor q = Tensor::from_rows({{1, 0}, {3, 2}});
  std::vector<std::size_t> empty;
  const Tensor c = init_centroids(q, one_hot(Labels{0, 0}, 3), &empty);
  EXPECT_EQ(empty, (Labels{1, 2}));
  EXPECT_NEAR(c(2, 0), 2.0, 1e-15);
  EXPECT_NEAR(c(2, 1), 1.0, 1e-15);
}

TEST(Centroids, UpdateKeepsEmptyClasses) {
  const Tensor q = Tensor::from_rows({{1, 0}, {3, 2}});
  const Tensor prev = Tensor::from_rows({{9, 9}, {7, 7}});
  const Tensor c = update_centroids(q, Labels{1, 1}, prev);
  EXPECT_EQ(c(0, 0), 9.0);
  EXPECT_NEAR(c(1, 0), 2.0, 1e-15);
  EXPECT_NEAR(c(1, 1), 1.0, 1e-15);
}

TEST(Centroids, UpdateMatchesInitOnOneHot) {
  std::mt19937_64 gen(4);
  const Tensor q = ref::random_tensor(gen, 25, 6);
  Labels y = ref::random_labels(gen, 25, 4);
  y[0] = 0; y[1] = 1; y[2] = 2; y[3] = 3;
  const Tensor a = update_centroids(q, y, Tensor::zeros(4, 6));
  const Tensor b = init_centroids(q, one_hot(y, 4));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(PseudoLabels, ClosedFormAndSingleClass) {
  const PseudoLabels p =
      pseudo_labels(Tensor::from_rows({{2, 0}}), Tensor::from_rows({{1, 0}, {0, 3}}), 1.0);
  EXPECT_NEAR(p.soft(0, 0), std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-12);
  EXPECT_NEAR(p.soft(0, 0), 0.7311, 1e-4);
  EXPECT_EQ(p.hard[0], 0u);

  const PseudoLabels one =
      pseudo_labels(Tensor::from_rows({{1, 2}, {-3, 1}}), Tensor::from_rows({{1, 1}}), 0.07);
  EXPECT_EQ(one.hard, (Labels{0, 0}));
  EXPECT_EQ(one.soft(0, 0), 1.0);
}

TEST(PseudoLabels, TieGoesToLowerClass) {
  const PseudoLabels p =
      pseudo_labels(Tensor::from_rows({{1, 1}}), Tensor::from_rows({{0, 1}, {1, 0}}), 0.5);
  EXPECT_EQ(p.hard[0], 0u);
}

TEST(PseudoLabels, ZeroVectorRejected) {
  EXPECT_THROW(pseudo_labels(Tensor::from_rows({{0, 0}}), Tensor::from_rows({{1, 0}}), 1.0),
               DegenerateInput);
  EXPECT_THROW(pseudo_labels(Tensor::from_rows({{1, 0}}), Tensor::from_rows({{0, 0}}), 1.0),
               DegenerateInput);
}

TEST(ConfidenceWeight, Examples) {
  const Tensor q = Tensor::from_rows({{1, 0}, {1, 1}});
  const auto single = confidence_weight(q, Tensor::from_rows({{0, 1}}), Labels{0, 0}, 0.07);
  EXPECT_EQ(single[0], 1.0);
  const auto eq =
      confidence_weight(Tensor::from_rows({{1, 1}}), Tensor::from_rows({{1, 0}, {0, 1}}), Labels{1}, 0.3);
  EXPECT_NEAR(eq[0], 0.5, 1e-15);
  const auto cf =
      confidence_weight(Tensor::from_rows({{1, 0}}), Tensor::from_rows({{1, 0}, {0, 1}}), Labels{0}, 1.0);
  EXPECT_NEAR(cf[0], 0.7311, 1e-4);
}

TEST(ConfidenceWeight, EqualsSoftPredictionAtHardLabel) {
  std::mt19937_64 gen(13);
  const Tensor q = ref::random_tensor(gen, 30, 5);
  const Tensor c = ref::random_tensor(gen, 4, 5);
  const PseudoLabels p = pseudo_labels(q, c, 0.07);
  const auto w = confidence_weight(q, c, p.hard, 0.07);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(w[i], p.soft(i, p.hard[i]));
}

TEST(PseudoLabeling, MatchesBruteForce) {
  std::mt19937_64 gen(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 49, k = 2 + gen() % 6, d = 1 + gen() % 8;
    const double tau = 0.05 + 0.01 * static_cast<double>(gen() % 100);
    const Tensor q = ref::random_tensor(gen, n, d);
    const Tensor soft = ref::random_simplex_rows(gen, n, k);
    const auto qm = ref::to_matrix(q);

    const Tensor c = init_centroids(q, soft);
    const auto cm = ref::init_centroids(qm, ref::to_matrix(soft));
    expect_matrix_near(c, cm, 1e-12);

    const PseudoLabels p = pseudo_labels(q, c, tau);
    expect_matrix_near(p.soft, ref::pseudo_soft(qm, cm, tau), 1e-12);
    EXPECT_EQ(p.hard, ref::row_argmax(ref::to_matrix(p.soft)));

    const auto w = confidence_weight(q, c, p.hard, tau);
    const auto wr = ref::confidence(qm, cm, p.hard, tau);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(w[i], wr[i], 1e-12);

    const Labels y = ref::random_labels(gen, n, k);
    expect_matrix_near(update_centroids(q, y, c), ref::update_centroids(qm, y, cm), 1e-12);
  }
}

TEST(WeightedInfoNce, Examples) {
  Tape tape;
  const Var u = tape.constant(Tensor::from_rows({{1, 0}}));
  const Var v = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  const double half = weighted_infonce(u, v, Labels{0}, std::vector<double>{0.5}, 1.0).value().item();
  EXPECT_NEAR(half, 0.5 * std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(half, 0.15663, 1e-5);
  EXPECT_EQ(weighted_infonce(u, v, Labels{1}, std::vector<double>{0.0}, 0.07).value().item(), 0.0);
}

TEST(WeightedInfoNce, UnitWeightsGiveUnweightedValue) {
  std::mt19937_64 gen(6);
  const Tensor u = normalize_rows(ref::random_tensor(gen, 5, 4));
  const Tensor v = normalize_rows(ref::random_tensor(gen, 3, 4));
  const Labels y{0, 2, 1, 1, 0};
  Tape tape;
  const double loss = weighted_infonce(tape.constant(u), tape.constant(v), y,
                                       std::vector<double>(5, 1.0), 0.07).value().item();
  double expected = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    double z = 0;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(dot(u.row(i), v.row(k)) / 0.07);
    expected += -(dot(u.row(i), v.row(y[i])) / 0.07 - std::log(z));
  }
  EXPECT_NEAR(loss, expected / 5.0, 1e-10);
}

TEST(WeightedInfoNce, RejectsUnnormalizedInput) {
  Tape tape;
  const Var v = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  EXPECT_THROW(weighted_infonce(tape.constant(Tensor::from_rows({{1.1, 0}})), v, Labels{0},
                                std::vector<double>{1.0}, 1.0),
               InvalidArgument);
}

TEST(Elr, HandComputedStep) {
  ElrBank bank(Tensor::from_rows({{1, 0}}), 0.9);
  Tape tape;
  const Var u = tape.constant(Tensor::from_rows({{0, 1}}));
  const Var v = tape.constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  const double loss = elr_step(u, v, bank, Labels{0}, 1e-3).value().item();
  EXPECT_NEAR(bank.row(0)[0], 0.9, 1e-12);
  EXPECT_NEAR(bank.row(0)[1], 0.1, 1e-12);
  EXPECT_NEAR(loss, std::log(0.9), 1e-12);
  EXPECT_NEAR(loss, -0.10536, 1e-5);
}

TEST(Elr, FullMomentumFreezesBank) {
  ElrBank bank(Tensor::from_rows({{0.3, 0.7}}), 1.0);
  bank.update(0, std::vector<double>{1.0, 0.0});
  EXPECT_EQ(bank.row(0)[0], 0.3);
  EXPECT_THROW(ElrBank(Tensor::from_rows({{0.3, 0.7}}), 1.5), InvalidArgument);
  CpgaConfig cfg;
  cfg.beta = 1.0;
  EXPECT_THROW(validate(cfg), InvalidArgument);
}

TEST(Elr, BankRowsStayOnSimplex) {
  std::mt19937_64 gen(8);
  ElrBank bank(ref::random_simplex_rows(gen, 10, 5), 0.9);
  for (int step = 0; step < 500; ++step) {
    const Tensor o = ref::random_simplex_rows(gen, 1, 5);
    bank.update(gen() % 10, o.row(0));
  }
  for (std::size_t i = 0; i < 10; ++i) {
    double s = 0;
    for (double v : bank.row(i)) {
      s += v;
      EXPECT_GE(v, -1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(NeighborhoodClustering, SingleNeighborAndUniform) {
  Tape tape;
  const FeatureBank two(Tensor::from_rows({{1, 0}, {0, 1}}));
  EXPECT_NEAR(loss_nc(tape.constant(Tensor::from_rows({{1, 0}})), two, Labels{0}, 0.05).value().item(),
              0.0, 1e-15);
  const FeatureBank same(Tensor::full(5, 3, 1.0));
  EXPECT_NEAR(loss_nc(tape.constant(Tensor::full(1, 3, 1.0)), same, Labels{2}, 0.05).value().item(),
              std::log(4.0), 1e-12);
  const FeatureBank one(Tensor::from_rows({{1, 0}}));
  EXPECT_THROW(loss_nc(tape.constant(Tensor::from_rows({{1, 0}})), one, Labels{0}, 0.05),
               InvalidArgument);
}

TEST(Stage2Losses, GradientsMatchFiniteDifferences) {
  std::mt19937_64 gen(30);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = ref::random_tensor(gen, 4, 3);
    const Tensor protos = normalize_rows(ref::random_tensor(gen, 3, 3));
    const Tensor bank_rows = ref::random_tensor(gen, 6, 3);
    const Tensor history = ref::random_simplex_rows(gen, 6, 3);
    const Labels y{0, 2, 1, 2};
    const Labels idx{1, 3, 0, 5};
    const std::vector<double> w{0.2, 0.9, 0.5, 1.0};

    const ScalarFunction infonce = [&](Tape& t, const Var& v) {
      return weighted_infonce(ag::l2_normalize_rows(v), t.constant(protos), y, w, 0.5);
    };
    // The bank enters the loss as a constant: freeze it at the post-update
    // rows so finite differences see the same function.
    ElrBank updated(history, 0.9);
    {
      Tape t;
      elr_step(ag::l2_normalize_rows(t.constant(x)), t.constant(protos), updated, idx, 0.5);
    }
    const ScalarFunction elr = [&](Tape& t, const Var& v) {
      ElrBank frozen(updated.rows(), 1.0);
      return elr_step(ag::l2_normalize_rows(v), t.constant(protos), frozen, idx, 0.5);
    };
    const ScalarFunction nc = [&](Tape&, const Var& v) {
      return loss_nc(v, FeatureBank(bank_rows), idx, 0.5);
    };
    EXPECT_LT(grad_check(infonce, x), 1e-6);
    EXPECT_LT(grad_check(elr, x), 1e-6);
    EXPECT_LT(grad_check(nc, x), 1e-6);
  }
}

TEST(Projector, OutputsUnitRows) {
  Rng rng(2);
  const Projector p({6, 8, 8, 4}, rng);
  std::mt19937_64 gen(2);
  const Tensor out = p.apply(ref::random_tensor(gen, 20, 6));
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(l2_norm(out.row(i)), 1.0, 1e-12);
}

TEST(CpgaConfig, Validation) {
  CpgaConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  cfg.temperature = 0.0;
  EXPECT_THROW(validate(cfg), InvalidArgument);
  cfg = {};
  cfg.beta = 1.0;
  EXPECT_THROW(validate(cfg), InvalidArgument);
  cfg = {};
  cfg.lambda = -1.0;
  EXPECT_THROW(validate(cfg), InvalidArgument);
}

struct Pipeline {
  DomainPair data;
  SourceModel source;
  PrototypeGenerator generator;
};

Pipeline small_pipeline(std::uint64_t seed) {
  DomainShiftSpec shift;
  shift.rotation_angle = 0.3;
  shift.translation_scale = 1.0;
  shift.mean_separation = 5.0;
  DomainPair data = generate_domain_pair(seed, 4, 8, std::vector<std::size_t>(4, 60),
                                         std::vector<std::size_t>(4, 40), shift);
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

TEST(AdaptCpga, ZeroEpochsIsNoOp) {
  const Pipeline p = small_pipeline(1);
  CpgaConfig cfg;
  cfg.epochs = 0;
  const CpgaResult r = adapt_cpga(p.source, p.generator, p.data.target.x, cfg, p.data.target.y);
  ASSERT_EQ(r.report.epochs.size(), 1u);
  EXPECT_EQ(r.extractor.layers()[0].weight, p.source.extractor.layers()[0].weight);
  EXPECT_TRUE(r.report.initial().d_pdd.has_value());
}

TEST(AdaptCpga, PlainAlignmentLossDecreases) {
  const Pipeline p = small_pipeline(2);
  CpgaConfig cfg;
  cfg.epochs = 10;
  cfg.lambda = 0.0;
  cfg.eta = 0.0;
  cfg.confidence_weighting = false;
  cfg.seed = 2;
  const CpgaResult r = adapt_cpga(p.source, p.generator, p.data.target.x, cfg, p.data.target.y);
  ASSERT_EQ(r.report.epochs.size(), 11u);
  EXPECT_LT(r.report.final().loss_con, r.report.epochs[1].loss_con);
  EXPECT_EQ(r.classifier.direction(), p.source.classifier.direction());
  EXPECT_EQ(r.classifier.scale(), p.source.classifier.scale());
}

TEST(AdaptCpga, DeterministicReport) {
  const Pipeline p = small_pipeline(3);
  CpgaConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  std::ostringstream a, b;
  write_report_csv(adapt_cpga(p.source, p.generator, p.data.target.x, cfg, p.data.target.y).report, a);
  write_report_csv(adapt_cpga(p.source, p.generator, p.data.target.x, cfg, p.data.target.y).report, b);
  const std::string csv = a.str();
  EXPECT_EQ(csv, b.str());
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,loss_con,loss_elr,loss_nc,overall_acc,per_class_acc,d_pdd");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(AdaptCpga, RejectsMismatchedInput) {
  const Pipeline p = small_pipeline(1);
  CpgaConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(adapt_cpga(p.source, p.generator, Tensor::zeros(5, 3), cfg), InvalidArgument);
  cfg.temperature = -1.0;
  EXPECT_THROW(adapt_cpga(p.source, p.generator, p.data.target.x, cfg), InvalidArgument);
}

}  // namespace
}  // namespace cpga
