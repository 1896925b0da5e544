#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cpga/errors.hpp"
#include "cpga/metrics.hpp"
#include "support/reference.hpp"

namespace cpga {
namespace {

using Labels = std::vector<std::size_t>;

TEST(Accuracies, PerfectPredictor) {
  const Labels y{0, 1, 2, 1};
  const EvalReport r = accuracies(y, y, 3);
  EXPECT_DOUBLE_EQ(r.overall_acc, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class_acc, 1.0);
}

TEST(Accuracies, ImbalancedExample) {
  const EvalReport r = accuracies(Labels{0, 0, 0, 0}, Labels{0, 0, 0, 1}, 2);
  EXPECT_DOUBLE_EQ(r.overall_acc, 0.75);
  EXPECT_DOUBLE_EQ(r.per_class_acc, 0.5);
}

TEST(Accuracies, ConstantPredictorOnBalancedClasses) {
  const Labels truth{0, 1, 2, 3, 0, 1, 2, 3};
  const EvalReport r = accuracies(Labels(8, 2), truth, 4);
  EXPECT_DOUBLE_EQ(r.overall_acc, 0.25);
  EXPECT_DOUBLE_EQ(r.per_class_acc, 0.25);
}

TEST(Accuracies, AbsentClassesExcluded) {
  const EvalReport r = accuracies(Labels{0, 1}, Labels{0, 0}, 3);
  EXPECT_DOUBLE_EQ(r.per_class_acc, 0.5);
  ASSERT_EQ(r.class_recalls.size(), 3u);
  EXPECT_FALSE(r.class_recalls[1].has_value());
  EXPECT_FALSE(r.class_recalls[2].has_value());
}

TEST(Accuracies, Errors) {
  EXPECT_THROW(accuracies(Labels{}, Labels{}, 2), InvalidArgument);
  EXPECT_THROW(accuracies(Labels{0}, Labels{0, 1}, 2), InvalidArgument);
  EXPECT_THROW(accuracies(Labels{3}, Labels{0}, 2), InvalidArgument);
}

TEST(Dpdd, Examples) {
  const Labels y{0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(d_pdd(Labels{1, 0, 0, 1}, y, 2), 0.0);
  Labels truth(20), pseudo(20);
  for (std::size_t i = 0; i < 20; ++i) {
    truth[i] = i < 10 ? 0 : 1;
    pseudo[i] = i < 5 ? 0 : 1;
  }
  EXPECT_DOUBLE_EQ(d_pdd(pseudo, truth, 2), 1.0);
}

TEST(Dpdd, AllMassOnOneClass) {
  constexpr std::size_t k = 5, per = 4;
  Labels truth;
  for (std::size_t c = 0; c < k; ++c) truth.insert(truth.end(), per, c);
  EXPECT_DOUBLE_EQ(d_pdd(Labels(truth.size(), 0), truth, k), 2.0 * (k - 1));
}

TEST(Dpdd, MissingTrueClassRejected) {
  EXPECT_THROW(d_pdd(Labels{0, 1}, Labels{0, 0}, 2), InvalidArgument);
  const EvalReport r = evaluate(Labels{0, 1}, Labels{0, 0}, 2);
  EXPECT_FALSE(r.d_pdd.has_value());
}

TEST(Dpdd, InvariantToSampleOrder) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    Labels truth = ref::random_labels(rng, 40, 4);
    for (std::size_t c = 0; c < 4; ++c) truth[c] = c;
    Labels pseudo = ref::random_labels(rng, 40, 4);
    const double base = d_pdd(pseudo, truth, 4);
    std::shuffle(pseudo.begin(), pseudo.end(), rng);
    std::shuffle(truth.begin(), truth.end(), rng);
    EXPECT_DOUBLE_EQ(d_pdd(pseudo, truth, 4), base);
  }
}

TEST(Accuracies, BalancedTruthOverallEqualsPerClass) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Labels truth;
    for (std::size_t c = 0; c < 5; ++c) truth.insert(truth.end(), 6, c);
    const Labels pred = ref::random_labels(rng, truth.size(), 5);
    const EvalReport r = accuracies(pred, truth, 5);
    EXPECT_NEAR(r.overall_acc, r.per_class_acc, 1e-12);
  }
}

TEST(Metrics, MatchBruteForce) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 5;
    const std::size_t n = k + 1 + trial % 40;
    Labels truth = ref::random_labels(rng, n, k);
    for (std::size_t c = 0; c < k; ++c) truth[c] = c;
    const Labels pred = ref::random_labels(rng, n, k);
    const EvalReport r = evaluate(pred, truth, k);
    const ref::Accuracy expected = ref::accuracies(pred, truth, k);
    EXPECT_NEAR(r.overall_acc, expected.overall, 1e-12);
    EXPECT_NEAR(r.per_class_acc, expected.per_class, 1e-12);
    ASSERT_TRUE(r.d_pdd.has_value());
    EXPECT_NEAR(*r.d_pdd, ref::d_pdd(pred, truth, k), 1e-12);
  }
}

TEST(Metrics, LabelHistogram) {
  EXPECT_EQ(label_histogram(Labels{0, 2, 2, 1, 2}, 4), (Labels{1, 1, 3, 0}));
}

}  // namespace
}  // namespace cpga
