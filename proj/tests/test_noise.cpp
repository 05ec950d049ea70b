#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "jocor/noise.hpp"

using namespace jocor;

namespace {

LabeledDataset uniform_labels(int m, std::size_t n, std::uint64_t seed) {
    LabeledDataset d;
    d.class_count = m;
    d.features = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        d.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
        d.true_labels.push_back(static_cast<Label>(rng.below(static_cast<std::uint64_t>(m))));
    }
    d.observed_labels = d.true_labels;
    return d;
}

void expect_row_stochastic(const TransitionMatrix& t) {
    for (int i = 0; i < t.m; ++i) {
        EXPECT_NEAR(t.q.row(i).sum(), 1.0, 1e-12);
        EXPECT_GE(t.q.row(i).minCoeff(), 0.0);
        EXPECT_LE(t.q.row(i).maxCoeff(), 1.0);
    }
}

// Upper 0.1% points of the chi-squared distribution.
double chi2_critical(int dof) {
    switch (dof) {
        case 1: return 10.827566170662733;
        case 9: return 27.877164871256568;
        default: ADD_FAILURE() << "no critical value for dof " << dof; return 0.0;
    }
}

/// Pearson chi-squared of the empirical transition counts against q, row by
/// row, over the categories q allows. Categories q forbids must never occur.
void expect_rows_match(const LabeledDataset& noisy, const TransitionMatrix& t) {
    std::vector<std::vector<double>> counts(static_cast<std::size_t>(t.m), std::vector<double>(static_cast<std::size_t>(t.m)));
    std::vector<double> totals(static_cast<std::size_t>(t.m));
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        counts[static_cast<std::size_t>(noisy.true_labels[i])][static_cast<std::size_t>(noisy.observed_labels[i])] += 1;
        totals[static_cast<std::size_t>(noisy.true_labels[i])] += 1;
    }
    for (int i = 0; i < t.m; ++i) {
        double stat = 0.0;
        int categories = 0;
        for (int j = 0; j < t.m; ++j) {
            const double expected = totals[static_cast<std::size_t>(i)] * t.q(i, j);
            const double seen = counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (t.q(i, j) == 0.0) {
                EXPECT_EQ(seen, 0.0) << "row " << i << " col " << j;
                continue;
            }
            ++categories;
            stat += (seen - expected) * (seen - expected) / expected;
        }
        if (categories > 1) EXPECT_LT(stat, chi2_critical(categories - 1)) << "row " << i;
    }
}

}  // namespace

TEST(SymmetricQ, SixClassesFortyPercent) {
    const TransitionMatrix t = build_symmetric_q(6, 0.4);
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) EXPECT_NEAR(t.q(i, j), i == j ? 0.6 : 0.08, 1e-15);
    }
    expect_row_stochastic(t);
}

TEST(SymmetricQ, ZeroRateIsIdentity) {
    EXPECT_EQ(build_symmetric_q(5, 0.0).q, Matrix::Identity(5, 5));
}

TEST(SymmetricQ, TenClassesHalf) {
    const TransitionMatrix t = build_symmetric_q(10, 0.5);
    EXPECT_EQ(t.q(3, 3), 0.5);
    EXPECT_EQ(t.q(3, 4), 0.5 / 9);
    expect_row_stochastic(t);
}

TEST(SymmetricQ, Errors) {
    EXPECT_THROW(build_symmetric_q(1, 0.2), ConfigError);
    EXPECT_THROW(build_symmetric_q(3, 1.0), ConfigError);
    EXPECT_THROW(build_symmetric_q(3, -0.1), ConfigError);
}

TEST(AsymmetricQ, FourClassesEvenIndexRule) {
    Matrix want(4, 4);
    want << 0.6, 0.4, 0, 0,
            0, 1, 0, 0,
            0, 0, 0.6, 0.4,
            0, 0, 0, 1;
    EXPECT_TRUE(build_asymmetric_q(4, 0.4).q.isApprox(want, 1e-15));
}

TEST(AsymmetricQ, OddClassCountWrapsAround) {
    const TransitionMatrix t = build_asymmetric_q(5, 0.3);
    EXPECT_NEAR(t.q(4, 4), 0.7, 1e-15);
    EXPECT_NEAR(t.q(4, 0), 0.3, 1e-15);
    int noisy_rows = 0;
    for (int i = 0; i < 5; ++i) noisy_rows += t.q(i, i) < 1.0;
    EXPECT_EQ(noisy_rows, 3);
    expect_row_stochastic(t);
}

TEST(AsymmetricQ, OverallRateIsHalfUnderUniformPriors) {
    const TransitionMatrix t = build_asymmetric_q(10, 0.4);
    const double tau = 1.0 - t.q.diagonal().mean();
    EXPECT_NEAR(tau, 0.2, 1e-15);
    EXPECT_NEAR((NoiseSpec{NoiseKind::asymmetric, 0.4, 0}).expected_noise_rate(), 0.2, 1e-15);
}

TEST(AsymmetricQ, ZeroRateAndErrors) {
    EXPECT_EQ(build_asymmetric_q(4, 0.0).q, Matrix::Identity(4, 4));
    EXPECT_THROW(build_asymmetric_q(1, 0.2), ConfigError);
    EXPECT_THROW(build_asymmetric_q(4, 0.6), ConfigError);
}

TEST(Corrupt, IdentityKeepsLabels) {
    const LabeledDataset clean = uniform_labels(4, 500, 1);
    const LabeledDataset out = corrupt(clean, build_symmetric_q(4, 0.0), 9);
    EXPECT_EQ(out.observed_labels, out.true_labels);
}

TEST(Corrupt, FlipFractionWithinFourSigma) {
    const LabeledDataset clean = uniform_labels(10, 10000, 2);
    const LabeledDataset out = corrupt(clean, build_symmetric_q(10, 0.5), 3);
    EXPECT_NEAR(noise_fraction(out), 0.5, 4 * 0.005);
}

TEST(Corrupt, DeterministicAndLeavesFeaturesAlone) {
    const LabeledDataset clean = uniform_labels(6, 2000, 4);
    const LabeledDataset a = corrupt(clean, build_symmetric_q(6, 0.3), 11);
    const LabeledDataset b = corrupt(clean, build_symmetric_q(6, 0.3), 11);
    const LabeledDataset c = corrupt(clean, build_symmetric_q(6, 0.3), 12);
    EXPECT_EQ(a.observed_labels, b.observed_labels);
    EXPECT_NE(a.observed_labels, c.observed_labels);
    EXPECT_EQ(a.true_labels, clean.true_labels);
    EXPECT_EQ(a.features, clean.features);
}

TEST(Corrupt, ClassCountMismatch) {
    EXPECT_THROW(corrupt(uniform_labels(4, 10, 1), build_symmetric_q(5, 0.2), 1), ConfigError);
}

TEST(Corrupt, EmpiricalRowsMatchSymmetricQ) {
    const TransitionMatrix t = build_symmetric_q(10, 0.4);
    expect_rows_match(corrupt(uniform_labels(10, 100000, 5), t, 6), t);
}

TEST(Corrupt, EmpiricalRowsMatchAsymmetricQ) {
    const TransitionMatrix t = build_asymmetric_q(10, 0.4);
    expect_rows_match(corrupt(uniform_labels(10, 100000, 7), t, 8), t);
}
