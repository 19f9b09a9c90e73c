#include <gtest/gtest.h>

#include <random>

#include "oemb/objective.hpp"
#include "test_util.hpp"

using namespace oemb;

namespace {

using Mat = Matrix<double>;

double hinge(double x) { return x > 0 ? x : 0; }

Mat random_scores(std::mt19937_64& rng, std::size_t b) {
    std::uniform_real_distribution<double> d(-1.0, 0.0);
    Mat s(b, b);
    for (auto& x : s.data()) x = d(rng);
    return s;
}

}  // namespace

TEST(OrderSimilarity, Examples) {
    const std::vector<double> a{0.3, 0.1, 0.7};
    EXPECT_EQ(order_similarity<double>(a, a), 0.0);
    EXPECT_EQ(order_similarity<double>(std::vector<double>{1, 2, 0}, std::vector<double>{2, 3, 1}), 0.0);
    EXPECT_EQ(order_similarity<double>(std::vector<double>{3, 1}, std::vector<double>{1, 2}), -4.0);
    EXPECT_EQ(order_similarity<double>(std::vector<double>{1, 2}, std::vector<double>{3, 1}), -1.0);
    EXPECT_THROW(order_similarity<double>(std::vector<double>{1}, std::vector<double>{1, 2}), ShapeError);
}

TEST(OrderSimilarity, ZeroExactlyWhenDominated) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(0, 1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> c(4), v(4);
        bool dominated = true;
        for (std::size_t k = 0; k < 4; ++k) {
            c[k] = d(rng);
            v[k] = trial % 2 ? c[k] + d(rng) : d(rng);
            dominated = dominated && c[k] <= v[k];
        }
        const double s = order_similarity<double>(c, v);
        EXPECT_LE(s, 0.0);
        EXPECT_EQ(s == 0.0, dominated);
    }
}

TEST(RankLoss, HandExamples) {
    const Mat satisfied(2, 2, {0, -1, -1, 0});
    EXPECT_EQ(pairwise_rank_loss(satisfied, 0.05), 0.0);
    EXPECT_EQ(annotation_rank_loss(satisfied, 0.05), 0.0);

    const Mat s(2, 2, {-0.5, -0.6, -0.4, 0});
    EXPECT_NEAR(pairwise_rank_loss(s, 0.05), 0.15, 1e-15);
    EXPECT_NEAR(annotation_rank_loss(s, 0.05), 0.15, 1e-15);

    EXPECT_EQ(pairwise_rank_loss(Mat(1, 1, {-0.3}), 0.05), 0.0);
}

TEST(RankLoss, RejectsNonSquareAndNegativeMargin) {
    EXPECT_THROW(pairwise_rank_loss(Mat(2, 3), 0.05), ShapeError);
    EXPECT_THROW(annotation_rank_loss(Mat(3, 2), 0.05), ShapeError);
    EXPECT_THROW(pairwise_rank_loss(Mat(2, 2), -0.1), ValidationError);
}

TEST(RankLoss, MatchesDirectFormula) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t b = 1 + rng() % 6;
        const auto s = random_scores(rng, b);
        double caption = 0, video = 0;
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                if (i == j) continue;
                caption += hinge(0.05 - s(i, i) + s(j, i));
                video += hinge(0.05 - s(i, i) + s(i, j));
            }
        }
        EXPECT_NEAR(annotation_rank_loss(s, 0.05), caption, 1e-12);
        EXPECT_NEAR(pairwise_rank_loss(s, 0.05), caption + video, 1e-12);
        EXPECT_LE(annotation_rank_loss(s, 0.05), pairwise_rank_loss(s, 0.05));
    }
}

TEST(RankLoss, Monotonicity) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t b = 2 + rng() % 4;
        auto s = random_scores(rng, b);
        const std::size_t i = rng() % b, j = rng() % b;
        for (auto kind : {LossKind::pairwise, LossKind::annotation}) {
            const double before = rank_loss(s, 0.05, kind);
            auto up = s;
            up(i, j) += 0.1;
            const double after = rank_loss(up, 0.05, kind);
            if (i == j) {
                EXPECT_LE(after, before + 1e-15);
            } else {
                EXPECT_GE(after, before - 1e-15);
            }
        }
    }
}

TEST(RankLoss, SubgradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(12);
    const double h = 1e-6;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = 2 + rng() % 4;
        const auto s = random_scores(rng, b);
        for (auto kind : {LossKind::pairwise, LossKind::annotation}) {
            const auto lg = rank_loss_with_gradient(s, 0.05, kind);
            EXPECT_NEAR(lg.loss, rank_loss(s, 0.05, kind), 1e-15);
            for (std::size_t r = 0; r < b; ++r) {
                for (std::size_t c = 0; c < b; ++c) {
                    auto up = s, down = s;
                    up(r, c) += h;
                    down(r, c) -= h;
                    const double numeric = (rank_loss(up, 0.05, kind) - rank_loss(down, 0.05, kind)) / (2 * h);
                    const double an = lg.grad(r, c);
                    // random uniform scores sit on a kink with probability ~0
                    EXPECT_LE(std::abs(an - numeric), 1e-6 * std::max(1.0, std::abs(an) + std::abs(numeric)));
                }
            }
        }
    }
}

TEST(RankLoss, KinkTakesZeroSubgradient) {
    // caption-contrast hinge exactly at 0: 0.05 - 0 + (-0.05)
    const Mat s(2, 2, {0, -1, -0.05, 0});
    const auto lg = rank_loss_with_gradient(s, 0.05, LossKind::annotation);
    EXPECT_EQ(lg.loss, 0.0);
    for (double g : lg.grad.data()) EXPECT_EQ(g, 0.0);
}

TEST(LossKind, Parse) {
    EXPECT_EQ(parse_loss_kind("pairwise"), LossKind::pairwise);
    EXPECT_EQ(parse_loss_kind("annotation"), LossKind::annotation);
    EXPECT_FALSE(parse_loss_kind("triplet").has_value());
}
