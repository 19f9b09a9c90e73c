#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oemb/encoders.hpp"
#include "test_util.hpp"

using namespace oemb;
using oemb::test::random_matrix;

namespace {

using Mat = Matrix<double>;
using Sent = SentenceFeatures<double>;
using Vid = VideoFeatures<double>;

void expect_embedding(const Embedding<double>& e) {
    double sq = 0;
    for (double x : e.values) {
        EXPECT_GE(x, 0.0);
        sq += x * x;
    }
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
}

void expect_near(std::span<const double> a, std::span<const double> b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
    }
}

LstmParams<double> random_lstm(std::mt19937_64& rng, std::size_t in, std::size_t hidden) {
    LstmParams<double> p(in, hidden);
    for (auto* m : {&p.Wi, &p.Wf, &p.Wc, &p.Wo}) *m = random_matrix(rng, hidden, in);
    for (auto* m : {&p.Ui, &p.Uf, &p.Uc, &p.Uo}) *m = random_matrix(rng, hidden, hidden);
    for (auto* b : {&p.bi, &p.bf, &p.bc, &p.bo}) *b = random_matrix(rng, 1, hidden).data();
    return p;
}

AttentionParams<double> random_attention(std::mt19937_64& rng, std::size_t hidden, std::size_t video, std::size_t match) {
    AttentionParams<double> p(hidden, video, match);
    p.query = random_matrix(rng, match, hidden);
    p.key = random_matrix(rng, match, video);
    p.score = random_matrix(rng, 1, match).data();
    return p;
}

}  // namespace

TEST(SentenceAverage, MeanThenAbsThenNormalize) {
    auto e = encode_sentence_sa(Mat::identity(2), Sent(Mat(2, 2, {1, -1, 3, 1})));
    expect_near(e.values, std::vector<double>{1, 0}, 1e-15);
}

TEST(SentenceAverage, SingleRow) {
    auto e = encode_sentence_sa(Mat::identity(2), Sent(Mat(1, 2, {0, 3})));
    expect_near(e.values, std::vector<double>{0, 1}, 1e-15);
}

TEST(SentenceAverage, ZeroMapIsDegenerate) {
    EXPECT_THROW(encode_sentence_sa(Mat(2, 2), Sent(Mat(1, 2, {1, 2}))), DegenerateEmbedding);
    EXPECT_THROW(encode_sentence_sa(Mat(2, 3), Sent(Mat(1, 2, {1, 2}))), ShapeError);
}

TEST(SentenceAverage, InvariantToTokenPermutation) {
    std::mt19937_64 rng(5);
    const auto w = random_matrix(rng, 6, 4);
    auto rows = random_matrix(rng, 5, 4);
    auto a = encode_sentence_sa(w, Sent(rows));
    Mat rev(5, 4);
    for (std::size_t r = 0; r < 5; ++r) {
        std::copy(rows.row(4 - r).begin(), rows.row(4 - r).end(), rev.row(r).begin());
    }
    expect_near(a.values, encode_sentence_sa(w, Sent(rev)).values, 1e-12);
}

TEST(Lstm, ZeroFixedPoint) {
    LstmParams<double> p(1, 1);
    auto s = lstm_step<double>(p, std::vector<double>{0}, std::vector<double>{0}, std::vector<double>{0});
    EXPECT_EQ(s.h[0], 0.0);
    EXPECT_EQ(s.c[0], 0.0);
}

TEST(Lstm, ForgetGateHalvesCell) {
    LstmParams<double> p(1, 1);
    auto s = lstm_step<double>(p, std::vector<double>{0}, std::vector<double>{0}, std::vector<double>{2});
    EXPECT_NEAR(s.c[0], 1.0, 1e-15);
    EXPECT_NEAR(s.h[0], 0.5 * std::tanh(1.0), 1e-15);
    EXPECT_NEAR(s.h[0], 0.380797, 1e-6);
}

TEST(Lstm, ShapeMismatch) {
    LstmParams<double> p(2, 1);
    EXPECT_THROW(lstm_step<double>(p, std::vector<double>{0}, std::vector<double>{0}, std::vector<double>{0}),
                 ShapeError);
}

TEST(Lstm, ZeroParamsSingleStepIsDegenerate) {
    LstmParams<double> p(2, 3);
    EXPECT_THROW(encode_sentence_lstm(p, Sent(Mat(1, 2, {1, 1}))), DegenerateEmbedding);
}

TEST(Lstm, CraftedHiddenStateNormalizes) {
    // saturated input/output gates: h = tanh(tanh(bc))
    LstmParams<double> p(1, 2);
    p.bi = {40, 40};
    p.bo = {40, 40};
    p.bc = {std::atanh(std::atanh(0.3)), std::atanh(std::atanh(-0.4))};
    const Sent s(Mat(1, 1, {0.7}));
    const auto h = lstm_last_hidden(p, s);
    EXPECT_NEAR(h[0], 0.3, 1e-12);
    EXPECT_NEAR(h[1], -0.4, 1e-12);
    expect_near(encode_sentence_lstm(p, s).values, std::vector<double>{0.6, 0.8}, 1e-12);
}

TEST(Lstm, WordOrderMatters) {
    std::mt19937_64 rng(17);
    const auto p = random_lstm(rng, 3, 4);
    const auto rows = random_matrix(rng, 3, 3);
    Mat swapped = rows;
    std::swap_ranges(swapped.row(0).begin(), swapped.row(0).end(), swapped.row(2).begin());
    const auto a = encode_sentence_lstm(p, Sent(rows));
    const auto b = encode_sentence_lstm(p, Sent(swapped));
    double diff = 0;
    for (std::size_t k = 0; k < a.dim(); ++k) diff += std::abs(a.values[k] - b.values[k]);
    EXPECT_GT(diff, 1e-6);
}

TEST(VideoAverage, Examples) {
    expect_near(encode_video_sa(Mat::identity(2), Vid(Mat(2, 2, {0, 2, 0, 4}))).values, std::vector<double>{0, 1},
                1e-15);
    expect_near(encode_video_sa(Mat(2, 2, {1, 1, 0, 0}), Vid(Mat(1, 2, {-1, -1}))).values,
                std::vector<double>{1, 0}, 1e-15);
}

TEST(VideoAverage, ScaleInvariant) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const auto w = random_matrix(rng, 5, 4);
        auto frames = random_matrix(rng, 1 + rng() % 6, 4);
        const auto a = encode_video_sa(w, Vid(frames));
        const double lambda = std::exp(std::uniform_real_distribution<double>(-3, 3)(rng));
        for (auto& x : frames.data()) x *= lambda;
        expect_near(a.values, encode_video_sa(w, Vid(frames)).values, 1e-9);
    }
}

TEST(Attention, IdenticalFramesGiveUniformWeights) {
    std::mt19937_64 rng(2);
    const auto p = random_attention(rng, 3, 4, 5);
    const auto h = random_matrix(rng, 1, 3).data();
    Mat frames(4, 4);
    const auto f = random_matrix(rng, 1, 4).data();
    for (std::size_t m = 0; m < 4; ++m) std::copy(f.begin(), f.end(), frames.row(m).begin());
    for (double a : attention_weights<double>(p, h, Vid(frames))) EXPECT_NEAR(a, 0.25, 1e-12);
}

TEST(Attention, SingleFrame) {
    std::mt19937_64 rng(3);
    const auto p = random_attention(rng, 3, 4, 5);
    const auto h = random_matrix(rng, 1, 3).data();
    const Vid v(random_matrix(rng, 1, 4));
    const auto alpha = attention_weights<double>(p, h, v);
    ASSERT_EQ(alpha.size(), 1u);
    EXPECT_EQ(alpha[0], 1.0);
    const auto w = random_matrix(rng, 6, 4);
    expect_near(encode_video_attention<double>(p, w, h, v).values, encode_video_sa(w, v).values, 1e-12);
}

TEST(Attention, ClosedFormSoftmaxExample) {
    // one matching unit with key [atanh(ln 2)/3, 0] gives logits [ln 2, 0]
    AttentionParams<double> p(1, 2, 1);
    p.score = {1.0};
    p.key = Mat(1, 2, {std::atanh(std::log(2.0)) / 3.0, 0.0});
    const std::vector<double> h{0.0};
    const Vid v(Mat(2, 2, {3, 0, 0, 3}));
    const auto e = attention_logits<double>(p, h, v);
    EXPECT_NEAR(e[0], std::log(2.0), 1e-12);
    EXPECT_NEAR(e[1], 0.0, 1e-12);
    expect_near(attention_weights<double>(p, h, v), std::vector<double>{2.0 / 3.0, 1.0 / 3.0}, 1e-12);
    const auto out = encode_video_attention<double>(p, Mat::identity(2), h, v);
    expect_near(out.values, std::vector<double>{2 / std::sqrt(5.0), 1 / std::sqrt(5.0)}, 1e-12);
}

TEST(Attention, WeightsArePositiveAndSumToOne) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_attention(rng, 3, 4, 5);
        const auto h = random_matrix(rng, 1, 3, 3.0).data();
        const Vid v(random_matrix(rng, 1 + rng() % 10, 4, 3.0));
        const auto alpha = attention_weights<double>(p, h, v);
        double sum = 0;
        for (double a : alpha) {
            EXPECT_GT(a, 0.0);
            sum += a;
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Attention, ShapeChecks) {
    std::mt19937_64 rng(1);
    const auto p = random_attention(rng, 3, 4, 5);
    EXPECT_THROW(attention_weights<double>(p, std::vector<double>(2), Vid(Mat(1, 4, 1.0))), ShapeError);
    EXPECT_THROW(attention_weights<double>(p, std::vector<double>(3), Vid(Mat(1, 3, 1.0))), ShapeError);
}

TEST(Model, AllArchitecturesEmitValidEmbeddings) {
    std::mt19937_64 rng(12);
    for (auto arch : {Arch::m1, Arch::m2, Arch::m3}) {
        const auto p = init_params<double>(arch, Dims{4, 6, 8, 5}, 99);
        for (int trial = 0; trial < 20; ++trial) {
            const Sent s(random_matrix(rng, 1 + rng() % 5, 4));
            const Vid v(random_matrix(rng, 1 + rng() % 5, 6));
            const auto cap = encode_caption(p, s);
            expect_embedding(cap.embedding);
            expect_embedding(encode_video(p, v, &cap));
        }
    }
}

TEST(Model, AttentionModelNeedsCaption) {
    const auto p = init_params<double>(Arch::m3, Dims{4, 6, 8, 5}, 1);
    EXPECT_THROW(encode_video(p, Vid(Mat(1, 6, 1.0))), Error);
}

TEST(Init, ShapesBoundsAndBiases) {
    const Dims d{4, 6, 8, 5};
    const auto p = init_params<double>(Arch::m3, d, 7);
    EXPECT_EQ(p.lstm.Wi.rows(), 8u);
    EXPECT_EQ(p.lstm.Wi.cols(), 4u);
    EXPECT_EQ(p.attn.query.rows(), 5u);
    EXPECT_EQ(p.attn.key.cols(), 6u);
    for (double b : p.lstm.bf) EXPECT_EQ(b, 1.0);
    for (double b : p.lstm.bi) EXPECT_EQ(b, 0.0);
    const double r = std::sqrt(6.0 / (8 + 6));
    for (double w : p.W_video.data()) EXPECT_LE(std::abs(w), r);
    EXPECT_TRUE(p.W_word.empty());
    const auto q = init_params<double>(Arch::m3, d, 7);
    EXPECT_EQ(p.attn.score, q.attn.score);
}
