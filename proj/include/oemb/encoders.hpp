#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "oemb/data.hpp"
#include "oemb/error.hpp"
#include "oemb/params.hpp"
#include "oemb/tensor.hpp"

namespace oemb {

inline constexpr double kDegenerateNorm = 1e-12;

/// A point in the joint space: nonnegative with unit L2 norm.
template <typename Scalar>
struct Embedding {
    Vector<Scalar> values;

    std::size_t dim() const noexcept { return values.size(); }
    std::span<const Scalar> view() const noexcept { return values; }
};

/// |z| / || |z| ||. Throws DegenerateEmbedding when ||z|| < 1e-12.
template <typename Scalar>
Embedding<Scalar> abs_normalize(std::span<const Scalar> z) {
    Embedding<Scalar> e{Vector<Scalar>(z.size())};
    std::transform(z.begin(), z.end(), e.values.begin(), [](Scalar x) { return std::abs(x); });
    const Scalar n = l2_norm<Scalar>(e.values);
    if (!(n >= Scalar(kDegenerateNorm))) {
        throw DegenerateEmbedding("embedding norm below threshold before normalization");
    }
    for (auto& v : e.values) {
        v /= n;
    }
    return e;
}

template <typename Scalar>
Embedding<Scalar> encode_sentence_sa(const LinearMap<Scalar>& w_word, const SentenceFeatures<Scalar>& s) {
    require_shape(w_word.cols() == s.dim(), "W_word input dimension does not match word vectors");
    const auto mean = row_mean(s.rows);
    return abs_normalize<Scalar>(matvec<Scalar>(w_word, mean));
}

template <typename Scalar>
struct LstmState {
    Vector<Scalar> h;
    Vector<Scalar> c;
};

/// Gate activations of one step, kept for backpropagation.
template <typename Scalar>
struct LstmStepCache {
    Vector<Scalar> i, f, g, o;  // post-activation gates
    Vector<Scalar> c;           // cell state after the step
    Vector<Scalar> tanh_c;
    Vector<Scalar> h;
};

template <typename Scalar>
LstmStepCache<Scalar> lstm_step_cached(const LstmParams<Scalar>& p, std::span<const Scalar> x,
                                       std::span<const Scalar> h_prev, std::span<const Scalar> c_prev) {
    const std::size_t n = p.hidden_dim();
    require_shape(x.size() == p.input_dim(), "lstm_step: input dimension mismatch");
    require_shape(h_prev.size() == n && c_prev.size() == n, "lstm_step: state dimension mismatch");
    auto gate = [&](const Matrix<Scalar>& w, const Matrix<Scalar>& u, const Vector<Scalar>& b) {
        Vector<Scalar> a = b;
        matvec_add<Scalar>(w, x, a);
        matvec_add<Scalar>(u, h_prev, a);
        return a;
    };
    LstmStepCache<Scalar> s;
    s.i = gate(p.Wi, p.Ui, p.bi);
    s.f = gate(p.Wf, p.Uf, p.bf);
    s.g = gate(p.Wc, p.Uc, p.bc);
    s.o = gate(p.Wo, p.Uo, p.bo);
    s.c.resize(n);
    s.tanh_c.resize(n);
    s.h.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        s.i[k] = sigmoid(s.i[k]);
        s.f[k] = sigmoid(s.f[k]);
        s.g[k] = std::tanh(s.g[k]);
        s.o[k] = sigmoid(s.o[k]);
        s.c[k] = s.f[k] * c_prev[k] + s.i[k] * s.g[k];
        s.tanh_c[k] = std::tanh(s.c[k]);
        s.h[k] = s.o[k] * s.tanh_c[k];
    }
    return s;
}

template <typename Scalar>
LstmState<Scalar> lstm_step(const LstmParams<Scalar>& p, std::span<const Scalar> x, std::span<const Scalar> h_prev,
                            std::span<const Scalar> c_prev) {
    auto s = lstm_step_cached(p, x, h_prev, c_prev);
    return {std::move(s.h), std::move(s.c)};
}

/// Runs the LSTM from a zero state over every row; one cache per step.
template <typename Scalar>
std::vector<LstmStepCache<Scalar>> lstm_unroll(const LstmParams<Scalar>& p, const SentenceFeatures<Scalar>& s) {
    const Vector<Scalar> zero(p.hidden_dim(), Scalar(0));
    std::vector<LstmStepCache<Scalar>> steps;
    steps.reserve(s.length());
    for (std::size_t t = 0; t < s.length(); ++t) {
        std::span<const Scalar> h = t == 0 ? std::span<const Scalar>(zero) : steps.back().h;
        std::span<const Scalar> c = t == 0 ? std::span<const Scalar>(zero) : steps.back().c;
        steps.push_back(lstm_step_cached(p, s.rows.row(t), h, c));
    }
    return steps;
}

template <typename Scalar>
Vector<Scalar> lstm_last_hidden(const LstmParams<Scalar>& p, const SentenceFeatures<Scalar>& s) {
    return std::move(lstm_unroll(p, s).back().h);
}

template <typename Scalar>
Embedding<Scalar> encode_sentence_lstm(const LstmParams<Scalar>& p, const SentenceFeatures<Scalar>& s) {
    return abs_normalize<Scalar>(lstm_last_hidden(p, s));
}

template <typename Scalar>
Embedding<Scalar> encode_video_sa(const LinearMap<Scalar>& w_video, const VideoFeatures<Scalar>& v) {
    require_shape(w_video.cols() == v.dim(), "W_video input dimension does not match frame features");
    return abs_normalize<Scalar>(matvec<Scalar>(w_video, row_mean(v.frames)));
}

/// Raw attention logits e_i, one per frame.
template <typename Scalar>
Vector<Scalar> attention_logits(const AttentionParams<Scalar>& p, std::span<const Scalar> h_last,
                                const VideoFeatures<Scalar>& v) {
    require_shape(p.query.cols() == h_last.size(), "attention: hidden dimension mismatch");
    require_shape(p.key.cols() == v.dim(), "attention: frame dimension mismatch");
    const auto q = matvec<Scalar>(p.query, h_last);
    Vector<Scalar> e(v.length());
    Vector<Scalar> pre(p.match_dim());
    for (std::size_t m = 0; m < v.length(); ++m) {
        pre = q;
        matvec_add<Scalar>(p.key, v.frames.row(m), pre);
        Scalar acc = 0;
        for (std::size_t k = 0; k < pre.size(); ++k) {
            acc += p.score[k] * std::tanh(pre[k]);
        }
        e[m] = acc;
    }
    return e;
}

template <typename Scalar>
Vector<Scalar> softmax(std::span<const Scalar> e) {
    const Scalar mx = *std::max_element(e.begin(), e.end());
    Vector<Scalar> out(e.size());
    Scalar sum = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        out[i] = std::exp(e[i] - mx);
        sum += out[i];
    }
    for (auto& x : out) {
        x /= sum;
    }
    return out;
}

/// Softmax-normalized frame weights for the sentence state `h_last`.
template <typename Scalar>
Vector<Scalar> attention_weights(const AttentionParams<Scalar>& p, std::span<const Scalar> h_last,
                                 const VideoFeatures<Scalar>& v) {
    return softmax<Scalar>(attention_logits(p, h_last, v));
}

template <typename Scalar>
Vector<Scalar> weighted_frame_mean(const VideoFeatures<Scalar>& v, std::span<const Scalar> alpha) {
    Vector<Scalar> u(v.dim(), Scalar(0));
    for (std::size_t m = 0; m < v.length(); ++m) {
        axpy<Scalar>(alpha[m], v.frames.row(m), u);
    }
    return u;
}

template <typename Scalar>
Embedding<Scalar> encode_video_attention(const AttentionParams<Scalar>& p, const LinearMap<Scalar>& w_video,
                                         std::span<const Scalar> h_last, const VideoFeatures<Scalar>& v) {
    require_shape(w_video.cols() == v.dim(), "W_video input dimension does not match frame features");
    const auto alpha = attention_weights(p, h_last, v);
    return abs_normalize<Scalar>(matvec<Scalar>(w_video, weighted_frame_mean<Scalar>(v, alpha)));
}

/// Caption side of a model: the embedding, plus the raw last LSTM state that
/// conditions attention in m3.
template <typename Scalar>
struct CaptionEncoding {
    Embedding<Scalar> embedding;
    Vector<Scalar> h_last;
};

template <typename Scalar>
CaptionEncoding<Scalar> encode_caption(const ModelParams<Scalar>& p, const SentenceFeatures<Scalar>& s) {
    if (p.arch == Arch::m1) {
        return {encode_sentence_sa(p.W_word, s), {}};
    }
    auto h = lstm_last_hidden(p.lstm, s);
    auto e = abs_normalize<Scalar>(h);
    return {std::move(e), std::move(h)};
}

/// Video embedding as seen by `caption`; only m3 depends on the caption.
template <typename Scalar>
Embedding<Scalar> encode_video(const ModelParams<Scalar>& p, const VideoFeatures<Scalar>& v,
                               const CaptionEncoding<Scalar>* caption = nullptr) {
    if (p.arch != Arch::m3) {
        return encode_video_sa(p.W_video, v);
    }
    if (caption == nullptr) {
        throw Error("m3 video encoding requires the caption's LSTM state");
    }
    return encode_video_attention<Scalar>(p.attn, p.W_video, caption->h_last, v);
}

}  // namespace oemb
