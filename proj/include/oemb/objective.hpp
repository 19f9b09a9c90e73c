#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "oemb/error.hpp"
#include "oemb/tensor.hpp"

namespace oemb {

/// -|| max(0, c - v) ||^2. Zero iff c <= v componentwise; asymmetric.
template <typename Scalar>
Scalar order_similarity(std::span<const Scalar> caption, std::span<const Scalar> video) {
    require_shape(caption.size() == video.size(), "order_similarity: dimension mismatch");
    Scalar acc = 0;
    for (std::size_t k = 0; k < caption.size(); ++k) {
        const Scalar d = caption[k] - video[k];
        if (d > Scalar(0)) {
            acc += d * d;
        }
    }
    return -acc;
}

/// s(i, j) = S(caption_i, video_j); the diagonal holds ground-truth pairs.
template <typename Scalar>
using ScoreMatrix = Matrix<Scalar>;

enum class LossKind { pairwise, annotation };

inline std::string_view to_string(LossKind k) { return k == LossKind::pairwise ? "pairwise" : "annotation"; }

inline std::optional<LossKind> parse_loss_kind(std::string_view s) {
    if (s == "pairwise") return LossKind::pairwise;
    if (s == "annotation") return LossKind::annotation;
    return std::nullopt;
}

/// Loss value and its subgradient with respect to every score entry.
/// The hinge max(0, x) takes subgradient 0 at x = 0.
template <typename Scalar>
struct LossAndGradient {
    Scalar loss = 0;
    ScoreMatrix<Scalar> grad;
};

template <typename Scalar>
LossAndGradient<Scalar> rank_loss_with_gradient(const ScoreMatrix<Scalar>& s, Scalar margin, LossKind kind) {
    require_shape(s.rows() == s.cols(), "rank loss needs a square score matrix");
    if (margin < Scalar(0)) {
        throw ValidationError("ranking margin must be nonnegative");
    }
    const std::size_t b = s.rows();
    LossAndGradient<Scalar> out{Scalar(0), ScoreMatrix<Scalar>(b, b)};
    for (std::size_t i = 0; i < b; ++i) {
        const Scalar gt = s(i, i);
        for (std::size_t j = 0; j < b; ++j) {
            if (j == i) {
                continue;
            }
            // contrastive caption j against video i
            const Scalar caption_term = margin - gt + s(j, i);
            if (caption_term > Scalar(0)) {
                out.loss += caption_term;
                out.grad(i, i) -= Scalar(1);
                out.grad(j, i) += Scalar(1);
            }
            if (kind == LossKind::pairwise) {
                // contrastive video j against caption i
                const Scalar video_term = margin - gt + s(i, j);
                if (video_term > Scalar(0)) {
                    out.loss += video_term;
                    out.grad(i, i) -= Scalar(1);
                    out.grad(i, j) += Scalar(1);
                }
            }
        }
    }
    return out;
}

template <typename Scalar>
Scalar pairwise_rank_loss(const ScoreMatrix<Scalar>& s, Scalar margin) {
    return rank_loss_with_gradient(s, margin, LossKind::pairwise).loss;
}

template <typename Scalar>
Scalar annotation_rank_loss(const ScoreMatrix<Scalar>& s, Scalar margin) {
    return rank_loss_with_gradient(s, margin, LossKind::annotation).loss;
}

template <typename Scalar>
Scalar rank_loss(const ScoreMatrix<Scalar>& s, Scalar margin, LossKind kind) {
    return rank_loss_with_gradient(s, margin, kind).loss;
}

}  // namespace oemb
