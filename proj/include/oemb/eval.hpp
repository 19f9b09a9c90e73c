#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oemb/encoders.hpp"
#include "oemb/gradients.hpp"
#include "oemb/mctest.hpp"
#include "oemb/objective.hpp"
#include "oemb/parallel.hpp"

namespace oemb {

/// Rank of the ground-truth item for each query, 1-based.
using RankList = std::vector<std::size_t>;

namespace detail {

inline void require_pool(std::size_t n) {
    if (n == 0) {
        throw ValidationError("ranking needs a non-empty pool");
    }
}

}  // namespace detail

/// Videos as queries over all captions: column i of the score matrix.
/// Ties count in favor of the ground truth.
template <typename Scalar>
RankList rank_annotation(const ScoreMatrix<Scalar>& s) {
    require_shape(s.rows() == s.cols(), "rank_annotation: square score matrix required");
    detail::require_pool(s.rows());
    RankList ranks(s.cols(), 1);
    for (std::size_t i = 0; i < s.cols(); ++i) {
        for (std::size_t j = 0; j < s.rows(); ++j) {
            if (j != i && s(j, i) > s(i, i)) {
                ++ranks[i];
            }
        }
    }
    return ranks;
}

/// Captions as queries over all videos: row i of the score matrix.
template <typename Scalar>
RankList rank_retrieval(const ScoreMatrix<Scalar>& s) {
    require_shape(s.rows() == s.cols(), "rank_retrieval: square score matrix required");
    detail::require_pool(s.rows());
    RankList ranks(s.rows(), 1);
    for (std::size_t i = 0; i < s.rows(); ++i) {
        for (std::size_t j = 0; j < s.cols(); ++j) {
            if (j != i && s(i, j) > s(i, i)) {
                ++ranks[i];
            }
        }
    }
    return ranks;
}

/// s(i, j) = S(caption_i, video_j) under the model, without training caches.
template <typename Scalar>
ScoreMatrix<Scalar> score_matrix(const ModelParams<Scalar>& p, std::span<const SentenceFeatures<Scalar>> captions,
                                 std::span<const VideoFeatures<Scalar>> videos) {
    const std::size_t nc = captions.size();
    const std::size_t nv = videos.size();
    std::vector<detail::CaptionCache<Scalar>> cap(nc);
    std::vector<detail::VideoCache<Scalar>> vid(nv);
    parallel_for(nc, [&](std::size_t i) {
        auto enc = encode_caption(p, captions[i]);
        cap[i].out.e = std::move(enc.embedding.values);
        if (p.arch == Arch::m3) {
            cap[i].query = matvec<Scalar>(p.attn.query, enc.h_last);
        }
    });
    parallel_for(nv, [&](std::size_t j) {
        const auto& v = videos[j];
        if (p.arch != Arch::m3) {
            vid[j].out.e = encode_video_sa(p.W_video, v).values;
            return;
        }
        require_shape(v.dim() == p.dims.video, "video frame dimension does not match the model");
        vid[j].keyed = Matrix<Scalar>(v.length(), p.attn.match_dim());
        vid[j].mapped = Matrix<Scalar>(v.length(), p.dims.embed);
        for (std::size_t m = 0; m < v.length(); ++m) {
            auto k = matvec<Scalar>(p.attn.key, v.frames.row(m));
            std::copy(k.begin(), k.end(), vid[j].keyed.row(m).begin());
            auto w = matvec<Scalar>(p.W_video, v.frames.row(m));
            std::copy(w.begin(), w.end(), vid[j].mapped.row(m).begin());
        }
    });
    ScoreMatrix<Scalar> s(nc, nv);
    parallel_for(nc, [&](std::size_t i) {
        for (std::size_t j = 0; j < nv; ++j) {
            if (p.arch == Arch::m3) {
                auto pc = detail::attend_pair(p, cap[i], vid[j], std::ptrdiff_t(j));
                s(i, j) = order_similarity<Scalar>(cap[i].out.e, pc.out.e);
            } else {
                s(i, j) = order_similarity<Scalar>(cap[i].out.e, vid[j].out.e);
            }
        }
    });
    return s;
}

template <typename Scalar>
ScoreMatrix<Scalar> score_matrix(const ModelParams<Scalar>& p, std::span<const Pair<Scalar>> pairs) {
    std::vector<SentenceFeatures<Scalar>> captions;
    std::vector<VideoFeatures<Scalar>> videos;
    for (const auto& pr : pairs) {
        captions.push_back(pr.caption);
        videos.push_back(pr.video);
    }
    return score_matrix<Scalar>(p, captions, videos);
}

/// videos[i] is the ground truth of captions[i].
template <typename Scalar>
RankList rank_annotation(const ModelParams<Scalar>& p, std::span<const VideoFeatures<Scalar>> videos,
                         std::span<const SentenceFeatures<Scalar>> captions) {
    require_shape(videos.size() == captions.size(), "videos and captions must pair up");
    detail::require_pool(videos.size());
    return rank_annotation(score_matrix(p, captions, videos));
}

template <typename Scalar>
RankList rank_retrieval(const ModelParams<Scalar>& p, std::span<const VideoFeatures<Scalar>> videos,
                        std::span<const SentenceFeatures<Scalar>> captions) {
    require_shape(videos.size() == captions.size(), "videos and captions must pair up");
    detail::require_pool(videos.size());
    return rank_retrieval(score_matrix(p, captions, videos));
}

/// Percentage of ranks <= k.
inline double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
    if (ranks.empty()) throw ValidationError("recall_at_k: empty rank list");
    if (k == 0) throw ValidationError("recall_at_k: k must be positive");
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
}

/// Median; an even count averages the two middle values.
inline double median_rank(std::span<const std::size_t> ranks) {
    if (ranks.empty()) throw ValidationError("median_rank: empty rank list");
    std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    if (n % 2 == 1) {
        return static_cast<double>(sorted[n / 2]);
    }
    return 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);
}

struct RankReport {
    std::string task;
    std::size_t pool_size = 0;
    double r1 = 0, r5 = 0, r10 = 0;
    double medr = 0;
};

inline RankReport make_rank_report(std::string task, std::span<const std::size_t> ranks) {
    return {std::move(task), ranks.size(), recall_at_k(ranks, 1), recall_at_k(ranks, 5), recall_at_k(ranks, 10),
            median_rank(ranks)};
}

inline nlohmann::json to_json(const RankReport& r) {
    return {{"task", r.task},
            {"pool_size", r.pool_size},
            {"r_at", {{"1", r.r1}, {"5", r.r5}, {"10", r.r10}}},
            {"medr", r.medr}};
}

/// Index of the highest score; ties go to the lowest index.
template <typename Scalar>
std::size_t mc_answer(std::span<const Scalar> scores) {
    if (scores.size() != kMcChoices) {
        throw ValidationError("a multiple-choice question needs exactly 5 choices, got " +
                              std::to_string(scores.size()));
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k) {
        if (scores[k] > scores[best]) {
            best = k;
        }
    }
    return best;
}

template <typename Scalar>
std::size_t mc_answer(const ModelParams<Scalar>& p, const VideoFeatures<Scalar>& video,
                      std::span<const SentenceFeatures<Scalar>> choices) {
    if (choices.size() != kMcChoices) {
        throw ValidationError("a multiple-choice question needs exactly 5 choices, got " +
                              std::to_string(choices.size()));
    }
    const auto s = score_matrix<Scalar>(p, choices, std::span<const VideoFeatures<Scalar>>(&video, 1));
    std::vector<Scalar> scores(kMcChoices);
    for (std::size_t k = 0; k < kMcChoices; ++k) {
        scores[k] = s(k, 0);
    }
    return mc_answer<Scalar>(scores);
}

/// Percentage of questions where `answer(q)` equals the ground-truth index.
inline double mc_accuracy(std::span<const McQuestion> test, const std::function<std::size_t(const McQuestion&)>& answer) {
    if (test.empty()) throw ValidationError("mc_accuracy: empty test");
    std::vector<std::size_t> chosen(test.size());
    parallel_for(test.size(), [&](std::size_t q) { chosen[q] = answer(test[q]); });
    std::size_t correct = 0;
    for (std::size_t q = 0; q < test.size(); ++q) {
        correct += chosen[q] == test[q].answer_index ? 1 : 0;
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(test.size());
}

/// Scores each question with the model; `caption` and `video` resolve ids.
template <typename Scalar>
double mc_accuracy(const ModelParams<Scalar>& p, std::span<const McQuestion> test,
                   const std::function<const SentenceFeatures<Scalar>&(const std::string&)>& caption,
                   const std::function<const VideoFeatures<Scalar>&(const std::string&)>& video) {
    return mc_accuracy(test, [&](const McQuestion& q) {
        std::vector<SentenceFeatures<Scalar>> choices;
        for (const auto& id : q.choice_ids) {
            choices.push_back(caption(id));
        }
        return mc_answer<Scalar>(p, video(q.video_id), choices);
    });
}

inline nlohmann::json mc_report(std::size_t n, double accuracy) {
    return {{"task", "mc"}, {"n", n}, {"accuracy", accuracy}};
}

}  // namespace oemb
