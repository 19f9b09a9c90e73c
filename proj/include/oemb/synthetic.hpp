#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oemb/data.hpp"
#include "oemb/gradients.hpp"

namespace oemb::synthetic {

/// Latent-concept corpus: every pair draws a few concepts; its caption holds
/// one noisy word vector per concept plus distractor tokens, its video holds
/// frames of the summed concept visuals plus noise.
struct ConceptCorpusSpec {
    std::size_t concepts = 32;
    std::size_t concepts_per_pair = 3;
    std::size_t d_w = 16;
    std::size_t d_v = 32;
    std::size_t min_frames = 3;
    std::size_t max_frames = 8;
    std::size_t max_noise_tokens = 0;
    double token_noise = 0.2;
    double frame_noise = 0.5;
    std::size_t train = 8000;
    std::size_t valid = 200;
    std::size_t test = 100;
};

struct LabeledPair {
    Pair<double> pair;
    std::vector<std::size_t> concepts;
};

struct Corpus {
    std::vector<LabeledPair> train, valid, test;

    static std::vector<Pair<double>> pairs(const std::vector<LabeledPair>& xs) {
        std::vector<Pair<double>> out;
        out.reserve(xs.size());
        for (const auto& x : xs) {
            out.push_back(x.pair);
        }
        return out;
    }
};

namespace detail {

inline std::vector<double> gaussian(std::mt19937_64& rng, std::size_t n, double sigma) {
    std::normal_distribution<double> dist(0.0, sigma);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = dist(rng);
    }
    return v;
}

}  // namespace detail

inline Corpus make_concept_corpus(const ConceptCorpusSpec& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> words, visuals;
    for (std::size_t k = 0; k < shape.concepts; ++k) {
        words.push_back(detail::gaussian(rng, shape.d_w, 1.0));
        visuals.push_back(detail::gaussian(rng, shape.d_v, 1.0));
    }
    std::vector<std::size_t> ids(shape.concepts);
    std::iota(ids.begin(), ids.end(), 0);
    auto make = [&]() {
        LabeledPair lp;
        std::shuffle(ids.begin(), ids.end(), rng);
        lp.concepts.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(shape.concepts_per_pair));
        std::vector<std::vector<double>> tokens;
        for (auto k : lp.concepts) {
            auto t = detail::gaussian(rng, shape.d_w, shape.token_noise);
            for (std::size_t d = 0; d < shape.d_w; ++d) t[d] += words[k][d];
            tokens.push_back(std::move(t));
        }
        const auto extra = std::uniform_int_distribution<std::size_t>(0, shape.max_noise_tokens)(rng);
        for (std::size_t e = 0; e < extra; ++e) {
            tokens.push_back(detail::gaussian(rng, shape.d_w, 1.0));
        }
        std::shuffle(tokens.begin(), tokens.end(), rng);
        Matrix<double> caption(tokens.size(), shape.d_w);
        for (std::size_t r = 0; r < tokens.size(); ++r) {
            std::copy(tokens[r].begin(), tokens[r].end(), caption.row(r).begin());
        }
        const auto frames = std::uniform_int_distribution<std::size_t>(shape.min_frames, shape.max_frames)(rng);
        Matrix<double> video(frames, shape.d_v);
        for (std::size_t m = 0; m < frames; ++m) {
            auto f = detail::gaussian(rng, shape.d_v, shape.frame_noise);
            for (auto k : lp.concepts) {
                for (std::size_t d = 0; d < shape.d_v; ++d) f[d] += visuals[k][d];
            }
            std::copy(f.begin(), f.end(), video.row(m).begin());
        }
        lp.pair = {SentenceFeatures<double>(std::move(caption)), VideoFeatures<double>(std::move(video))};
        return lp;
    };
    Corpus c;
    for (std::size_t i = 0; i < shape.train; ++i) c.train.push_back(make());
    for (std::size_t i = 0; i < shape.valid; ++i) c.valid.push_back(make());
    for (std::size_t i = 0; i < shape.test; ++i) c.test.push_back(make());
    return c;
}

/// Order-sensitive corpus: every caption is a permutation of the same
/// `tokens` word vectors (plus noise), so only token order identifies it.
/// The video encodes the order through position-specific projections.
struct OrderCorpusSpec {
    std::size_t tokens = 4;
    std::size_t d_w = 16;
    std::size_t d_v = 32;
    std::size_t min_frames = 3;
    std::size_t max_frames = 8;
    double token_noise = 0.1;
    double frame_noise = 0.3;
    std::size_t train = 2000;
    std::size_t valid = 200;
    std::size_t test = 100;
};

inline Corpus make_order_corpus(const OrderCorpusSpec& shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> words;
    for (std::size_t k = 0; k < shape.tokens; ++k) {
        words.push_back(detail::gaussian(rng, shape.d_w, 1.0));
    }
    // visual code of token k at position t
    std::vector<std::vector<std::vector<double>>> codes(shape.tokens);
    for (std::size_t t = 0; t < shape.tokens; ++t) {
        for (std::size_t k = 0; k < shape.tokens; ++k) {
            codes[t].push_back(detail::gaussian(rng, shape.d_v, 1.0));
        }
    }
    auto make = [&]() {
        LabeledPair lp;
        lp.concepts.resize(shape.tokens);
        std::iota(lp.concepts.begin(), lp.concepts.end(), 0);
        std::shuffle(lp.concepts.begin(), lp.concepts.end(), rng);
        Matrix<double> caption(shape.tokens, shape.d_w);
        for (std::size_t t = 0; t < shape.tokens; ++t) {
            auto row = detail::gaussian(rng, shape.d_w, shape.token_noise);
            for (std::size_t d = 0; d < shape.d_w; ++d) row[d] += words[lp.concepts[t]][d];
            std::copy(row.begin(), row.end(), caption.row(t).begin());
        }
        const auto frames = std::uniform_int_distribution<std::size_t>(shape.min_frames, shape.max_frames)(rng);
        Matrix<double> video(frames, shape.d_v);
        for (std::size_t m = 0; m < frames; ++m) {
            auto f = detail::gaussian(rng, shape.d_v, shape.frame_noise);
            for (std::size_t t = 0; t < shape.tokens; ++t) {
                const auto& code = codes[t][lp.concepts[t]];
                for (std::size_t d = 0; d < shape.d_v; ++d) f[d] += code[d];
            }
            std::copy(f.begin(), f.end(), video.row(m).begin());
        }
        lp.pair = {SentenceFeatures<double>(std::move(caption)), VideoFeatures<double>(std::move(video))};
        return lp;
    };
    Corpus c;
    for (std::size_t i = 0; i < shape.train; ++i) c.train.push_back(make());
    for (std::size_t i = 0; i < shape.valid; ++i) c.valid.push_back(make());
    for (std::size_t i = 0; i < shape.test; ++i) c.test.push_back(make());
    return c;
}

/// Caption-only manifest whose activity labels are drawn from a fixed
/// predicate/object vocabulary; every row gets its own video id.
inline DatasetManifest make_labeled_manifest(std::size_t n, Split split, std::uint64_t seed,
                                             std::size_t predicates = 40, std::size_t objects = 60) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pred(0, predicates - 1), obj(0, objects - 1), count(1, 2);
    DatasetManifest m;
    for (std::size_t i = 0; i < n; ++i) {
        ManifestItem item;
        item.id = "clip" + std::to_string(i);
        item.split = split;
        item.features = "clip" + std::to_string(i) + ".vfea";
        item.tokens = {"caption", std::to_string(i)};
        const auto labels = count(rng);
        for (std::size_t l = 0; l < labels; ++l) {
            item.activity_labels.push_back("Pred" + std::to_string(pred(rng)) + " obj" + std::to_string(obj(rng)));
        }
        m.items.push_back(std::move(item));
    }
    return m;
}

/// Manifest view of labeled pairs (one caption and one video per item) so
/// they can feed build_mc_test; labels are the concept names.
inline DatasetManifest manifest_for(const std::vector<LabeledPair>& pairs, Split split) {
    DatasetManifest m;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        ManifestItem item;
        item.id = std::to_string(i);
        item.split = split;
        item.features = "video" + std::to_string(i);
        item.tokens = {"t"};
        for (auto k : pairs[i].concepts) {
            item.activity_labels.push_back("concept" + std::to_string(k));
        }
        m.items.push_back(std::move(item));
    }
    return m;
}

}  // namespace oemb::synthetic
