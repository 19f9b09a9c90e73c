#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "oemb/data.hpp"
#include "oemb/error.hpp"

namespace oemb {

inline constexpr std::size_t kMcChoices = 5;

/// Lowercased words of all activity phrases of one caption; sorted, unique.
struct ActivityLabelSet {
    std::vector<std::string> words;

    bool empty() const noexcept { return words.empty(); }

    bool intersects(const ActivityLabelSet& other) const {
        auto a = words.begin();
        auto b = other.words.begin();
        while (a != words.end() && b != other.words.end()) {
            if (*a == *b) return true;
            if (*a < *b) ++a; else ++b;
        }
        return false;
    }

    bool operator==(const ActivityLabelSet&) const = default;
};

inline ActivityLabelSet label_words(std::span<const std::string> phrases) {
    ActivityLabelSet out;
    for (const auto& phrase : phrases) {
        for (auto w : detail::split_ws(phrase)) {
            std::string word(w);
            std::transform(word.begin(), word.end(), word.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            out.words.push_back(std::move(word));
        }
    }
    std::sort(out.words.begin(), out.words.end());
    out.words.erase(std::unique(out.words.begin(), out.words.end()), out.words.end());
    return out;
}

struct LabeledCaption {
    std::string id;
    ActivityLabelSet words;
};

class InsufficientDistractors : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Draws `n` distinct ids uniformly without replacement from the pool items
/// whose words do not intersect `correct`.
template <typename Rng>
std::vector<std::string> sample_distractors(std::span<const LabeledCaption> pool, const ActivityLabelSet& correct,
                                            Rng& rng, std::size_t n = kMcChoices - 1,
                                            std::string_view caption = "") {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!pool[i].words.intersects(correct)) {
            eligible.push_back(i);
        }
    }
    if (eligible.size() < n) {
        throw InsufficientDistractors("caption '" + std::string(caption) + "': only " +
                                      std::to_string(eligible.size()) + " eligible distractors, need " +
                                      std::to_string(n));
    }
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, eligible.size() - 1);
        std::swap(eligible[k], eligible[pick(rng)]);
        out.push_back(pool[eligible[k]].id);
    }
    return out;
}

struct McQuestion {
    std::string video_id;
    std::array<std::string, kMcChoices> choice_ids;
    std::size_t answer_index = 0;

    bool operator==(const McQuestion&) const = default;
};

struct McBuildOptions {
    /// Keep captions that share the question's feature file out of its pool.
    bool exclude_same_video = true;
    /// Abort on a caption without enough distractors instead of skipping it.
    bool abort_on_insufficient = false;
};

struct McBuildResult {
    std::vector<McQuestion> questions;
    std::size_t skipped_unlabeled = 0;
    std::size_t skipped_insufficient = 0;
};

/// 64-bit FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Per-question generator derived from (seed, video id).
inline std::mt19937_64 question_rng(std::uint64_t seed, std::string_view video_id) {
    const std::uint64_t h = fnv1a(video_id);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    return std::mt19937_64(seq);
}

/// One question per video of `split` whose caption has activity labels.
/// Distractors come from the captions of the same split.
inline McBuildResult build_mc_test(const DatasetManifest& manifest, Split split, std::uint64_t seed,
                                   const McBuildOptions& opts = {}) {
    const auto items = manifest.in_split(split);
    std::vector<LabeledCaption> labeled;
    labeled.reserve(items.size());
    for (const auto* item : items) {
        labeled.push_back({item->id, label_words(item->activity_labels)});
    }
    McBuildResult out;
    std::vector<LabeledCaption> pool;
    for (std::size_t q = 0; q < items.size(); ++q) {
        const auto& item = *items[q];
        if (!item.has_video() || item.rephrase) {
            continue;
        }
        if (labeled[q].words.empty()) {
            ++out.skipped_unlabeled;
            continue;
        }
        pool.clear();
        for (std::size_t k = 0; k < items.size(); ++k) {
            if (k == q) continue;
            if (opts.exclude_same_video && items[k]->has_video() && items[k]->features == item.features) continue;
            pool.push_back(labeled[k]);
        }
        auto rng = question_rng(seed, item.id);
        std::vector<std::string> distractors;
        try {
            distractors = sample_distractors(std::span<const LabeledCaption>(pool), labeled[q].words, rng,
                                             kMcChoices - 1, item.id);
        } catch (const InsufficientDistractors&) {
            if (opts.abort_on_insufficient) {
                throw;
            }
            ++out.skipped_insufficient;
            continue;
        }
        McQuestion question;
        question.video_id = item.id;
        question.answer_index = std::uniform_int_distribution<std::size_t>(0, kMcChoices - 1)(rng);
        for (std::size_t c = 0, d = 0; c < kMcChoices; ++c) {
            question.choice_ids[c] = c == question.answer_index ? item.id : distractors[d++];
        }
        out.questions.push_back(std::move(question));
    }
    return out;
}

/// One JSON object per line; `blind` omits the answer.
inline void write_mc_test(std::ostream& out, std::span<const McQuestion> questions, bool blind = false) {
    for (const auto& q : questions) {
        nlohmann::json j;
        j["video_id"] = q.video_id;
        j["choices"] = std::vector<std::string>(q.choice_ids.begin(), q.choice_ids.end());
        if (!blind) {
            j["answer"] = q.answer_index;
        }
        out << j.dump() << '\n';
    }
}

inline std::vector<McQuestion> read_mc_test(std::istream& in, const std::string& source = "<stream>") {
    std::vector<McQuestion> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::split_ws(line).empty()) {
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(line);
            McQuestion q;
            q.video_id = j.at("video_id").get<std::string>();
            const auto choices = j.at("choices").get<std::vector<std::string>>();
            if (choices.size() != kMcChoices) {
                throw ValidationError("expected exactly 5 choices");
            }
            std::copy(choices.begin(), choices.end(), q.choice_ids.begin());
            if (!j.contains("answer")) {
                throw ValidationError("missing 'answer' (blind files cannot be scored)");
            }
            q.answer_index = j.at("answer").get<std::size_t>();
            if (q.answer_index >= kMcChoices) {
                throw ValidationError("answer out of range");
            }
            out.push_back(std::move(q));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source, lineno, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(source, lineno, e.what());
        }
    }
    return out;
}

}  // namespace oemb
