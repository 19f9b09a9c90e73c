#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "oemb/mctest.hpp"
#include "oemb/synthetic.hpp"

using namespace oemb;

namespace {

ActivityLabelSet words(std::vector<std::string> ws) { return label_words(ws); }

std::vector<LabeledCaption> walk_pool() {
    return {{"run", words({"run road"})},
            {"sit", words({"sit chair"})},
            {"walkpark", words({"walk park"})},
            {"eat", words({"eat food"})},
            {"sleep", words({"sleep bed"})}};
}

ManifestItem item(std::string id, std::string features, std::vector<std::string> labels, bool rephrase = false) {
    ManifestItem it;
    it.id = std::move(id);
    it.split = Split::test;
    it.features = std::move(features);
    it.tokens = {"x"};
    it.activity_labels = std::move(labels);
    it.rephrase = rephrase;
    return it;
}

}  // namespace

TEST(LabelWords, Examples) {
    EXPECT_EQ(words({"walk street", "open door"}).words, (std::vector<std::string>{"door", "open", "street", "walk"}));
    EXPECT_EQ(words({"Walk Street"}).words, (std::vector<std::string>{"street", "walk"}));
    EXPECT_TRUE(words({}).empty());
    EXPECT_FALSE(words({"walk"}).intersects(words({"walks"})));
    EXPECT_TRUE(words({"Walk"}).intersects(words({"fast walk"})));
}

TEST(Distractors, ExcludeIntersectingCaptions) {
    const auto pool = walk_pool();
    const auto correct = words({"walk street"});
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        std::mt19937_64 rng(seed);
        const auto ids = sample_distractors(std::span<const LabeledCaption>(pool), correct, rng);
        ASSERT_EQ(ids.size(), 4u);
        EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 4u);
        EXPECT_EQ(std::count(ids.begin(), ids.end(), "walkpark"), 0);
    }
}

TEST(Distractors, InsufficientPoolNamesCaption) {
    const std::vector<LabeledCaption> pool{{"a", words({"run"})}, {"b", words({"sit"})}, {"c", words({"eat"})}};
    std::mt19937_64 rng(1);
    try {
        sample_distractors(std::span<const LabeledCaption>(pool), words({"walk"}), rng, 4, "clip9");
        FAIL();
    } catch (const InsufficientDistractors& e) {
        EXPECT_NE(std::string(e.what()).find("clip9"), std::string::npos);
    }
}

TEST(Distractors, SeededAndUniform) {
    std::vector<LabeledCaption> pool;
    for (int i = 0; i < 10; ++i) pool.push_back({std::to_string(i), words({"w" + std::to_string(i)})});
    std::mt19937_64 a(5), b(5);
    const auto correct = words({"x"});
    EXPECT_EQ(sample_distractors(std::span<const LabeledCaption>(pool), correct, a),
              sample_distractors(std::span<const LabeledCaption>(pool), correct, b));
    std::map<std::string, int> counts;
    std::mt19937_64 rng(9);
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        for (const auto& id : sample_distractors(std::span<const LabeledCaption>(pool), correct, rng)) ++counts[id];
    }
    // each id is chosen with probability 0.4
    const double mean = 0.4 * trials, sd = std::sqrt(trials * 0.4 * 0.6);
    for (const auto& [id, c] : counts) EXPECT_NEAR(c, mean, 4 * sd) << id;
}

TEST(Build, SingleEligibleVideo) {
    DatasetManifest m;
    m.items.push_back(item("q", "q.vfea", {"walk street"}));
    for (const char* l : {"run road", "sit chair", "eat food", "sleep bed"}) {
        m.items.push_back(item(std::string("c_") + l, "", {l}));
    }
    const auto r = build_mc_test(m, Split::test, 1);
    ASSERT_EQ(r.questions.size(), 1u);
    const auto& q = r.questions[0];
    EXPECT_EQ(q.choice_ids[q.answer_index], "q");
    EXPECT_EQ(std::set<std::string>(q.choice_ids.begin(), q.choice_ids.end()).size(), 5u);
}

TEST(Build, SkipsUnlabeledRephrasesAndInsufficient) {
    DatasetManifest m;
    m.items.push_back(item("unlabeled", "u.vfea", {}));
    m.items.push_back(item("reph", "r.vfea", {"walk"}, true));
    m.items.push_back(item("lonely", "l.vfea", {"walk"}));
    for (const char* l : {"walk a", "walk b", "run", "sit"}) m.items.push_back(item(l, "", {l}));
    const auto r = build_mc_test(m, Split::test, 1);
    EXPECT_EQ(r.skipped_unlabeled, 1u);
    // 'lonely' sees only unlabeled, reph (walk), run, sit, walk a/b: 3 eligible
    EXPECT_EQ(r.skipped_insufficient, 1u);
    EXPECT_TRUE(r.questions.empty());
    McBuildOptions strict;
    strict.abort_on_insufficient = true;
    EXPECT_THROW(build_mc_test(m, Split::test, 1, strict), InsufficientDistractors);
}

TEST(Build, SameVideoExclusion) {
    DatasetManifest m;
    m.items.push_back(item("q", "shared.vfea", {"walk"}));
    m.items.push_back(item("twin", "shared.vfea", {"drive car"}, true));
    for (const char* l : {"run", "sit", "eat"}) m.items.push_back(item(l, "", {l}));
    EXPECT_TRUE(build_mc_test(m, Split::test, 1).questions.empty());
    McBuildOptions loose;
    loose.exclude_same_video = false;
    EXPECT_EQ(build_mc_test(m, Split::test, 1, loose).questions.size(), 1u);
}

TEST(Build, OnlySameSplitDistractors) {
    auto m = synthetic::make_labeled_manifest(200, Split::test, 4);
    auto other = synthetic::make_labeled_manifest(200, Split::train, 5);
    for (auto& it : other.items) {
        it.id = "train_" + it.id;
        m.items.push_back(it);
    }
    const auto r = build_mc_test(m, Split::test, 3);
    EXPECT_FALSE(r.questions.empty());
    for (const auto& q : r.questions)
        for (const auto& id : q.choice_ids) EXPECT_EQ(id.rfind("train_", 0), std::string::npos);
}

TEST(Build, InvariantsAndDeterminism) {
    const auto m = synthetic::make_labeled_manifest(500, Split::test, 7);
    const auto a = build_mc_test(m, Split::test, 11);
    const auto b = build_mc_test(m, Split::test, 11);
    ASSERT_EQ(a.questions.size(), 500u);
    EXPECT_EQ(a.questions, b.questions);
    EXPECT_NE(a.questions, build_mc_test(m, Split::test, 12).questions);
    for (const auto& q : a.questions) {
        const auto correct = label_words(m.find(q.video_id)->activity_labels);
        EXPECT_EQ(q.choice_ids[q.answer_index], q.video_id);
        for (std::size_t k = 0; k < kMcChoices; ++k) {
            if (k == q.answer_index) continue;
            EXPECT_FALSE(label_words(m.find(q.choice_ids[k])->activity_labels).intersects(correct));
        }
    }
}

TEST(File, RoundTripAndBlind) {
    const auto m = synthetic::make_labeled_manifest(50, Split::test, 7);
    const auto qs = build_mc_test(m, Split::test, 1).questions;
    std::stringstream full, blind;
    write_mc_test(full, qs);
    write_mc_test(blind, qs, true);
    EXPECT_EQ(read_mc_test(full), qs);
    EXPECT_EQ(blind.str().find("answer"), std::string::npos);
    EXPECT_THROW(read_mc_test(blind), ParseError);
    std::stringstream bad(R"({"video_id":"a","choices":["a","b"],"answer":0})");
    EXPECT_THROW(read_mc_test(bad), ParseError);
}
