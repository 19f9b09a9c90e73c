#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oemb/oemb.hpp"

namespace oemb::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kRuntime = 2;

struct RunConfig {
    TrainConfig train;
    std::size_t frame_stride = 10;
    fs::path word_table;
    fs::path train_manifest;
    fs::path valid_manifest;
    fs::path test_manifest;
    fs::path checkpoint_dir;
};

namespace detail {

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ValidationError("config key '" + key + "' has the wrong type");
    }
}

}  // namespace detail

/// Parses a RunConfig document; relative paths resolve against `base`.
inline RunConfig parse_run_config(const json& j, const fs::path& base) {
    if (!j.is_object()) {
        throw ValidationError("config must be a JSON object");
    }
    RunConfig rc;
    auto& t = rc.train;
    auto path = [&](const json& v, const std::string& key) {
        fs::path p = detail::get_as<std::string>(v, key);
        return p.is_absolute() ? p : base / p;
    };
    for (const auto& [key, v] : j.items()) {
        if (key == "arch") {
            auto a = parse_arch(detail::get_as<std::string>(v, key));
            if (!a) throw ValidationError("config 'arch' must be m1, m2 or m3");
            t.arch = *a;
        } else if (key == "loss_kind") {
            auto k = parse_loss_kind(detail::get_as<std::string>(v, key));
            if (!k) throw ValidationError("config 'loss_kind' must be pairwise or annotation");
            t.loss_kind = *k;
        } else if (key == "batch_size") t.batch_size = detail::get_as<std::size_t>(v, key);
        else if (key == "lr") t.lr = detail::get_as<double>(v, key);
        else if (key == "clip_threshold") t.clip_threshold = detail::get_as<double>(v, key);
        else if (key == "margin") t.margin = detail::get_as<double>(v, key);
        else if (key == "d_e") t.d_e = detail::get_as<std::size_t>(v, key);
        else if (key == "d_a") t.d_a = detail::get_as<std::size_t>(v, key);
        else if (key == "monitor_size") t.monitor_size = detail::get_as<std::size_t>(v, key);
        else if (key == "patience") t.patience = detail::get_as<std::size_t>(v, key);
        else if (key == "max_epochs") t.max_epochs = detail::get_as<std::size_t>(v, key);
        else if (key == "rng_seed") t.rng_seed = detail::get_as<std::uint64_t>(v, key);
        else if (key == "frame_stride") rc.frame_stride = detail::get_as<std::size_t>(v, key);
        else if (key == "word_table") rc.word_table = path(v, key);
        else if (key == "train_manifest") rc.train_manifest = path(v, key);
        else if (key == "valid_manifest") rc.valid_manifest = path(v, key);
        else if (key == "test_manifest") rc.test_manifest = path(v, key);
        else if (key == "checkpoint_dir") rc.checkpoint_dir = path(v, key);
        else throw ValidationError("unknown config key '" + key + "'");
    }
    return rc;
}

inline RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

inline void require_path(const fs::path& p, const std::string& key) {
    if (p.empty()) {
        throw ValidationError("config is missing '" + key + "'");
    }
    if (!fs::exists(p)) {
        throw ValidationError(key + " does not exist: " + p.string());
    }
}

/// Exclusive lock file; released on destruction.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (f == nullptr) {
            throw ValidationError("checkpoint directory is locked by another trainer: " + path_.string());
        }
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    fs::path path_;
};

/// Pairs from the rows of `split` that carry a feature file. Rows whose
/// tokens are all out of vocabulary are skipped and counted.
struct PairSet {
    std::vector<std::string> ids;
    std::vector<Pair<double>> pairs;
    std::size_t skipped_oov = 0;
    std::size_t caption_only = 0;
};

class FeatureCache {
public:
    const VideoFeatures<double>& get(const fs::path& p) {
        auto it = cache_.find(p.string());
        if (it == cache_.end()) {
            it = cache_.emplace(p.string(), load_video_features<double>(p)).first;
        }
        return it->second;
    }

private:
    std::map<std::string, VideoFeatures<double>> cache_;
};

inline PairSet load_pairs(const DatasetManifest& m, Split split, const WordTable& table, FeatureCache& videos) {
    PairSet out;
    for (const auto* item : m.in_split(split)) {
        if (!item->has_video()) {
            ++out.caption_only;
            continue;
        }
        SentenceFeatures<double> caption;
        try {
            caption = encode_tokens<double>(table, item->tokens);
        } catch (const ValidationError&) {
            ++out.skipped_oov;
            continue;
        }
        out.ids.push_back(item->id);
        out.pairs.push_back({std::move(caption), videos.get(item->features)});
    }
    return out;
}

struct Options {
    std::string config;
    std::string arch;
    std::string loss;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> subsample;
    std::string out;
    bool exclude_same_video = true;
    bool abort_on_insufficient = false;
    std::string phrase;
    std::vector<std::string> videos;
    std::string mc_file;
    std::size_t seeds = 10;
    std::optional<std::size_t> stride;
};

inline RunConfig resolve_config(const Options& o) {
    if (o.config.empty()) {
        throw ValidationError("--config is required");
    }
    auto rc = load_run_config(o.config);
    if (!o.arch.empty()) {
        auto a = parse_arch(o.arch);
        if (!a) throw ValidationError("--arch must be m1, m2 or m3");
        rc.train.arch = *a;
    }
    if (!o.loss.empty()) {
        auto k = parse_loss_kind(o.loss);
        if (!k) throw ValidationError("--loss must be pairwise or annotation");
        rc.train.loss_kind = *k;
    }
    if (o.seed) rc.train.rng_seed = *o.seed;
    if (o.stride) rc.frame_stride = *o.stride;
    if (!o.out.empty()) rc.checkpoint_dir = o.out;
    return rc;
}

inline fs::path checkpoint_file(const RunConfig& rc) {
    if (rc.checkpoint_dir.empty()) {
        throw ValidationError("config is missing 'checkpoint_dir' (or pass --out)");
    }
    return rc.checkpoint_dir / "model.oemb";
}

inline fs::path require_out(const Options& o) {
    if (o.out.empty()) {
        throw ValidationError("--out DIR is required for this command");
    }
    fs::create_directories(o.out);
    return o.out;
}

inline int cmd_prepare(const Options& o, std::ostream& out, std::ostream& log) {
    auto rc = resolve_config(o);
    const auto dir = require_out(o);
    std::size_t converted = 0;
    std::map<std::string, std::string> done;
    std::unordered_set<std::string> seen_manifests;
    for (auto [key, path] : {std::pair{"train_manifest", rc.train_manifest}, std::pair{"valid_manifest", rc.valid_manifest},
                             std::pair{"test_manifest", rc.test_manifest}}) {
        if (path.empty()) continue;
        require_path(path, key);
        if (!seen_manifests.insert(fs::weakly_canonical(path).string()).second) continue;
        auto manifest = load_manifest(path);
        if (fs::weakly_canonical(dir / path.filename()) == fs::weakly_canonical(path)) {
            throw ValidationError("--out must not be the directory holding " + path.string());
        }
        const auto feature_dir = dir / "features";
        fs::create_directories(feature_dir);
        std::ofstream rewritten(dir / path.filename(), std::ios::trunc);
        for (auto& item : manifest.items) {
            json j{{"id", item.id},
                   {"split", std::string(to_string(item.split))},
                   {"tokens", item.tokens},
                   {"activity_labels", item.activity_labels},
                   {"rephrase", item.rephrase}};
            if (item.has_video()) {
                auto it = done.find(item.features.string());
                if (it == done.end()) {
                    std::ifstream probe(item.features, std::ios::binary);
                    char magic[4] = {};
                    probe.read(magic, 4);
                    const bool is_vfea = probe.gcount() == 4 && std::equal(magic, magic + 4, kVfeaMagic.begin());
                    auto raw = is_vfea ? load_video_features<double>(item.features) : load_frame_text<double>(item.features);
                    const auto name = "f" + std::to_string(done.size()) + "_" + item.features.stem().string() + ".vfea";
                    save_video_features(feature_dir / name, subsample_frames(raw, rc.frame_stride));
                    it = done.emplace(item.features.string(), "features/" + name).first;
                    ++converted;
                }
                j["features"] = it->second;
            } else {
                j["features"] = nullptr;
            }
            rewritten << j.dump() << '\n';
        }
        log << key << ": " << manifest.items.size() << " rows validated\n";
    }
    out << json{{"task", "prepare"}, {"converted", converted}, {"out", dir.string()}}.dump() << '\n';
    return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& log) {
    auto rc = resolve_config(o);
    require_path(rc.word_table, "word_table");
    require_path(rc.train_manifest, "train_manifest");
    require_path(rc.valid_manifest, "valid_manifest");
    const auto ckpt = checkpoint_file(rc);
    fs::create_directories(rc.checkpoint_dir);
    DirLock lock(rc.checkpoint_dir);

    const auto table = load_word_table(rc.word_table);
    FeatureCache videos;
    const auto train_set = load_pairs(load_manifest(rc.train_manifest), Split::train, table, videos);
    const auto valid_set = load_pairs(load_manifest(rc.valid_manifest), Split::valid, table, videos);
    log << "train pairs " << train_set.pairs.size() << " (skipped " << train_set.skipped_oov
        << " all-OOV), valid pairs " << valid_set.pairs.size() << '\n';

    const auto history_path = rc.checkpoint_dir / "history.jsonl";
    std::ofstream history(history_path, std::ios::trunc);
    TrainHooks<double> hooks;
    hooks.log = &log;
    hooks.on_epoch = [&](const EpochRecord& rec, const ModelParams<double>& params, bool improved) {
        const auto line = to_json(rec).dump();
        history << line << '\n';
        history.flush();
        out << line << '\n';
        if (improved) {
            save_checkpoint(ckpt, params);
        }
    };
    auto result = train<double>(rc.train, train_set.pairs, valid_set.pairs, hooks);
    log << "best epoch " << result.best_epoch << ", checkpoint " << ckpt.string() << '\n';
    return kOk;
}

inline std::vector<std::size_t> subsample_indices(std::size_t n, std::optional<std::size_t> k, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (k && *k < n) {
        std::mt19937_64 rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(*k);
        std::sort(idx.begin(), idx.end());
    }
    return idx;
}

inline int cmd_eval_rank(const Options& o, std::ostream& out, std::ostream& log) {
    auto rc = resolve_config(o);
    require_path(rc.word_table, "word_table");
    require_path(rc.test_manifest, "test_manifest");
    const auto ckpt = checkpoint_file(rc);
    require_path(ckpt, "checkpoint");
    const auto params = load_checkpoint<double>(ckpt);
    const auto table = load_word_table(rc.word_table);
    FeatureCache videos;
    const auto all = load_pairs(load_manifest(rc.test_manifest), Split::test, table, videos);
    if (all.pairs.empty()) {
        throw ValidationError("test manifest has no caption/video pairs");
    }
    std::vector<Pair<double>> pairs;
    for (auto i : subsample_indices(all.pairs.size(), o.subsample, o.seed.value_or(0))) {
        pairs.push_back(all.pairs[i]);
    }
    log << "ranking pool of " << pairs.size() << " pairs\n";
    const auto s = score_matrix<double>(params, pairs);
    out << to_json(make_rank_report("annotation", rank_annotation(s))).dump() << '\n';
    out << to_json(make_rank_report("retrieval", rank_retrieval(s))).dump() << '\n';
    return kOk;
}

inline int cmd_build_mc(const Options& o, std::ostream& out, std::ostream& log) {
    auto rc = resolve_config(o);
    require_path(rc.test_manifest, "test_manifest");
    const auto dir = require_out(o);
    const auto manifest = load_manifest(rc.test_manifest);
    McBuildOptions opts;
    opts.exclude_same_video = o.exclude_same_video;
    opts.abort_on_insufficient = o.abort_on_insufficient;
    const auto built = build_mc_test(manifest, Split::test, o.seed.value_or(rc.train.rng_seed), opts);
    {
        std::ofstream f(dir / "mc_test.jsonl", std::ios::trunc);
        write_mc_test(f, built.questions);
    }
    {
        std::ofstream f(dir / "mc_test_blind.jsonl", std::ios::trunc);
        write_mc_test(f, built.questions, true);
    }
    if (built.skipped_unlabeled + built.skipped_insufficient > 0) {
        log << "warning: skipped " << built.skipped_unlabeled << " unlabeled and " << built.skipped_insufficient
            << " under-supplied captions\n";
    }
    out << json{{"task", "build-mc"},
                {"questions", built.questions.size()},
                {"skipped_unlabeled", built.skipped_unlabeled},
                {"skipped_insufficient", built.skipped_insufficient}}
               .dump()
        << '\n';
    return kOk;
}

inline int cmd_eval_mc(const Options& o, std::ostream& out, std::ostream&) {
    auto rc = resolve_config(o);
    require_path(rc.word_table, "word_table");
    require_path(rc.test_manifest, "test_manifest");
    if (o.mc_file.empty()) {
        throw ValidationError("--mc FILE is required");
    }
    require_path(o.mc_file, "--mc");
    const auto ckpt = checkpoint_file(rc);
    require_path(ckpt, "checkpoint");
    const auto params = load_checkpoint<double>(ckpt);
    const auto table = load_word_table(rc.word_table);
    const auto manifest = load_manifest(rc.test_manifest);
    std::ifstream in(o.mc_file);
    const auto test = read_mc_test(in, o.mc_file);

    std::map<std::string, SentenceFeatures<double>> captions;
    std::map<std::string, VideoFeatures<double>> frames;
    FeatureCache videos;
    for (const auto& q : test) {
        const auto* v = manifest.find(q.video_id);
        if (v == nullptr || !v->has_video()) {
            throw ValidationError("video id '" + q.video_id + "' has no features in the test manifest");
        }
        frames.emplace(q.video_id, videos.get(v->features));
        for (const auto& id : q.choice_ids) {
            if (captions.contains(id)) continue;
            const auto* c = manifest.find(id);
            if (c == nullptr) {
                throw ValidationError("caption id '" + id + "' is not in the test manifest");
            }
            captions.emplace(id, encode_tokens<double>(table, c->tokens));
        }
    }
    const double acc = mc_accuracy<double>(
        params, test, [&](const std::string& id) -> const SentenceFeatures<double>& { return captions.at(id); },
        [&](const std::string& id) -> const VideoFeatures<double>& { return frames.at(id); });
    out << mc_report(test.size(), acc).dump() << '\n';
    return kOk;
}

inline int cmd_attend(const Options& o, std::ostream& out, std::ostream&) {
    auto rc = resolve_config(o);
    require_path(rc.word_table, "word_table");
    if (o.phrase.empty()) throw ValidationError("--phrase is required");
    if (o.videos.empty()) throw ValidationError("--videos needs at least one video id");
    const auto ckpt = checkpoint_file(rc);
    require_path(ckpt, "checkpoint");
    const auto params = load_checkpoint<double>(ckpt);
    if (params.arch != Arch::m3) {
        throw ValidationError("attend needs an m3 checkpoint, got " + std::string(to_string(params.arch)));
    }
    const auto table = load_word_table(rc.word_table);
    std::vector<std::string> tokens;
    for (auto w : oemb::detail::split_ws(o.phrase)) tokens.emplace_back(w);
    const auto phrase = encode_tokens<double>(table, tokens);
    const auto h = lstm_last_hidden(params.lstm, phrase);

    std::vector<DatasetManifest> manifests;
    for (const auto& p : {rc.test_manifest, rc.valid_manifest, rc.train_manifest}) {
        if (!p.empty() && fs::exists(p)) manifests.push_back(load_manifest(p));
    }
    FeatureCache videos;
    for (const auto& id : o.videos) {
        const ManifestItem* item = nullptr;
        for (const auto& m : manifests) {
            if ((item = m.find(id)) != nullptr && item->has_video()) break;
            item = nullptr;
        }
        if (item == nullptr) {
            throw ValidationError("video id '" + id + "' not found in any manifest");
        }
        const auto& v = videos.get(item->features);
        const auto alpha = attention_weights<double>(params.attn, h, v);
        const auto argmax = static_cast<std::size_t>(std::max_element(alpha.begin(), alpha.end()) - alpha.begin());
        out << json{{"video_id", id}, {"frames", alpha.size()}, {"alpha", alpha}, {"argmax", argmax}}.dump() << '\n';
    }
    return kOk;
}

inline int cmd_grad_check(const Options& o, std::ostream& out, std::ostream&) {
    TrainConfig cfg;
    if (!o.config.empty()) {
        cfg = resolve_config(o).train;
    } else if (!o.loss.empty()) {
        auto k = parse_loss_kind(o.loss);
        if (!k) throw ValidationError("--loss must be pairwise or annotation");
        cfg.loss_kind = *k;
    }
    const std::uint64_t first = o.seed.value_or(0);
    std::vector<Arch> archs{Arch::m1, Arch::m2, Arch::m3};
    if (!o.arch.empty()) {
        auto a = parse_arch(o.arch);
        if (!a) throw ValidationError("--arch must be m1, m2 or m3");
        archs = {*a};
    }
    for (auto arch : archs) {
        cfg.arch = arch;
        double worst = 0;
        for (std::uint64_t s = first; s < first + std::max<std::size_t>(1, o.seeds); ++s) {
            worst = std::max(worst, grad_check(cfg, s).max_rel_error);
        }
        out << json{{"task", "grad-check"}, {"arch", std::string(to_string(arch))}, {"seeds", o.seeds},
                    {"max_rel_error", worst}}
                   .dump()
            << '\n';
    }
    return kOk;
}

/// Entry point; returns the process exit code.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& log = std::cerr) {
    CLI::App app{"Joint caption/video order-embedding toolkit", "oemb"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "run configuration (JSON)");
        sub->add_option("--arch", o.arch, "m1|m2|m3");
        sub->add_option("--loss", o.loss, "pairwise|annotation");
        sub->add_option("--seed", o.seed, "random seed");
        sub->add_option("--out", o.out, "output directory");
    };
    auto* prepare = app.add_subcommand("prepare", "validate manifests and convert frame features to VFEA");
    common(prepare);
    prepare->add_option("--stride", o.stride, "keep every n-th frame (default from config, 10)");
    auto* train_cmd = app.add_subcommand("train", "train a model");
    common(train_cmd);
    auto* eval_rank = app.add_subcommand("eval-rank", "annotation and retrieval Recall@K / medR");
    common(eval_rank);
    eval_rank->add_option("--subsample", o.subsample, "rank a seeded random subset of N pairs");
    auto* build_mc = app.add_subcommand("build-mc", "build the multiple-choice test from the test manifest");
    common(build_mc);
    build_mc->add_flag("--exclude-same-video,!--no-exclude-same-video", o.exclude_same_video,
                       "keep captions of the same video out of the distractor pool (default on)");
    build_mc->add_flag("--abort-on-insufficient", o.abort_on_insufficient,
                       "fail instead of skipping captions without enough distractors");
    auto* eval_mc = app.add_subcommand("eval-mc", "multiple-choice accuracy");
    common(eval_mc);
    eval_mc->add_option("--mc", o.mc_file, "question file written by build-mc");
    auto* attend = app.add_subcommand("attend", "per-frame attention weights of a phrase (m3)");
    common(attend);
    attend->add_option("--phrase", o.phrase, "query phrase, whitespace tokenized");
    attend->add_option("--videos", o.videos, "video ids")->expected(1, -1);
    auto* grad = app.add_subcommand("grad-check", "finite-difference gradient check per architecture");
    common(grad);
    grad->add_option("--seeds", o.seeds, "number of consecutive seeds (default 10)");

    if (argc > 1 && argv[1][0] != '-' && app.get_subcommand_no_throw(argv[1]) == nullptr) {
        log << "oemb: unknown command '" << argv[1]
            << "'; expected one of prepare, train, eval-rank, build-mc, eval-mc, attend, grad-check\n";
        return kValidation;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        log << "oemb: " << e.what() << " (see --help)\n";
        return kValidation;
    }
    try {
        if (prepare->parsed()) return cmd_prepare(o, out, log);
        if (train_cmd->parsed()) return cmd_train(o, out, log);
        if (eval_rank->parsed()) return cmd_eval_rank(o, out, log);
        if (build_mc->parsed()) return cmd_build_mc(o, out, log);
        if (eval_mc->parsed()) return cmd_eval_mc(o, out, log);
        if (attend->parsed()) return cmd_attend(o, out, log);
        if (grad->parsed()) return cmd_grad_check(o, out, log);
    } catch (const ValidationError& e) {
        log << "oemb: " << e.what() << '\n';
        return kValidation;
    } catch (const ShapeError& e) {
        log << "oemb: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        log << "oemb: " << e.what() << '\n';
        return kRuntime;
    }
    return kValidation;
}

}  // namespace oemb::cli
