#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "oemb/config.hpp"
#include "oemb/gradients.hpp"
#include "oemb/optim.hpp"
#include "oemb/params.hpp"

namespace oemb {

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0;
    double monitor_loss = 0;
    double wall_ms = 0;
};

inline nlohmann::json to_json(const EpochRecord& r) {
    return {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"monitor_loss", r.monitor_loss},
            {"wall_ms", r.wall_ms}};
}

template <typename Scalar>
struct TrainResult {
    ModelParams<Scalar> params;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    std::size_t skipped_batches = 0;
};

template <typename Scalar>
struct TrainHooks {
    /// Called after every epoch; `improved` marks a new best monitor loss.
    std::function<void(const EpochRecord&, const ModelParams<Scalar>&, bool improved)> on_epoch;
    std::ostream* log = &std::cerr;
};

/// Splits `order` into consecutive batches of `size`; a trailing batch of one
/// is folded into its predecessor so every batch has contrastive items.
inline std::vector<std::span<const std::size_t>> make_batches(std::span<const std::size_t> order, std::size_t size) {
    std::vector<std::span<const std::size_t>> out;
    for (std::size_t b = 0; b < order.size(); b += size) {
        out.push_back(order.subspan(b, std::min(size, order.size() - b)));
    }
    if (out.size() > 1 && out.back().size() < 2) {
        const auto last = out.back();
        out.pop_back();
        out.back() = order.subspan(out.back().data() - order.data(), out.back().size() + last.size());
    }
    return out;
}

namespace detail {

template <typename Scalar>
std::vector<Pair<Scalar>> gather(std::span<const Pair<Scalar>> data, std::span<const std::size_t> idx) {
    std::vector<Pair<Scalar>> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        out.push_back(data[i]);
    }
    return out;
}

}  // namespace detail

/// Mean batch loss over fixed consecutive batches of `pairs`.
template <typename Scalar>
double evaluate_loss(const ModelParams<Scalar>& p, std::span<const Pair<Scalar>> pairs, const TrainConfig& cfg) {
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batches = make_batches(order, cfg.batch_size);
    double total = 0;
    for (auto idx : batches) {
        const auto batch = detail::gather(pairs, idx);
        total += static_cast<double>(batch_loss<Scalar>(p, batch, static_cast<Scalar>(cfg.margin), cfg.loss_kind));
    }
    return total / static_cast<double>(batches.size());
}

inline void validate(const TrainConfig& cfg) {
    if (cfg.batch_size < 2) throw ValidationError("batch_size must be at least 2");
    if (cfg.lr < 0) throw ValidationError("lr must be nonnegative");
    if (!(cfg.clip_threshold > 0)) throw ValidationError("clip_threshold must be positive");
    if (cfg.margin < 0) throw ValidationError("margin must be nonnegative");
    if (cfg.d_e == 0 || cfg.d_a == 0) throw ValidationError("d_e and d_a must be positive");
    if (cfg.monitor_size < 2) throw ValidationError("monitor_size must be at least 2");
    if (cfg.max_epochs == 0) throw ValidationError("max_epochs must be positive");
}

namespace detail {

/// Independent streams for initialization, monitor selection and shuffling.
inline std::array<std::uint64_t, 3> stream_seeds(std::uint64_t seed) {
    std::seed_seq seq{seed, std::uint64_t{0x6f656d62}};
    std::array<std::uint64_t, 3> seeds{};
    seq.generate(seeds.begin(), seeds.end());
    return seeds;
}

}  // namespace detail

/// The parameters `train` starts from for this config and data shape.
template <typename Scalar>
ModelParams<Scalar> initial_params(const TrainConfig& cfg, std::size_t d_w, std::size_t d_v) {
    return init_params<Scalar>(cfg.arch, Dims{d_w, d_v, cfg.d_e, cfg.d_a}, detail::stream_seeds(cfg.rng_seed)[0]);
}

/// Shuffled-minibatch Adam training with early stopping on a fixed monitor
/// subset of `valid`. Returns the best-monitor parameters.
template <typename Scalar>
TrainResult<Scalar> train(const TrainConfig& cfg, std::span<const Pair<Scalar>> train_set,
                          std::span<const Pair<Scalar>> valid_set, const TrainHooks<Scalar>& hooks = {}) {
    validate(cfg);
    if (train_set.size() < 2) throw ValidationError("training set needs at least two pairs");
    if (valid_set.size() < 2) throw ValidationError("validation set needs at least two pairs");

    const Dims dims{train_set[0].caption.dim(), train_set[0].video.dim(), cfg.d_e, cfg.d_a};
    const auto seeds = detail::stream_seeds(cfg.rng_seed);
    auto params = init_params<Scalar>(cfg.arch, dims, seeds[0]);

    std::vector<std::size_t> monitor_idx(valid_set.size());
    std::iota(monitor_idx.begin(), monitor_idx.end(), 0);
    if (valid_set.size() > cfg.monitor_size) {
        std::mt19937_64 pick(seeds[1]);
        std::shuffle(monitor_idx.begin(), monitor_idx.end(), pick);
        monitor_idx.resize(cfg.monitor_size);
        std::sort(monitor_idx.begin(), monitor_idx.end());
    }
    const auto monitor = detail::gather(valid_set, monitor_idx);

    std::mt19937_64 rng(seeds[2]);
    AdamState<Scalar> adam(params);
    TrainResult<Scalar> result{params, {}, 0, 0};
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::vector<std::size_t> order(train_set.size());

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        std::size_t used = 0;
        std::size_t step = 0;
        for (auto idx : make_batches(order, cfg.batch_size)) {
            ++step;
            const auto batch = detail::gather(train_set, idx);
            BatchGradients<Scalar> bg;
            try {
                bg = batch_gradients<Scalar>(params, batch, cfg);
            } catch (const DegenerateEmbedding& e) {
                ++result.skipped_batches;
                if (hooks.log) {
                    *hooks.log << "epoch " << epoch << " step " << step << ": batch rejected, sample "
                               << (e.sample() >= 0 ? idx[static_cast<std::size_t>(e.sample())] : 0) << ": "
                               << e.what() << '\n';
                }
                continue;
            }
            if (!std::isfinite(static_cast<double>(bg.loss))) {
                throw Error("non-finite training loss at epoch " + std::to_string(epoch) + " step " +
                            std::to_string(step));
            }
            clip_gradients(bg.grads, static_cast<Scalar>(cfg.clip_threshold));
            adam_step(params, bg.grads, adam, static_cast<Scalar>(cfg.lr));
            loss_sum += static_cast<double>(bg.loss);
            ++used;
        }
        const double monitor_loss = evaluate_loss<Scalar>(params, monitor, cfg);
        if (!std::isfinite(monitor_loss)) {
            throw Error("non-finite monitor loss at epoch " + std::to_string(epoch));
        }
        EpochRecord rec{epoch, used ? loss_sum / static_cast<double>(used) : 0.0, monitor_loss,
                        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()};
        result.history.push_back(rec);
        const bool improved = monitor_loss < best;
        if (improved) {
            best = monitor_loss;
            result.params = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (hooks.on_epoch) {
            hooks.on_epoch(rec, params, improved);
        }
        if (since_best >= cfg.patience) {
            break;
        }
    }
    return result;
}

struct GradCheckReport {
    double max_rel_error = 0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
};

/// Random tiny pairs: d_w=3, d_v=4, three pairs, 2-4 tokens and frames each.
inline std::vector<Pair<double>> grad_check_batch(std::mt19937_64& rng, std::size_t dw = 3, std::size_t dv = 4,
                                                  std::size_t b = 3) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> len(2, 4);
    auto random_matrix = [&](std::size_t rows, std::size_t cols) {
        Matrix<double> m(rows, cols);
        for (auto& x : m.data()) {
            x = normal(rng);
        }
        return m;
    };
    std::vector<Pair<double>> batch;
    for (std::size_t i = 0; i < b; ++i) {
        batch.push_back({SentenceFeatures<double>(random_matrix(len(rng), dw)),
                         VideoFeatures<double>(random_matrix(len(rng), dv))});
    }
    return batch;
}

/// Compares analytic batch gradients with central differences (h = 1e-5)
/// on a random tiny instance, in double precision.
/// Error per coordinate: |a - n| / max(1e-8, |a| + |n|).
inline GradCheckReport grad_check(const TrainConfig& cfg, std::uint64_t seed) {
    constexpr double h = 1e-5;
    std::mt19937_64 rng(seed);
    const Dims dims{3, 4, 5, 4};
    auto params = init_params<double>(cfg.arch, dims, rng());
    const auto batch = grad_check_batch(rng, dims.word, dims.video);
    const auto analytic = batch_gradients<double>(params, batch, cfg.margin, cfg.loss_kind).grads;

    GradCheckReport report;
    auto p = params.tensors();
    const auto a = analytic.tensors();
    for (std::size_t t = 0; t < p.size(); ++t) {
        for (std::size_t k = 0; k < p[t].values.size(); ++k) {
            const double orig = p[t].values[k];
            p[t].values[k] = orig + h;
            const double up = batch_loss<double>(params, batch, cfg.margin, cfg.loss_kind);
            p[t].values[k] = orig - h;
            const double down = batch_loss<double>(params, batch, cfg.margin, cfg.loss_kind);
            p[t].values[k] = orig;
            const double numeric = (up - down) / (2 * h);
            const double an = a[t].values[k];
            const double err = std::abs(an - numeric) / std::max(1e-8, std::abs(an) + std::abs(numeric));
            ++report.coordinates;
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_tensor = std::string(p[t].name);
                report.worst_index = k;
            }
        }
    }
    return report;
}

}  // namespace oemb
