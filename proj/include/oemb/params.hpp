#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "oemb/error.hpp"
#include "oemb/tensor.hpp"

namespace oemb {

/// m1: averaged words + averaged frames; m2: LSTM + averaged frames;
/// m3: LSTM + attention-weighted frames.
enum class Arch { m1, m2, m3 };

inline std::string_view to_string(Arch a) {
    switch (a) {
        case Arch::m1: return "m1";
        case Arch::m2: return "m2";
        case Arch::m3: return "m3";
    }
    return "?";
}

inline std::optional<Arch> parse_arch(std::string_view s) {
    if (s == "m1") return Arch::m1;
    if (s == "m2") return Arch::m2;
    if (s == "m3") return Arch::m3;
    return std::nullopt;
}

inline bool uses_lstm(Arch a) { return a != Arch::m1; }
inline bool uses_attention(Arch a) { return a == Arch::m3; }

struct Dims {
    std::size_t word = 300;    // d_w
    std::size_t video = 4096;  // d_v
    std::size_t embed = 950;   // d_e; also the LSTM hidden size
    std::size_t match = 300;   // d_a

    bool operator==(const Dims&) const = default;
};

template <typename Scalar>
using LinearMap = Matrix<Scalar>;

/// Single-layer LSTM, gate order (input, forget, cell, output).
template <typename Scalar>
struct LstmParams {
    Matrix<Scalar> Wi, Wf, Wc, Wo;  // d_h x d_w
    Matrix<Scalar> Ui, Uf, Uc, Uo;  // d_h x d_h
    Vector<Scalar> bi, bf, bc, bo;  // d_h

    LstmParams() = default;
    LstmParams(std::size_t input, std::size_t hidden)
        : Wi(hidden, input), Wf(hidden, input), Wc(hidden, input), Wo(hidden, input),
          Ui(hidden, hidden), Uf(hidden, hidden), Uc(hidden, hidden), Uo(hidden, hidden),
          bi(hidden), bf(hidden), bc(hidden), bo(hidden) {}

    std::size_t input_dim() const noexcept { return Wi.cols(); }
    std::size_t hidden_dim() const noexcept { return Wi.rows(); }
};

/// Additive attention: e_i = score . tanh(query h + key v_i).
template <typename Scalar>
struct AttentionParams {
    Matrix<Scalar> query;  // d_a x d_h
    Matrix<Scalar> key;    // d_a x d_v
    Vector<Scalar> score;  // d_a

    AttentionParams() = default;
    AttentionParams(std::size_t hidden, std::size_t video, std::size_t match)
        : query(match, hidden), key(match, video), score(match) {}

    std::size_t match_dim() const noexcept { return score.size(); }
};

/// Named, shaped view of one trainable tensor.
template <typename Scalar>
struct TensorRef {
    std::string_view name;
    std::vector<std::size_t> shape;
    std::span<Scalar> values;
};

/// Every trainable tensor of one architecture. Tensors an architecture does
/// not use are left empty.
template <typename Scalar>
struct ModelParams {
    Arch arch = Arch::m1;
    Dims dims;
    LinearMap<Scalar> W_word;   // d_e x d_w, m1 only
    LinearMap<Scalar> W_video;  // d_e x d_v
    LstmParams<Scalar> lstm;    // m2, m3
    AttentionParams<Scalar> attn;  // m3

    ModelParams() = default;

    /// Zero-valued parameters of the right shapes.
    ModelParams(Arch a, Dims d) : arch(a), dims(d), W_video(d.embed, d.video) {
        if (d.word == 0 || d.video == 0 || d.embed == 0 || d.match == 0) {
            throw ValidationError("model dimensions must be positive");
        }
        if (a == Arch::m1) {
            W_word = LinearMap<Scalar>(d.embed, d.word);
        } else {
            lstm = LstmParams<Scalar>(d.word, d.embed);
        }
        if (a == Arch::m3) {
            attn = AttentionParams<Scalar>(d.embed, d.video, d.match);
        }
    }

    template <typename Self>
    static auto collect(Self& self) {
        using S = std::conditional_t<std::is_const_v<Self>, const Scalar, Scalar>;
        std::vector<TensorRef<S>> out;
        auto mat = [&](std::string_view name, auto& m) {
            out.push_back({name, {m.rows(), m.cols()}, std::span<S>(m.data())});
        };
        auto vec = [&](std::string_view name, auto& v) { out.push_back({name, {v.size()}, std::span<S>(v)}); };
        if (self.arch == Arch::m1) {
            mat("W_word", self.W_word);
        }
        mat("W_video", self.W_video);
        if (uses_lstm(self.arch)) {
            auto& l = self.lstm;
            mat("lstm.Wi", l.Wi);
            mat("lstm.Wf", l.Wf);
            mat("lstm.Wc", l.Wc);
            mat("lstm.Wo", l.Wo);
            mat("lstm.Ui", l.Ui);
            mat("lstm.Uf", l.Uf);
            mat("lstm.Uc", l.Uc);
            mat("lstm.Uo", l.Uo);
            vec("lstm.bi", l.bi);
            vec("lstm.bf", l.bf);
            vec("lstm.bc", l.bc);
            vec("lstm.bo", l.bo);
        }
        if (uses_attention(self.arch)) {
            mat("attn.Q", self.attn.query);
            mat("attn.K", self.attn.key);
            vec("attn.s", self.attn.score);
        }
        return out;
    }

    /// Fixed-order list of the tensors this architecture trains.
    std::vector<TensorRef<Scalar>> tensors() { return collect(*this); }
    std::vector<TensorRef<const Scalar>> tensors() const { return collect(*this); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors()) {
            n += t.values.size();
        }
        return n;
    }

    /// Same architecture and shapes, all zeros.
    ModelParams zeros_like() const { return ModelParams(arch, dims); }
};

/// Glorot-uniform matrices, zero biases, forget-gate bias 1.
template <typename Scalar>
ModelParams<Scalar> init_params(Arch arch, Dims dims, std::uint64_t seed) {
    ModelParams<Scalar> p(arch, dims);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::span<Scalar> values, std::size_t fan_out, std::size_t fan_in) {
        const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-r, r);
        for (auto& v : values) {
            v = static_cast<Scalar>(dist(rng));
        }
    };
    for (auto& t : p.tensors()) {
        if (t.name == "lstm.bf") {
            std::fill(t.values.begin(), t.values.end(), Scalar(1));
        } else if (t.name == "attn.s") {
            fill(t.values, 1, t.shape[0]);
        } else if (t.shape.size() == 2) {
            fill(t.values, t.shape[0], t.shape[1]);
        }
    }
    return p;
}

}  // namespace oemb
