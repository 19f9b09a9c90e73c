#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oemb/config.hpp"
#include "oemb/data.hpp"
#include "oemb/encoders.hpp"
#include "oemb/objective.hpp"
#include "oemb/parallel.hpp"
#include "oemb/params.hpp"

namespace oemb {

/// One ground-truth caption/video pair.
template <typename Scalar>
struct Pair {
    SentenceFeatures<Scalar> caption;
    VideoFeatures<Scalar> video;
};

template <typename Scalar>
struct BatchGradients {
    Scalar loss = 0;
    ScoreMatrix<Scalar> scores;
    ModelParams<Scalar> grads;
};

namespace detail {

/// Pre-normalization vector z, its |z| norm, and the normalized embedding.
template <typename Scalar>
struct AbsNormCache {
    Vector<Scalar> z;
    Scalar norm = 0;
    Vector<Scalar> e;
};

template <typename Scalar>
AbsNormCache<Scalar> abs_normalize_cached(Vector<Scalar> z, std::ptrdiff_t sample, const char* side) {
    AbsNormCache<Scalar> c;
    c.e.resize(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        c.e[k] = std::abs(z[k]);
    }
    c.norm = l2_norm<Scalar>(c.e);
    if (!(c.norm >= Scalar(kDegenerateNorm))) {
        throw DegenerateEmbedding(std::string("degenerate ") + side + " embedding for batch sample " +
                                      std::to_string(sample),
                                  sample);
    }
    for (auto& x : c.e) {
        x /= c.norm;
    }
    c.z = std::move(z);
    return c;
}

/// d/dz of |z|/||z|| applied to the upstream gradient `g`.
template <typename Scalar>
Vector<Scalar> abs_normalize_backward(const AbsNormCache<Scalar>& c, std::span<const Scalar> g) {
    const Scalar proj = dot<Scalar>(c.e, g);
    Vector<Scalar> out(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Scalar sign = c.z[k] > 0 ? Scalar(1) : (c.z[k] < 0 ? Scalar(-1) : Scalar(0));
        out[k] = sign * (g[k] - c.e[k] * proj) / c.norm;
    }
    return out;
}

template <typename Scalar>
struct CaptionCache {
    Vector<Scalar> mean;                         // m1
    std::vector<LstmStepCache<Scalar>> steps;    // m2, m3
    AbsNormCache<Scalar> out;
    Vector<Scalar> query;                        // m3: Q h_N
};

template <typename Scalar>
struct VideoCache {
    Vector<Scalar> mean;         // m1, m2
    AbsNormCache<Scalar> out;    // m1, m2
    Matrix<Scalar> keyed;        // m3: per frame K v_m
    Matrix<Scalar> mapped;       // m3: per frame W_video v_m
};

/// Attention-pooled video embedding for one (caption, video) pair in m3.
template <typename Scalar>
struct PairCache {
    Matrix<Scalar> t;  // tanh activations, frames x d_a
    Vector<Scalar> alpha;
    AbsNormCache<Scalar> out;
};

template <typename Scalar>
PairCache<Scalar> attend_pair(const ModelParams<Scalar>& p, const CaptionCache<Scalar>& cap,
                              const VideoCache<Scalar>& vid, std::ptrdiff_t sample) {
    const std::size_t frames = vid.keyed.rows();
    const std::size_t da = p.attn.match_dim();
    PairCache<Scalar> pc;
    pc.t = Matrix<Scalar>(frames, da);
    Vector<Scalar> e(frames);
    for (std::size_t m = 0; m < frames; ++m) {
        auto krow = vid.keyed.row(m);
        auto trow = pc.t.row(m);
        Scalar acc = 0;
        for (std::size_t k = 0; k < da; ++k) {
            trow[k] = std::tanh(cap.query[k] + krow[k]);
            acc += p.attn.score[k] * trow[k];
        }
        e[m] = acc;
    }
    pc.alpha = softmax<Scalar>(e);
    Vector<Scalar> z(vid.mapped.cols(), Scalar(0));
    for (std::size_t m = 0; m < frames; ++m) {
        axpy<Scalar>(pc.alpha[m], vid.mapped.row(m), z);
    }
    pc.out = abs_normalize_cached(std::move(z), sample, "video");
    return pc;
}

template <typename Scalar>
void lstm_backward(const LstmParams<Scalar>& p, const SentenceFeatures<Scalar>& s,
                   const std::vector<LstmStepCache<Scalar>>& steps, Vector<Scalar> dh, LstmParams<Scalar>& g) {
    const std::size_t n = p.hidden_dim();
    const Vector<Scalar> zero(n, Scalar(0));
    Vector<Scalar> dc(n, Scalar(0));
    Vector<Scalar> dai(n), daf(n), dag(n), dao(n);
    for (std::size_t t = steps.size(); t-- > 0;) {
        const auto& st = steps[t];
        std::span<const Scalar> c_prev = t == 0 ? std::span<const Scalar>(zero) : steps[t - 1].c;
        std::span<const Scalar> h_prev = t == 0 ? std::span<const Scalar>(zero) : steps[t - 1].h;
        for (std::size_t k = 0; k < n; ++k) {
            const Scalar d_o = dh[k] * st.tanh_c[k];
            dc[k] += dh[k] * st.o[k] * (Scalar(1) - st.tanh_c[k] * st.tanh_c[k]);
            dai[k] = dc[k] * st.g[k] * st.i[k] * (Scalar(1) - st.i[k]);
            daf[k] = dc[k] * c_prev[k] * st.f[k] * (Scalar(1) - st.f[k]);
            dag[k] = dc[k] * st.i[k] * (Scalar(1) - st.g[k] * st.g[k]);
            dao[k] = d_o * st.o[k] * (Scalar(1) - st.o[k]);
            dc[k] *= st.f[k];
        }
        auto x = s.rows.row(t);
        outer_add<Scalar>(g.Wi, dai, x);
        outer_add<Scalar>(g.Wf, daf, x);
        outer_add<Scalar>(g.Wc, dag, x);
        outer_add<Scalar>(g.Wo, dao, x);
        if (t > 0) {
            outer_add<Scalar>(g.Ui, dai, h_prev);
            outer_add<Scalar>(g.Uf, daf, h_prev);
            outer_add<Scalar>(g.Uc, dag, h_prev);
            outer_add<Scalar>(g.Uo, dao, h_prev);
        }
        axpy<Scalar>(Scalar(1), dai, g.bi);
        axpy<Scalar>(Scalar(1), daf, g.bf);
        axpy<Scalar>(Scalar(1), dag, g.bc);
        axpy<Scalar>(Scalar(1), dao, g.bo);
        if (t > 0) {
            std::fill(dh.begin(), dh.end(), Scalar(0));
            matvec_t_add<Scalar>(p.Ui, dai, dh);
            matvec_t_add<Scalar>(p.Uf, daf, dh);
            matvec_t_add<Scalar>(p.Uc, dag, dh);
            matvec_t_add<Scalar>(p.Uo, dao, dh);
        }
    }
}

template <typename Scalar>
void add_into(ModelParams<Scalar>& dst, const ModelParams<Scalar>& src) {
    auto d = dst.tensors();
    auto s = src.tensors();
    for (std::size_t t = 0; t < d.size(); ++t) {
        for (std::size_t k = 0; k < d[t].values.size(); ++k) {
            d[t].values[k] += s[t].values[k];
        }
    }
}

/// Forward state of a whole batch.
template <typename Scalar>
struct BatchForward {
    std::vector<CaptionCache<Scalar>> captions;
    std::vector<VideoCache<Scalar>> videos;
    ScoreMatrix<Scalar> scores;
};

template <typename Scalar>
BatchForward<Scalar> batch_forward(const ModelParams<Scalar>& p, std::span<const Pair<Scalar>> batch) {
    const std::size_t b = batch.size();
    BatchForward<Scalar> fw;
    fw.captions.resize(b);
    fw.videos.resize(b);
    fw.scores = ScoreMatrix<Scalar>(b, b);
    for (const auto& pair : batch) {
        require_shape(pair.caption.dim() == p.dims.word, "caption word dimension does not match the model");
        require_shape(pair.video.dim() == p.dims.video, "video frame dimension does not match the model");
    }
    parallel_for(b, [&](std::size_t i) {
        auto& cc = fw.captions[i];
        const auto& s = batch[i].caption;
        if (p.arch == Arch::m1) {
            cc.mean = row_mean(s.rows);
            cc.out = abs_normalize_cached(matvec<Scalar>(p.W_word, cc.mean), std::ptrdiff_t(i), "caption");
        } else {
            cc.steps = lstm_unroll(p.lstm, s);
            cc.out = abs_normalize_cached(cc.steps.back().h, std::ptrdiff_t(i), "caption");
            if (p.arch == Arch::m3) {
                cc.query = matvec<Scalar>(p.attn.query, cc.steps.back().h);
            }
        }
        auto& vc = fw.videos[i];
        const auto& v = batch[i].video;
        if (p.arch != Arch::m3) {
            vc.mean = row_mean(v.frames);
            vc.out = abs_normalize_cached(matvec<Scalar>(p.W_video, vc.mean), std::ptrdiff_t(i), "video");
        } else {
            vc.keyed = Matrix<Scalar>(v.length(), p.attn.match_dim());
            vc.mapped = Matrix<Scalar>(v.length(), p.dims.embed);
            for (std::size_t m = 0; m < v.length(); ++m) {
                auto k = matvec<Scalar>(p.attn.key, v.frames.row(m));
                std::copy(k.begin(), k.end(), vc.keyed.row(m).begin());
                auto w = matvec<Scalar>(p.W_video, v.frames.row(m));
                std::copy(w.begin(), w.end(), vc.mapped.row(m).begin());
            }
        }
    });
    parallel_for(b, [&](std::size_t i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (p.arch == Arch::m3) {
                auto pc = attend_pair(p, fw.captions[i], fw.videos[j], std::ptrdiff_t(j));
                fw.scores(i, j) = order_similarity<Scalar>(fw.captions[i].out.e, pc.out.e);
            } else {
                fw.scores(i, j) = order_similarity<Scalar>(fw.captions[i].out.e, fw.videos[j].out.e);
            }
        }
    });
    return fw;
}

}  // namespace detail

/// Score matrix s(i, j) = S(caption_i, video_j | caption_i) of a batch.
template <typename Scalar>
ScoreMatrix<Scalar> batch_scores(const ModelParams<Scalar>& p, std::span<const Pair<Scalar>> batch) {
    return detail::batch_forward(p, batch).scores;
}

template <typename Scalar>
Scalar batch_loss(const ModelParams<Scalar>& p, std::span<const Pair<Scalar>> batch, Scalar margin, LossKind kind) {
    return rank_loss(batch_scores(p, batch), margin, kind);
}

/// Configured ranking loss of the batch and its exact gradient with respect
/// to every parameter. Throws DegenerateEmbedding naming the sample when an
/// embedding cannot be normalized.
template <typename Scalar>
BatchGradients<Scalar> batch_gradients(const ModelParams<Scalar>& p, std::span<const Pair<Scalar>> batch,
                                       Scalar margin, LossKind kind) {
    using namespace detail;
    if (batch.size() < 2) {
        throw ValidationError("a batch needs at least two pairs for contrastive terms");
    }
    const std::size_t b = batch.size();
    auto fw = batch_forward(p, batch);
    auto lg = rank_loss_with_gradient(fw.scores, margin, kind);
    const auto& G = lg.grad;
    const std::size_t de = p.dims.embed;

    const std::size_t chunks = std::min(b, thread_count());
    std::vector<ModelParams<Scalar>> partial(chunks, p.zeros_like());

    // Caption side, plus the video side of m3 whose pooling depends on the caption.
    std::vector<Matrix<Scalar>> pooled_grad;  // m3: per chunk, per video frame, d_e
    std::vector<Matrix<Scalar>> keyed_grad;   // m3: per chunk, per video frame, d_a
    std::vector<std::size_t> frame_offset(b + 1, 0);
    if (p.arch == Arch::m3) {
        for (std::size_t j = 0; j < b; ++j) {
            frame_offset[j + 1] = frame_offset[j] + batch[j].video.length();
        }
        pooled_grad.assign(chunks, Matrix<Scalar>(frame_offset[b], de));
        keyed_grad.assign(chunks, Matrix<Scalar>(frame_offset[b], p.attn.match_dim()));
    }

    parallel_chunks(b, chunks, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& g = partial[chunk];
        for (std::size_t i = begin; i < end; ++i) {
            const auto& cc = fw.captions[i];
            Vector<Scalar> gc(de, Scalar(0));
            Vector<Scalar> q_grad;
            if (p.arch == Arch::m3) {
                q_grad.assign(p.attn.match_dim(), Scalar(0));
            }
            for (std::size_t j = 0; j < b; ++j) {
                const Scalar gij = G(i, j);
                if (gij == Scalar(0)) {
                    continue;
                }
                if (p.arch != Arch::m3) {
                    const auto& v = fw.videos[j].out.e;
                    for (std::size_t k = 0; k < de; ++k) {
                        const Scalar d = cc.out.e[k] - v[k];
                        if (d > Scalar(0)) {
                            gc[k] -= gij * Scalar(2) * d;
                        }
                    }
                    continue;
                }
                const auto& vc = fw.videos[j];
                auto pc = attend_pair(p, cc, vc, std::ptrdiff_t(j));
                Vector<Scalar> gv(de, Scalar(0));
                for (std::size_t k = 0; k < de; ++k) {
                    const Scalar d = cc.out.e[k] - pc.out.e[k];
                    if (d > Scalar(0)) {
                        gc[k] -= gij * Scalar(2) * d;
                        gv[k] = gij * Scalar(2) * d;
                    }
                }
                const auto gz = abs_normalize_backward<Scalar>(pc.out, gv);
                const std::size_t frames = vc.mapped.rows();
                Vector<Scalar> galpha(frames);
                for (std::size_t m = 0; m < frames; ++m) {
                    axpy<Scalar>(pc.alpha[m], gz, pooled_grad[chunk].row(frame_offset[j] + m));
                    galpha[m] = dot<Scalar>(gz, vc.mapped.row(m));
                }
                const Scalar mix = dot<Scalar>(pc.alpha, galpha);
                for (std::size_t m = 0; m < frames; ++m) {
                    const Scalar ge = pc.alpha[m] * (galpha[m] - mix);
                    if (ge == Scalar(0)) {
                        continue;
                    }
                    auto trow = pc.t.row(m);
                    axpy<Scalar>(ge, trow, g.attn.score);
                    auto krow = keyed_grad[chunk].row(frame_offset[j] + m);
                    for (std::size_t k = 0; k < trow.size(); ++k) {
                        const Scalar gpre = ge * p.attn.score[k] * (Scalar(1) - trow[k] * trow[k]);
                        krow[k] += gpre;
                        q_grad[k] += gpre;
                    }
                }
            }
            auto gz = abs_normalize_backward<Scalar>(cc.out, gc);
            if (p.arch == Arch::m1) {
                outer_add<Scalar>(g.W_word, gz, cc.mean);
                continue;
            }
            const auto& h = cc.steps.back().h;
            if (p.arch == Arch::m3) {
                outer_add<Scalar>(g.attn.query, q_grad, h);
                matvec_t_add<Scalar>(p.attn.query, q_grad, gz);
            }
            lstm_backward(p.lstm, batch[i].caption, cc.steps, std::move(gz), g.lstm);
        }
    });

    // Video side: frame-level parameters.
    parallel_chunks(b, chunks, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& g = partial[chunk];
        for (std::size_t j = begin; j < end; ++j) {
            const auto& frames = batch[j].video.frames;
            if (p.arch == Arch::m3) {
                for (std::size_t m = 0; m < frames.rows(); ++m) {
                    for (std::size_t c = 0; c < chunks; ++c) {
                        outer_add<Scalar>(g.W_video, pooled_grad[c].row(frame_offset[j] + m), frames.row(m));
                        outer_add<Scalar>(g.attn.key, keyed_grad[c].row(frame_offset[j] + m), frames.row(m));
                    }
                }
                continue;
            }
            Vector<Scalar> gv(de, Scalar(0));
            const auto& v = fw.videos[j].out.e;
            for (std::size_t i = 0; i < b; ++i) {
                const Scalar gij = G(i, j);
                if (gij == Scalar(0)) {
                    continue;
                }
                const auto& c = fw.captions[i].out.e;
                for (std::size_t k = 0; k < de; ++k) {
                    const Scalar d = c[k] - v[k];
                    if (d > Scalar(0)) {
                        gv[k] += gij * Scalar(2) * d;
                    }
                }
            }
            const auto gz = abs_normalize_backward<Scalar>(fw.videos[j].out, gv);
            outer_add<Scalar>(g.W_video, gz, fw.videos[j].mean);
        }
    });

    BatchGradients<Scalar> out{lg.loss, std::move(fw.scores), std::move(partial[0])};
    for (std::size_t c = 1; c < chunks; ++c) {
        detail::add_into(out.grads, partial[c]);
    }
    return out;
}

template <typename Scalar>
BatchGradients<Scalar> batch_gradients(const ModelParams<Scalar>& p, std::span<const Pair<Scalar>> batch,
                                       const TrainConfig& cfg) {
    return batch_gradients(p, batch, static_cast<Scalar>(cfg.margin), cfg.loss_kind);
}

}  // namespace oemb
