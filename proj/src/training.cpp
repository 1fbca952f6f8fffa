#include "craft/training.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "craft/util.hpp"

namespace craft {

ModelGrads ModelGrads::zeros_like(const CraftModel& model) {
    ModelGrads g;
    g.mlp_w1 = Matrix(model.mlp_w1.rows(), model.mlp_w1.cols());
    g.mlp_b1.assign(model.mlp_b1.size(), 0.0);
    g.mlp_w2 = Matrix(model.mlp_w2.rows(), model.mlp_w2.cols());
    g.mlp_b2.assign(model.mlp_b2.size(), 0.0);
    g.head_w = Matrix(model.head_w.rows(), model.head_w.cols());
    g.head_b.assign(model.head_b.size(), 0.0);
    return g;
}

double mse_loss(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    if (pred.empty()) throw std::invalid_argument("mse_loss: empty matrices");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - target.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(pred.size());
}

namespace {

// Per-channel forward state kept for the backward pass.
struct ChannelForward {
    double last_x = 0.0;
    std::vector<double> u;      // x column minus its last value
    std::vector<double> hpre;   // pre-activation
    std::vector<double> h;      // rectified
    std::vector<double> fused;  // final prediction column
};

void forward_channel(const CraftModel& model, const TrainSample& sample, std::size_t c,
                     ChannelForward& fwd) {
    const std::size_t lookback = model.config.lookback;
    const std::size_t horizon = model.config.horizon;
    const std::size_t hidden = model.config.hidden;

    fwd.last_x = sample.x(lookback - 1, c);
    fwd.u.resize(lookback);
    for (std::size_t t = 0; t < lookback; ++t) fwd.u[t] = sample.x(t, c) - fwd.last_x;

    fwd.hpre.assign(hidden, 0.0);
    for (std::size_t j = 0; j < hidden; ++j) fwd.hpre[j] = model.mlp_b1[j];
    for (std::size_t t = 0; t < lookback; ++t) {
        const double ut = fwd.u[t];
        const double* w = model.mlp_w1.data() + t * hidden;
        for (std::size_t j = 0; j < hidden; ++j) fwd.hpre[j] += ut * w[j];
    }
    fwd.h.resize(hidden);
    for (std::size_t j = 0; j < hidden; ++j) fwd.h[j] = fwd.hpre[j] > 0.0 ? fwd.hpre[j] : 0.0;

    fwd.fused.assign(horizon, 0.0);
    for (std::size_t k = 0; k < horizon; ++k) fwd.fused[k] = model.mlp_b2[k];
    for (std::size_t j = 0; j < hidden; ++j) {
        const double hj = fwd.h[j];
        if (hj == 0.0) continue;
        const double* w = model.mlp_w2.data() + j * horizon;
        for (std::size_t k = 0; k < horizon; ++k) fwd.fused[k] += hj * w[k];
    }
    for (std::size_t k = 0; k < horizon; ++k) fwd.fused[k] += fwd.last_x;

    const auto& refs = sample.refs[c];
    if (refs.empty()) return;
    std::vector<double> ret(horizon, 0.0);
    std::vector<double> v(horizon), p(horizon);
    for (const RetrievedReference& ref : refs) {
        if (ref.value.size() != horizon)
            throw std::invalid_argument("training forward: reference length mismatch");
        const double last_r = ref.value[horizon - 1];
        for (std::size_t k = 0; k < horizon; ++k) v[k] = ref.value[k] - last_r;
        for (std::size_t k = 0; k < horizon; ++k) p[k] = model.head_b[k];
        for (std::size_t j = 0; j < horizon; ++j) {
            const double vj = v[j];
            if (vj == 0.0) continue;
            const double* w = model.head_w.data() + j * horizon;
            for (std::size_t k = 0; k < horizon; ++k) p[k] += vj * w[k];
        }
        for (std::size_t k = 0; k < horizon; ++k) ret[k] += p[k] + last_r;
    }
    const double scale = model.alpha / static_cast<double>(refs.size());
    for (std::size_t k = 0; k < horizon; ++k) fwd.fused[k] += scale * ret[k];
}

} // namespace

double batch_loss(const CraftModel& model, const std::vector<const TrainSample*>& batch) {
    if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
    const std::size_t horizon = model.config.horizon;
    double sum = 0.0;
    std::size_t elements = 0;
    ChannelForward fwd;
    for (const TrainSample* sample : batch) {
        for (std::size_t c = 0; c < sample->x.cols(); ++c) {
            forward_channel(model, *sample, c, fwd);
            for (std::size_t k = 0; k < horizon; ++k) {
                const double d = fwd.fused[k] - sample->y(k, c);
                sum += d * d;
            }
            elements += horizon;
        }
    }
    return sum / static_cast<double>(elements);
}

ModelGrads backward(const CraftModel& model, const std::vector<const TrainSample*>& batch,
                    double* loss_out) {
    if (batch.empty()) throw std::invalid_argument("backward: empty batch");
    const std::size_t lookback = model.config.lookback;
    const std::size_t horizon = model.config.horizon;
    const std::size_t hidden = model.config.hidden;

    std::size_t elements = 0;
    for (const TrainSample* sample : batch) elements += sample->x.cols() * horizon;
    const double inv_elements = 1.0 / static_cast<double>(elements);

    ModelGrads grads = ModelGrads::zeros_like(model);
    double loss_sum = 0.0;

    ChannelForward fwd;
    std::vector<double> e(horizon), dh(hidden), dhpre(hidden), v(horizon), dp(horizon);

    for (const TrainSample* sample : batch) {
        for (std::size_t c = 0; c < sample->x.cols(); ++c) {
            forward_channel(model, *sample, c, fwd);

            for (std::size_t k = 0; k < horizon; ++k) {
                const double diff = fwd.fused[k] - sample->y(k, c);
                loss_sum += diff * diff;
                e[k] = 2.0 * diff * inv_elements;
            }

            // Direct branch.
            for (std::size_t k = 0; k < horizon; ++k) grads.mlp_b2[k] += e[k];
            std::fill(dh.begin(), dh.end(), 0.0);
            for (std::size_t j = 0; j < hidden; ++j) {
                const double hj = fwd.h[j];
                double* gw2 = grads.mlp_w2.data() + j * horizon;
                const double* w2 = model.mlp_w2.data() + j * horizon;
                double acc = 0.0;
                for (std::size_t k = 0; k < horizon; ++k) {
                    gw2[k] += hj * e[k];
                    acc += w2[k] * e[k];
                }
                dh[j] = acc;
            }
            for (std::size_t j = 0; j < hidden; ++j)
                dhpre[j] = fwd.hpre[j] > 0.0 ? dh[j] : 0.0;
            for (std::size_t j = 0; j < hidden; ++j) grads.mlp_b1[j] += dhpre[j];
            for (std::size_t t = 0; t < lookback; ++t) {
                const double ut = fwd.u[t];
                if (ut == 0.0) continue;
                double* gw1 = grads.mlp_w1.data() + t * hidden;
                for (std::size_t j = 0; j < hidden; ++j) gw1[j] += ut * dhpre[j];
            }

            // Retrieval head branch; selection is constant, gradients only
            // flow through the head applied to the chosen references.
            const auto& refs = sample->refs[c];
            if (refs.empty()) continue;
            const double ref_scale = model.alpha / static_cast<double>(refs.size());
            for (std::size_t k = 0; k < horizon; ++k) dp[k] = ref_scale * e[k];
            for (const RetrievedReference& ref : refs) {
                const double last_r = ref.value[horizon - 1];
                for (std::size_t k = 0; k < horizon; ++k) v[k] = ref.value[k] - last_r;
                for (std::size_t k = 0; k < horizon; ++k) grads.head_b[k] += dp[k];
                for (std::size_t j = 0; j < horizon; ++j) {
                    const double vj = v[j];
                    if (vj == 0.0) continue;
                    double* gw = grads.head_w.data() + j * horizon;
                    for (std::size_t k = 0; k < horizon; ++k) gw[k] += vj * dp[k];
                }
            }
        }
    }

    const double loss = loss_sum * inv_elements;
    if (!std::isfinite(loss)) throw std::runtime_error("backward: non-finite loss");
    if (loss_out != nullptr) *loss_out = loss;
    return grads;
}

namespace {

void adam_update_tensor(std::span<double> params, std::span<const double> grads,
                        std::span<double> m, std::span<double> v, double lr, double beta1,
                        double beta2, double eps, double bias1, double bias2) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient");
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace

void adam_step(CraftModel& model, const ModelGrads& grads, AdamState& state,
               const TrainConfig& config) {
    if (config.lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
    if (config.adam_beta1 <= 0.0 || config.adam_beta1 >= 1.0 || config.adam_beta2 <= 0.0 ||
        config.adam_beta2 >= 1.0)
        throw std::invalid_argument("adam_step: betas must lie in (0, 1)");
    if (state.t == 0) {
        state.m = ModelGrads::zeros_like(model);
        state.v = ModelGrads::zeros_like(model);
    }
    state.t += 1;
    const double bias1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.t));
    const double bias2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.t));

    const auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m,
                            std::span<double> v) {
        adam_update_tensor(p, g, m, v, config.lr, config.adam_beta1, config.adam_beta2,
                           config.adam_eps, bias1, bias2);
    };
    update(model.mlp_w1.storage(), grads.mlp_w1.storage(), state.m.mlp_w1.storage(),
           state.v.mlp_w1.storage());
    update(model.mlp_b1, grads.mlp_b1, state.m.mlp_b1, state.v.mlp_b1);
    update(model.mlp_w2.storage(), grads.mlp_w2.storage(), state.m.mlp_w2.storage(),
           state.v.mlp_w2.storage());
    update(model.mlp_b2, grads.mlp_b2, state.m.mlp_b2, state.v.mlp_b2);
    update(model.head_w.storage(), grads.head_w.storage(), state.m.head_w.storage(),
           state.v.head_w.storage());
    update(model.head_b, grads.head_b, state.m.head_b, state.v.head_b);
}

namespace {

#ifndef NDEBUG
void assert_no_leakage(const std::vector<std::vector<RetrievedReference>>& refs,
                       const KnowledgeBase& kb, const TimeInterval& exclude) {
    const auto lookback = static_cast<long>(kb.config.lookback);
    const auto horizon = static_cast<long>(kb.config.horizon);
    for (const auto& list : refs)
        for (const RetrievedReference& ref : list) {
            const long t_end = kb.entry_t_end[static_cast<std::size_t>(ref.source_entry)];
            assert(!(t_end - lookback + 1 <= exclude.hi && exclude.lo <= t_end + horizon) &&
                   "retrieved reference overlaps the excluded query span");
        }
}
#endif

} // namespace

CraftModel train(const MultivariateSeries& train_std, const MultivariateSeries& val_std,
                 const KnowledgeBase& kb, const ModelConfig& mc, const TrainConfig& tc,
                 TrainLog* log) {
    if (kb.config.lookback != mc.lookback || kb.config.horizon != mc.horizon)
        throw std::invalid_argument("train: model and knowledge base disagree on L/H");
    if (tc.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (tc.refs < 1) throw std::invalid_argument("train: refs must be >= 1");

    const std::size_t lookback = mc.lookback;
    const std::size_t horizon = mc.horizon;
    const auto train_ends = window_ends(train_std, lookback, horizon, 1);
    const auto val_ends = window_ends(val_std, lookback, horizon, 1);
    if (train_ends.empty()) throw std::invalid_argument("train: training segment yields no windows");
    if (val_ends.empty()) throw std::invalid_argument("train: validation segment yields no windows");

    CraftModel model = init_model(mc, tc.alpha, tc.seed);
    if (log != nullptr) *log = TrainLog{};
    if (tc.epochs == 0) return model;

    const auto sample_for = [&](const MultivariateSeries& series, long t_end,
                                bool with_exclusion) {
        WindowPair pair = make_window(series, t_end, lookback, horizon);
        TrainSample sample{std::move(pair.x), std::move(pair.y), {}};
        std::optional<TimeInterval> exclude;
        if (with_exclusion)
            exclude = TimeInterval{t_end - static_cast<long>(lookback) + 1,
                                   t_end + static_cast<long>(horizon)};
        sample.refs = retrieve_all(kb, sample.x, tc.refs, exclude);
#ifndef NDEBUG
        if (exclude) assert_no_leakage(sample.refs, kb, *exclude);
#endif
        return sample;
    };

    // With a static knowledge base the exclusion set of a window never
    // changes, so cached retrievals stay exact across epochs.
    std::vector<std::vector<std::vector<RetrievedReference>>> train_ref_cache;
    std::vector<std::vector<std::vector<RetrievedReference>>> val_ref_cache;
    if (tc.cache_retrieval) {
        train_ref_cache.resize(train_ends.size());
        val_ref_cache.resize(val_ends.size());
    }

    AdamState state;
    std::mt19937_64 shuffle_rng(tc.seed ^ 0x9E3779B97F4A7C15ull);
    std::vector<std::size_t> order(train_ends.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    CraftModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    bool aborted = false;

    for (std::size_t epoch = 1; epoch <= tc.epochs && !aborted; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        seeded_shuffle(order, shuffle_rng);

        double train_loss_sum = 0.0;
        std::size_t train_elems = 0;
        for (std::size_t base = 0; base < order.size(); base += tc.batch_size) {
            const std::size_t count = std::min(tc.batch_size, order.size() - base);
            std::vector<TrainSample> samples;
            samples.reserve(count);
            for (std::size_t b = 0; b < count; ++b) {
                const std::size_t idx = order[base + b];
                if (tc.cache_retrieval && !train_ref_cache[idx].empty()) {
                    WindowPair pair = make_window(train_std, train_ends[idx], lookback, horizon);
                    samples.push_back(
                        {std::move(pair.x), std::move(pair.y), train_ref_cache[idx]});
                } else {
                    TrainSample s = sample_for(train_std, train_ends[idx], true);
                    if (tc.cache_retrieval) train_ref_cache[idx] = s.refs;
                    samples.push_back(std::move(s));
                }
            }
            std::vector<const TrainSample*> batch;
            batch.reserve(samples.size());
            for (const TrainSample& s : samples) batch.push_back(&s);

            double loss = 0.0;
            ModelGrads grads;
            try {
                grads = backward(model, batch, &loss);
            } catch (const std::runtime_error&) {
                aborted = true;  // divergence; keep the last finite checkpoint
                break;
            }
            if (tc.freeze_head) {
                std::fill(grads.head_w.storage().begin(), grads.head_w.storage().end(), 0.0);
                std::fill(grads.head_b.begin(), grads.head_b.end(), 0.0);
            }
            adam_step(model, grads, state, tc);

            const std::size_t batch_elems = count * train_std.channels() * horizon;
            train_loss_sum += loss * static_cast<double>(batch_elems);
            train_elems += batch_elems;
        }
        if (aborted && train_elems == 0) break;

        double val_loss_sum = 0.0;
        for (std::size_t i = 0; i < val_ends.size(); ++i) {
            TrainSample s = [&] {
                if (tc.cache_retrieval && !val_ref_cache[i].empty()) {
                    WindowPair pair = make_window(val_std, val_ends[i], lookback, horizon);
                    return TrainSample{std::move(pair.x), std::move(pair.y), val_ref_cache[i]};
                }
                TrainSample fresh = sample_for(val_std, val_ends[i], false);
                if (tc.cache_retrieval) val_ref_cache[i] = fresh.refs;
                return fresh;
            }();
            val_loss_sum += batch_loss(model, {&s});
        }
        const double val_mse = val_loss_sum / static_cast<double>(val_ends.size());
        const double train_mse = train_loss_sum / static_cast<double>(train_elems);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        if (log != nullptr) log->epochs.push_back({epoch, train_mse, val_mse, seconds});

        if (std::isfinite(val_mse) && val_mse < best_val) {
            best_val = val_mse;
            best = model;
            best_epoch = epoch;
        }
        if (epoch - best_epoch >= tc.patience) break;
    }

    if (log != nullptr) {
        log->best_epoch = best_epoch;
        log->best_val = best_val;
        log->aborted = aborted;
    }
    return best_epoch == 0 ? model : best;
}

} // namespace craft
