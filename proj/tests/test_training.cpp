#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

#include "craft/memory.hpp"
#include "craft/relation_graph.hpp"
#include "craft/series.hpp"
#include "craft/spectral_memory.hpp"
#include "craft/training.hpp"
#include "craft/util.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace craft;

namespace {

constexpr ModelConfig kTinyConfig{8, 3, 4};

// Handcrafted samples (values and references drawn at random) so the
// gradient machinery is exercised without a knowledge base.
std::vector<TrainSample> make_samples(std::size_t count, std::size_t channels,
                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TrainSample> samples(count);
    for (TrainSample& s : samples) {
        s.x = Matrix(kTinyConfig.lookback, channels);
        s.y = Matrix(kTinyConfig.horizon, channels);
        for (std::size_t i = 0; i < s.x.size(); ++i)
            s.x.data()[i] = uniform_double(rng, -1.0, 1.0);
        for (std::size_t i = 0; i < s.y.size(); ++i)
            s.y.data()[i] = uniform_double(rng, -1.0, 1.0);
        s.refs.resize(channels);
        for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t n_refs = 1 + rng() % 2;
            for (std::size_t i = 0; i < n_refs; ++i) {
                RetrievedReference ref;
                ref.value = testutil::random_vector(kTinyConfig.horizon, rng);
                s.refs[c].push_back(std::move(ref));
            }
        }
    }
    return samples;
}

std::vector<const TrainSample*> as_batch(const std::vector<TrainSample>& samples) {
    std::vector<const TrainSample*> batch;
    for (const TrainSample& s : samples) batch.push_back(&s);
    return batch;
}

double max_param(const CraftModel& m) {
    double mx = 0.0;
    const auto scan = [&](std::span<const double> v) {
        for (const double x : v) mx = std::max(mx, std::fabs(x));
    };
    scan(m.mlp_w1.storage());
    scan(m.mlp_b1);
    scan(m.mlp_w2.storage());
    scan(m.mlp_b2);
    scan(m.head_w.storage());
    scan(m.head_b);
    return mx;
}

struct TrainFixture {
    MultivariateSeries train_std;
    MultivariateSeries val_std;
    KnowledgeBase kb;
    ModelConfig mc{16, 4, 6};

    explicit TrainFixture(std::uint64_t seed = 80, std::size_t t_len = 320) {
        const auto series = testutil::periodic_series(t_len, {12.0, 8.0}, 0.1, seed);
        const auto parts = split_by_counts(series, (t_len * 3) / 4, t_len / 4, 0);
        const ChannelStats stats = fit_stats(parts[0]);
        train_std = apply_stats(stats, parts[0]);
        val_std = apply_stats(stats, parts[1]);
        const auto memory = memory_from_series(train_std, mc.lookback, mc.horizon);
        kb = build_knowledge_base(memory, build_graph(memory, 1), 5);
    }
};

double manual_val_mse(const CraftModel& model, const TrainFixture& fx, int refs) {
    const auto ends = window_ends(fx.val_std, fx.mc.lookback, fx.mc.horizon, 1);
    double sum = 0.0;
    for (const long t_end : ends) {
        WindowPair pair = make_window(fx.val_std, t_end, fx.mc.lookback, fx.mc.horizon);
        TrainSample s;
        s.refs = retrieve_all(fx.kb, pair.x, refs);
        s.x = std::move(pair.x);
        s.y = std::move(pair.y);
        sum += batch_loss(model, {&s});
    }
    return sum / static_cast<double>(ends.size());
}

} // namespace

TEST_CASE("mse_loss") {
    const Matrix a = Matrix::from_rows({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    CHECK(mse_loss(a, a) == 0.0);

    Matrix b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] += 1.0;
    CHECK(mse_loss(a, b) == 1.0);

    std::mt19937_64 rng(20);
    Matrix p(3, 2), t(3, 2);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p.data()[i] = uniform_double(rng, -2.0, 2.0);
        t.data()[i] = uniform_double(rng, -2.0, 2.0);
    }
    CHECK(mse_loss(p, t) == doctest::Approx(oracle::mse(p, t)).epsilon(1e-12));

    CHECK_THROWS_WITH(mse_loss(p, Matrix(2, 2)), doctest::Contains("shape mismatch"));
    CHECK_THROWS_WITH(mse_loss(Matrix(), Matrix()), doctest::Contains("empty"));
}

TEST_CASE("batch_loss equals the oracle forward pass") {
    CraftModel model = init_model(kTinyConfig, 0.4, 21);
    const auto samples = make_samples(3, 2, 22);
    const auto batch = as_batch(samples);

    double want = 0.0;
    for (const TrainSample& s : samples) {
        for (std::size_t c = 0; c < 2; ++c) {
            const auto direct = oracle::direct_channel(model, s.x.col(c));
            std::vector<double> ret(kTinyConfig.horizon, 0.0);
            for (const RetrievedReference& ref : s.refs[c]) {
                const auto p = oracle::head_on_reference(model, ref.value);
                for (std::size_t k = 0; k < p.size(); ++k) ret[k] += p[k];
            }
            const double inv = 1.0 / static_cast<double>(s.refs[c].size());
            for (std::size_t k = 0; k < kTinyConfig.horizon; ++k) {
                const double fused = direct[k] + model.alpha * ret[k] * inv;
                const double d = fused - s.y(k, c);
                want += d * d;
            }
        }
    }
    want /= static_cast<double>(3 * 2 * kTinyConfig.horizon);
    CHECK(batch_loss(model, batch) == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS_WITH(batch_loss(model, {}), doctest::Contains("empty batch"));
}

TEST_CASE("backward matches central finite differences") {
    for (const std::uint64_t seed : {30ull, 31ull, 32ull}) {
        const CraftModel model = init_model(kTinyConfig, 0.5, seed);
        const auto samples = make_samples(4, 2, seed + 100);
        const auto batch = as_batch(samples);

        double loss = 0.0;
        const ModelGrads got = backward(model, batch, &loss);
        CHECK(loss == doctest::Approx(batch_loss(model, batch)).epsilon(1e-15));

        const ModelGrads want = oracle::fd_gradients(model, batch, 1e-5);
        const auto compare = [&](std::span<const double> g, std::span<const double> fd) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double rel = std::fabs(g[i] - fd[i]) /
                                   std::max({1e-6, std::fabs(g[i]), std::fabs(fd[i])});
                CHECK(rel < 1e-4);
            }
        };
        compare(got.mlp_w1.storage(), want.mlp_w1.storage());
        compare(got.mlp_b1, want.mlp_b1);
        compare(got.mlp_w2.storage(), want.mlp_w2.storage());
        compare(got.mlp_b2, want.mlp_b2);
        compare(got.head_w.storage(), want.head_w.storage());
        compare(got.head_b, want.head_b);
    }
}

TEST_CASE("alpha 0 disconnects the retrieval head") {
    const CraftModel model = init_model(kTinyConfig, 0.0, 33);
    const auto samples = make_samples(3, 2, 34);
    const ModelGrads grads = backward(model, as_batch(samples));
    for (const double g : grads.head_w.storage()) CHECK(g == 0.0);
    for (const double g : grads.head_b) CHECK(g == 0.0);
    // the MLP still trains
    double mlp_norm = 0.0;
    for (const double g : grads.mlp_w1.storage()) mlp_norm += std::fabs(g);
    CHECK(mlp_norm > 0.0);
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
    const CraftModel model = init_model(kTinyConfig, 0.3, 35);
    const auto samples = make_samples(2, 2, 36);
    std::vector<const TrainSample*> batch = as_batch(samples);
    std::vector<const TrainSample*> doubled = batch;
    doubled.insert(doubled.end(), batch.begin(), batch.end());

    const ModelGrads a = backward(model, batch);
    const ModelGrads b = backward(model, doubled);
    const auto compare = [&](std::span<const double> x, std::span<const double> y) {
        for (std::size_t i = 0; i < x.size(); ++i)
            CHECK(x[i] == doctest::Approx(y[i]).epsilon(1e-12));
    };
    compare(a.mlp_w1.storage(), b.mlp_w1.storage());
    compare(a.mlp_b2, b.mlp_b2);
    compare(a.head_w.storage(), b.head_w.storage());
}

TEST_CASE("adam_step") {
    const TrainConfig tc;

    SUBCASE("zero gradients are a fixed point") {
        CraftModel model = init_model(kTinyConfig, 0.1, 37);
        const CraftModel before = model;
        AdamState state;
        adam_step(model, ModelGrads::zeros_like(model), state, tc);
        CHECK(state.t == 1);
        CHECK(model == before);
    }
    SUBCASE("first step moves a unit-gradient slot by almost exactly lr") {
        CraftModel model = init_model(kTinyConfig, 0.1, 38);
        const CraftModel before = model;
        ModelGrads grads = ModelGrads::zeros_like(model);
        grads.mlp_b2[1] = 1.0;
        AdamState state;
        adam_step(model, grads, state, tc);
        CHECK(std::fabs(before.mlp_b2[1] - model.mlp_b2[1] - tc.lr) < 1e-9);
        CHECK(model.mlp_b2[0] == before.mlp_b2[0]);
        CHECK(model.mlp_w1 == before.mlp_w1);
    }
    SUBCASE("same gradient stream gives bit-identical trajectories") {
        CraftModel a = init_model(kTinyConfig, 0.1, 39);
        CraftModel b = a;
        AdamState sa, sb;
        const auto samples = make_samples(3, 2, 40);
        for (int step = 0; step < 5; ++step) {
            const ModelGrads g_a = backward(a, as_batch(samples));
            const ModelGrads g_b = backward(b, as_batch(samples));
            adam_step(a, g_a, sa, tc);
            adam_step(b, g_b, sb, tc);
        }
        CHECK(a == b);
    }
    SUBCASE("rejects non-finite gradients and bad hyperparameters") {
        CraftModel model = init_model(kTinyConfig, 0.1, 41);
        ModelGrads grads = ModelGrads::zeros_like(model);
        grads.mlp_b1[0] = std::numeric_limits<double>::quiet_NaN();
        AdamState state;
        CHECK_THROWS_WITH(adam_step(model, grads, state, tc),
                          doctest::Contains("non-finite gradient"));

        TrainConfig bad = tc;
        bad.lr = 0.0;
        CHECK_THROWS_WITH(adam_step(model, ModelGrads::zeros_like(model), state, bad),
                          doctest::Contains("lr must be positive"));
        bad = tc;
        bad.adam_beta2 = 1.0;
        CHECK_THROWS_WITH(adam_step(model, ModelGrads::zeros_like(model), state, bad),
                          doctest::Contains("betas"));
    }
}

TEST_CASE("train end to end on periodic data") {
    const TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 8;
    tc.patience = 8;
    tc.batch_size = 16;
    tc.seed = 7;
    tc.refs = 1;

    TrainLog log;
    const CraftModel model = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc, &log);

    REQUIRE(!log.epochs.empty());
    CHECK(!log.aborted);
    CHECK(log.epochs.back().train_mse < log.epochs.front().train_mse);
    CHECK(log.best_epoch >= 1);
    CHECK(log.best_epoch <= log.epochs.size());

    // best_val is the minimum of the recorded epochs and the returned model
    // reproduces it
    double min_val = log.epochs.front().val_mse;
    for (const auto& e : log.epochs) min_val = std::min(min_val, e.val_mse);
    CHECK(log.best_val == min_val);
    CHECK(manual_val_mse(model, fx, tc.refs) == doctest::Approx(log.best_val).epsilon(1e-12));

    // the trained model beats the untrained one on validation
    const CraftModel untrained = init_model(fx.mc, tc.alpha, tc.seed);
    CHECK(log.best_val < manual_val_mse(untrained, fx, tc.refs));
}

TEST_CASE("train determinism and the epochs=0 no-op") {
    const TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.seed = 11;

    const CraftModel a = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc);
    const CraftModel b = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc);
    CHECK(a == b);

    tc.seed = 12;
    const CraftModel c = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc);
    CHECK(c != a);

    tc.epochs = 0;
    TrainLog log;
    const CraftModel d = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc, &log);
    CHECK(d == init_model(fx.mc, tc.alpha, tc.seed));
    CHECK(log.epochs.empty());
    CHECK(log.best_epoch == 0);
}

TEST_CASE("cached retrieval reproduces the uncached run bit for bit") {
    const TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 8;
    tc.seed = 13;

    const CraftModel uncached = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc);
    tc.cache_retrieval = true;
    const CraftModel cached = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc);
    CHECK(cached == uncached);
}

TEST_CASE("freeze_head keeps the retrieval head at its initialization") {
    const TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.seed = 14;
    tc.alpha = 0.5;  // large enough that head gradients would move it
    tc.freeze_head = true;

    const CraftModel model = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc);
    const CraftModel init = init_model(fx.mc, tc.alpha, tc.seed);
    CHECK(model.head_w == init.head_w);
    CHECK(model.head_b == init.head_b);
    CHECK(model.mlp_w1 != init.mlp_w1);
}

TEST_CASE("early stopping waits exactly patience epochs past the best") {
    const TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 40;
    tc.patience = 2;
    tc.batch_size = 8;
    tc.seed = 15;
    tc.lr = 0.02;  // fast enough to overfit the tiny series within the budget

    TrainLog log;
    train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc, &log);
    REQUIRE(!log.epochs.empty());
    if (log.epochs.size() < tc.epochs) {
        CHECK(log.epochs.size() == log.best_epoch + tc.patience);
    } else {
        CHECK(log.epochs.size() - log.best_epoch <= tc.patience);
    }
    // no epoch between best and the stop improved on best_val
    for (std::size_t i = log.best_epoch; i < log.epochs.size(); ++i)
        CHECK(log.epochs[i].val_mse >= log.best_val);
}

TEST_CASE("divergence aborts with a finite checkpoint") {
    const TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 8;
    tc.seed = 16;
    tc.lr = 1e80;

    TrainLog log;
    const CraftModel model = train(fx.train_std, fx.val_std, fx.kb, fx.mc, tc, &log);
    CHECK(log.aborted);
    CHECK(std::isfinite(max_param(model)));
}

TEST_CASE("training-time retrieval never touches the query's own span") {
    const TrainFixture fx;
    const auto ends = window_ends(fx.train_std, fx.mc.lookback, fx.mc.horizon, 1);
    const long lookback = static_cast<long>(fx.mc.lookback);
    const long horizon = static_cast<long>(fx.mc.horizon);
    for (std::size_t i = 0; i < ends.size(); i += 17) {
        const long t_end = ends[i];
        const TimeInterval ex{t_end - lookback + 1, t_end + horizon};
        const WindowPair w = make_window(fx.train_std, t_end, fx.mc.lookback, fx.mc.horizon);
        for (const auto& list : retrieve_all(fx.kb, w.x, 3, ex))
            for (const RetrievedReference& ref : list) {
                const long k_end = fx.kb.entry_t_end[static_cast<std::size_t>(ref.source_entry)];
                CHECK(!(k_end - lookback + 1 <= ex.hi && ex.lo <= k_end + horizon));
            }
    }
}

TEST_CASE("train argument validation") {
    const TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 1;

    TrainConfig bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_WITH(train(fx.train_std, fx.val_std, fx.kb, fx.mc, bad),
                      doctest::Contains("batch_size must be >= 1"));
    bad = tc;
    bad.refs = 0;
    CHECK_THROWS_WITH(train(fx.train_std, fx.val_std, fx.kb, fx.mc, bad),
                      doctest::Contains("refs must be >= 1"));

    const ModelConfig wrong{16, 5, 6};
    CHECK_THROWS_WITH(train(fx.train_std, fx.val_std, fx.kb, wrong, tc),
                      doctest::Contains("disagree on L/H"));

    MultivariateSeries short_val = fx.val_std;
    short_val.values = Matrix(4, 2);
    CHECK_THROWS(train(fx.train_std, short_val, fx.kb, fx.mc, tc));
}
