#include "craft/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "craft/binary_io.hpp"
#include "craft/util.hpp"

namespace craft {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'M', 'D'};
constexpr std::uint32_t kVersion = 1;

void fill_uniform(std::span<double> out, std::mt19937_64& rng, double bound) {
    for (double& v : out) v = uniform_double(rng, -bound, bound);
}

} // namespace

CraftModel init_model(const ModelConfig& config, double alpha, std::uint64_t seed) {
    if (config.lookback < 1 || config.horizon < 1 || config.hidden < 1)
        throw std::invalid_argument("init_model: dimensions must be >= 1");
    if (alpha < 0.0) throw std::invalid_argument("init_model: alpha must be >= 0");

    CraftModel model;
    model.config = config;
    model.alpha = alpha;
    model.mlp_w1 = Matrix(config.lookback, config.hidden);
    model.mlp_b1.assign(config.hidden, 0.0);
    model.mlp_w2 = Matrix(config.hidden, config.horizon);
    model.mlp_b2.assign(config.horizon, 0.0);
    model.head_w = Matrix(config.horizon, config.horizon);
    model.head_b.assign(config.horizon, 0.0);

    std::mt19937_64 rng(seed);
    const double b1 = 1.0 / std::sqrt(static_cast<double>(config.lookback));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(config.hidden));
    const double bh = 1.0 / std::sqrt(static_cast<double>(config.horizon));
    fill_uniform(model.mlp_w1.storage(), rng, b1);
    fill_uniform(model.mlp_b1, rng, b1);
    fill_uniform(model.mlp_w2.storage(), rng, b2);
    fill_uniform(model.mlp_b2, rng, b2);
    fill_uniform(model.head_w.storage(), rng, bh);
    fill_uniform(model.head_b, rng, bh);
    return model;
}

Matrix direct_forecast(const CraftModel& model, const Matrix& x) {
    const std::size_t lookback = model.config.lookback;
    const std::size_t horizon = model.config.horizon;
    const std::size_t hidden = model.config.hidden;
    if (x.rows() != lookback) throw std::invalid_argument("direct_forecast: lookback mismatch");

    const std::size_t channels = x.cols();
    Matrix out(horizon, channels);
    std::vector<double> u(lookback), h(hidden), o(horizon);

    for (std::size_t c = 0; c < channels; ++c) {
        const double last = x(lookback - 1, c);
        for (std::size_t t = 0; t < lookback; ++t) u[t] = x(t, c) - last;

        for (std::size_t j = 0; j < hidden; ++j) h[j] = model.mlp_b1[j];
        for (std::size_t t = 0; t < lookback; ++t) {
            const double ut = u[t];
            const double* w = model.mlp_w1.data() + t * hidden;
            for (std::size_t j = 0; j < hidden; ++j) h[j] += ut * w[j];
        }
        for (std::size_t j = 0; j < hidden; ++j) h[j] = h[j] > 0.0 ? h[j] : 0.0;

        for (std::size_t k = 0; k < horizon; ++k) o[k] = model.mlp_b2[k];
        for (std::size_t j = 0; j < hidden; ++j) {
            const double hj = h[j];
            if (hj == 0.0) continue;
            const double* w = model.mlp_w2.data() + j * horizon;
            for (std::size_t k = 0; k < horizon; ++k) o[k] += hj * w[k];
        }
        for (std::size_t k = 0; k < horizon; ++k) out(k, c) = o[k] + last;
    }
    return out;
}

Matrix retrieval_forecast(const CraftModel& model,
                          const std::vector<std::vector<RetrievedReference>>& refs) {
    const std::size_t horizon = model.config.horizon;
    const std::size_t channels = refs.size();
    Matrix out(horizon, channels);  // zero-filled; empty lists stay zero
    std::vector<double> v(horizon), p(horizon);

    for (std::size_t c = 0; c < channels; ++c) {
        if (refs[c].empty()) continue;
        std::vector<double> acc(horizon, 0.0);
        for (const RetrievedReference& ref : refs[c]) {
            if (ref.value.size() != horizon)
                throw std::invalid_argument("retrieval_forecast: reference length mismatch");
            const double last = ref.value[horizon - 1];
            for (std::size_t k = 0; k < horizon; ++k) v[k] = ref.value[k] - last;

            for (std::size_t k = 0; k < horizon; ++k) p[k] = model.head_b[k];
            for (std::size_t j = 0; j < horizon; ++j) {
                const double vj = v[j];
                if (vj == 0.0) continue;
                const double* w = model.head_w.data() + j * horizon;
                for (std::size_t k = 0; k < horizon; ++k) p[k] += vj * w[k];
            }
            for (std::size_t k = 0; k < horizon; ++k) acc[k] += p[k] + last;
        }
        const double inv = 1.0 / static_cast<double>(refs[c].size());
        for (std::size_t k = 0; k < horizon; ++k) out(k, c) = acc[k] * inv;
    }
    return out;
}

Matrix fuse(const Matrix& direct, const Matrix& retrieval, double alpha) {
    if (!direct.same_shape(retrieval)) throw std::invalid_argument("fuse: shape mismatch");
    Matrix out(direct.rows(), direct.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = direct.data()[i] + alpha * retrieval.data()[i];
    return out;
}

ForecastOutput forecast(const CraftModel& model, const KnowledgeBase& kb, const Matrix& x, int r,
                        std::optional<TimeInterval> exclude, OpCounter* counter) {
    if (kb.config.lookback != model.config.lookback ||
        kb.config.horizon != model.config.horizon)
        throw std::invalid_argument("forecast: model and knowledge base disagree on L/H");

    ForecastOutput out;
    const auto refs = retrieve_all(kb, x, r, exclude, counter);
    out.retrieval = retrieval_forecast(model, refs);
    out.direct = direct_forecast(model, x);
    out.fused = fuse(out.direct, out.retrieval, model.alpha);
    out.refs_used.reserve(refs.size());
    for (const auto& list : refs) out.refs_used.push_back(static_cast<int>(list.size()));
    return out;
}

void save_model(const CraftModel& model, const std::string& path) {
    ByteWriter w;
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(model.config.lookback));
    w.u32(static_cast<std::uint32_t>(model.config.horizon));
    w.u32(static_cast<std::uint32_t>(model.config.hidden));
    w.f64(model.alpha);
    w.f64_span(model.mlp_w1.storage());
    w.f64_span(model.mlp_b1);
    w.f64_span(model.mlp_w2.storage());
    w.f64_span(model.mlp_b2);
    w.f64_span(model.head_w.storage());
    w.f64_span(model.head_b);
    w.write_file(path);
}

CraftModel load_model(const std::string& path) {
    ByteReader r(path);
    r.expect_magic(kMagic, "model checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("version mismatch: checkpoint has v" + std::to_string(version) +
                                 ", expected v" + std::to_string(kVersion));

    CraftModel model;
    model.config.lookback = r.u32();
    model.config.horizon = r.u32();
    model.config.hidden = r.u32();
    model.alpha = r.f64();
    model.mlp_w1 = Matrix(model.config.lookback, model.config.hidden);
    model.mlp_b1.resize(model.config.hidden);
    model.mlp_w2 = Matrix(model.config.hidden, model.config.horizon);
    model.mlp_b2.resize(model.config.horizon);
    model.head_w = Matrix(model.config.horizon, model.config.horizon);
    model.head_b.resize(model.config.horizon);
    r.f64_span(model.mlp_w1.storage());
    r.f64_span(model.mlp_b1);
    r.f64_span(model.mlp_w2.storage());
    r.f64_span(model.mlp_b2);
    r.f64_span(model.head_w.storage());
    r.f64_span(model.head_b);
    if (r.remaining() != 0) throw std::runtime_error("corrupt checkpoint: trailing bytes");
    return model;
}

} // namespace craft
