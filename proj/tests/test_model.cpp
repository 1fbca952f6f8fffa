#include <algorithm>
#include <cmath>
#include <filesystem>

#include "craft/memory.hpp"
#include "craft/model.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace craft;

namespace {

CraftModel zero_model(const ModelConfig& config) {
    CraftModel m = init_model(config, 0.001, 1);
    std::fill(m.mlp_w1.storage().begin(), m.mlp_w1.storage().end(), 0.0);
    std::fill(m.mlp_b1.begin(), m.mlp_b1.end(), 0.0);
    std::fill(m.mlp_w2.storage().begin(), m.mlp_w2.storage().end(), 0.0);
    std::fill(m.mlp_b2.begin(), m.mlp_b2.end(), 0.0);
    std::fill(m.head_w.storage().begin(), m.head_w.storage().end(), 0.0);
    std::fill(m.head_b.begin(), m.head_b.end(), 0.0);
    return m;
}

RetrievedReference ref_of(std::vector<double> value) {
    RetrievedReference r;
    r.value = std::move(value);
    return r;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = uniform_double(rng, -1.0, 1.0);
    return m;
}

} // namespace

TEST_CASE("init_model shapes, bounds, and determinism") {
    const ModelConfig config{12, 5, 7};
    const CraftModel m = init_model(config, 0.25, 99);
    CHECK(m.mlp_w1.rows() == 12);
    CHECK(m.mlp_w1.cols() == 7);
    CHECK(m.mlp_b1.size() == 7);
    CHECK(m.mlp_w2.rows() == 7);
    CHECK(m.mlp_w2.cols() == 5);
    CHECK(m.mlp_b2.size() == 5);
    CHECK(m.head_w.rows() == 5);
    CHECK(m.head_w.cols() == 5);
    CHECK(m.head_b.size() == 5);
    CHECK(m.alpha == 0.25);

    const double bound_w1 = 1.0 / std::sqrt(12.0);
    for (const double v : m.mlp_w1.storage()) CHECK(std::fabs(v) <= bound_w1);
    const double bound_w2 = 1.0 / std::sqrt(7.0);
    for (const double v : m.mlp_w2.storage()) CHECK(std::fabs(v) <= bound_w2);
    const double bound_h = 1.0 / std::sqrt(5.0);
    for (const double v : m.head_w.storage()) CHECK(std::fabs(v) <= bound_h);

    CHECK(init_model(config, 0.25, 99) == m);
    CHECK(init_model(config, 0.25, 100) != m);

    CHECK_THROWS_WITH(init_model(ModelConfig{0, 5, 7}, 0.1, 1),
                      doctest::Contains("dimensions must be >= 1"));
    CHECK_THROWS_WITH(init_model(config, -0.5, 1), doctest::Contains("alpha must be >= 0"));
}

TEST_CASE("zero-weight direct forecast reduces to bias plus last value") {
    const ModelConfig config{6, 4, 3};
    CraftModel m = zero_model(config);
    m.mlp_b2 = {0.5, -1.0, 2.0, 0.0};

    std::mt19937_64 rng(4);
    const Matrix x = random_matrix(6, 2, rng);
    const Matrix out = direct_forecast(m, x);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(out(k, c) == m.mlp_b2[k] + x(5, c));
}

TEST_CASE("direct forecast is shift equivariant") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const ModelConfig config{8, 4, 6};
        const CraftModel m = init_model(config, 0.001, 200 + static_cast<std::uint64_t>(trial));
        const Matrix x = random_matrix(8, 3, rng);
        Matrix shifted = x;
        const double offsets[3] = {uniform_double(rng, -5.0, 5.0),
                                   uniform_double(rng, -5.0, 5.0),
                                   uniform_double(rng, -5.0, 5.0)};
        for (std::size_t t = 0; t < 8; ++t)
            for (std::size_t c = 0; c < 3; ++c) shifted(t, c) += offsets[c];

        const Matrix a = direct_forecast(m, x);
        const Matrix b = direct_forecast(m, shifted);
        for (std::size_t k = 0; k < 4; ++k)
            for (std::size_t c = 0; c < 3; ++c)
                CHECK(b(k, c) - a(k, c) == doctest::Approx(offsets[c]).epsilon(1e-9));
    }
}

TEST_CASE("direct forecast matches the per-element oracle") {
    std::mt19937_64 rng(6);
    const ModelConfig config{8, 4, 5};
    const CraftModel m = init_model(config, 0.001, 77);
    const Matrix x = random_matrix(8, 2, rng);
    const Matrix out = direct_forecast(m, x);
    for (std::size_t c = 0; c < 2; ++c) {
        const std::vector<double> want = oracle::direct_channel(m, x.col(c));
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(out(k, c) == doctest::Approx(want[k]).epsilon(1e-12));
    }
    CHECK_THROWS_WITH(direct_forecast(m, Matrix(7, 2)), doctest::Contains("lookback mismatch"));
}

TEST_CASE("retrieval head contracts") {
    const ModelConfig config{6, 4, 3};

    SUBCASE("identity head reproduces the reference") {
        CraftModel m = zero_model(config);
        for (std::size_t k = 0; k < 4; ++k) m.head_w(k, k) = 1.0;
        const std::vector<double> r{1.5, -2.0, 0.5, 3.25};
        const Matrix out = retrieval_forecast(m, {{ref_of(r)}});
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(out(k, 0) == doctest::Approx(r[k]).epsilon(1e-12));
    }
    SUBCASE("zero head collapses to the reference's last value") {
        const CraftModel m = zero_model(config);
        const std::vector<double> r{1.5, -2.0, 0.5, 3.25};
        const Matrix out = retrieval_forecast(m, {{ref_of(r)}});
        for (std::size_t k = 0; k < 4; ++k) CHECK(out(k, 0) == 3.25);
    }
    SUBCASE("a duplicated reference equals the single-reference output") {
        const CraftModel m = init_model(config, 0.001, 8);
        const std::vector<double> r{0.25, 0.5, -1.0, 2.0};
        const Matrix once = retrieval_forecast(m, {{ref_of(r)}});
        const Matrix twice = retrieval_forecast(m, {{ref_of(r), ref_of(r)}});
        CHECK(once == twice);
    }
    SUBCASE("reference order does not matter") {
        const CraftModel m = init_model(config, 0.001, 9);
        std::mt19937_64 rng(10);
        const auto r1 = testutil::random_vector(4, rng);
        const auto r2 = testutil::random_vector(4, rng);
        const auto r3 = testutil::random_vector(4, rng);
        const Matrix a = retrieval_forecast(m, {{ref_of(r1), ref_of(r2), ref_of(r3)}});
        const Matrix b = retrieval_forecast(m, {{ref_of(r3), ref_of(r1), ref_of(r2)}});
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(a(k, 0) == doctest::Approx(b(k, 0)).epsilon(1e-12));
    }
    SUBCASE("matches the per-reference oracle under averaging") {
        const CraftModel m = init_model(config, 0.001, 11);
        std::mt19937_64 rng(12);
        const auto r1 = testutil::random_vector(4, rng);
        const auto r2 = testutil::random_vector(4, rng);
        const Matrix out = retrieval_forecast(m, {{ref_of(r1), ref_of(r2)}});
        const auto p1 = oracle::head_on_reference(m, r1);
        const auto p2 = oracle::head_on_reference(m, r2);
        for (std::size_t k = 0; k < 4; ++k)
            CHECK(out(k, 0) == doctest::Approx(0.5 * (p1[k] + p2[k])).epsilon(1e-12));
    }
    SUBCASE("empty list yields a zero column, mixed channels work") {
        const CraftModel m = init_model(config, 0.001, 13);
        const std::vector<double> r{1.0, 2.0, 3.0, 4.0};
        const Matrix out = retrieval_forecast(m, {{}, {ref_of(r)}});
        for (std::size_t k = 0; k < 4; ++k) CHECK(out(k, 0) == 0.0);
        CHECK(out(0, 1) != 0.0);
    }
    SUBCASE("wrong reference length") {
        const CraftModel m = init_model(config, 0.001, 14);
        CHECK_THROWS_WITH(retrieval_forecast(m, {{ref_of({1.0, 2.0})}}),
                          doctest::Contains("reference length mismatch"));
    }
}

TEST_CASE("fuse arithmetic and validation") {
    const Matrix direct = Matrix::from_rows({{1.0, 3.0}, {2.0, 4.0}});
    const Matrix retrieval = Matrix::from_rows({{2.0, -1.0}, {0.5, 10.0}});

    CHECK(fuse(direct, retrieval, 0.0) == direct);

    const Matrix all_ret = fuse(Matrix(2, 2, 0.0), retrieval, 1.0);
    CHECK(all_ret == retrieval);

    const Matrix fused = fuse(direct, retrieval, 0.001);
    CHECK(fused(0, 0) == doctest::Approx(1.002).epsilon(1e-15));
    CHECK(fused(1, 1) == doctest::Approx(4.01).epsilon(1e-15));

    CHECK_THROWS_WITH(fuse(direct, Matrix(3, 2), 0.5), doctest::Contains("shape mismatch"));
}

TEST_CASE("forecast composition and the fusion invariant") {
    const auto series = testutil::periodic_series(200, {24.0, 7.0}, 0.1, 70);
    const auto memory = memory_from_series(series, 24, 6);
    const KnowledgeBase kb = build_knowledge_base(memory, build_graph(memory, 1), 6);
    const ModelConfig config{24, 6, 8};
    const CraftModel m = init_model(config, 0.001, 71);

    const Matrix x = memory[40].key;
    OpCounter counter;
    const ForecastOutput out = forecast(m, kb, x, 2, std::nullopt, &counter);

    CHECK(out.fused == fuse(out.direct, out.retrieval, m.alpha));
    CHECK(out.direct == direct_forecast(m, x));
    CHECK(out.refs_used == std::vector<int>{2, 2});
    CHECK(counter.similarity_evals > 0);

    SUBCASE("alpha 0 makes the pipeline ignore the knowledge base") {
        CraftModel plain = m;
        plain.alpha = 0.0;
        const ForecastOutput a = forecast(plain, kb, x, 2);

        const auto other = memory_from_series(testutil::random_series(120, 2, 72), 24, 6);
        const KnowledgeBase kb2 = build_knowledge_base(other, build_graph(other, 1), 6);
        const ForecastOutput b = forecast(plain, kb2, x, 2);

        CHECK(a.fused == a.direct);
        CHECK(b.fused == a.fused);
    }
    SUBCASE("model/kb dimension guard") {
        const CraftModel wrong = init_model(ModelConfig{24, 7, 8}, 0.001, 73);
        CHECK_THROWS_WITH(forecast(wrong, kb, x, 1), doctest::Contains("disagree on L/H"));
    }
}

TEST_CASE("checkpoint round trip and rejection") {
    const CraftModel m = init_model(ModelConfig{10, 4, 6}, 0.0075, 74);
    const auto path = testutil::temp_path("model_roundtrip.crmd");
    save_model(m, path.string());
    CHECK(load_model(path.string()) == m);

    SUBCASE("corrupted byte") {
        auto bytes = [&] {
            std::ifstream in(path, std::ios::binary);
            return std::vector<char>{std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>()};
        }();
        bytes[bytes.size() / 3] ^= 0x01;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.close();
        CHECK_THROWS_WITH(load_model(path.string()), doctest::Contains("checksum failure"));
    }
    SUBCASE("wrong file type") {
        const auto series = testutil::random_series(20, 2, 75);
        const auto memory = memory_from_series(series, 6, 2);
        save_kb(build_knowledge_base(memory, build_graph(memory, 1), 3), path.string());
        CHECK_THROWS_WITH(load_model(path.string()),
                          doctest::Contains("not a model checkpoint file"));
    }
    std::filesystem::remove(path);
}
