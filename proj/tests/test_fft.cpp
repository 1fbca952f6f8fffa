#include <cmath>
#include <complex>
#include <numbers>

#include "craft/fft.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "synthetic.hpp"

using craft::fft::rfft;
using craft::fft::truncated_rfft;

namespace {

double rel_err(std::complex<double> got, std::complex<double> want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

// One-sided Parseval weights: interior bins stand in for their conjugates.
double weighted_energy(const std::vector<std::complex<double>>& bins, std::size_t n) {
    double sum = 0.0;
    for (std::size_t k = 0; k < bins.size(); ++k) {
        const bool self_conjugate = k == 0 || (n % 2 == 0 && k == n / 2);
        sum += (self_conjugate ? 1.0 : 2.0) * std::norm(bins[k]);
    }
    return sum;
}

} // namespace

TEST_CASE("constant input is DC-only") {
    for (const std::size_t n : {8u, 15u, 720u}) {
        const std::vector<double> x(n, 2.5);
        const auto bins = truncated_rfft(x, std::min<std::size_t>(6, n / 2 + 1));
        CHECK(bins[0].real() == doctest::Approx(2.5 * static_cast<double>(n)).epsilon(1e-12));
        CHECK(bins[0].imag() == doctest::Approx(0.0));
        for (std::size_t k = 1; k < bins.size(); ++k) CHECK(std::abs(bins[k]) < 1e-9);
    }
}

TEST_CASE("pure cosine tone lands in its bin") {
    const std::size_t n = 64;
    std::vector<double> x(n);
    for (std::size_t t = 0; t < n; ++t)
        x[t] = std::cos(2.0 * std::numbers::pi * 3.0 * static_cast<double>(t) /
                        static_cast<double>(n));
    const auto bins = truncated_rfft(x, 6);
    CHECK(std::abs(bins[3]) == doctest::Approx(static_cast<double>(n) / 2.0).epsilon(1e-6));
    for (const std::size_t k : {0u, 1u, 2u, 4u, 5u})
        CHECK(std::abs(bins[k]) < 1e-9 * static_cast<double>(n));
}

TEST_CASE("truncated_rfft matches the naive DFT oracle") {
    std::mt19937_64 rng(42);
    SUBCASE("random x, L=32, f=9") {
        const auto x = testutil::random_vector(32, rng);
        const auto got = truncated_rfft(x, 9);
        const auto want = oracle::naive_dft(x, 9);
        REQUIRE(got.size() == 9);
        for (std::size_t k = 0; k < 9; ++k) CHECK(rel_err(got[k], want[k]) < 1e-9);
    }
    SUBCASE("power-of-two, odd, and composite lengths, full spectrum") {
        for (const std::size_t n : {2u, 3u, 12u, 17u, 64u, 96u, 100u, 360u, 720u}) {
            const auto x = testutil::random_vector(n, rng);
            const auto got = rfft(x);
            REQUIRE(got.size() == n / 2 + 1);
            const auto want = oracle::naive_dft(x, n / 2 + 1);
            for (std::size_t k = 0; k < got.size(); ++k) CHECK(rel_err(got[k], want[k]) < 1e-9);
        }
    }
}

TEST_CASE("Parseval identity on the one-sided spectrum") {
    std::mt19937_64 rng(7);
    for (const std::size_t n : {16u, 63u, 720u}) {
        const auto x = testutil::random_vector(n, rng);
        double time_energy = 0.0;
        for (const double v : x) time_energy += v * v;
        const double freq_energy = weighted_energy(rfft(x), n);
        CHECK(freq_energy ==
              doctest::Approx(static_cast<double>(n) * time_energy).epsilon(1e-6));
    }
}

TEST_CASE("linearity") {
    std::mt19937_64 rng(99);
    const std::size_t n = 48;
    const auto x = testutil::random_vector(n, rng);
    const auto y = testutil::random_vector(n, rng);
    const double a = 2.25, b = -0.75;
    std::vector<double> combo(n);
    for (std::size_t t = 0; t < n; ++t) combo[t] = a * x[t] + b * y[t];

    const auto fx = truncated_rfft(x, 10);
    const auto fy = truncated_rfft(y, 10);
    const auto fc = truncated_rfft(combo, 10);
    for (std::size_t k = 0; k < 10; ++k)
        CHECK(std::abs(fc[k] - (a * fx[k] + b * fy[k])) < 1e-9 * static_cast<double>(n));
}

TEST_CASE("angle precision survives large lengths") {
    // A tone in the highest retained bin of a long non-power-of-two input
    // exposes naive angle accumulation; the result must still be clean.
    const std::size_t n = 720;
    std::vector<double> x(n);
    const std::size_t tone = 359;
    for (std::size_t t = 0; t < n; ++t)
        x[t] = std::cos(2.0 * std::numbers::pi * static_cast<double>(tone) *
                        static_cast<double>(t) / static_cast<double>(n));
    const auto bins = rfft(x);
    CHECK(std::abs(bins[tone]) == doctest::Approx(static_cast<double>(n) / 2.0).epsilon(1e-9));
    CHECK(std::abs(bins[tone - 1]) < 1e-8 * static_cast<double>(n));
}

TEST_CASE("degenerate and invalid inputs") {
    CHECK(truncated_rfft(std::vector<double>{3.0}, 1)[0].real() == 3.0);
    const std::vector<double> x(10, 1.0);
    CHECK_THROWS_WITH(truncated_rfft(x, 0),
                      doctest::Contains("frequency cutoff out of range"));
    CHECK_THROWS_WITH(truncated_rfft(x, 7),
                      doctest::Contains("frequency cutoff out of range"));
    CHECK_THROWS_WITH(truncated_rfft(std::vector<double>{}, 1), doctest::Contains("empty"));
    CHECK(truncated_rfft(x, 6).size() == 6);  // floor(10/2)+1 is the limit
}

TEST_CASE("truncation is a prefix of the full spectrum") {
    std::mt19937_64 rng(5);
    const auto x = testutil::random_vector(31, rng);
    const auto full = rfft(x);
    const auto head = truncated_rfft(x, 4);
    for (std::size_t k = 0; k < 4; ++k) CHECK(head[k] == full[k]);
}
