#pragma once

// Small synthetic datasets shared by the unit and acceptance suites.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "craft/series.hpp"
#include "craft/util.hpp"

namespace testutil {

// Per channel: sin(2*pi*t/p + phase) + 0.4*sin(4*pi*t/p + phase2) + noise.
// Distinct periods give channels distinct spectra, which is what the
// retrieval tests rely on.
inline craft::MultivariateSeries periodic_series(std::size_t t_len,
                                                 const std::vector<double>& periods,
                                                 double noise_amp, std::uint64_t seed) {
    const std::size_t channels = periods.size();
    std::mt19937_64 rng(seed);
    std::vector<double> phase1(channels), phase2(channels);
    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t c = 0; c < channels; ++c) {
        phase1[c] = craft::uniform_double(rng, 0.0, two_pi);
        phase2[c] = craft::uniform_double(rng, 0.0, two_pi);
    }
    craft::MultivariateSeries series;
    series.values = craft::Matrix(t_len, channels);
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t c = 0; c < channels; ++c) {
            const double w = two_pi * static_cast<double>(t) / periods[c];
            series.values(t, c) = std::sin(w + phase1[c]) + 0.4 * std::sin(2.0 * w + phase2[c]) +
                                  noise_amp * craft::uniform_double(rng, -1.0, 1.0);
        }
    for (std::size_t c = 0; c < channels; ++c)
        series.channel_names.push_back("p" + std::to_string(static_cast<long>(periods[c])));
    return series;
}

inline craft::MultivariateSeries random_series(std::size_t t_len, std::size_t channels,
                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    craft::MultivariateSeries series;
    series.values = craft::Matrix(t_len, channels);
    for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t c = 0; c < channels; ++c)
            series.values(t, c) = craft::uniform_double(rng, -1.0, 1.0);
    for (std::size_t c = 0; c < channels; ++c)
        series.channel_names.push_back("c" + std::to_string(c));
    return series;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = craft::uniform_double(rng, lo, hi);
    return v;
}

inline std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("craft_test_" + name);
}

inline void write_csv(const std::filesystem::path& path, const craft::MultivariateSeries& series) {
    std::ofstream out(path);
    out << "date";
    for (const auto& name : series.channel_names) out << "," << name;
    out << "\n";
    char buf[64];
    for (std::size_t t = 0; t < series.length(); ++t) {
        out << "t" << t;
        for (std::size_t c = 0; c < series.channels(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", series.values(t, c));
            out << "," << buf;
        }
        out << "\n";
    }
}

} // namespace testutil
