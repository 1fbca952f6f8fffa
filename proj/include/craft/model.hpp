#pragma once

#include <cstdint>
#include <string>

#include "craft/retrieval.hpp"

namespace craft {

struct ModelConfig {
    std::size_t lookback = 720;
    std::size_t horizon = 96;
    std::size_t hidden = 512;

    bool operator==(const ModelConfig&) const = default;
};

/// Direct forecaster (two-layer MLP, last-value normalized, shared across
/// channels), retrieval head (H -> H linear map, also last-value
/// normalized), and the fixed fusion coefficient alpha.
struct CraftModel {
    Matrix mlp_w1;               // L x hidden
    std::vector<double> mlp_b1;  // hidden
    Matrix mlp_w2;               // hidden x H
    std::vector<double> mlp_b2;  // H
    Matrix head_w;               // H x H
    std::vector<double> head_b;  // H
    double alpha = 0.001;
    ModelConfig config;

    bool operator==(const CraftModel&) const = default;
};

struct ForecastOutput {
    Matrix fused;      // H x C, equals direct + alpha * retrieval
    Matrix direct;     // H x C
    Matrix retrieval;  // H x C
    std::vector<int> refs_used;
};

/// Seeded init, uniform in +-1/sqrt(fan_in) per tensor.
CraftModel init_model(const ModelConfig& config, double alpha, std::uint64_t seed);

/// Per channel: subtract the window's last value, run the shared MLP, add
/// the last value back to the prediction.
Matrix direct_forecast(const CraftModel& model, const Matrix& x);

/// Per channel: each reference is offset-normalized by its own last value,
/// mapped through the head, restored, then averaged. An empty reference
/// list yields a zero column.
Matrix retrieval_forecast(const CraftModel& model,
                          const std::vector<std::vector<RetrievedReference>>& refs);

Matrix fuse(const Matrix& direct, const Matrix& retrieval, double alpha);

/// retrieve_all -> retrieval_forecast, direct_forecast, fuse.
ForecastOutput forecast(const CraftModel& model, const KnowledgeBase& kb, const Matrix& x, int r,
                        std::optional<TimeInterval> exclude = {}, OpCounter* counter = nullptr);

/// Versioned binary checkpoint with CRC-32 trailer; round trips bit-exactly.
void save_model(const CraftModel& model, const std::string& path);
CraftModel load_model(const std::string& path);

} // namespace craft
