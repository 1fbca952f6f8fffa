#pragma once

#include <cstdint>

#include "craft/model.hpp"

namespace craft {

struct TrainConfig {
    double lr = 0.001;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::size_t patience = 3;
    std::uint64_t seed = 0;
    double alpha = 0.001;
    int refs = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool freeze_head = false;      // head keeps its init, only the MLP trains
    bool cache_retrieval = false;  // reuse per-window retrievals across epochs
};

/// Gradient (or moment) accumulators shaped like the six parameter tensors.
struct ModelGrads {
    Matrix mlp_w1;
    std::vector<double> mlp_b1;
    Matrix mlp_w2;
    std::vector<double> mlp_b2;
    Matrix head_w;
    std::vector<double> head_b;

    static ModelGrads zeros_like(const CraftModel& model);
};

struct AdamState {
    ModelGrads m;
    ModelGrads v;
    long t = 0;
};

/// One training sample with its (already selected) references. Reference
/// selection is treated as constant during differentiation.
struct TrainSample {
    Matrix x;
    Matrix y;
    std::vector<std::vector<RetrievedReference>> refs;
};

double mse_loss(const Matrix& pred, const Matrix& target);

/// Mean fused MSE over the batch. Shared by backward() and the finite
/// difference checks in the tests.
double batch_loss(const CraftModel& model, const std::vector<const TrainSample*>& batch);

/// Exact gradients of batch_loss with respect to all six tensors.
ModelGrads backward(const CraftModel& model, const std::vector<const TrainSample*>& batch,
                    double* loss_out = nullptr);

/// Bias-corrected Adam update; increments state.t.
void adam_step(CraftModel& model, const ModelGrads& grads, AdamState& state,
               const TrainConfig& config);

struct TrainLog {
    struct Epoch {
        std::size_t epoch = 0;
        double train_mse = 0.0;
        double val_mse = 0.0;
        double seconds = 0.0;
    };
    std::vector<Epoch> epochs;
    std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
    double best_val = 0.0;
    bool aborted = false;  // non-finite loss cut training short
};

/// Joint training of the MLP and retrieval head on fused-output MSE.
/// Retrieval during training excludes memory entries overlapping the query's
/// own [t-L+1, t+H] span; validation retrieval runs unexcluded. Returns the
/// best-validation checkpoint (the initial model when epochs == 0).
CraftModel train(const MultivariateSeries& train_std, const MultivariateSeries& val_std,
                 const KnowledgeBase& kb, const ModelConfig& mc, const TrainConfig& tc,
                 TrainLog* log = nullptr);

} // namespace craft
