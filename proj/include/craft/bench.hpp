#pragma once

#include <map>
#include <string>

#include "craft/training.hpp"

namespace craft {

enum class SplitKind { Auto, Ratio, EttHour, EttMinute };

struct ExperimentConfig {
    std::string data_path;
    std::string dataset_name;
    std::size_t lookback = 720;
    std::vector<std::size_t> horizons = {96, 192, 336, 720};
    int neighbors = 3;                      // M
    int refs = 1;                           // references retrieved per channel
    std::size_t freq_cutoff = 0;            // 0 = default rule for lookback
    double alpha = 0.001;
    std::size_t hidden = 512;
    TrainConfig train;
    SplitKind split = SplitKind::Auto;
    SplitRatios ratios;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    int threads = 1;
};

struct HorizonMetrics {
    std::size_t horizon = 0;
    double mse = 0.0;
    double mae = 0.0;
    double sim_evals_per_query = 0.0;
    double s_per_batch_full = 0.0;       // retrieval + forward
    double s_per_batch_retrieval = 0.0;  // retrieval only
};

struct MetricsReport {
    std::vector<HorizonMetrics> rows;
    double avg_mse = 0.0;
    double avg_mae = 0.0;
};

struct SweepRow {
    int m = 0;
    double mse = 0.0;
    double mae = 0.0;
    double sim_evals_per_query = 0.0;
    double s_per_batch_full = 0.0;
    double s_per_batch_retrieval = 0.0;
};

double metric_mae(const Matrix& pred, const Matrix& target);
double metric_mse(const Matrix& pred, const Matrix& target);

/// Flat key=value config file (# comments, blank lines allowed). Unknown
/// keys are an error.
ExperimentConfig load_config(const std::string& path);
void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// key=value files used for reports and their round-trip checks.
std::map<std::string, std::string> parse_kv_file(const std::string& path);

/// Train/val/test segments under the configured split policy. Auto picks the
/// ETT month convention when the dataset name starts with ETTh/ETTm and the
/// ratio split otherwise.
std::array<MultivariateSeries, 3> split_for_config(const ExperimentConfig& config,
                                                   const MultivariateSeries& series,
                                                   std::size_t min_len = 0);

/// Full protocol per horizon: split, standardize, window, build the
/// knowledge base, train, evaluate on test. Report files in out_dir are
/// rewritten after each horizon. Wall-clock timings go to a separate
/// timing.kv so report.kv stays deterministic.
MetricsReport run_experiment(const ExperimentConfig& config);

/// Re-evaluates retrieval at each M (graph rebuilt, spectra and trained
/// model reused) and writes out_dir/sweep.csv.
std::vector<SweepRow> sweep_candidates(const ExperimentConfig& config,
                                       const std::vector<int>& m_values);

/// CSV of (date, ground_truth, retrieved, fused) for one window and channel.
/// The retrieved column is omitted when nothing was retrieved.
void dump_retrieval_example(const KnowledgeBase& kb, const CraftModel& model,
                            const WindowPair& window, int channel, const std::string& out_path);

/// report.txt (table), report.kv (deterministic metrics), timing.kv.
void write_report(const MetricsReport& report, const ExperimentConfig& config,
                  const std::string& out_dir);

} // namespace craft
