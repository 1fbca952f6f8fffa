#pragma once

#include <array>
#include <string>
#include <vector>

#include "craft/matrix.hpp"

namespace craft {

/// Aligned multivariate observations, T timesteps by C channels.
/// start_index is the global time offset of row 0, so windows cut from a
/// split segment keep their position in the original series.
struct MultivariateSeries {
    Matrix values;                           // T x C
    std::vector<std::string> channel_names;  // length C
    long start_index = 0;

    std::size_t length() const { return values.rows(); }
    std::size_t channels() const { return values.cols(); }
};

/// One supervised pair: lookback x (L x C) immediately followed by
/// horizon y (H x C). t_end is the global index of the last lookback row,
/// so y covers [t_end+1, t_end+H].
struct WindowPair {
    Matrix x;
    Matrix y;
    long t_end = 0;
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std;
};

struct SplitRatios {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
};

/// Reads a benchmark CSV: header row, first column "date" (kept only as a
/// presence check), remaining columns decimal numerics. Rejects any
/// non-numeric or non-finite cell.
MultivariateSeries load_csv(const std::string& path);

/// Contiguous, non-overlapping train/val/test segments covering the whole
/// series in order. Lengths are floor(T*train) and floor(T*test) with the
/// middle taking the remainder. min_len (typically L+H) is checked per
/// segment.
std::array<MultivariateSeries, 3> split_chronological(const MultivariateSeries& series,
                                                      SplitRatios ratios,
                                                      std::size_t min_len = 0);

/// Split by explicit row counts, dropping any tail past the three segments.
/// Used for the ETT-family month convention.
std::array<MultivariateSeries, 3> split_by_counts(const MultivariateSeries& series,
                                                  std::size_t n_train, std::size_t n_val,
                                                  std::size_t n_test, std::size_t min_len = 0);

/// ETT month convention: 12/4/4 months of 30 days.
std::array<std::size_t, 3> ett_hourly_counts();
std::array<std::size_t, 3> ett_minute_counts();

/// Per-channel mean and population std over the train split. A std below
/// 1e-8 is clamped to 1.0 so constant channels standardize to zero.
ChannelStats fit_stats(const MultivariateSeries& train);
MultivariateSeries apply_stats(const ChannelStats& stats, const MultivariateSeries& series);
MultivariateSeries invert_stats(const ChannelStats& stats, const MultivariateSeries& series);

/// All (lookback, horizon) pairs at the given stride, ordered by t_end.
/// Count is floor((T-L-H)/stride) + 1.
std::vector<WindowPair> sliding_windows(const MultivariateSeries& series, std::size_t lookback,
                                        std::size_t horizon, std::size_t stride = 1);

/// The t_end values sliding_windows would produce, without materializing
/// the pairs. make_window builds a single pair on demand.
std::vector<long> window_ends(const MultivariateSeries& series, std::size_t lookback,
                              std::size_t horizon, std::size_t stride = 1);
WindowPair make_window(const MultivariateSeries& series, long t_end, std::size_t lookback,
                       std::size_t horizon);

} // namespace craft
