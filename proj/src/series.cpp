#include "craft/series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace craft {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

void strip_cr(std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
}

} // namespace

MultivariateSeries load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty file: " + path);
    strip_cr(line);
    auto header = split_line(line);
    if (header.size() < 2) throw std::runtime_error("fewer than 2 columns: " + path);
    if (header.front() != "date")
        throw std::runtime_error("first column must be named \"date\": " + path);

    MultivariateSeries series;
    series.channel_names.assign(header.begin() + 1, header.end());
    const std::size_t cols = series.channel_names.size();

    std::vector<double> flat;
    std::size_t rows = 0;
    std::size_t file_row = 1;  // header was row 1
    while (std::getline(in, line)) {
        ++file_row;
        strip_cr(line);
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != cols + 1)
            throw std::runtime_error("row " + std::to_string(file_row) + " has " +
                                     std::to_string(fields.size()) + " columns, expected " +
                                     std::to_string(cols + 1));
        for (std::size_t c = 0; c < cols; ++c) {
            const std::string& cell = fields[c + 1];
            double value = 0.0;
            const char* first = cell.data();
            const char* last = cell.data() + cell.size();
            const auto [ptr, ec] = std::from_chars(first, last, value);
            if (ec != std::errc{} || ptr != last || !std::isfinite(value))
                throw std::runtime_error("non-numeric cell at (" + std::to_string(file_row) +
                                         ", " + std::to_string(c + 2) + ")");
            flat.push_back(value);
        }
        ++rows;
    }
    if (rows == 0) throw std::runtime_error("empty file: " + path);

    series.values = Matrix(rows, cols);
    std::copy(flat.begin(), flat.end(), series.values.data());
    return series;
}

namespace {

MultivariateSeries slice(const MultivariateSeries& s, std::size_t begin, std::size_t count) {
    MultivariateSeries out;
    out.channel_names = s.channel_names;
    out.start_index = s.start_index + static_cast<long>(begin);
    out.values = Matrix(count, s.channels());
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < s.channels(); ++c) out.values(r, c) = s.values(begin + r, c);
    return out;
}

void check_min_len(const std::array<MultivariateSeries, 3>& parts, std::size_t min_len) {
    static const char* names[3] = {"train", "val", "test"};
    for (int i = 0; i < 3; ++i)
        if (parts[i].length() < min_len)
            throw std::runtime_error(std::string(names[i]) + " segment shorter than L+H (" +
                                     std::to_string(parts[i].length()) + " < " +
                                     std::to_string(min_len) + ")");
}

} // namespace

std::array<MultivariateSeries, 3> split_chronological(const MultivariateSeries& series,
                                                      SplitRatios ratios, std::size_t min_len) {
    if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0)
        throw std::invalid_argument("split ratios must be positive");
    if (std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");

    const std::size_t total = series.length();
    const auto n_train = static_cast<std::size_t>(static_cast<double>(total) * ratios.train);
    const auto n_test = static_cast<std::size_t>(static_cast<double>(total) * ratios.test);
    const std::size_t n_val = total - n_train - n_test;

    std::array<MultivariateSeries, 3> parts = {slice(series, 0, n_train),
                                               slice(series, n_train, n_val),
                                               slice(series, n_train + n_val, n_test)};
    check_min_len(parts, min_len);
    return parts;
}

std::array<MultivariateSeries, 3> split_by_counts(const MultivariateSeries& series,
                                                  std::size_t n_train, std::size_t n_val,
                                                  std::size_t n_test, std::size_t min_len) {
    if (n_train + n_val + n_test > series.length())
        throw std::runtime_error("split counts exceed series length");
    std::array<MultivariateSeries, 3> parts = {slice(series, 0, n_train),
                                               slice(series, n_train, n_val),
                                               slice(series, n_train + n_val, n_test)};
    check_min_len(parts, min_len);
    return parts;
}

std::array<std::size_t, 3> ett_hourly_counts() {
    return {12 * 30 * 24, 4 * 30 * 24, 4 * 30 * 24};
}

std::array<std::size_t, 3> ett_minute_counts() {
    return {12 * 30 * 24 * 4, 4 * 30 * 24 * 4, 4 * 30 * 24 * 4};
}

ChannelStats fit_stats(const MultivariateSeries& train) {
    const std::size_t t = train.length();
    const std::size_t c = train.channels();
    if (t == 0) throw std::invalid_argument("fit_stats: empty series");

    ChannelStats stats;
    stats.mean.assign(c, 0.0);
    stats.std.assign(c, 0.0);
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t j = 0; j < c; ++j) stats.mean[j] += train.values(r, j);
    for (std::size_t j = 0; j < c; ++j) stats.mean[j] /= static_cast<double>(t);
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t j = 0; j < c; ++j) {
            const double d = train.values(r, j) - stats.mean[j];
            stats.std[j] += d * d;
        }
    for (std::size_t j = 0; j < c; ++j) {
        stats.std[j] = std::sqrt(stats.std[j] / static_cast<double>(t));
        if (stats.std[j] < 1e-8) stats.std[j] = 1.0;  // dead channel
    }
    return stats;
}

MultivariateSeries apply_stats(const ChannelStats& stats, const MultivariateSeries& series) {
    if (stats.mean.size() != series.channels())
        throw std::invalid_argument("apply_stats: channel count mismatch");
    MultivariateSeries out = series;
    for (std::size_t r = 0; r < out.length(); ++r)
        for (std::size_t c = 0; c < out.channels(); ++c)
            out.values(r, c) = (out.values(r, c) - stats.mean[c]) / stats.std[c];
    return out;
}

MultivariateSeries invert_stats(const ChannelStats& stats, const MultivariateSeries& series) {
    if (stats.mean.size() != series.channels())
        throw std::invalid_argument("invert_stats: channel count mismatch");
    MultivariateSeries out = series;
    for (std::size_t r = 0; r < out.length(); ++r)
        for (std::size_t c = 0; c < out.channels(); ++c)
            out.values(r, c) = out.values(r, c) * stats.std[c] + stats.mean[c];
    return out;
}

std::vector<long> window_ends(const MultivariateSeries& series, std::size_t lookback,
                              std::size_t horizon, std::size_t stride) {
    if (lookback < 1 || horizon < 1 || stride < 1)
        throw std::invalid_argument("window lengths and stride must be >= 1");
    if (series.length() < lookback + horizon)
        throw std::runtime_error("series shorter than lookback + horizon");

    const std::size_t count = (series.length() - lookback - horizon) / stride + 1;
    std::vector<long> ends(count);
    for (std::size_t i = 0; i < count; ++i)
        ends[i] = series.start_index + static_cast<long>(i * stride + lookback - 1);
    return ends;
}

WindowPair make_window(const MultivariateSeries& series, long t_end, std::size_t lookback,
                       std::size_t horizon) {
    const long local_end = t_end - series.start_index;
    const long local_start = local_end - static_cast<long>(lookback) + 1;
    if (local_start < 0 ||
        local_end + static_cast<long>(horizon) >= static_cast<long>(series.length()))
        throw std::out_of_range("window does not fit in series");

    WindowPair pair;
    pair.t_end = t_end;
    pair.x = Matrix(lookback, series.channels());
    pair.y = Matrix(horizon, series.channels());
    for (std::size_t r = 0; r < lookback; ++r)
        for (std::size_t c = 0; c < series.channels(); ++c)
            pair.x(r, c) = series.values(static_cast<std::size_t>(local_start) + r, c);
    for (std::size_t r = 0; r < horizon; ++r)
        for (std::size_t c = 0; c < series.channels(); ++c)
            pair.y(r, c) = series.values(static_cast<std::size_t>(local_end) + 1 + r, c);
    return pair;
}

std::vector<WindowPair> sliding_windows(const MultivariateSeries& series, std::size_t lookback,
                                        std::size_t horizon, std::size_t stride) {
    std::vector<WindowPair> pairs;
    for (const long t_end : window_ends(series, lookback, horizon, stride))
        pairs.push_back(make_window(series, t_end, lookback, horizon));
    return pairs;
}

} // namespace craft
