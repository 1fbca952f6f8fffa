#include "craft/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "craft/util.hpp"

namespace craft {

double metric_mae(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("metric_mae: shape mismatch");
    if (pred.empty()) throw std::invalid_argument("metric_mae: empty matrices");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        sum += std::fabs(pred.data()[i] - target.data()[i]);
    return sum / static_cast<double>(pred.size());
}

double metric_mse(const Matrix& pred, const Matrix& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("metric_mse: shape mismatch");
    return mse_loss(pred, target);
}

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid value for " + key + ": " + value);
    }
}

unsigned long long parse_count(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid value for " + key + ": " + value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
    if (value == "0" || value == "false" || value == "no" || value == "off") return false;
    throw std::invalid_argument("invalid value for " + key + ": " + value);
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw std::invalid_argument("invalid value for " + key + ": " + value);
        out.push_back(static_cast<std::size_t>(parse_count(key, item)));
    }
    if (out.empty()) throw std::invalid_argument("invalid value for " + key + ": " + value);
    return out;
}

} // namespace

void apply_config_entry(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data") cfg.data_path = value;
    else if (key == "dataset") cfg.dataset_name = value;
    else if (key == "lookback") cfg.lookback = static_cast<std::size_t>(parse_count(key, value));
    else if (key == "horizons") cfg.horizons = parse_size_list(key, value);
    else if (key == "neighbors") cfg.neighbors = static_cast<int>(parse_count(key, value));
    else if (key == "refs") cfg.refs = static_cast<int>(parse_count(key, value));
    else if (key == "freq_cutoff") cfg.freq_cutoff = static_cast<std::size_t>(parse_count(key, value));
    else if (key == "alpha") cfg.alpha = parse_real(key, value);
    else if (key == "hidden") cfg.hidden = static_cast<std::size_t>(parse_count(key, value));
    else if (key == "lr") cfg.train.lr = parse_real(key, value);
    else if (key == "batch_size") cfg.train.batch_size = static_cast<std::size_t>(parse_count(key, value));
    else if (key == "epochs") cfg.train.epochs = static_cast<std::size_t>(parse_count(key, value));
    else if (key == "patience") cfg.train.patience = static_cast<std::size_t>(parse_count(key, value));
    else if (key == "adam_beta1") cfg.train.adam_beta1 = parse_real(key, value);
    else if (key == "adam_beta2") cfg.train.adam_beta2 = parse_real(key, value);
    else if (key == "adam_eps") cfg.train.adam_eps = parse_real(key, value);
    else if (key == "freeze_head") cfg.train.freeze_head = parse_bool(key, value);
    else if (key == "cache_retrieval") cfg.train.cache_retrieval = parse_bool(key, value);
    else if (key == "split") {
        if (value == "auto") cfg.split = SplitKind::Auto;
        else if (value == "ratio") cfg.split = SplitKind::Ratio;
        else if (value == "ett-hour") cfg.split = SplitKind::EttHour;
        else if (value == "ett-minute") cfg.split = SplitKind::EttMinute;
        else throw std::invalid_argument("invalid value for split: " + value);
    }
    else if (key == "train_ratio") cfg.ratios.train = parse_real(key, value);
    else if (key == "val_ratio") cfg.ratios.val = parse_real(key, value);
    else if (key == "test_ratio") cfg.ratios.test = parse_real(key, value);
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "seed") cfg.seed = parse_count(key, value);
    else if (key == "threads") cfg.threads = static_cast<int>(parse_count(key, value));
    else throw std::invalid_argument("unknown config key: " + key);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    ExperimentConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed config line (expected key=value)");
        apply_config_entry(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed line");
        const std::string key = trim(t.substr(0, eq));
        if (out.count(key) != 0)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": duplicate key " + key);
        out[key] = trim(t.substr(eq + 1));
    }
    return out;
}

namespace {

std::string dataset_label(const ExperimentConfig& cfg) {
    if (!cfg.dataset_name.empty()) return cfg.dataset_name;
    return std::filesystem::path(cfg.data_path).stem().string();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct EvalResult {
    double mse = 0.0;
    double mae = 0.0;
    double sim_evals_per_query = 0.0;
    double s_per_batch_full = 0.0;
    double s_per_batch_retrieval = 0.0;
};

constexpr std::size_t kTimingBatch = 32;
constexpr std::size_t kTimingWarmup = 5;
constexpr std::size_t kTimingMeasured = 50;

EvalResult evaluate_split(const CraftModel& model, const KnowledgeBase& kb,
                          const MultivariateSeries& test_std, int refs, int threads) {
    const std::size_t lookback = model.config.lookback;
    const std::size_t horizon = model.config.horizon;
    const auto ends = window_ends(test_std, lookback, horizon, 1);
    if (ends.empty())
        throw std::runtime_error("evaluation: test segment yields no windows");
    const std::size_t n = ends.size();
    const std::size_t channels = test_std.channels();

    std::vector<double> sq(n, 0.0), ab(n, 0.0);
    std::vector<long long> evals(n, 0);
    parallel_for(n, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const WindowPair w = make_window(test_std, ends[i], lookback, horizon);
            OpCounter counter;
            const ForecastOutput out = forecast(model, kb, w.x, refs, std::nullopt, &counter);
            double s = 0.0, a = 0.0;
            for (std::size_t e = 0; e < w.y.size(); ++e) {
                const double d = out.fused.data()[e] - w.y.data()[e];
                s += d * d;
                a += std::fabs(d);
            }
            sq[i] = s;
            ab[i] = a;
            evals[i] = counter.similarity_evals;
        }
    });

    EvalResult result;
    double sq_sum = 0.0, ab_sum = 0.0;
    long long eval_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sq_sum += sq[i];
        ab_sum += ab[i];
        eval_sum += evals[i];
    }
    const double elements = static_cast<double>(n) * static_cast<double>(horizon) *
                            static_cast<double>(channels);
    result.mse = sq_sum / elements;
    result.mae = ab_sum / elements;
    result.sim_evals_per_query = static_cast<double>(eval_sum) / static_cast<double>(n);

    // Timing: median per-batch wall time after warmup, cycling through the
    // test windows. Windows are materialized up front so only retrieval and
    // the forward pass are measured.
    const std::size_t pool = std::min(n, kTimingBatch * (kTimingWarmup + kTimingMeasured));
    std::vector<Matrix> xs;
    xs.reserve(pool);
    for (std::size_t i = 0; i < pool; ++i)
        xs.push_back(make_window(test_std, ends[i], lookback, horizon).x);

    const auto time_loop = [&](auto&& per_window) {
        std::vector<double> times;
        times.reserve(kTimingMeasured);
        for (std::size_t b = 0; b < kTimingWarmup + kTimingMeasured; ++b) {
            const auto t0 = std::chrono::steady_clock::now();
            if (threads <= 1) {
                for (std::size_t j = 0; j < kTimingBatch; ++j)
                    per_window(xs[(b * kTimingBatch + j) % pool]);
            } else {
                parallel_for(kTimingBatch, threads, [&](std::size_t lo, std::size_t hi) {
                    for (std::size_t j = lo; j < hi; ++j)
                        per_window(xs[(b * kTimingBatch + j) % pool]);
                });
            }
            const double dt =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (b >= kTimingWarmup) times.push_back(dt);
        }
        return median(std::move(times));
    };
    result.s_per_batch_full = time_loop(
        [&](const Matrix& x) { (void)forecast(model, kb, x, refs); });
    result.s_per_batch_retrieval =
        time_loop([&](const Matrix& x) { (void)retrieve_all(kb, x, refs); });
    return result;
}

void write_train_log(const TrainLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    for (const auto& e : log.epochs)
        out << "epoch " << e.epoch << " train_mse " << fmt17(e.train_mse) << " val_mse "
            << fmt17(e.val_mse) << "\n";
    out << "best_epoch " << log.best_epoch << "\n";
    out << "best_val " << fmt17(log.best_val) << "\n";
    out << "aborted " << (log.aborted ? 1 : 0) << "\n";
}

} // namespace

std::array<MultivariateSeries, 3> split_for_config(const ExperimentConfig& config,
                                                   const MultivariateSeries& series,
                                                   std::size_t min_len) {
    SplitKind kind = config.split;
    if (kind == SplitKind::Auto) {
        const std::string name = dataset_label(config);
        if (name.rfind("ETTh", 0) == 0) kind = SplitKind::EttHour;
        else if (name.rfind("ETTm", 0) == 0) kind = SplitKind::EttMinute;
        else kind = SplitKind::Ratio;
    }
    switch (kind) {
        case SplitKind::EttHour: {
            const auto c = ett_hourly_counts();
            return split_by_counts(series, c[0], c[1], c[2], min_len);
        }
        case SplitKind::EttMinute: {
            const auto c = ett_minute_counts();
            return split_by_counts(series, c[0], c[1], c[2], min_len);
        }
        default:
            return split_chronological(series, config.ratios, min_len);
    }
}

void write_report(const MetricsReport& report, const ExperimentConfig& config,
                  const std::string& out_dir) {
    const std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
    std::filesystem::create_directories(dir);

    {
        std::ofstream out(dir / "report.txt");
        if (!out) throw std::runtime_error("cannot write: " + (dir / "report.txt").string());
        char buf[256];
        out << "dataset " << dataset_label(config) << "\n";
        std::snprintf(buf, sizeof(buf),
                      "lookback %zu  neighbors %d  refs %d  freq_cutoff %zu  alpha %g  seed %llu\n",
                      config.lookback, config.neighbors, config.refs, config.freq_cutoff,
                      config.alpha, static_cast<unsigned long long>(config.seed));
        out << buf << "\n";
        out << "horizon         mse         mae   sim_evals/query\n";
        for (const auto& row : report.rows) {
            std::snprintf(buf, sizeof(buf), "%7zu  %10.6f  %10.6f  %16.1f\n", row.horizon,
                          row.mse, row.mae, row.sim_evals_per_query);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "average  %10.6f  %10.6f\n", report.avg_mse,
                      report.avg_mae);
        out << buf;
    }
    {
        std::ofstream out(dir / "report.kv");
        if (!out) throw std::runtime_error("cannot write: " + (dir / "report.kv").string());
        out << "dataset=" << dataset_label(config) << "\n";
        out << "lookback=" << config.lookback << "\n";
        out << "neighbors=" << config.neighbors << "\n";
        out << "refs=" << config.refs << "\n";
        out << "freq_cutoff=" << config.freq_cutoff << "\n";
        out << "alpha=" << fmt17(config.alpha) << "\n";
        out << "hidden=" << config.hidden << "\n";
        out << "seed=" << config.seed << "\n";
        std::string hs;
        for (const auto& row : report.rows) {
            if (!hs.empty()) hs += ",";
            hs += std::to_string(row.horizon);
        }
        out << "horizons=" << hs << "\n";
        for (const auto& row : report.rows) {
            const std::string p = "h" + std::to_string(row.horizon) + ".";
            out << p << "mse=" << fmt17(row.mse) << "\n";
            out << p << "mae=" << fmt17(row.mae) << "\n";
            out << p << "sim_evals_per_query=" << fmt17(row.sim_evals_per_query) << "\n";
        }
        out << "avg.mse=" << fmt17(report.avg_mse) << "\n";
        out << "avg.mae=" << fmt17(report.avg_mae) << "\n";
    }
    {
        std::ofstream out(dir / "timing.kv");
        if (!out) throw std::runtime_error("cannot write: " + (dir / "timing.kv").string());
        for (const auto& row : report.rows) {
            const std::string p = "h" + std::to_string(row.horizon) + ".";
            out << p << "s_per_batch_full=" << fmt17(row.s_per_batch_full) << "\n";
            out << p << "s_per_batch_retrieval=" << fmt17(row.s_per_batch_retrieval) << "\n";
        }
    }
}

MetricsReport run_experiment(const ExperimentConfig& config) {
    ExperimentConfig cfg = config;
    if (cfg.horizons.empty()) throw std::invalid_argument("run_experiment: no horizons");
    if (cfg.freq_cutoff == 0) cfg.freq_cutoff = default_freq_cutoff(cfg.lookback);
    if (cfg.dataset_name.empty()) cfg.dataset_name = dataset_label(cfg);
    cfg.train.alpha = cfg.alpha;
    cfg.train.refs = cfg.refs;
    cfg.train.seed = cfg.seed;

    const MultivariateSeries series = load_csv(cfg.data_path);
    const std::size_t max_h = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
    const auto splits = split_for_config(cfg, series, cfg.lookback + max_h);
    const ChannelStats stats = fit_stats(splits[0]);
    const MultivariateSeries train_std = apply_stats(stats, splits[0]);
    const MultivariateSeries val_std = apply_stats(stats, splits[1]);
    const MultivariateSeries test_std = apply_stats(stats, splits[2]);

    const std::filesystem::path dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::filesystem::create_directories(dir);

    MetricsReport report;
    for (const std::size_t horizon : cfg.horizons) {
        const auto memory = memory_from_series(train_std, cfg.lookback, horizon);
        const RelationGraph graph = build_graph(memory, cfg.neighbors, cfg.threads);
        const KnowledgeBase kb =
            build_knowledge_base(memory, graph, cfg.freq_cutoff, nullptr, cfg.threads);

        const ModelConfig mc{cfg.lookback, horizon, cfg.hidden};
        TrainLog tlog;
        const CraftModel model = train(train_std, val_std, kb, mc, cfg.train, &tlog);
        const std::string tag = "H" + std::to_string(horizon);
        save_model(model, (dir / ("model_" + tag + ".crmd")).string());
        write_train_log(tlog, (dir / ("train_log_" + tag + ".txt")).string());

        const EvalResult ev = evaluate_split(model, kb, test_std, cfg.refs, cfg.threads);
        report.rows.push_back({horizon, ev.mse, ev.mae, ev.sim_evals_per_query,
                               ev.s_per_batch_full, ev.s_per_batch_retrieval});

        double mse_sum = 0.0, mae_sum = 0.0;
        for (const auto& row : report.rows) {
            mse_sum += row.mse;
            mae_sum += row.mae;
        }
        report.avg_mse = mse_sum / static_cast<double>(report.rows.size());
        report.avg_mae = mae_sum / static_cast<double>(report.rows.size());
        write_report(report, cfg, dir.string());
    }
    return report;
}

std::vector<SweepRow> sweep_candidates(const ExperimentConfig& config,
                                       const std::vector<int>& m_values) {
    if (m_values.empty()) throw std::invalid_argument("sweep: m_values must be nonempty");
    for (const int m : m_values)
        if (m < 1) throw std::invalid_argument("sweep: M must be >= 1");

    ExperimentConfig cfg = config;
    if (cfg.horizons.empty()) throw std::invalid_argument("sweep: no horizons");
    if (cfg.freq_cutoff == 0) cfg.freq_cutoff = default_freq_cutoff(cfg.lookback);
    if (cfg.dataset_name.empty()) cfg.dataset_name = dataset_label(cfg);
    cfg.train.alpha = cfg.alpha;
    cfg.train.refs = cfg.refs;
    cfg.train.seed = cfg.seed;
    const std::size_t horizon = cfg.horizons.front();

    const MultivariateSeries series = load_csv(cfg.data_path);
    const auto splits = split_for_config(cfg, series, cfg.lookback + horizon);
    const ChannelStats stats = fit_stats(splits[0]);
    const MultivariateSeries train_std = apply_stats(stats, splits[0]);
    const MultivariateSeries val_std = apply_stats(stats, splits[1]);
    const MultivariateSeries test_std = apply_stats(stats, splits[2]);

    const auto memory = memory_from_series(train_std, cfg.lookback, horizon);
    KnowledgeBase kb = build_knowledge_base(
        memory, build_graph(memory, cfg.neighbors, cfg.threads), cfg.freq_cutoff, nullptr,
        cfg.threads);
    const ModelConfig mc{cfg.lookback, horizon, cfg.hidden};
    const CraftModel model = train(train_std, val_std, kb, mc, cfg.train, nullptr);

    // The spectra and the trained model are independent of M; only the
    // relation graph changes between rows.
    std::vector<SweepRow> rows;
    for (const int m : m_values) {
        kb.graph = build_graph(memory, m, cfg.threads);
        const EvalResult ev = evaluate_split(model, kb, test_std, cfg.refs, cfg.threads);
        rows.push_back({m, ev.mse, ev.mae, ev.sim_evals_per_query, ev.s_per_batch_full,
                        ev.s_per_batch_retrieval});
    }

    const std::filesystem::path dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "sweep.csv");
    if (!out) throw std::runtime_error("cannot write: " + (dir / "sweep.csv").string());
    out << "m,mse,mae,sim_evals_per_query,s_per_batch_full,s_per_batch_retrieval\n";
    for (const SweepRow& row : rows)
        out << row.m << "," << fmt17(row.mse) << "," << fmt17(row.mae) << ","
            << fmt17(row.sim_evals_per_query) << "," << fmt17(row.s_per_batch_full) << ","
            << fmt17(row.s_per_batch_retrieval) << "\n";
    return rows;
}

void dump_retrieval_example(const KnowledgeBase& kb, const CraftModel& model,
                            const WindowPair& window, int channel, const std::string& out_path) {
    const std::size_t horizon = model.config.horizon;
    if (channel < 0 || static_cast<std::size_t>(channel) >= window.x.cols())
        throw std::out_of_range("dump_retrieval_example: channel out of range");
    if (window.y.rows() != horizon || window.y.cols() != window.x.cols())
        throw std::invalid_argument("dump_retrieval_example: window horizon shape mismatch");

    const std::vector<double> x_c = window.x.col(static_cast<std::size_t>(channel));
    const auto refs = retrieve_channel(kb, x_c, channel, 1);
    const ForecastOutput out = forecast(model, kb, window.x, 1);

    std::ofstream file(out_path);
    if (!file) throw std::runtime_error("cannot write: " + out_path);
    const bool has_ref = !refs.empty();
    file << (has_ref ? "t,ground_truth,retrieved,fused" : "t,ground_truth,fused") << "\n";
    for (std::size_t k = 0; k < horizon; ++k) {
        file << k << "," << fmt17(window.y(k, static_cast<std::size_t>(channel)));
        if (has_ref) file << "," << fmt17(refs[0].value[k]);
        file << "," << fmt17(out.fused(k, static_cast<std::size_t>(channel))) << "\n";
    }
}

} // namespace craft
