// Command line front end: knowledge-base construction, training, the full
// evaluation protocol, candidate sweeps, and retrieval inspection.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "craft/bench.hpp"

namespace {

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Plain numeric CSV holding one window (no date column; an optional header
// row is skipped).
craft::Matrix read_window_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open window csv: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t,") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        bool numeric = true;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
            if (!numeric) break;
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;  // header row
            }
            throw std::runtime_error("non-numeric cell in window csv: " + path);
        }
        first = false;
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("ragged rows in window csv: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty window csv: " + path);
    return craft::Matrix::from_rows(rows);
}

std::filesystem::path under_out_dir(const craft::ExperimentConfig& cfg, const std::string& name) {
    const std::filesystem::path dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::filesystem::create_directories(dir);
    return dir / name;
}

void print_report(const craft::MetricsReport& report) {
    std::printf("horizon         mse         mae   sim_evals/query\n");
    for (const auto& row : report.rows)
        std::printf("%7zu  %10.6f  %10.6f  %16.1f\n", row.horizon, row.mse, row.mae,
                    row.sim_evals_per_query);
    std::printf("average  %10.6f  %10.6f\n", report.avg_mse, report.avg_mae);
}

struct Pipeline {
    craft::ChannelStats stats;
    craft::MultivariateSeries train_std;
    craft::MultivariateSeries val_std;
    craft::MultivariateSeries test_std;
};

Pipeline standardized_splits(const craft::ExperimentConfig& cfg, std::size_t horizon) {
    if (cfg.data_path.empty()) throw std::runtime_error("missing --data (or data= in config)");
    const craft::MultivariateSeries series = craft::load_csv(cfg.data_path);
    const auto splits = craft::split_for_config(cfg, series, cfg.lookback + horizon);
    Pipeline p;
    p.stats = craft::fit_stats(splits[0]);
    p.train_std = craft::apply_stats(p.stats, splits[0]);
    p.val_std = craft::apply_stats(p.stats, splits[1]);
    p.test_std = craft::apply_stats(p.stats, splits[2]);
    return p;
}

craft::KnowledgeBase build_kb_for(const craft::ExperimentConfig& cfg,
                                  const craft::MultivariateSeries& train_std,
                                  std::size_t horizon, craft::KbBuildStats* stats) {
    const auto memory = craft::memory_from_series(train_std, cfg.lookback, horizon);
    const craft::RelationGraph graph = craft::build_graph(memory, cfg.neighbors, cfg.threads);
    return craft::build_knowledge_base(memory, graph, cfg.freq_cutoff, stats, cfg.threads);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"craft: channel-wise retrieval-augmented time-series forecasting"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::string config_path;
    app.add_option("--config", config_path, "key=value config file (flags override it)");

    std::vector<std::function<void(craft::ExperimentConfig&)>> overrides;
    const auto opt = [&](const std::string& name, auto& local, const std::string& desc,
                         auto setter) {
        CLI::Option* o = app.add_option(name, local, desc);
        overrides.push_back([o, &local, setter](craft::ExperimentConfig& cfg) {
            if (o->count() > 0) setter(cfg, local);
        });
        return o;
    };
    const auto flag = [&](const std::string& name, bool& local, const std::string& desc,
                          auto setter) {
        CLI::Option* o = app.add_flag(name, local, desc);
        overrides.push_back([o, &local, setter](craft::ExperimentConfig& cfg) {
            if (o->count() > 0) setter(cfg, local);
        });
        return o;
    };

    std::string a_data, a_dataset, a_horizons, a_split;
    std::size_t a_lookback = 0, a_horizon = 0, a_freq = 0, a_hidden = 0;
    std::size_t a_batch = 0, a_epochs = 0, a_patience = 0;
    int a_neighbors = 0, a_refs = 0, a_threads = 0;
    double a_alpha = 0, a_lr = 0, a_b1 = 0, a_b2 = 0, a_eps = 0;
    double a_rt = 0, a_rv = 0, a_rs = 0;
    unsigned long long a_seed = 0;
    std::string a_out_dir;
    bool a_freeze = false, a_cache = false;

    opt("--data", a_data, "dataset csv (date column first)",
        [](auto& c, const std::string& v) { c.data_path = v; });
    opt("--dataset", a_dataset, "dataset name (drives the auto split rule)",
        [](auto& c, const std::string& v) { c.dataset_name = v; });
    opt("--lookback", a_lookback, "lookback length L",
        [](auto& c, std::size_t v) { c.lookback = v; });
    opt("--horizon", a_horizon, "single forecast horizon H",
        [](auto& c, std::size_t v) { c.horizons = {v}; });
    opt("--horizons", a_horizons, "comma-separated horizon list",
        [](auto& c, const std::string& v) { craft::apply_config_entry(c, "horizons", v); });
    opt("--neighbors", a_neighbors, "relation graph neighbors M",
        [](auto& c, int v) { c.neighbors = v; });
    opt("--refs", a_refs, "references retrieved per channel",
        [](auto& c, int v) { c.refs = v; });
    opt("--freq-cutoff", a_freq, "retained low-frequency bins F (0 = default rule)",
        [](auto& c, std::size_t v) { c.freq_cutoff = v; });
    opt("--alpha", a_alpha, "fusion coefficient",
        [](auto& c, double v) { c.alpha = v; });
    opt("--hidden", a_hidden, "MLP hidden width",
        [](auto& c, std::size_t v) { c.hidden = v; });
    opt("--lr", a_lr, "Adam learning rate", [](auto& c, double v) { c.train.lr = v; });
    opt("--batch-size", a_batch, "training batch size",
        [](auto& c, std::size_t v) { c.train.batch_size = v; });
    opt("--epochs", a_epochs, "training epochs",
        [](auto& c, std::size_t v) { c.train.epochs = v; });
    opt("--patience", a_patience, "early-stopping patience",
        [](auto& c, std::size_t v) { c.train.patience = v; });
    opt("--beta1", a_b1, "Adam beta1", [](auto& c, double v) { c.train.adam_beta1 = v; });
    opt("--beta2", a_b2, "Adam beta2", [](auto& c, double v) { c.train.adam_beta2 = v; });
    opt("--adam-eps", a_eps, "Adam epsilon", [](auto& c, double v) { c.train.adam_eps = v; });
    flag("--freeze-head", a_freeze, "keep the retrieval head at its initialization",
         [](auto& c, bool v) { c.train.freeze_head = v; });
    flag("--cache-retrieval", a_cache, "cache per-window retrievals across epochs",
         [](auto& c, bool v) { c.train.cache_retrieval = v; });
    opt("--split", a_split, "auto | ratio | ett-hour | ett-minute",
        [](auto& c, const std::string& v) { craft::apply_config_entry(c, "split", v); });
    opt("--train-ratio", a_rt, "ratio split: train fraction",
        [](auto& c, double v) { c.ratios.train = v; });
    opt("--val-ratio", a_rv, "ratio split: validation fraction",
        [](auto& c, double v) { c.ratios.val = v; });
    opt("--test-ratio", a_rs, "ratio split: test fraction",
        [](auto& c, double v) { c.ratios.test = v; });
    opt("--seed", a_seed, "RNG seed",
        [](auto& c, unsigned long long v) { c.seed = v; });
    opt("--out-dir", a_out_dir, "directory for emitted files",
        [](auto& c, const std::string& v) { c.out_dir = v; });
    opt("--threads", a_threads, "worker threads for deterministic parallel stages",
        [](auto& c, int v) { c.threads = v; });

    const auto resolve = [&]() {
        craft::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = craft::load_config(config_path);
        for (const auto& f : overrides) f(cfg);
        if (cfg.horizons.empty()) throw std::runtime_error("no horizons configured");
        return cfg;
    };
    const auto resolve_single = [&]() {
        craft::ExperimentConfig cfg = resolve();
        if (cfg.freq_cutoff == 0) cfg.freq_cutoff = craft::default_freq_cutoff(cfg.lookback);
        cfg.train.alpha = cfg.alpha;
        cfg.train.refs = cfg.refs;
        cfg.train.seed = cfg.seed;
        return cfg;
    };

    // build-kb
    auto* sc_build = app.add_subcommand(
        "build-kb", "build a knowledge base from the standardized train split");
    std::string kb_out;
    bool print_graph = false;
    sc_build->add_option("--out", kb_out, "knowledge base output file")->required();
    sc_build->add_flag("--print-graph", print_graph, "print the relation graph adjacency");
    sc_build->callback([&] {
        const craft::ExperimentConfig cfg = resolve_single();
        const std::size_t horizon = cfg.horizons.front();
        const Pipeline p = standardized_splits(cfg, horizon);
        craft::KbBuildStats stats;
        const craft::KnowledgeBase kb = build_kb_for(cfg, p.train_std, horizon, &stats);
        craft::save_kb(kb, kb_out);
        std::printf("knowledge base: %u channels, %u entries, L=%u H=%u F=%u\n",
                    kb.config.channels, kb.config.entries, kb.config.lookback,
                    kb.config.horizon, kb.config.freq_cutoff);
        std::printf("mean retained spectral energy: %.4f\n", stats.mean_retained_energy);
        std::printf("wrote %s\n", kb_out.c_str());
        if (print_graph)
            for (std::size_t c = 0; c < kb.graph.neighbors.size(); ++c) {
                std::printf("channel %zu ->", c);
                for (const auto& [id, score] : kb.graph.neighbors[c])
                    std::printf(" %d (%.6f)", id, score);
                std::printf("\n");
            }
    });

    // train
    auto* sc_train = app.add_subcommand("train", "train a forecaster against a knowledge base");
    std::string train_kb_path, ckpt_out, log_out;
    sc_train->add_option("--kb", train_kb_path, "reuse an existing knowledge base file");
    sc_train->add_option("--out", ckpt_out, "checkpoint path (default <out-dir>/model.crmd)");
    sc_train->add_option("--log", log_out, "training log path (default <out-dir>/train_log.txt)");
    sc_train->callback([&] {
        const craft::ExperimentConfig cfg = resolve_single();
        const std::size_t horizon = cfg.horizons.front();
        const Pipeline p = standardized_splits(cfg, horizon);
        craft::KnowledgeBase kb;
        if (train_kb_path.empty()) {
            kb = build_kb_for(cfg, p.train_std, horizon, nullptr);
        } else {
            craft::KbConfig expected;
            expected.lookback = static_cast<std::uint32_t>(cfg.lookback);
            expected.horizon = static_cast<std::uint32_t>(horizon);
            expected.freq_cutoff = static_cast<std::uint32_t>(cfg.freq_cutoff);
            kb = craft::load_kb(train_kb_path, expected);
        }
        const craft::ModelConfig mc{cfg.lookback, horizon, cfg.hidden};
        craft::TrainLog log;
        const craft::CraftModel model =
            craft::train(p.train_std, p.val_std, kb, mc, cfg.train, &log);

        std::ostringstream text;
        for (const auto& e : log.epochs)
            text << "epoch " << e.epoch << " train_mse " << fmt17(e.train_mse) << " val_mse "
                 << fmt17(e.val_mse) << " seconds " << fmt17(e.seconds) << "\n";
        text << "best_epoch " << log.best_epoch << "\n";
        text << "best_val " << fmt17(log.best_val) << "\n";
        text << "aborted " << (log.aborted ? 1 : 0) << "\n";
        std::fputs(text.str().c_str(), stdout);

        const std::string log_path =
            log_out.empty() ? under_out_dir(cfg, "train_log.txt").string() : log_out;
        std::ofstream lf(log_path);
        if (!lf) throw std::runtime_error("cannot write: " + log_path);
        lf << text.str();

        const std::string model_path =
            ckpt_out.empty() ? under_out_dir(cfg, "model.crmd").string() : ckpt_out;
        craft::save_model(model, model_path);
        std::printf("wrote %s\n", model_path.c_str());
    });

    // eval
    auto* sc_eval =
        app.add_subcommand("eval", "full protocol: split, standardize, build, train, evaluate");
    sc_eval->callback([&] {
        const craft::ExperimentConfig cfg = resolve();
        const craft::MetricsReport report = craft::run_experiment(cfg);
        print_report(report);
        std::printf("reports written to %s\n", cfg.out_dir.empty() ? "." : cfg.out_dir.c_str());
    });

    // sweep
    auto* sc_sweep =
        app.add_subcommand("sweep", "re-evaluate retrieval across candidate neighbor counts");
    std::string m_values_s;
    sc_sweep->add_option("--m-values", m_values_s, "comma-separated M values")->required();
    sc_sweep->callback([&] {
        const craft::ExperimentConfig cfg = resolve();
        std::vector<int> ms;
        std::stringstream ss(m_values_s);
        std::string item;
        while (std::getline(ss, item, ','))
            ms.push_back(std::stoi(item));
        const auto rows = craft::sweep_candidates(cfg, ms);
        std::printf("%4s  %10s  %10s  %16s  %12s  %12s\n", "m", "mse", "mae", "sim_evals/query",
                    "s/batch_full", "s/batch_retr");
        for (const auto& row : rows)
            std::printf("%4d  %10.6f  %10.6f  %16.1f  %12.6f  %12.6f\n", row.m, row.mse, row.mae,
                        row.sim_evals_per_query, row.s_per_batch_full, row.s_per_batch_retrieval);
    });

    // retrieve
    auto* sc_retr = app.add_subcommand("retrieve", "query a knowledge base for one channel");
    std::string retr_kb, retr_query;
    int retr_channel = 0, retr_top = 1;
    sc_retr->add_option("--kb", retr_kb, "knowledge base file")->required();
    sc_retr->add_option("--query", retr_query, "window csv, L rows (standardized units)")
        ->required();
    sc_retr->add_option("--channel", retr_channel, "query channel id")->required();
    sc_retr->add_option("--top", retr_top, "matches to return");
    sc_retr->callback([&] {
        const craft::KnowledgeBase kb = craft::load_kb(retr_kb);
        const craft::Matrix q = read_window_csv(retr_query);
        if (q.rows() != kb.config.lookback)
            throw std::runtime_error("query window must have exactly L=" +
                                     std::to_string(kb.config.lookback) + " rows");
        std::vector<double> x_c;
        if (q.cols() == 1) x_c = q.col(0);
        else if (retr_channel >= 0 && static_cast<std::size_t>(retr_channel) < q.cols())
            x_c = q.col(static_cast<std::size_t>(retr_channel));
        else
            throw std::runtime_error("query csv lacks a column for the requested channel");
        const auto refs = craft::retrieve_channel(kb, x_c, retr_channel, retr_top);
        if (refs.empty()) std::printf("no matches\n");
        for (const auto& ref : refs) {
            std::printf("entry %ld channel %d score %s\n", ref.source_entry, ref.source_channel,
                        fmt17(ref.score).c_str());
            std::printf("value");
            for (const double v : ref.value) std::printf(" %s", fmt17(v).c_str());
            std::printf("\n");
        }
    });

    // forecast
    auto* sc_fcst = app.add_subcommand("forecast", "forecast one window with a trained model");
    std::string fc_model, fc_kb, fc_query, fc_out;
    sc_fcst->add_option("--model", fc_model, "checkpoint file")->required();
    sc_fcst->add_option("--kb", fc_kb, "knowledge base file")->required();
    sc_fcst->add_option("--query", fc_query, "window csv, L rows x C columns")->required();
    sc_fcst->add_option("--out", fc_out, "predictions csv (default <out-dir>/forecast.csv)");
    sc_fcst->callback([&] {
        const craft::ExperimentConfig cfg = resolve();
        const craft::CraftModel model = craft::load_model(fc_model);
        craft::KbConfig expected;
        expected.lookback = static_cast<std::uint32_t>(model.config.lookback);
        expected.horizon = static_cast<std::uint32_t>(model.config.horizon);
        const craft::KnowledgeBase kb = craft::load_kb(fc_kb, expected);
        const craft::Matrix q = read_window_csv(fc_query);
        if (q.rows() != model.config.lookback || q.cols() != kb.config.channels)
            throw std::runtime_error("query window must be L x C for this model and kb");

        const auto refs = craft::retrieve_all(kb, q, cfg.refs);
        const craft::Matrix retrieval = craft::retrieval_forecast(model, refs);
        const craft::Matrix direct = craft::direct_forecast(model, q);
        const craft::Matrix fused = craft::fuse(direct, retrieval, model.alpha);

        const std::string out_path =
            fc_out.empty() ? under_out_dir(cfg, "forecast.csv").string() : fc_out;
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write: " + out_path);
        for (std::size_t c = 0; c < fused.cols(); ++c)
            out << (c == 0 ? "" : ",") << "c" << c;
        out << "\n";
        for (std::size_t k = 0; k < fused.rows(); ++k) {
            for (std::size_t c = 0; c < fused.cols(); ++c)
                out << (c == 0 ? "" : ",") << fmt17(fused(k, c));
            out << "\n";
        }

        const std::string refs_path = out_path + ".refs.csv";
        std::ofstream rf(refs_path);
        if (!rf) throw std::runtime_error("cannot write: " + refs_path);
        rf << "channel,rank,entry,source_channel,score\n";
        for (std::size_t c = 0; c < refs.size(); ++c)
            for (std::size_t rank = 0; rank < refs[c].size(); ++rank)
                rf << c << "," << rank + 1 << "," << refs[c][rank].source_entry << ","
                   << refs[c][rank].source_channel << "," << fmt17(refs[c][rank].score) << "\n";
        std::printf("wrote %s and %s\n", out_path.c_str(), refs_path.c_str());
    });

    // dump-example
    auto* sc_dump = app.add_subcommand(
        "dump-example", "export (t, ground truth, retrieved, fused) for one window and channel");
    std::string de_kb, de_model, de_window, de_out;
    int de_channel = 0;
    sc_dump->add_option("--kb", de_kb, "knowledge base file")->required();
    sc_dump->add_option("--model", de_model, "checkpoint file")->required();
    sc_dump->add_option("--window", de_window, "csv with L+H rows (lookback then ground truth)")
        ->required();
    sc_dump->add_option("--channel", de_channel, "channel to export")->required();
    sc_dump->add_option("--out", de_out, "output csv (default <out-dir>/example.csv)");
    sc_dump->callback([&] {
        const craft::ExperimentConfig cfg = resolve();
        const craft::CraftModel model = craft::load_model(de_model);
        craft::KbConfig expected;
        expected.lookback = static_cast<std::uint32_t>(model.config.lookback);
        expected.horizon = static_cast<std::uint32_t>(model.config.horizon);
        const craft::KnowledgeBase kb = craft::load_kb(de_kb, expected);
        const craft::Matrix w = read_window_csv(de_window);
        const std::size_t lookback = model.config.lookback;
        const std::size_t horizon = model.config.horizon;
        if (w.rows() != lookback + horizon)
            throw std::runtime_error("window csv must have L+H rows");
        craft::WindowPair pair;
        pair.x = craft::Matrix(lookback, w.cols());
        pair.y = craft::Matrix(horizon, w.cols());
        for (std::size_t c = 0; c < w.cols(); ++c) {
            for (std::size_t t = 0; t < lookback; ++t) pair.x(t, c) = w(t, c);
            for (std::size_t t = 0; t < horizon; ++t) pair.y(t, c) = w(lookback + t, c);
        }
        const std::string out_path =
            de_out.empty() ? under_out_dir(cfg, "example.csv").string() : de_out;
        craft::dump_retrieval_example(kb, model, pair, de_channel, out_path);
        std::printf("wrote %s\n", out_path.c_str());
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
