#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pmnc/baselines.hpp"
#include "pmnc/config.hpp"
#include "pmnc/errors.hpp"
#include "pmnc/evaluation.hpp"
#include "pmnc/nc.hpp"
#include "pmnc/plots.hpp"
#include "pmnc/synthetic.hpp"

namespace fs = std::filesystem;
using namespace pmnc;

namespace {

/// PMNC_DETERMINISTIC=0 opts out of reproducible seeding (seeds are then
/// drawn from the system entropy source and logged).
bool deterministic_mode() {
    const char* v = std::getenv("PMNC_DETERMINISTIC");
    if (!v) return true;
    std::string s(v);
    return !(s == "0" || s == "false" || s == "off");
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
    ExperimentConfig cfg = ExperimentConfig::load(path, sets);
    cfg.validate();
    if (!deterministic_mode()) {
        std::random_device rd;
        cfg.train.seed = (std::uint64_t(rd()) << 32) | rd();
        cfg.scenario.seed = (std::uint64_t(rd()) << 32) | rd();
        std::cerr << "deterministic mode off: train seed " << cfg.train.seed
                  << ", scenario seed " << cfg.scenario.seed << "\n";
    }
    return cfg;
}

struct ResolvedDomains {
    GridDomain input;
    GridDomain output;
};

ResolvedDomains resolve_domains(const ExperimentConfig& cfg) {
    ResolvedDomains d{resolve_window(cfg.input_window, cfg.grid),
                      resolve_window(cfg.output_window, cfg.grid)};
    centered_crop_offsets(d.input, d.output); // throws unless properly centered
    if (d.output.n_lat != cfg.model.output_size || d.output.n_lon != cfg.model.output_size)
        throw ConfigError("output window is " + std::to_string(d.output.n_lat) + "x" +
                          std::to_string(d.output.n_lon) + " but model.output_size is " +
                          std::to_string(cfg.model.output_size));
    return d;
}

std::pair<TrainValSplit, TestSplit> load_splits(const ExperimentConfig& cfg) {
    NormalizationStats stats = NormalizationStats::load(cfg.stats_path);
    ResolvedDomains d = resolve_domains(cfg);
    Date from = std::min(cfg.split.train_from, cfg.split.test_from);
    Date to = std::max(cfg.split.train_to, cfg.split.test_to);
    Catalog catalog = scan_archive(cfg.archive_root, from, to, cfg.archive_pattern);
    BuildReport report;
    std::vector<Sample> samples =
        build_samples(catalog, cfg.species, stats, d.input, d.output, cfg.grid, &report);
    std::cerr << "built " << report.produced << " samples (" << report.dropped_missing_successor
              << " dropped for a missing successor frame)\n";
    return split_samples(std::move(samples), cfg.split);
}

int cmd_stats(const std::string& config_path, const std::vector<std::string>& sets) {
    ExperimentConfig cfg = load_config(config_path, sets);
    ResolvedDomains d = resolve_domains(cfg);
    Catalog catalog =
        scan_archive(cfg.archive_root, cfg.split.train_from, cfg.split.train_to,
                     cfg.archive_pattern);
    NormalizationStats stats =
        compute_stats(catalog, cfg.split.train_from, cfg.split.train_to, d.input, cfg.grid);
    fs::create_directories(fs::path(cfg.stats_path).parent_path());
    stats.save(cfg.stats_path);
    std::cout << "wrote " << cfg.stats_path << " (" << stats.frame_count << " frames from "
              << stats.file_count << " files)\n";
    return 0;
}

int cmd_synth(const std::string& config_path, const std::vector<std::string>& sets) {
    ExperimentConfig cfg = load_config(config_path, sets);
    if (!cfg.has_scenario)
        throw ConfigError("config has no 'scenario' section to generate from");
    Catalog catalog = synth::generate_archive(cfg.scenario, cfg.archive_root);
    std::cout << "wrote " << catalog.size() << " day files under " << cfg.archive_root << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              bool resume) {
    ExperimentConfig cfg = load_config(config_path, sets);
    auto [tv, test] = load_splits(cfg);
    (void)test; // the training entry point cannot accept held-out samples
    std::cerr << "train " << tv.train.size() << " / val " << tv.val.size() << " samples\n";
    auto model = build_model(cfg.model);
    TrainResult result = train(*model, cfg.species, tv, cfg.loss, cfg.train, cfg.output_dir,
                               cfg.stats_path, resume);
    std::cout << "best epoch " << result.best_epoch << " val loss " << result.best_val_loss
              << (result.early_stopped ? " (early stop)" : "") << "\n"
              << "checkpoint: " << result.best_checkpoint << "\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::vector<std::string>& sets,
                 const std::string& checkpoint, const std::string& baselines_csv) {
    ExperimentConfig cfg = load_config(config_path, sets);
    CheckpointMeta meta;
    auto model = load_weights(checkpoint, &meta, nullptr, cfg.species);
    if (!meta.stats_ref.empty() && meta.stats_ref != cfg.stats_path)
        throw DataError("checkpoint was trained with stats '" + meta.stats_ref +
                        "' but the config points at '" + cfg.stats_path + "'");
    NormalizationStats stats = NormalizationStats::load(cfg.stats_path);
    auto [tv, test] = load_splits(cfg);
    (void)tv;
    ResolvedDomains d = resolve_domains(cfg);

    fs::create_directories(cfg.output_dir);
    std::string records = (fs::path(cfg.output_dir) / "records.csv").string();
    EvaluationResult res =
        evaluate_model(*model, test, stats, cfg.species, d.output, records,
                       cfg.train.batch_size);

    std::string report_path = (fs::path(cfg.output_dir) / "report.json").string();
    std::ofstream(report_path) << res.report.to_json();
    write_bias_map(res.bias_map, (fs::path(cfg.output_dir) / "bias.nc").string());

    std::vector<PublishedBaseline> rows;
    if (fs::exists(baselines_csv))
        rows = published_baselines(baselines_csv);
    else
        std::cerr << "warning: baselines file '" << baselines_csv
                  << "' not found; reference rows omitted\n";
    std::string table = render_metrics_table(res.report, rows, cfg.preset);
    std::ofstream((fs::path(cfg.output_dir) / "report.txt").string()) << table;
    std::cout << table;
    return 0;
}

BiasMap read_bias_map(const std::string& path) {
    nc::Reader reader(path);
    auto lat = reader.read_var("latitude");
    auto lon = reader.read_var("longitude");
    BiasMap map;
    map.domain.n_lat = static_cast<int>(lat.size());
    map.domain.n_lon = static_cast<int>(lon.size());
    if (lat.size() < 2 || lon.size() < 2) throw DataError("bias map too small: " + path);
    map.domain.lat_start = lat[0];
    map.domain.lon_start = lon[0];
    map.domain.resolution = lat[0] - lat[1];
    map.mean_error = Tensor({map.domain.n_lat, map.domain.n_lon});
    map.mean_error.data = reader.read_var("bias");
    for (const auto& att : reader.global_atts())
        if (att.name == "n_samples" && !att.numbers.empty())
            map.n_samples = static_cast<long long>(att.numbers[0]);
    return map;
}

int cmd_plots(const std::vector<std::string>& reports, const std::vector<std::string>& bias_ncs,
              const std::string& out_dir) {
    if (reports.empty() && bias_ncs.empty())
        throw ConfigError("plots: give at least one --report or --bias file");
    fs::create_directories(out_dir);

    if (!reports.empty()) {
        std::vector<Series> nrmse, ssim;
        std::string species;
        for (const std::string& path : reports) {
            std::ifstream in(path);
            if (!in) throw DataError("cannot open report: " + path);
            std::stringstream buf;
            buf << in.rdbuf();
            MetricsReport rep = MetricsReport::from_json(buf.str());
            species = species.empty() ? rep.species : species;
            Series a, b;
            a.label = b.label = fs::path(path).stem().string();
            for (const MonthPoint& p : rep.monthly) {
                double x = p.year * 12 + p.month;
                a.x.push_back(x);
                a.y.push_back(p.nrmse);
                b.x.push_back(x);
                b.y.push_back(p.ssim);
            }
            nrmse.push_back(std::move(a));
            ssim.push_back(std::move(b));
        }
        render_line_chart(nrmse, species + " monthly nrmse", "month index", "nrmse",
                          (fs::path(out_dir) / (species + "_nrmse.png")).string());
        render_line_chart(ssim, species + " monthly ssim", "month index", "ssim",
                          (fs::path(out_dir) / (species + "_ssim.png")).string());
        std::cout << "wrote " << species << "_nrmse.png and " << species << "_ssim.png\n";
    }
    for (const std::string& path : bias_ncs) {
        BiasMap map = read_bias_map(path);
        std::string stem = fs::path(path).stem().string();
        render_bias_map(map, stem + " mean bias",
                        (fs::path(out_dir) / (stem + ".png")).string());
        std::cout << "wrote " << stem << ".png\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"particulate-matter nowcasting pipeline"};
    app.require_subcommand(1);

    std::string config_path, checkpoint, baselines_csv = "data/baselines.csv";
    std::string plots_out = "plots";
    std::vector<std::string> sets, reports, bias_ncs;
    bool resume = false;

    auto add_config = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config JSON")->required();
        cmd->add_option("--set", sets, "dotted-path override, e.g. train.max_epochs=5");
    };

    CLI::App* stats = app.add_subcommand("stats", "compute normalization statistics");
    add_config(stats);
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic archive");
    add_config(synth);
    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    add_config(train_cmd);
    train_cmd->add_flag("--resume", resume, "continue from the output dir's saved state");
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
    add_config(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "trained model checkpoint")->required();
    eval_cmd->add_option("--baselines", baselines_csv, "published reference rows CSV");
    CLI::App* plots_cmd = app.add_subcommand("plots", "render report figures");
    plots_cmd->add_option("--report", reports, "report JSON (repeatable)");
    plots_cmd->add_option("--bias", bias_ncs, "bias map NetCDF (repeatable)");
    plots_cmd->add_option("--out", plots_out, "output directory for images");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (stats->parsed()) return cmd_stats(config_path, sets);
        if (synth->parsed()) return cmd_synth(config_path, sets);
        if (train_cmd->parsed()) return cmd_train(config_path, sets, resume);
        if (eval_cmd->parsed()) return cmd_evaluate(config_path, sets, checkpoint, baselines_csv);
        if (plots_cmd->parsed()) return cmd_plots(reports, bias_ncs, plots_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
