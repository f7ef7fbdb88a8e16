#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "helpers.hpp"

namespace fs = std::filesystem;
using pmnc_test::fresh_dir;

namespace {

int run(const std::string& args, const fs::path& log_dir, const std::string& tag) {
    std::string cmd = std::string(PMNC_CLI_PATH) + " " + args + " >" +
                      (log_dir / (tag + ".out")).string() + " 2>" +
                      (log_dir / (tag + ".err")).string();
    int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("full pipeline: synth, stats, train, evaluate, plots") {
    auto dir = fresh_dir("cli_pipeline");
    fs::path archive = dir / "archive";
    fs::path out = dir / "out";
    fs::path config = dir / "exp.json";

    std::ofstream(config) << R"({
        "paths": {"archive_root": ")" << archive.string() << R"(",
                  "output_dir": ")" << out.string() << R"("},
        "species": "pm2p5",
        "preset": "convgru1",
        "input_window": {"lat_north": 62.0, "lat_south": 2.0,
                         "lon_west": 40.0, "lon_east": 100.0},
        "output_window": {"lat_north": 46.0, "lat_south": 18.0,
                          "lon_west": 56.0, "lon_east": 84.0},
        "model": {"hidden_widths": [3, 4, 3], "dropout_rates": [0.0, 0.0, 0.0],
                  "output_size": 8},
        "train": {"max_epochs": 2, "batch_size": 8, "seed": 5},
        "split": {"train_from": "2021-01-01", "train_to": "2021-01-04",
                  "test_from": "2021-01-05", "test_to": "2021-01-06"},
        "scenario": {"mini": true, "seed": 3,
                     "from": "2021-01-01", "to": "2021-01-06"}
    })";

    REQUIRE(run("synth --config " + config.string(), dir, "synth") == 0);
    CHECK(fs::exists(archive / "2021-01-01.nc"));
    CHECK(fs::exists(archive / "2021-01-06.nc"));

    REQUIRE(run("stats --config " + config.string(), dir, "stats") == 0);
    fs::path stats = out / "stats.json";
    REQUIRE(fs::exists(stats));
    std::string stats_once = slurp(stats);
    REQUIRE(run("stats --config " + config.string(), dir, "stats2") == 0);
    CHECK(slurp(stats) == stats_once); // idempotent

    REQUIRE(run("train --config " + config.string(), dir, "train") == 0);
    CHECK(fs::exists(out / "best.ckpt"));
    CHECK(fs::exists(out / "history.csv"));
    {
        std::ifstream hist(out / "history.csv");
        std::string line;
        std::getline(hist, line);
        CHECK(line == "epoch,train_loss,val_loss,lr");
        int rows = 0;
        while (std::getline(hist, line))
            if (!line.empty()) ++rows;
        CHECK(rows == 2);
    }

    std::string eval_args = "evaluate --config " + config.string() + " --checkpoint " +
                            (out / "best.ckpt").string() + " --baselines " +
                            std::string(PMNC_DATA_DIR) + "/baselines.csv";
    REQUIRE(run(eval_args, dir, "eval") == 0);
    REQUIRE(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "report.txt"));
    CHECK(fs::exists(out / "records.csv"));
    CHECK(fs::exists(out / "bias.nc"));
    std::string table = slurp(out / "report.txt");
    CHECK(table.find("Aurora") != std::string::npos);
    CHECK(table.find("12.26") != std::string::npos); // published noon row, verbatim
    CHECK(table.find("convgru1 (this run)") != std::string::npos);

    std::string report_once = slurp(out / "report.json");
    REQUIRE(run(eval_args, dir, "eval2") == 0);
    CHECK(slurp(out / "report.json") == report_once); // idempotent

    fs::path figs = dir / "figs";
    REQUIRE(run("plots --report " + (out / "report.json").string() + " --bias " +
                    (out / "bias.nc").string() + " --out " + figs.string(),
                dir, "plots") == 0);
    CHECK(fs::exists(figs / "pm2p5_nrmse.png"));
    CHECK(fs::exists(figs / "pm2p5_ssim.png"));
    CHECK(fs::exists(figs / "bias.png"));
}

TEST_CASE("exit codes distinguish config, data and usage failures") {
    auto dir = fresh_dir("cli_errors");
    fs::path config = dir / "exp.json";
    std::ofstream(config) << R"({
        "paths": {"archive_root": ")" << (dir / "none").string() << R"(",
                  "output_dir": ")" << (dir / "out").string() << R"("}
    })";

    // usage / parse problems
    CHECK(run("bogus-subcommand", dir, "usage") == 2);
    CHECK(run("train", dir, "noconfig") == 2);

    // schema error names the field and exits with the config code
    CHECK(run("stats --config " + config.string() + " --set train.max_epochs=never", dir,
              "badfield") == 2);
    CHECK(slurp(dir / "badfield.err").find("train.max_epochs") != std::string::npos);

    // unknown species
    CHECK(run("stats --config " + config.string() + " --set species=o3", dir, "species") == 2);

    // missing checkpoint file
    std::ofstream(dir / "scen.json") << R"({
        "paths": {"archive_root": ")" << (dir / "arch").string() << R"(",
                  "output_dir": ")" << (dir / "out").string() << R"("},
        "scenario": {"mini": true, "from": "2021-01-01", "to": "2021-01-01"}
    })";
    CHECK(run("evaluate --config " + config.string() + " --checkpoint " +
                  (dir / "nope.ckpt").string(),
              dir, "nockpt") == 3);

    // training without a config with no scenario or archive -> data failure
    CHECK(run("synth --config " + config.string(), dir, "noscenario") == 2);

    // malformed report for plots
    std::ofstream(dir / "bad.json") << "not a report";
    CHECK(run("plots --report " + (dir / "bad.json").string() + " --out " +
                  (dir / "figs").string(),
              dir, "badreport") == 3);
}
