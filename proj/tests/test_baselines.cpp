#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "pmnc/baselines.hpp"
#include "pmnc/errors.hpp"

using namespace pmnc;
using pmnc_test::fresh_dir;

namespace {

std::string data_csv() { return std::string(PMNC_DATA_DIR) + "/baselines.csv"; }

const PublishedBaseline& find_row(const std::vector<PublishedBaseline>& rows,
                                  const std::string& model, const std::string& species,
                                  const std::string& group) {
    for (const auto& r : rows)
        if (r.model == model && r.species == species && r.group == group) return r;
    throw std::runtime_error("row not found: " + model + "/" + species + "/" + group);
}

} // namespace

TEST_CASE("published rows load verbatim") {
    auto rows = published_baselines(data_csv());
    // 3 species x (1 Aurora noon row + 5 models x 2 groups)
    CHECK(rows.size() == 33);

    const auto& aurora = find_row(rows, "Aurora", "pm2p5", "12utc");
    CHECK(aurora.rmse == 12.26);
    CHECK(aurora.mae == 6.52);
    CHECK(aurora.bias == 0.90);
    CHECK(aurora.ssim == 0.75);

    const auto& unet = find_row(rows, "U-Net", "pm1", "diurnal");
    CHECK(unet.rmse == 4.53);
    CHECK(unet.mae == 2.41);
    CHECK(unet.bias == 0.06);
    CHECK(unet.ssim == 0.81);

    const auto& lstm = find_row(rows, "ConvLSTM1", "pm10", "12utc");
    CHECK(lstm.rmse == 53.39);
    CHECK(lstm.mae == 13.83);
    CHECK(lstm.bias == 0.22);
    CHECK(lstm.ssim == 0.92);

    const auto& pm10_aurora = find_row(rows, "Aurora", "pm10", "12utc");
    CHECK(pm10_aurora.rmse_str == "67.47");
    CHECK(pm10_aurora.mae_str == "29.75");
    CHECK(pm10_aurora.bias_str == "18.08");
    CHECK(pm10_aurora.ssim_str == "0.76");

    // trailing zeros survive as printed
    CHECK(find_row(rows, "ConvGRU2", "pm10", "12utc").bias_str == "-8.00");
    CHECK(find_row(rows, "ConvLSTM2", "pm10", "diurnal").mae_str == "14.00");

    // Aurora has no published diurnal cells
    CHECK_THROWS(find_row(rows, "Aurora", "pm1", "diurnal"));
    for (const auto& r : rows) CHECK(!r.source.empty());
}

TEST_CASE("checksum guards the shipped file against accidental edits") {
    CHECK(baselines_checksum(data_csv()) == 0x9814433b5f870d09ull);
}

TEST_CASE("table round-trips through a re-serialized copy") {
    auto rows = published_baselines(data_csv());
    auto dir = fresh_dir("baselines_roundtrip");
    std::string copy = (dir / "copy.csv").string();
    {
        std::ofstream out(copy);
        out << "model,species,group,rmse,mae,bias,ssim,source\n";
        for (const auto& r : rows)
            out << r.model << ',' << r.species << ',' << r.group << ',' << r.rmse_str << ','
                << r.mae_str << ',' << r.bias_str << ',' << r.ssim_str << ',' << r.source
                << '\n';
    }
    CHECK(baselines_checksum(copy) == baselines_checksum(data_csv()));
    auto back = published_baselines(copy);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].model == rows[i].model);
        CHECK(back[i].rmse == rows[i].rmse);
        CHECK(back[i].ssim_str == rows[i].ssim_str);
    }
}

TEST_CASE("loader rejects malformed files") {
    auto dir = fresh_dir("baselines_bad");
    auto write = [&](const std::string& name, const std::string& body) {
        std::string p = (dir / name).string();
        std::ofstream(p) << body;
        return p;
    };
    CHECK_THROWS_AS(published_baselines((dir / "missing.csv").string()), DataError);
    CHECK_THROWS_AS(published_baselines(write("hdr.csv", "wrong,header\n")), DataError);
    CHECK_THROWS_AS(
        published_baselines(write(
            "fields.csv", "model,species,group,rmse,mae,bias,ssim,source\nAurora,pm1,12utc\n")),
        DataError);
    CHECK_THROWS_AS(
        published_baselines(
            write("num.csv", "model,species,group,rmse,mae,bias,ssim,source\n"
                             "Aurora,pm1,12utc,abc,7.28,5.41,0.48,x\n")),
        DataError);
    CHECK_THROWS_AS(
        published_baselines(
            write("group.csv", "model,species,group,rmse,mae,bias,ssim,source\n"
                               "Aurora,pm1,noon,9.04,7.28,5.41,0.48,x\n")),
        DataError);
    CHECK_THROWS_AS(
        published_baselines(write("empty.csv", "model,species,group,rmse,mae,bias,ssim,source\n")),
        DataError);
}

TEST_CASE("rendered table keeps the published layout and blanks") {
    auto rows = published_baselines(data_csv());
    MetricsReport rep;
    rep.species = "pm1";
    rep.by_hour[12] = {5.00, 2.50, 0.10, 0.80, 30};
    rep.by_hour[18] = {5.10, 2.60, 0.20, 0.79, 30};
    rep.diurnal = {5.05, 2.55, 0.15, 0.795, 60};
    std::string table = render_metrics_table(rep, rows, "convgru1");

    CHECK(table.find("12:00 UTC Input") != std::string::npos);
    CHECK(table.find("Diurnal Average") != std::string::npos);
    // Aurora's published noon figures appear verbatim; its diurnal cells are blank
    auto aurora_pos = table.find("Aurora");
    REQUIRE(aurora_pos != std::string::npos);
    auto aurora_line = table.substr(aurora_pos, table.find('\n', aurora_pos) - aurora_pos);
    CHECK(aurora_line.find("9.04") != std::string::npos);
    CHECK(aurora_line.find("0.48") != std::string::npos);
    CHECK(aurora_line.find("-       -       -       -") != std::string::npos);
    // rows for the other published models and this run are present
    for (const char* name : {"ConvGRU1", "ConvGRU2", "ConvLSTM1", "ConvLSTM2", "U-Net"})
        CHECK(table.find(name) != std::string::npos);
    CHECK(table.find("convgru1 (this run)") != std::string::npos);
    CHECK(table.find("5.05") != std::string::npos);
    // wrong-species rows stay out
    CHECK(table.find("67.47") == std::string::npos);
    // per-hour breakdown lists the hours we have
    CHECK(table.find("12:00 UTC") != std::string::npos);
    CHECK(table.find("18:00 UTC") != std::string::npos);
    CHECK(table.find("n=30") != std::string::npos);
}
