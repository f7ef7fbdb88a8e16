#include "pmnc/baselines.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "pmnc/errors.hpp"

namespace pmnc {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_number(const std::string& s, const std::string& context) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("baselines: bad number '" + s + "' in " + context);
    }
}

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    std::string out = s;
    while (out.size() < width) out.push_back(' ');
    return out;
}

std::string cells(const std::string& r, const std::string& m, const std::string& b,
                  const std::string& s) {
    return pad(r, 8) + pad(m, 8) + pad(b, 8) + pad(s, 6);
}

std::string row_cells(const MetricsRow& row) {
    return cells(fmt2(row.rmse), fmt2(row.mae), fmt2(row.bias), fmt2(row.ssim));
}

} // namespace

std::vector<PublishedBaseline> published_baselines(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("baselines: cannot open " + csv_path);
    std::string line;
    if (!std::getline(in, line) || line != "model,species,group,rmse,mae,bias,ssim,source")
        throw DataError("baselines: unexpected header in " + csv_path);
    std::vector<PublishedBaseline> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        std::string context = csv_path + ":" + std::to_string(lineno);
        if (f.size() != 8) throw DataError("baselines: expected 8 fields in " + context);
        PublishedBaseline b;
        b.model = f[0];
        b.species = f[1];
        b.group = f[2];
        if (b.group != "12utc" && b.group != "diurnal")
            throw DataError("baselines: unknown group '" + b.group + "' in " + context);
        b.rmse_str = f[3];
        b.mae_str = f[4];
        b.bias_str = f[5];
        b.ssim_str = f[6];
        b.rmse = parse_number(f[3], context);
        b.mae = parse_number(f[4], context);
        b.bias = parse_number(f[5], context);
        b.ssim = parse_number(f[6], context);
        b.source = f[7];
        rows.push_back(std::move(b));
    }
    if (rows.empty()) throw DataError("baselines: no rows in " + csv_path);
    return rows;
}

std::uint64_t baselines_checksum(const std::string& csv_path) {
    std::ifstream in(csv_path, std::ios::binary);
    if (!in) throw DataError("baselines: cannot open " + csv_path);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    char c;
    while (in.get(c)) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::string render_metrics_table(const MetricsReport& report,
                                 const std::vector<PublishedBaseline>& baselines,
                                 const std::string& model_label) {
    const std::size_t name_w = 22;
    std::ostringstream out;
    out << report.species << " evaluation metrics (RMSE/MAE/Bias in " << report.units
        << ", SSIM dimensionless)\n";
    out << pad("", name_w) << pad("12:00 UTC Input", 30) << "Diurnal Average\n";
    out << pad("Model", name_w) << cells("RMSE", "MAE", "Bias", "SSIM")
        << cells("RMSE", "MAE", "Bias", "SSIM") << '\n';

    // published rows, first-appearance order, "-" where no value was printed
    std::vector<std::string> order;
    for (const PublishedBaseline& b : baselines) {
        if (b.species != report.species) continue;
        bool seen = false;
        for (const std::string& m : order) seen = seen || m == b.model;
        if (!seen) order.push_back(b.model);
    }
    std::string blank = cells("-", "-", "-", "-");
    for (const std::string& model : order) {
        std::string noon = blank, diurnal = blank;
        for (const PublishedBaseline& b : baselines) {
            if (b.species != report.species || b.model != model) continue;
            (b.group == "12utc" ? noon : diurnal) =
                cells(b.rmse_str, b.mae_str, b.bias_str, b.ssim_str);
        }
        out << pad(model, name_w) << noon << diurnal << '\n';
    }

    std::string noon = blank;
    if (auto it = report.by_hour.find(12); it != report.by_hour.end())
        noon = row_cells(it->second);
    out << pad(model_label + " (this run)", name_w) << noon << row_cells(report.diurnal)
        << '\n';

    out << "\nper init hour (this run):\n";
    for (const auto& [hour, row] : report.by_hour) {
        char label[16];
        std::snprintf(label, sizeof label, "%02d:00 UTC", hour);
        out << pad(label, name_w) << row_cells(row) << "n=" << row.n_samples << '\n';
    }
    out << pad("diurnal", name_w) << row_cells(report.diurnal) << "n="
        << report.diurnal.n_samples << '\n';
    return out.str();
}

} // namespace pmnc
