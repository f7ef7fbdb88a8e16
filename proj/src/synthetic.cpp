#include "pmnc/synthetic.hpp"

#include <cmath>
#include <filesystem>

#include "pmnc/nc.hpp"

namespace pmnc::synth {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::map<std::string, VarSynth> default_vars(double corr_len) {
    std::map<std::string, VarSynth> v;
    v["t2m"] = {288.0, 12.0, 1.5, 3.0, corr_len, 1, 0, 0.0, false, false, false, "K"};
    v["d2m"] = {283.0, 10.0, 1.0, 2.0, corr_len, 1, 0, 0.0, false, false, false, "K"};
    v["u10"] = {0.0, 8.0, 1.0, 0.5, corr_len, 1, 0, 0.0, false, false, false, "m s**-1"};
    v["v10"] = {0.0, 8.0, 1.0, 0.5, corr_len, 0, 1, 0.0, false, false, false, "m s**-1"};
    v["msl"] = {101325.0, 600.0, 100.0, 50.0, corr_len, 1, 0, 0.0, false, false, false, "Pa"};
    v["lsm"] = {0.0, 1.0, 0.0, 0.0, corr_len, 0, 0, 0.0, true, true, true, "(0 - 1)"};
    v["z_surface"] = {500.0, 3000.0, 0.0, 0.0, corr_len, 0, 0, 0.0, true, true, false,
                      "m**2 s**-2"};
    // PM levels in ug/m3; stored units decided by pm_units
    v["pm1"] = {8.0, 25.0, 4.0, 2.0, corr_len, 1, 0, 0.0, true, false, false, ""};
    v["pm2p5"] = {12.0, 40.0, 6.0, 3.0, corr_len, 1, 0, 0.0, true, false, false, ""};
    v["pm10"] = {20.0, 80.0, 10.0, 5.0, corr_len, 1, 1, 0.0, true, false, false, ""};
    return v;
}

/// Fixed random blob field for one variable, derived from the scenario seed.
Tensor base_field(const ScenarioConfig& cfg, const std::string& var, const VarSynth& vs) {
    int H = cfg.grid.n_lat, W = cfg.grid.n_lon;
    Rng rng = Rng(cfg.seed).substream(0x62617365u ^ std::hash<std::string>{}(var));
    Tensor field({H, W});
    double len = std::max(1.0, vs.corr_len_cells);
    for (int b = 0; b < cfg.blob_count; ++b) {
        double cy = rng.uniform(0.0, H);
        double cx = rng.uniform(0.0, W);
        double amp = rng.uniform(vs.non_negative ? 0.15 : -1.0, 1.0) * vs.spatial_amp;
        double inv2l2 = 1.0 / (2.0 * len * len);
        for (int y = 0; y < H; ++y) {
            // torus metric keeps advected fields seamless
            double dy = std::fabs(y - cy);
            dy = std::min(dy, H - dy);
            for (int x = 0; x < W; ++x) {
                double dx = std::fabs(x - cx);
                dx = std::min(dx, W - dx);
                field.data[static_cast<std::size_t>(y) * W + x] +=
                    amp * std::exp(-(dy * dy + dx * dx) * inv2l2);
            }
        }
    }
    if (vs.unit_interval) {
        double lo = field.min(), hi = field.max();
        double span = hi - lo > 0 ? hi - lo : 1.0;
        for (auto& v : field.data) v = (v - lo) / span;
    } else {
        for (auto& v : field.data) v += vs.base;
        if (vs.non_negative)
            for (auto& v : field.data) v = std::max(v, 0.0);
    }
    return field;
}

/// Periodic integer roll: out(y, x) = in(y - sy, x - sx).
Tensor roll(const Tensor& in, int sy, int sx) {
    int H = in.shape[0], W = in.shape[1];
    sy = ((sy % H) + H) % H;
    sx = ((sx % W) + W) % W;
    Tensor out({H, W});
    for (int y = 0; y < H; ++y) {
        int src_y = (y - sy + H) % H;
        for (int x = 0; x < W; ++x)
            out.data[static_cast<std::size_t>(y) * W + x] =
                in.data[static_cast<std::size_t>(src_y) * W + (x - sx + W) % W];
    }
    return out;
}

std::int64_t steps_since_start(const ScenarioConfig& cfg, const UtcTime& t) {
    return (t.hours_since_1900 - UtcTime::from(cfg.from, 0).hours_since_1900) / 6;
}

} // namespace

ScenarioConfig ScenarioConfig::defaults() {
    ScenarioConfig cfg;
    cfg.vars = default_vars(12.0);
    return cfg;
}

ScenarioConfig ScenarioConfig::mini_profile() {
    ScenarioConfig cfg;
    cfg.grid = GridSpec{90.0, 0.0, 4.0, 46, 90};
    cfg.mini = true;
    cfg.blob_count = 8;
    cfg.vars = default_vars(3.0);
    return cfg;
}

Tensor synthesize_field(const ScenarioConfig& cfg, const std::string& var, const UtcTime& t) {
    auto it = cfg.vars.find(var);
    if (it == cfg.vars.end()) throw ConfigError("scenario has no parameters for '" + var + "'");
    const VarSynth& vs = it->second;

    Tensor field = base_field(cfg, var, vs);
    if (vs.static_field) return field;

    std::int64_t k = steps_since_start(cfg, t);
    field = roll(field, static_cast<int>(k) * vs.advect_v, static_cast<int>(k) * vs.advect_u);

    int doy = static_cast<int>((t.date().to_days() -
                                Date{t.date().year, 1, 1}.to_days()).count());
    double modulation = vs.seasonal_amp * std::sin(2.0 * kPi * doy / 365.25) +
                        vs.diurnal_amp * std::sin(2.0 * kPi * t.hour() / 24.0);
    for (auto& v : field.data) v += modulation;

    if (vs.noise_amp > 0.0) {
        Rng noise = Rng(cfg.seed).substream(
            0x6E6F6973u ^ (std::hash<std::string>{}(var) + 0x9E37u * static_cast<std::uint64_t>(k)));
        for (auto& v : field.data) v += vs.noise_amp * noise.normal();
    }
    if (vs.non_negative)
        for (auto& v : field.data) v = std::max(v, 0.0);
    return field;
}

Catalog generate_archive(const ScenarioConfig& cfg, const std::string& out_root) {
    std::error_code ec;
    fs::create_directories(out_root, ec);
    if (!fs::is_directory(out_root))
        throw DataError("cannot create output directory: " + out_root);

    const GridSpec& g = cfg.grid;
    Catalog catalog;
    for (Date d = cfg.from; d <= cfg.to; d = d.next()) {
        nc::Writer w;
        int d_time = w.add_dim("time", 4);
        int d_lat = w.add_dim("latitude", g.n_lat);
        int d_lon = w.add_dim("longitude", g.n_lon);
        w.global_atts.push_back(nc::Attribute::str("source", "pmnc synthetic scenario"));
        if (cfg.mini)
            w.global_atts.push_back(
                nc::Attribute::str("note", "reduced synthetic grid, not analysis geometry"));

        auto& latv = w.add_var("latitude", nc::Type::Double, {d_lat});
        for (int i = 0; i < g.n_lat; ++i) latv.data.push_back(g.lat_at(i));
        latv.atts.push_back(nc::Attribute::str("units", "degrees_north"));
        auto& lonv = w.add_var("longitude", nc::Type::Double, {d_lon});
        for (int i = 0; i < g.n_lon; ++i) lonv.data.push_back(g.lon_at(i));
        lonv.atts.push_back(nc::Attribute::str("units", "degrees_east"));

        auto& timev = w.add_var("time", nc::Type::Int, {d_time});
        for (int h : {0, 6, 12, 18})
            timev.data.push_back(static_cast<double>(UtcTime::from(d, h).hours_since_1900));
        timev.atts.push_back(nc::Attribute::str("units", "hours since 1900-01-01 00:00:00"));

        for (const char* name : VariableSet::names()) {
            const VarSynth& vs = cfg.vars.at(name);
            bool pm = VariableSet::is_pm(VariableSet::index(name));
            double scale = 1.0;
            std::string units = vs.units;
            if (pm) {
                units = cfg.pm_units;
                if (units.rfind("kg", 0) == 0) scale = 1e-9; // ug/m3 -> kg/m3 on disk
            }
            auto& var = w.add_var(name, nc::Type::Float, {d_time, d_lat, d_lon});
            var.atts.push_back(nc::Attribute::str("units", units));
            var.data.reserve(static_cast<std::size_t>(4) * g.n_lat * g.n_lon);
            for (int h : {0, 6, 12, 18}) {
                Tensor f = synthesize_field(cfg, name, UtcTime::from(d, h));
                for (double v : f.data) var.data.push_back(v * scale);
            }
        }

        fs::path out = fs::path(out_root) / (d.str() + ".nc");
        w.save(out.string());
        catalog.push_back({d, out.string(), {0, 6, 12, 18}});
    }
    return catalog;
}

std::vector<FixturePair> make_fixture_pairs(int n, int height, int width, double c) {
    if (n < 1) throw ConfigError("make_fixture_pairs: n must be >= 1");
    std::vector<FixturePair> pairs;
    Rng rng(1234);
    for (int i = 0; i < n; ++i) {
        Tensor target({1, height, width});
        for (auto& v : target.data) v = 30.0 + 10.0 * rng.uniform();
        Tensor pred = target;
        switch (i % 3) {
        case 0:
            break; // identical: all metrics zero, SSIM 1
        case 1:
            for (auto& v : pred.data) v += c; // Bias = MAE = RMSE = c
            break;
        case 2: { // alternating +/-c: Bias 0, MAE c, RMSE c
            std::size_t j = 0;
            for (auto& v : pred.data) v += ((j++ % 2) ? c : -c);
            break;
        }
        }
        pairs.push_back({std::move(pred), std::move(target)});
    }
    return pairs;
}

} // namespace pmnc::synth
