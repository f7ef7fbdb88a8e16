#include "pmnc/cams.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "pmnc/nc.hpp"

namespace pmnc {

namespace fs = std::filesystem;

namespace {

const std::array<const char*, VariableSet::kCount> kNames = {
    "t2m", "d2m", "u10", "v10", "msl", "lsm", "z_surface", "pm1", "pm2p5", "pm10"};

// canonical -> accepted file names (short names first, then ADS long forms)
const std::map<std::string, std::vector<std::string>> kAliases = {
    {"t2m", {"t2m", "2t", "2m_temperature"}},
    {"d2m", {"d2m", "2d", "2m_dewpoint_temperature"}},
    {"u10", {"u10", "10u", "10m_u_component_of_wind"}},
    {"v10", {"v10", "10v", "10m_v_component_of_wind"}},
    {"msl", {"msl", "mean_sea_level_pressure"}},
    {"lsm", {"lsm", "land_sea_mask"}},
    {"z_surface", {"z_surface", "z", "surface_geopotential"}},
    {"pm1", {"pm1", "particulate_matter_1um"}},
    {"pm2p5", {"pm2p5", "particulate_matter_2.5um", "pm2_5"}},
    {"pm10", {"pm10", "particulate_matter_10um"}},
};

const std::vector<std::string> kLatAliases = {"latitude", "lat"};
const std::vector<std::string> kLonAliases = {"longitude", "lon"};
const std::vector<std::string> kTimeAliases = {"time", "valid_time"};

const nc::VarInfo* find_any(const nc::Reader& r, const std::vector<std::string>& names) {
    for (const auto& n : names)
        if (const auto* v = r.find_var(n)) return v;
    return nullptr;
}

bool is_kg_per_m3(const std::string& u) {
    return u == "kg m**-3" || u == "kg m-3" || u == "kg/m3" || u == "kg/m^3" ||
           u == "kg m^-3";
}

/// Parses "hours|days|seconds since YYYY-MM-DD[ HH:MM:SS]".
UtcTime decode_time(double raw, const std::string& units, const std::string& path) {
    std::string unit = units.substr(0, units.find(' '));
    auto since = units.find("since ");
    if (since == std::string::npos)
        throw DataError(path + ": unsupported time units '" + units + "'");
    std::string epoch_str = units.substr(since + 6);
    int y = 0, mo = 0, d = 0, h = 0;
    if (std::sscanf(epoch_str.c_str(), "%d-%d-%d %d", &y, &mo, &d, &h) < 3)
        throw DataError(path + ": unparseable time epoch '" + epoch_str + "'");
    double hours = 0;
    if (unit == "hours")
        hours = raw;
    else if (unit == "days")
        hours = raw * 24.0;
    else if (unit == "seconds")
        hours = raw / 3600.0;
    else if (unit == "minutes")
        hours = raw / 60.0;
    else
        throw DataError(path + ": unsupported time unit '" + unit + "'");
    double rounded = std::round(hours);
    if (std::fabs(hours - rounded) > 1e-6)
        throw DataError(path + ": timestamp not on a whole hour");
    return UtcTime::from(Date{y, mo, d}, h).plus_hours(static_cast<std::int64_t>(rounded));
}

struct CoordCheck {
    bool lat_ascending = false; // file stores south-to-north; we flip on read
};

CoordCheck validate_coords(const nc::Reader& r, const GridSpec& grid, const std::string& path) {
    const auto* latv = find_any(r, kLatAliases);
    const auto* lonv = find_any(r, kLonAliases);
    if (!latv || !lonv) throw DataError(path + ": missing latitude/longitude coordinates");
    auto lat = r.read_var(*latv);
    auto lon = r.read_var(*lonv);
    if (static_cast<int>(lat.size()) != grid.n_lat || static_cast<int>(lon.size()) != grid.n_lon)
        throw DataError(path + ": grid is " + std::to_string(lat.size()) + "x" +
                        std::to_string(lon.size()) + ", expected " + std::to_string(grid.n_lat) +
                        "x" + std::to_string(grid.n_lon));
    CoordCheck cc;
    cc.lat_ascending = lat.size() > 1 && lat[1] > lat[0];
    double lat_north = cc.lat_ascending ? lat.back() : lat.front();
    if (std::fabs(lat_north - grid.lat_first) > 1e-6)
        throw DataError(path + ": northmost latitude " + std::to_string(lat_north) +
                        " does not match grid " + std::to_string(grid.lat_first));
    if (lat.size() > 1 && std::fabs(std::fabs(lat[1] - lat[0]) - grid.resolution) > 1e-6)
        throw DataError(path + ": latitude spacing does not match resolution");
    if (lon.size() > 1 &&
        (lon[1] < lon[0] || std::fabs(lon[1] - lon[0] - grid.resolution) > 1e-6))
        throw DataError(path + ": longitudes must ascend at the grid resolution");
    if (std::fabs(lon.front() - grid.lon_first) > 1e-6)
        throw DataError(path + ": first longitude does not match grid");
    return cc;
}

} // namespace

const std::array<const char*, VariableSet::kCount>& VariableSet::names() { return kNames; }

int VariableSet::index(const std::string& canonical) {
    for (int i = 0; i < kCount; ++i)
        if (canonical == kNames[i]) return i;
    return -1;
}

int VariableSet::pm_channel(const std::string& species) {
    int idx = index(species);
    if (idx < 0 || !is_pm(idx))
        throw ConfigError("unknown PM species '" + species + "' (expected pm1/pm2p5/pm10)");
    return idx;
}

std::string VariableSet::canonical_from_alias(const std::string& file_name) {
    for (const auto& [canon, aliases] : kAliases)
        for (const auto& a : aliases)
            if (a == file_name) return canon;
    return "";
}

std::vector<std::string> VariableSet::aliases_of(const std::string& canonical) {
    auto it = kAliases.find(canonical);
    if (it == kAliases.end()) throw ConfigError("unknown canonical variable '" + canonical + "'");
    return it->second;
}

std::vector<AnalysisFrame> read_day(const std::string& path, const GridDomain& domain,
                                    const GridSpec& grid) {
    std::unique_ptr<nc::Reader> reader;
    try {
        reader = std::make_unique<nc::Reader>(path);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }
    const nc::Reader& r = *reader;
    CoordCheck cc = validate_coords(r, grid, path);

    const auto* timev = find_any(r, kTimeAliases);
    if (!timev) throw DataError(path + ": missing time coordinate");
    const auto* tunits = timev->find_att("units");
    if (!tunits) throw DataError(path + ": time variable has no units attribute");
    auto traw = r.read_var(*timev);

    std::vector<std::pair<UtcTime, std::size_t>> analysis_steps;
    for (std::size_t i = 0; i < traw.size(); ++i) {
        UtcTime t = decode_time(traw[i], tunits->text, path);
        int h = t.hour();
        if (h == 0 || h == 6 || h == 12 || h == 18) analysis_steps.push_back({t, i});
    }
    std::sort(analysis_steps.begin(), analysis_steps.end());

    std::vector<AnalysisFrame> frames(analysis_steps.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        frames[f].timestamp = analysis_steps[f].first;
        frames[f].data = Tensor({VariableSet::kCount, domain.n_lat, domain.n_lon});
    }

    std::size_t plane = static_cast<std::size_t>(grid.n_lat) * grid.n_lon;
    for (int ch = 0; ch < VariableSet::kCount; ++ch) {
        const std::string canonical = kNames[ch];
        const nc::VarInfo* v = find_any(r, kAliases.at(canonical));
        if (!v) throw DataError(path + ": missing variable '" + canonical + "'");
        if (v->dim_ids.size() != 3)
            throw DataError(path + ": variable '" + canonical + "' must be (time, lat, lon)");
        auto raw = r.read_var(*v);
        if (raw.size() != traw.size() * plane)
            throw DataError(path + ": variable '" + canonical + "' has unexpected size");

        std::string units;
        if (const auto* ua = v->find_att("units")) units = ua->text;
        bool to_ugm3 = VariableSet::is_pm(ch) && is_kg_per_m3(units);
        double scale = to_ugm3 ? 1e9 : 1.0;
        std::string recorded = units;
        if (VariableSet::is_pm(ch)) recorded = "ug m**-3";

        for (std::size_t f = 0; f < frames.size(); ++f) {
            const double* step = raw.data() + analysis_steps[f].second * plane;
            for (int row = 0; row < domain.n_lat; ++row) {
                int src_row = domain.lat_index_start + row;
                if (cc.lat_ascending) src_row = grid.n_lat - 1 - src_row;
                const double* src = step + static_cast<std::size_t>(src_row) * grid.n_lon +
                                    domain.lon_index_start;
                double* dst = &frames[f].data.at3(ch, row, 0);
                for (int col = 0; col < domain.n_lon; ++col) {
                    double val = src[col] * scale;
                    if (!std::isfinite(val))
                        throw DataError(path + ": non-finite value in '" + canonical + "' at " +
                                        frames[f].timestamp.str());
                    dst[col] = val;
                }
            }
            frames[f].units[ch] = recorded;
        }
    }
    return frames;
}

Catalog scan_archive(const std::string& root, const Date& from, const Date& to,
                     const std::string& pattern) {
    if (!fs::is_directory(root)) throw DataError("archive root does not exist: " + root);

    Catalog catalog;
    for (Date d = from; d <= to; d = d.next()) {
        CatalogEntry e;
        e.date = d;
        std::string fname = pattern;
        if (auto pos = fname.find("{date}"); pos != std::string::npos)
            fname.replace(pos, 6, d.str());
        fs::path p = fs::path(root) / fname;
        if (fs::exists(p)) {
            e.path = p.string();
            nc::Reader r(e.path);
            const auto* timev = find_any(r, kTimeAliases);
            const auto* tunits = timev ? timev->find_att("units") : nullptr;
            if (timev && tunits) {
                for (double raw : r.read_var(*timev)) {
                    UtcTime t = decode_time(raw, tunits->text, e.path);
                    int h = t.hour();
                    if ((h == 0 || h == 6 || h == 12 || h == 18) && t.date() == d)
                        e.hours.push_back(h);
                }
                std::sort(e.hours.begin(), e.hours.end());
            }
        }
        catalog.push_back(std::move(e));
    }
    return catalog;
}

} // namespace pmnc
