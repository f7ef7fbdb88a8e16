#include "pmnc/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

#include <json.hpp>

#include "pmnc/errors.hpp"
#include "pmnc/nc.hpp"

namespace pmnc {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------- per-sample

double PairRecord::rmse() const { return std::sqrt(sse / static_cast<double>(n_pixels)); }
double PairRecord::mae() const { return sae / static_cast<double>(n_pixels); }
double PairRecord::bias() const { return se / static_cast<double>(n_pixels); }

namespace {

void check_pair_shape(const EvalPair& p) {
    if (!p.pred.same_shape(p.target))
        throw DataError("evaluation pair shapes differ: " + p.pred.shape_str() + " vs " +
                        p.target.shape_str());
    int nd = p.pred.ndim();
    if (nd != 2 && !(nd == 3 && p.pred.dim(0) == 1))
        throw DataError("evaluation fields must be (h, w) or (1, h, w), got " +
                        p.pred.shape_str());
}

int days_in_month(int year, int month) {
    using namespace std::chrono;
    year_month_day_last last{std::chrono::year{year} / std::chrono::month{unsigned(month)} /
                             std::chrono::last};
    return int(unsigned(last.day()));
}

/// Order-independent accumulator for one group of samples.
struct GroupSums {
    double sse = 0.0;
    double sae = 0.0;
    double se = 0.0;
    double target_sum = 0.0;
    double ssim_sum = 0.0;
    long long n_pixels = 0;
    long long n_samples = 0;

    void add(const PairRecord& r) {
        sse += r.sse;
        sae += r.sae;
        se += r.se;
        target_sum += r.target_sum;
        ssim_sum += r.ssim;
        n_pixels += r.n_pixels;
        n_samples += 1;
    }

    MetricsRow row() const {
        MetricsRow m;
        m.rmse = std::sqrt(sse / static_cast<double>(n_pixels));
        m.mae = sae / static_cast<double>(n_pixels);
        m.bias = se / static_cast<double>(n_pixels);
        m.ssim = ssim_sum / static_cast<double>(n_samples);
        m.n_samples = n_samples;
        return m;
    }
};

json row_json(const MetricsRow& r) {
    return json{{"rmse", r.rmse},
                {"mae", r.mae},
                {"bias", r.bias},
                {"ssim", r.ssim},
                {"n_samples", r.n_samples}};
}

MetricsRow row_from_json(const json& j) {
    MetricsRow r;
    r.rmse = j.at("rmse").get<double>();
    r.mae = j.at("mae").get<double>();
    r.bias = j.at("bias").get<double>();
    r.ssim = j.at("ssim").get<double>();
    r.n_samples = j.at("n_samples").get<long long>();
    return r;
}

} // namespace

PairRecord summarize_pair(const EvalPair& pair, const SsimConfig& cfg) {
    check_pair_shape(pair);
    PairRecord r;
    r.init_time = pair.init_time;
    r.n_pixels = static_cast<long long>(pair.pred.size());
    for (std::size_t i = 0; i < pair.pred.size(); ++i) {
        double e = pair.pred.data[i] - pair.target.data[i];
        r.sse += e * e;
        r.sae += std::abs(e);
        r.se += e;
        r.target_sum += pair.target.data[i];
    }
    r.ssim = ssim_value(pair.pred, pair.target, cfg);
    return r;
}

// ----------------------------------------------------------------- report

MetricsReport compute_metrics(const std::vector<EvalPair>& pairs, const std::string& species) {
    if (pairs.empty()) throw DataError("compute_metrics: no evaluation pairs");
    const std::string& units = pairs.front().units;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const EvalPair& p : pairs) {
        check_pair_shape(p);
        if (p.units != units)
            throw DataError("compute_metrics: unit mismatch: '" + p.units + "' vs '" + units +
                            "'");
        lo = std::min(lo, p.target.min());
        hi = std::max(hi, p.target.max());
    }

    MetricsReport rep;
    rep.species = species;
    rep.units = units;
    SsimConfig ssim_cfg;
    ssim_cfg.dynamic_range = std::max(hi - lo, 1e-6);
    rep.ssim_dynamic_range = ssim_cfg.dynamic_range;
    rep.ssim_window = ssim_cfg.window_size;
    rep.ssim_sigma = ssim_cfg.sigma;

    GroupSums all;
    std::map<int, GroupSums> by_hour;
    std::map<std::pair<int, int>, GroupSums> by_month;
    for (const EvalPair& p : pairs) {
        PairRecord r = summarize_pair(p, ssim_cfg);
        all.add(r);
        by_hour[p.init_time.hour()].add(r);
        by_month[{p.init_time.year(), p.init_time.month()}].add(r);
    }

    for (int hour : {0, 6, 12, 18})
        if (!by_hour.count(hour))
            std::cerr << "warning: no samples at init hour " << hour
                      << " UTC; row omitted from the report\n";
    for (const auto& [hour, sums] : by_hour) rep.by_hour[hour] = sums.row();
    rep.diurnal = all.row();

    for (const auto& [ym, sums] : by_month) {
        MonthPoint pt;
        pt.year = ym.first;
        pt.month = ym.second;
        double mean_target = sums.target_sum / static_cast<double>(sums.n_pixels);
        pt.nrmse = std::sqrt(sums.sse / static_cast<double>(sums.n_pixels)) / mean_target;
        pt.ssim = sums.ssim_sum / static_cast<double>(sums.n_samples);
        pt.n_samples = sums.n_samples;
        pt.coverage = static_cast<double>(sums.n_samples) /
                      (4.0 * days_in_month(ym.first, ym.second));
        rep.monthly.push_back(pt);
    }
    return rep;
}

std::string MetricsReport::to_json() const {
    json j;
    j["species"] = species;
    j["units"] = units;
    json hours = json::object();
    for (const auto& [hour, row] : by_hour) {
        char key[8];
        std::snprintf(key, sizeof key, "%02d", hour);
        hours[key] = row_json(row);
    }
    j["by_hour"] = hours;
    j["diurnal"] = row_json(diurnal);
    j["monthly"] = json::array();
    for (const MonthPoint& p : monthly)
        j["monthly"].push_back(json{{"year", p.year},
                                    {"month", p.month},
                                    {"nrmse", p.nrmse},
                                    {"ssim", p.ssim},
                                    {"n_samples", p.n_samples},
                                    {"coverage", p.coverage}});
    j["ssim_convention"] = json{{"dynamic_range", ssim_dynamic_range},
                                {"window_size", ssim_window},
                                {"sigma", ssim_sigma}};
    return j.dump(2) + "\n";
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("metrics report: invalid JSON: ") + e.what());
    }
    try {
        MetricsReport rep;
        rep.species = j.at("species").get<std::string>();
        rep.units = j.at("units").get<std::string>();
        for (const auto& [key, row] : j.at("by_hour").items())
            rep.by_hour[std::stoi(key)] = row_from_json(row);
        rep.diurnal = row_from_json(j.at("diurnal"));
        for (const json& p : j.at("monthly")) {
            MonthPoint pt;
            pt.year = p.at("year").get<int>();
            pt.month = p.at("month").get<int>();
            pt.nrmse = p.at("nrmse").get<double>();
            pt.ssim = p.at("ssim").get<double>();
            pt.n_samples = p.at("n_samples").get<long long>();
            pt.coverage = p.at("coverage").get<double>();
            rep.monthly.push_back(pt);
        }
        const json& conv = j.at("ssim_convention");
        rep.ssim_dynamic_range = conv.at("dynamic_range").get<double>();
        rep.ssim_window = conv.at("window_size").get<int>();
        rep.ssim_sigma = conv.at("sigma").get<double>();
        return rep;
    } catch (const json::exception& e) {
        throw DataError(std::string("metrics report: missing or malformed field: ") + e.what());
    }
}

// --------------------------------------------------------------- bias map

double BiasMap::spatial_mean() const { return mean_error.mean(); }

BiasMap compute_bias_map(const std::vector<EvalPair>& pairs, const GridDomain& domain) {
    if (pairs.empty()) throw DataError("compute_bias_map: no evaluation pairs");
    BiasMap map;
    map.domain = domain;
    map.mean_error = Tensor({domain.n_lat, domain.n_lon});
    for (const EvalPair& p : pairs) {
        check_pair_shape(p);
        if (static_cast<long long>(p.pred.size()) !=
            static_cast<long long>(domain.n_lat) * domain.n_lon)
            throw DataError("compute_bias_map: field " + p.pred.shape_str() +
                            " does not cover the output domain");
        for (std::size_t i = 0; i < p.pred.size(); ++i)
            map.mean_error.data[i] += p.pred.data[i] - p.target.data[i];
        map.n_samples += 1;
    }
    for (double& v : map.mean_error.data) v /= static_cast<double>(map.n_samples);
    return map;
}

void write_bias_map(const BiasMap& map, const std::string& path) {
    nc::Writer w;
    int lat_id = w.add_dim("latitude", map.domain.n_lat);
    int lon_id = w.add_dim("longitude", map.domain.n_lon);

    auto& lat = w.add_var("latitude", nc::Type::Double, {lat_id});
    lat.atts.push_back(nc::Attribute::str("units", "degrees_north"));
    for (int r = 0; r < map.domain.n_lat; ++r)
        lat.data.push_back(map.domain.lat_start - r * map.domain.resolution);

    auto& lon = w.add_var("longitude", nc::Type::Double, {lon_id});
    lon.atts.push_back(nc::Attribute::str("units", "degrees_east"));
    for (int c = 0; c < map.domain.n_lon; ++c)
        lon.data.push_back(map.domain.lon_start + c * map.domain.resolution);

    auto& bias = w.add_var("bias", nc::Type::Double, {lat_id, lon_id});
    bias.atts.push_back(nc::Attribute::str("units", "ug m**-3"));
    bias.atts.push_back(nc::Attribute::str("long_name", "mean (prediction - target)"));
    bias.data = map.mean_error.data;

    w.global_atts.push_back(
        nc::Attribute::num("n_samples", nc::Type::Int, {double(map.n_samples)}));
    w.save(path);
}

// ---------------------------------------------------------------- records

void write_sample_records(const std::vector<PairRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("cannot write sample records: " + path);
    out << "init_time,rmse,mae,bias,ssim\n";
    out.precision(12);
    for (const PairRecord& r : records)
        out << r.init_time.str() << ',' << r.rmse() << ',' << r.mae() << ',' << r.bias() << ','
            << r.ssim << '\n';
    if (!out) throw RuntimeFailure("write failed: " + path);
}

// --------------------------------------------------------------- pipeline

EvaluationResult evaluate_model(Model& model, const TestSplit& test,
                                const NormalizationStats& stats, const std::string& species,
                                const GridDomain& output_domain, const std::string& records_csv,
                                int batch_size) {
    if (test.test.empty()) throw DataError("evaluate_model: held-out split is empty");
    if (batch_size < 1) throw ConfigError("evaluate_model: batch_size must be >= 1");
    double stat = stats.stat(species); // throws ConfigError on unknown species
    if (!(stat > 0.0)) throw DataError("evaluate_model: zero normalization stat for " + species);
    for (const Sample& s : test.test)
        if (s.species != species)
            throw DataError("evaluate_model: split carries species '" + s.species +
                            "', expected '" + species + "'");

    std::vector<EvalPair> pairs;
    pairs.reserve(test.test.size());
    std::size_t n = test.test.size();
    for (std::size_t first = 0; first < n; first += static_cast<std::size_t>(batch_size)) {
        std::size_t last = std::min(n, first + static_cast<std::size_t>(batch_size));
        const Sample& head = test.test[first];
        int c = head.input.shape[0], hi = head.input.shape[1], wi = head.input.shape[2];
        Tensor batch({static_cast<int>(last - first), c, hi, wi});
        std::size_t item = head.input.size();
        for (std::size_t i = first; i < last; ++i)
            std::copy(test.test[i].input.data.begin(), test.test[i].input.data.end(),
                      batch.data.begin() + static_cast<std::ptrdiff_t>((i - first) * item));
        Tensor out = model.forward(ad::Var::leaf(std::move(batch)), false, nullptr).value();
        int ho = out.shape[2], wo = out.shape[3];
        for (std::size_t i = first; i < last; ++i) {
            Tensor pred({1, ho, wo});
            const double* src = out.ptr() + (i - first) * pred.size();
            std::copy(src, src + pred.size(), pred.data.begin());
            EvalPair p;
            p.init_time = test.test[i].init_time;
            p.pred = denormalize(pred, species, stats);
            p.target = denormalize(test.test[i].target, species, stats);
            pairs.push_back(std::move(p));
        }
    }

    EvaluationResult result;
    result.report = compute_metrics(pairs, species);
    result.bias_map = compute_bias_map(pairs, output_domain);
    SsimConfig ssim_cfg;
    ssim_cfg.dynamic_range = result.report.ssim_dynamic_range;
    result.records.reserve(pairs.size());
    for (const EvalPair& p : pairs) result.records.push_back(summarize_pair(p, ssim_cfg));
    if (!records_csv.empty()) write_sample_records(result.records, records_csv);
    return result;
}

} // namespace pmnc
