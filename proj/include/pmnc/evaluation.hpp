#pragma once

#include <map>
#include <string>
#include <vector>

#include "pmnc/grid.hpp"
#include "pmnc/losses.hpp"
#include "pmnc/models.hpp"
#include "pmnc/preprocess.hpp"
#include "pmnc/tensor.hpp"
#include "pmnc/time.hpp"

namespace pmnc {

/// One (prediction, target) pair in physical units (ug/m3).
struct EvalPair {
    UtcTime init_time;
    Tensor pred;   // (h, w) or (1, h, w)
    Tensor target; // same shape
    std::string units = "ug m**-3";
};

/// Order-independent per-sample reduction terms plus the sample's SSIM.
struct PairRecord {
    UtcTime init_time;
    double sse = 0.0;        // sum of squared errors
    double sae = 0.0;        // sum of absolute errors
    double se = 0.0;         // sum of signed errors (pred - target)
    double target_sum = 0.0;
    long long n_pixels = 0;
    double ssim = 0.0;

    double rmse() const;
    double mae() const;
    double bias() const;
};

struct MetricsRow {
    double rmse = 0.0;
    double mae = 0.0;
    double bias = 0.0;
    double ssim = 0.0;
    long long n_samples = 0;
};

struct MonthPoint {
    int year = 0;
    int month = 0;
    double nrmse = 0.0; // pooled RMSE / pooled target mean
    double ssim = 0.0;
    long long n_samples = 0;
    double coverage = 0.0; // n_samples / (4 x days in month)
};

struct MetricsReport {
    std::string species;
    std::string units = "ug m**-3";
    std::map<int, MetricsRow> by_hour; // keyed 0/6/12/18; empty groups omitted
    MetricsRow diurnal;                // pooled over all samples
    std::vector<MonthPoint> monthly;
    // SSIM convention metadata
    double ssim_dynamic_range = 0.0;
    int ssim_window = 11;
    double ssim_sigma = 1.5;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

/// Pixelwise temporal mean of (pred - target), geo-referenced.
struct BiasMap {
    Tensor mean_error; // (h, w)
    GridDomain domain;
    long long n_samples = 0;

    double spatial_mean() const;
};

PairRecord summarize_pair(const EvalPair& pair, const SsimConfig& cfg);

/// Physical-unit metrics grouped by init hour with pooled diurnal row and
/// calendar-month NRMSE/SSIM. The SSIM dynamic range is the target max-min
/// over the whole set (floored at 1e-6 for degenerate constant sets) and is
/// recorded in the report.
MetricsReport compute_metrics(const std::vector<EvalPair>& pairs, const std::string& species);

BiasMap compute_bias_map(const std::vector<EvalPair>& pairs, const GridDomain& domain);

/// BiasMap as geo-referenced NetCDF (latitude, longitude, bias).
void write_bias_map(const BiasMap& map, const std::string& path);

void write_sample_records(const std::vector<PairRecord>& records, const std::string& path);

struct EvaluationResult {
    MetricsReport report;
    BiasMap bias_map;
    std::vector<PairRecord> records;
};

/// Runs inference over the held-out split in time order, denormalizes to
/// physical units and computes the full report. `records_csv` (optional)
/// receives one row per sample for audit.
EvaluationResult evaluate_model(Model& model, const TestSplit& test,
                                const NormalizationStats& stats, const std::string& species,
                                const GridDomain& output_domain,
                                const std::string& records_csv = "", int batch_size = 32);

} // namespace pmnc
