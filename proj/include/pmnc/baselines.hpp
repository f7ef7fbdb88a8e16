#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pmnc/evaluation.hpp"

namespace pmnc {

/// One published evaluation row, carried verbatim: the *_str fields hold
/// the exact printed figures (trailing zeros preserved) and are what the
/// renderer emits; the doubles exist for programmatic comparison only.
/// These values are never recomputed by this codebase.
struct PublishedBaseline {
    std::string model;
    std::string species; // pm1 / pm2p5 / pm10
    std::string group;   // "12utc" or "diurnal"
    double rmse = 0.0;
    double mae = 0.0;
    double bias = 0.0;
    double ssim = 0.0;
    std::string rmse_str, mae_str, bias_str, ssim_str;
    std::string source; // provenance tag (table and row)
};

/// Loads the shipped reference table. Throws DataError on a malformed file.
std::vector<PublishedBaseline> published_baselines(const std::string& csv_path);

/// FNV-1a (64-bit) over the raw file bytes; guards accidental edits.
std::uint64_t baselines_checksum(const std::string& csv_path);

/// Text table in the published layout: one row per reference model with
/// 12:00 UTC and diurnal blocks ("-" where a baseline has no published
/// value), followed by this run's row and its full per-init-hour breakdown.
std::string render_metrics_table(const MetricsReport& report,
                                 const std::vector<PublishedBaseline>& baselines,
                                 const std::string& model_label);

} // namespace pmnc
