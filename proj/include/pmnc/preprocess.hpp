#pragma once

#include <array>
#include <string>
#include <vector>

#include "pmnc/cams.hpp"
#include "pmnc/grid.hpp"
#include "pmnc/tensor.hpp"
#include "pmnc/time.hpp"

namespace pmnc {

/// Per-variable global absolute maxima over the training archive, plus the
/// provenance needed to reproduce them.
struct NormalizationStats {
    std::array<double, VariableSet::kCount> max_abs{};
    std::string from_date;
    std::string to_date;
    int file_count = 0;
    int frame_count = 0;

    double stat(int channel) const;
    double stat(const std::string& canonical) const;

    std::string to_json() const;
    static NormalizationStats from_json(const std::string& text);
    void save(const std::string& path) const;
    static NormalizationStats load(const std::string& path);
};

/// Scans the catalog rows within [from, to] and reduces per-variable
/// max|value| over every pixel of the input window.
NormalizationStats compute_stats(const Catalog& catalog, const Date& from, const Date& to,
                                 const GridDomain& input_domain, const GridSpec& grid = {});

/// Elementwise per-channel division by the stats. Values outside [-1, 1]
/// are possible for out-of-training-range data and are not clipped.
Tensor normalize(const AnalysisFrame& frame, const NormalizationStats& stats);

/// Inverse of normalize for a single PM field: multiply by the species stat.
Tensor denormalize(const Tensor& field, const std::string& species,
                   const NormalizationStats& stats);

/// One training pair: ten-channel input at t (time depth T=1), species
/// target at t+6h center-cropped to the output window. Values normalized.
struct Sample {
    Tensor input;  // (10, H, W)
    Tensor target; // (1, H/2, W/2)
    std::string species;
    UtcTime init_time;
    static constexpr int kTimeDepth = 1;
};

struct BuildReport {
    int produced = 0;
    int dropped_missing_successor = 0;
};

/// Builds all samples available in the catalog (sorted by init_time).
/// A sample exists for analysis time t iff the t+6h frame exists
/// (18 UTC pairs with the next day's 00 UTC).
std::vector<Sample> build_samples(const Catalog& catalog, const std::string& species,
                                  const NormalizationStats& stats, const GridDomain& input_domain,
                                  const GridDomain& output_domain, const GridSpec& grid = {},
                                  BuildReport* report = nullptr);

struct SplitSpec {
    double train_fraction = 0.9;
    std::uint64_t seed = 42;
    Date train_from{2021, 1, 1};
    Date train_to{2023, 12, 31};
    Date test_from{2024, 1, 1};
    Date test_to{2024, 12, 31};
};

/// Train/validation samples. The training loop accepts only this type, so
/// held-out samples cannot reach it.
struct TrainValSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
};

/// Held-out evaluation samples, in original time order.
struct TestSplit {
    std::vector<Sample> test;
};

/// Deterministic shuffled split of the train-range samples plus the intact
/// test range. Throws ConfigError when any partition is empty.
std::pair<TrainValSplit, TestSplit> split_samples(std::vector<Sample> samples,
                                                  const SplitSpec& spec);

/// Audit manifest (CSV: init_time, species, target_time, split).
void write_manifest(const std::string& path, const TrainValSplit& tv, const TestSplit& test);

} // namespace pmnc
