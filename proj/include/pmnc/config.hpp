#pragma once

#include <string>
#include <vector>

#include "pmnc/grid.hpp"
#include "pmnc/losses.hpp"
#include "pmnc/models.hpp"
#include "pmnc/preprocess.hpp"
#include "pmnc/synthetic.hpp"
#include "pmnc/training.hpp"

namespace pmnc {

/// One self-describing experiment: every knob a run needs lives in a single
/// JSON document, so re-running the same file against the same archive
/// reproduces the results. Absent fields keep the preset's defaults.
struct ExperimentConfig {
    // paths
    std::string archive_root;
    std::string output_dir;
    std::string stats_path;                   // default: <output_dir>/stats.json
    std::string archive_pattern = "{date}.nc";

    std::string species = "pm2p5";
    std::string preset = "convgru1"; // seeds model/loss/train defaults

    GridSpec grid;
    DomainSpec input_window = input_domain_spec();
    DomainSpec output_window = output_domain_spec();

    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    SplitSpec split;

    bool has_scenario = false;
    synth::ScenarioConfig scenario;

    /// Preset-consistent defaults: the unet preset pairs the Huber loss
    /// blend with the decoupled-decay recipe, the recurrent presets pair
    /// the RMSE blend with plateau scheduling.
    static ExperimentConfig defaults(const std::string& preset, const std::string& species);

    void validate() const;
    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path,
                                 const std::vector<std::string>& overrides = {});
    void save(const std::string& path) const;
};

/// Applies "dotted.path=value" overrides to a JSON document in place.
/// Values parse as JSON when possible (numbers, bools, arrays), otherwise
/// as strings. Throws ConfigError on malformed overrides.
std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides);

} // namespace pmnc
