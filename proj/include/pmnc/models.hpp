#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pmnc/autodiff.hpp"
#include "pmnc/errors.hpp"
#include "pmnc/rng.hpp"
#include "pmnc/tensor.hpp"

namespace pmnc {

enum class ModelFamily { convgru, convlstm, unet };

const char* family_name(ModelFamily f);
ModelFamily family_from_name(const std::string& name);

/// Architecture hyperparameters. Recurrent families use three stacked cells
/// with per-layer channelwise dropout; the U-Net uses five encoder widths.
struct ModelConfig {
    ModelFamily family = ModelFamily::convgru;
    std::vector<int> hidden_widths{64, 128, 64};
    int kernel_size = 3;
    std::vector<double> dropout_rates{0.2, 0.3, 0.2};
    int input_channels = 10;
    int time_depth = 1;
    int output_size = 128;
    std::uint64_t init_seed = 1234;
    bool lstm_forget_bias_one = true; // stabilization; switchable deviation knob

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);

    /// Named presets: convgru1, convgru2, convlstm1, convlstm2, unet.
    static ModelConfig preset(const std::string& name);
};

struct ParameterCount {
    long long total = 0;
    std::vector<std::pair<std::string, long long>> per_layer;
};

struct NamedParam {
    std::string name;
    ad::Var var;
};

/// A model is a named set of parameter leaves plus a forward graph builder.
/// Parameter values may be mutated (by an optimizer) between forwards; the
/// object is not safe for concurrent mutation. Evaluation-mode forwards do
/// not mutate any internal state, so concurrent readers of a frozen model
/// are safe.
class Model {
public:
    virtual ~Model() = default;

    /// input: (N, time_depth*input_channels, H, W) with H, W >= output_size.
    /// Training mode enables dropout (rng required when any rate > 0) and
    /// batch-normalization statistics updates.
    virtual ad::Var forward(const ad::Var& input, bool training = false,
                            Rng* dropout_rng = nullptr) = 0;

    const ModelConfig& config() const { return cfg_; }
    std::vector<NamedParam>& parameters() { return params_; }
    const std::vector<NamedParam>& parameters() const { return params_; }

    /// Non-trainable state (normalization running statistics), serialized
    /// alongside the parameters.
    std::vector<std::pair<std::string, Tensor*>> buffers() { return buffers_; }

    ParameterCount count_parameters() const;
    void zero_grad();

protected:
    explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}
    ad::Var add_param(const std::string& name, Tensor init);
    void add_buffer(const std::string& name, Tensor* t) { buffers_.emplace_back(name, t); }

    ModelConfig cfg_;
    std::vector<NamedParam> params_;
    std::vector<std::pair<std::string, Tensor*>> buffers_;
};

/// Builds an initialized model (variance-scaling fan-in weights, zero biases,
/// deterministic from cfg.init_seed).
std::unique_ptr<Model> build_model(const ModelConfig& cfg);

/// Checkpoint sidecar carried inside the weight file.
struct CheckpointMeta {
    std::string species;       // pm1 / pm2p5 / pm10
    std::string stats_ref;     // path of the normalization-stats sidecar
    std::string training_json; // free-form training metadata (JSON object)
};

/// Single-file container: magic, JSON header (schema, config, metadata,
/// array manifest), then raw little-endian float64 arrays.
void save_weights(const Model& model, const std::string& path, const CheckpointMeta& meta);

/// Restores a model bit-identically. Throws DataError on corruption or on a
/// config/shape mismatch (also against `expect` when provided). When
/// `expected_species` is non-empty and differs from the checkpoint's, a
/// warning is printed to stderr (the load still succeeds).
std::unique_ptr<Model> load_weights(const std::string& path, CheckpointMeta* meta = nullptr,
                                    const ModelConfig* expect = nullptr,
                                    const std::string& expected_species = "");

/// Framework-neutral export: <dir>/config.json, <dir>/manifest.json and one
/// raw float64 .bin per named array.
void export_weights(const Model& model, const std::string& dir);

} // namespace pmnc
