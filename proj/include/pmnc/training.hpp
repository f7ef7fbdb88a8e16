#pragma once

#include <string>
#include <vector>

#include "pmnc/losses.hpp"
#include "pmnc/models.hpp"
#include "pmnc/preprocess.hpp"

namespace pmnc {

enum class Recipe { recurrent, unet };

const char* recipe_name(Recipe r);
Recipe recipe_from_name(const std::string& name);

/// Optimization recipe settings. The recurrent recipe pairs an
/// adaptive-moment optimizer at 1e-3 with plateau LR halving; the unet
/// recipe pairs decoupled weight decay with cosine annealing and two-step
/// gradient accumulation.
struct TrainConfig {
    Recipe recipe = Recipe::recurrent;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double weight_decay = 1e-4; // unet recipe only
    double plateau_factor = 0.5;
    int plateau_patience = 3;
    double plateau_rel_threshold = 1e-4;
    int accumulation_steps = 1; // 2 in the unet default
    int max_epochs = 100;
    int early_stop_patience = 10;
    double grad_clip_norm = 1.0; // recurrent only; <= 0 disables
    double cosine_min_lr = 0.0;
    std::uint64_t seed = 42;

    static TrainConfig recurrent_default();
    static TrainConfig unet_default();
    void validate() const;
};

/// Adaptive-moment optimizer; decoupled weight decay when weight_decay > 0
/// (applied directly to the parameter, not through the gradient).
class Adam {
public:
    Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step(std::vector<NamedParam>& params);
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    long long steps_taken() const { return t_; }

    /// State serialization for deterministic resumption.
    std::string state_json() const;
    const std::vector<Tensor>& moments_m() const { return m_; }
    const std::vector<Tensor>& moments_v() const { return v_; }
    void restore(const std::string& json_text, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    double lr_, weight_decay_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// Validation-loss plateau scheduler: halves (by `factor`) after `patience`
/// epochs without a relative improvement of at least `rel_threshold`.
class PlateauScheduler {
public:
    PlateauScheduler(double factor, int patience, double rel_threshold);
    /// Returns the new learning rate given the current one.
    double observe(double val_loss, double current_lr);

    std::string state_json() const;
    void restore(const std::string& json_text);

private:
    double factor_, rel_threshold_;
    int patience_, bad_epochs_ = 0;
    double best_ = 0.0;
    bool has_best_ = false;
};

/// Closed-form cosine annealing over `horizon` epochs (no restarts):
/// lr(e) = min + 0.5 (base - min) (1 + cos(pi e / horizon)).
double cosine_lr(double base_lr, double min_lr, int epoch, int horizon);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::string best_checkpoint;
    int best_epoch = 0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
    int epochs_run = 0;
};

/// Mean per-sample composite loss in evaluation mode (dropout inert,
/// normalization statistics frozen); independent of batch size.
double validate(Model& model, const std::vector<Sample>& val, const LossConfig& loss_cfg,
                int batch_size = 32);

/// Trains in place. Writes per-epoch history to <out_dir>/history.csv, the
/// best-validation checkpoint to <out_dir>/best.ckpt and resumable state to
/// <out_dir>/last.ckpt + <out_dir>/train_state.bin. Accepts only the
/// train/validation split type, so held-out samples cannot reach it.
/// `resume` continues from a previous run's out_dir state.
TrainResult train(Model& model, const std::string& species, const TrainValSplit& splits,
                  const LossConfig& loss_cfg, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& stats_ref = "", bool resume = false,
                  double early_exit_train_loss = -1.0);

} // namespace pmnc
