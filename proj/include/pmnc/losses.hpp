#pragma once

#include <string>
#include <vector>

#include "pmnc/autodiff.hpp"
#include "pmnc/errors.hpp"
#include "pmnc/tensor.hpp"

namespace pmnc {

/// Normalized 1-D Gaussian window (weights sum to 1).
std::vector<double> gaussian_window(int size, double sigma);

/// Structural-similarity settings. Training uses the default dynamic range
/// of 2 (Tanh outputs span (-1, 1)); evaluation passes the physical range.
struct SsimConfig {
    int window_size = 11;
    double sigma = 1.5;
    double dynamic_range = 2.0;

    double c1() const { return 0.0001 * dynamic_range * dynamic_range; } // (0.01 L)^2
    double c2() const { return 0.0009 * dynamic_range * dynamic_range; } // (0.03 L)^2
    void validate() const;
};

enum class LossVariant { rmse_ssim, huber_ssim };

struct LossConfig {
    LossVariant variant = LossVariant::rmse_ssim;
    double accuracy_weight = 0.75;
    double ssim_weight = 0.25;
    double huber_delta = 1.0;
    double epsilon = 1e-6; // mean-denominator guard
    SsimConfig ssim;

    static LossConfig rmse_default();  // 0.75 / 0.25
    static LossConfig huber_default(); // 0.7 / 0.3
    void validate() const;
};

const char* loss_variant_name(LossVariant v);
LossVariant loss_variant_from_name(const std::string& name);

/// Mean local SSIM with Gaussian-weighted moments; borders handled by
/// reflective padding so every pixel contributes. Differentiable in both
/// arguments. Inputs must share one NCHW shape.
ad::Var ssim(const ad::Var& a, const ad::Var& b, const SsimConfig& cfg);

/// Value-only SSIM for 2-D (H,W), 3-D (C,H,W) or 4-D fields.
double ssim_value(const Tensor& a, const Tensor& b, const SsimConfig& cfg);

/// accuracy_weight * RMSE(pred,target)/(mean|target|+eps)
///   + ssim_weight * (1 - ssim(pred, target))
ad::Var rmse_ssim_loss(const ad::Var& pred, const ad::Var& target, const LossConfig& cfg);

/// accuracy_weight * meanHuber(pred-target; delta)/(mean|target|+eps)
///   + ssim_weight * (1 - ssim(pred, target))
ad::Var huber_ssim_loss(const ad::Var& pred, const ad::Var& target, const LossConfig& cfg);

/// Dispatches on cfg.variant.
ad::Var composite_loss(const ad::Var& pred, const ad::Var& target, const LossConfig& cfg);

} // namespace pmnc
