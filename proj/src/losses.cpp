#include "pmnc/losses.hpp"

#include <cmath>

namespace pmnc {

using namespace ad;

std::vector<double> gaussian_window(int size, double sigma) {
    if (size < 1 || sigma <= 0.0) throw ConfigError("gaussian_window: bad size or sigma");
    std::vector<double> w(static_cast<std::size_t>(size));
    double mid = 0.5 * (size - 1);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        double d = (i - mid) / sigma;
        w[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d);
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

void SsimConfig::validate() const {
    if (window_size < 1 || window_size % 2 == 0)
        throw ConfigError("ssim window size must be a positive odd number");
    if (sigma <= 0.0) throw ConfigError("ssim sigma must be positive");
    if (dynamic_range <= 0.0) throw ConfigError("ssim dynamic range must be positive");
}

LossConfig LossConfig::rmse_default() { return {}; }

LossConfig LossConfig::huber_default() {
    LossConfig c;
    c.variant = LossVariant::huber_ssim;
    c.accuracy_weight = 0.7;
    c.ssim_weight = 0.3;
    return c;
}

void LossConfig::validate() const {
    ssim.validate();
    if (std::fabs(accuracy_weight + ssim_weight - 1.0) > 1e-12)
        throw ConfigError("loss weights must sum to 1");
    if (accuracy_weight < 0.0 || ssim_weight < 0.0) throw ConfigError("loss weights must be >= 0");
    if (huber_delta <= 0.0) throw ConfigError("huber delta must be positive");
    if (epsilon <= 0.0) throw ConfigError("loss epsilon must be positive");
}

const char* loss_variant_name(LossVariant v) {
    return v == LossVariant::rmse_ssim ? "rmse_ssim" : "huber_ssim";
}

LossVariant loss_variant_from_name(const std::string& name) {
    if (name == "rmse_ssim") return LossVariant::rmse_ssim;
    if (name == "huber_ssim") return LossVariant::huber_ssim;
    throw ConfigError("unknown loss variant '" + name + "'");
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* what) {
    if (a.value().shape != b.value().shape)
        throw ConfigError(std::string(what) + ": shape mismatch " + a.value().shape_str() +
                          " vs " + b.value().shape_str());
}

double mean_abs(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += std::fabs(v);
    return s / static_cast<double>(t.size());
}

Var one_minus(const Var& v) { return add_const(mul_const(v, -1.0), 1.0); }

Tensor as_nchw(const Tensor& t) {
    Tensor out = t;
    if (t.shape.size() == 2)
        out.shape = {1, 1, t.shape[0], t.shape[1]};
    else if (t.shape.size() == 3)
        out.shape = {1, t.shape[0], t.shape[1], t.shape[2]};
    else if (t.shape.size() != 4)
        throw ConfigError("ssim_value: expected a 2-D, 3-D or 4-D field");
    return out;
}

} // namespace

Var ssim(const Var& a, const Var& b, const SsimConfig& cfg) {
    cfg.validate();
    require_same_shape(a, b, "ssim");
    if (a.value().shape.size() != 4) throw ConfigError("ssim: expected NCHW input");
    auto kernel = gaussian_window(cfg.window_size, cfg.sigma);
    int p = cfg.window_size / 2;
    auto blur = [&](const Var& v) { return gauss_blur_valid(pad_reflect(v, p), kernel); };

    Var mu_a = blur(a);
    Var mu_b = blur(b);
    Var mu_aa = mul(mu_a, mu_a);
    Var mu_bb = mul(mu_b, mu_b);
    Var mu_ab = mul(mu_a, mu_b);
    Var var_a = sub(blur(mul(a, a)), mu_aa);
    Var var_b = sub(blur(mul(b, b)), mu_bb);
    Var cov = sub(blur(mul(a, b)), mu_ab);

    Var num = mul(add_const(mul_const(mu_ab, 2.0), cfg.c1()),
                  add_const(mul_const(cov, 2.0), cfg.c2()));
    Var den = mul(add_const(add(mu_aa, mu_bb), cfg.c1()),
                  add_const(add(var_a, var_b), cfg.c2()));
    return mean_all(div(num, den));
}

double ssim_value(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
    return ssim(Var::leaf(as_nchw(a)), Var::leaf(as_nchw(b)), cfg).scalar();
}

Var rmse_ssim_loss(const Var& pred, const Var& target, const LossConfig& cfg) {
    cfg.validate();
    require_same_shape(pred, target, "rmse_ssim_loss");
    double denom = mean_abs(target.value()) + cfg.epsilon;
    Var rmse = sqrt_(mean_all(square(sub(pred, target))));
    Var structure = one_minus(ssim(pred, target, cfg.ssim));
    return add(mul_const(rmse, cfg.accuracy_weight / denom),
               mul_const(structure, cfg.ssim_weight));
}

Var huber_ssim_loss(const Var& pred, const Var& target, const LossConfig& cfg) {
    cfg.validate();
    require_same_shape(pred, target, "huber_ssim_loss");
    double denom = mean_abs(target.value()) + cfg.epsilon;
    Var huber = mean_all(huber_elem(sub(pred, target), cfg.huber_delta));
    Var structure = one_minus(ssim(pred, target, cfg.ssim));
    return add(mul_const(huber, cfg.accuracy_weight / denom),
               mul_const(structure, cfg.ssim_weight));
}

Var composite_loss(const Var& pred, const Var& target, const LossConfig& cfg) {
    return cfg.variant == LossVariant::rmse_ssim ? rmse_ssim_loss(pred, target, cfg)
                                                 : huber_ssim_loss(pred, target, cfg);
}

} // namespace pmnc
