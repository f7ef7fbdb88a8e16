#include <doctest.h>

#include <cmath>
#include <vector>

#include "pmnc/losses.hpp"
#include "pmnc/rng.hpp"

using namespace pmnc;
using ad::Var;

namespace {

Tensor random_field(int h, int w, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t({1, 1, h, w});
    for (auto& v : t.data) v = lo + (hi - lo) * rng.uniform();
    return t;
}

/// Independent SSIM oracle: plain nested loops, reflect padding, separable
/// Gaussian moments — no shared code with the graph-based implementation.
double ssim_direct(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
    int h = a.shape[2], w = a.shape[3];
    auto kernel = gaussian_window(cfg.window_size, cfg.sigma);
    int p = cfg.window_size / 2;
    auto ref = [](int i, int n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return i;
    };
    auto local = [&](const Tensor& t, int cy, int cx) {
        double acc = 0.0;
        for (int dy = -p; dy <= p; ++dy)
            for (int dx = -p; dx <= p; ++dx)
                acc += kernel[static_cast<std::size_t>(dy + p)] *
                       kernel[static_cast<std::size_t>(dx + p)] *
                       t.at4(0, 0, ref(cy + dy, h), ref(cx + dx, w));
        return acc;
    };
    Tensor aa({1, 1, h, w}), bb({1, 1, h, w}), ab({1, 1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            aa.at4(0, 0, y, x) = a.at4(0, 0, y, x) * a.at4(0, 0, y, x);
            bb.at4(0, 0, y, x) = b.at4(0, 0, y, x) * b.at4(0, 0, y, x);
            ab.at4(0, 0, y, x) = a.at4(0, 0, y, x) * b.at4(0, 0, y, x);
        }
    double sum = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double ma = local(a, y, x), mb = local(b, y, x);
            double va = local(aa, y, x) - ma * ma;
            double vb = local(bb, y, x) - mb * mb;
            double cov = local(ab, y, x) - ma * mb;
            sum += (2.0 * ma * mb + cfg.c1()) * (2.0 * cov + cfg.c2()) /
                   ((ma * ma + mb * mb + cfg.c1()) * (va + vb + cfg.c2()));
        }
    return sum / (h * w);
}

} // namespace

TEST_CASE("gaussian window matches externally computed weights and sums to 1") {
    auto w = gaussian_window(11, 1.5);
    REQUIRE(w.size() == 11);
    // frozen reference values (exp(-0.5 (i-5)^2 / 1.5^2), normalized)
    const double expected[11] = {
        0.001028380084479, 0.007598758135239, 0.036000772128431, 0.109360689509700,
        0.213005537711254, 0.266011724861794, 0.213005537711254, 0.109360689509700,
        0.036000772128431, 0.007598758135239, 0.001028380084479};
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        CHECK(w[static_cast<std::size_t>(i)] == doctest::Approx(expected[i]).epsilon(1e-12));
        CHECK(w[static_cast<std::size_t>(i)] == w[static_cast<std::size_t>(10 - i)]);
        sum += w[static_cast<std::size_t>(i)];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ssim of a field with itself is 1 and the formula is symmetric") {
    Rng rng(301);
    Tensor a = random_field(32, 32, rng);
    Tensor b = random_field(32, 32, rng);
    SsimConfig cfg;
    CHECK(ssim_value(a, a, cfg) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ssim_value(a, b, cfg) == doctest::Approx(ssim_value(b, a, cfg)).epsilon(1e-12));
    CHECK(ssim_value(a, b, cfg) < 1.0);
    CHECK(ssim_value(a, b, cfg) >= -1.0);
}

TEST_CASE("ssim of a zero-mean field against its negation is negative") {
    // The sign follows the covariance term, which dominates only when local
    // window means vanish; a checkerboard-modulated random field has that
    // property (white noise does not: its local means leave both the
    // luminance and covariance factors negative, and their product positive).
    Rng rng(302);
    Tensor a({1, 1, 32, 32});
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            a.at4(0, 0, y, x) = ((y + x) % 2 ? 1.0 : -1.0) * (0.4 + 0.2 * rng.uniform());
    Tensor neg = a;
    for (auto& v : neg.data) v = -v;
    CHECK(ssim_value(a, neg, SsimConfig{}) < 0.0);
}

TEST_CASE("ssim matches an independent direct-loop implementation") {
    Rng rng(303);
    Tensor a = random_field(20, 24, rng);
    Tensor b = a;
    for (auto& v : b.data) v += 0.3 * (rng.uniform() - 0.5);
    SsimConfig cfg;
    CHECK(ssim_value(a, b, cfg) == doctest::Approx(ssim_direct(a, b, cfg)).epsilon(1e-12));

    cfg.dynamic_range = 150.0; // physical-units configuration
    for (auto& v : a.data) v = 40.0 + 60.0 * rng.uniform();
    b = a;
    for (auto& v : b.data) v += 5.0 * (rng.uniform() - 0.5);
    CHECK(ssim_value(a, b, cfg) == doctest::Approx(ssim_direct(a, b, cfg)).epsilon(1e-12));
}

TEST_CASE("constant fields follow the closed-form luminance term") {
    Tensor a = Tensor::full({1, 1, 16, 16}, 0.5);
    Tensor b = Tensor::full({1, 1, 16, 16}, 1.0);
    SsimConfig cfg; // L = 2 -> c1 = 4e-4
    double expected = (2.0 * 0.5 * 1.0 + cfg.c1()) / (0.25 + 1.0 + cfg.c1());
    CHECK(ssim_value(a, b, cfg) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(ssim_value(a, b, cfg) == doctest::Approx(0.8000639795265515).epsilon(1e-12));
}

TEST_CASE("rmse+ssim loss is zero at pred = target and positive elsewhere") {
    Rng rng(304);
    Tensor t = random_field(32, 32, rng);
    LossConfig cfg = LossConfig::rmse_default();
    Var target = Var::leaf(t);
    CHECK(rmse_ssim_loss(Var::leaf(t), target, cfg).scalar() ==
          doctest::Approx(0.0).epsilon(1e-12));

    Tensor p = t;
    for (auto& v : p.data) v += 0.2 * (rng.uniform() - 0.5);
    CHECK(rmse_ssim_loss(Var::leaf(p), target, cfg).scalar() > 0.0);
}

TEST_CASE("constant-field composite loss has a hand-computable value") {
    // pred = 0.5, target = 1.0: RMSE term = 0.75 * 0.5 / (1 + eps); the SSIM
    // of two unequal constants is the luminance term, not 1, so the total
    // carries a small structural contribution as well.
    Tensor p = Tensor::full({1, 1, 16, 16}, 0.5);
    Tensor t = Tensor::full({1, 1, 16, 16}, 1.0);
    LossConfig cfg = LossConfig::rmse_default();
    double s = (2.0 * 0.5 * 1.0 + cfg.ssim.c1()) / (0.25 + 1.0 + cfg.ssim.c1());
    double expected = 0.75 * 0.5 / (1.0 + cfg.epsilon) + 0.25 * (1.0 - s);
    double got = rmse_ssim_loss(Var::leaf(p), Var::leaf(t), cfg).scalar();
    CHECK(got == doctest::Approx(expected).epsilon(1e-12));
    CHECK(got == doctest::Approx(0.4249836301187372).epsilon(1e-12));
}

TEST_CASE("the rmse term is invariant to an identical spatial permutation") {
    Rng rng(305);
    Tensor p = random_field(16, 16, rng);
    Tensor t = random_field(16, 16, rng);
    std::vector<std::size_t> perm(p.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    Tensor ps = p, ts = t;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        ps.data[i] = p.data[perm[i]];
        ts.data[i] = t.data[perm[i]];
    }
    LossConfig cfg = LossConfig::rmse_default();
    auto rmse_term = [&](const Tensor& pred, const Tensor& target) {
        double loss = rmse_ssim_loss(Var::leaf(pred), Var::leaf(target), cfg).scalar();
        double s = ssim_value(pred, target, cfg.ssim);
        return loss - cfg.ssim_weight * (1.0 - s);
    };
    CHECK(rmse_term(ps, ts) == doctest::Approx(rmse_term(p, t)).epsilon(1e-12));
}

TEST_CASE("huber term: quadratic branch equals half the scaled MSE") {
    Rng rng(306);
    Tensor t = random_field(16, 16, rng);
    Tensor p = t;
    double mse = 0.0, mabs = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double e = 0.4 * (rng.uniform() - 0.5); // |e| <= 0.2 < delta = 1
        p.data[i] += e;
        mse += e * e;
        mabs += std::fabs(t.data[i]);
    }
    mse /= static_cast<double>(p.size());
    mabs /= static_cast<double>(p.size());
    LossConfig cfg = LossConfig::huber_default();
    double s = ssim_value(p, t, cfg.ssim);
    double expected = 0.7 * 0.5 * mse / (mabs + cfg.epsilon) + 0.3 * (1.0 - s);
    CHECK(huber_ssim_loss(Var::leaf(p), Var::leaf(t), cfg).scalar() ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("huber term: a single 10-delta error contributes on the linear branch") {
    const double delta = 1.0;
    Tensor t = Tensor::full({1, 1, 16, 16}, 1.0);
    Tensor p = t;
    p.at4(0, 0, 8, 8) += 10.0 * delta;
    LossConfig cfg = LossConfig::huber_default();
    double per_pixel = delta * (10.0 * delta - 0.5 * delta); // 9.5
    double mean_huber = per_pixel / 256.0;
    double s = ssim_value(p, t, cfg.ssim);
    double expected = 0.7 * mean_huber / (1.0 + cfg.epsilon) + 0.3 * (1.0 - s);
    CHECK(huber_ssim_loss(Var::leaf(p), Var::leaf(t), cfg).scalar() ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("both loss gradients agree with central finite differences on 32x32") {
    Rng rng(307);
    Tensor t = random_field(32, 32, rng);
    Tensor p0 = t;
    for (auto& v : p0.data) v += 0.3 * (rng.uniform() - 0.5);

    for (LossConfig cfg : {LossConfig::rmse_default(), LossConfig::huber_default()}) {
        Var pred = Var::leaf(p0, true);
        Var target = Var::leaf(t);
        Var loss = composite_loss(pred, target, cfg);
        loss.backward();
        const Tensor& g = pred.grad();
        double scale = std::max(g.abs_max(), 1e-3);

        Rng pick(308);
        double max_rel = 0.0;
        const double step = 1e-3;
        for (int probe = 0; probe < 24; ++probe) {
            auto i = static_cast<std::size_t>(pick.below(32 * 32));
            Tensor plus = p0, minus = p0;
            plus.data[i] += step;
            minus.data[i] -= step;
            double fp = composite_loss(Var::leaf(plus), target, cfg).scalar();
            double fm = composite_loss(Var::leaf(minus), target, cfg).scalar();
            double fd = (fp - fm) / (2.0 * step);
            max_rel = std::max(max_rel, std::fabs(fd - g.data[i]) / scale);
        }
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("gradient at pred = target is finite") {
    Rng rng(309);
    Tensor t = random_field(16, 16, rng);
    for (LossConfig cfg : {LossConfig::rmse_default(), LossConfig::huber_default()}) {
        Var pred = Var::leaf(t, true);
        Var loss = composite_loss(pred, Var::leaf(t), cfg);
        loss.backward();
        CHECK(pred.grad().all_finite());
    }
}

TEST_CASE("configuration validation rejects bad settings") {
    LossConfig cfg;
    cfg.accuracy_weight = 0.8; // weights no longer sum to 1
    Tensor t = Tensor::full({1, 1, 12, 12}, 1.0);
    CHECK_THROWS_AS(rmse_ssim_loss(Var::leaf(t), Var::leaf(t), cfg), ConfigError);

    LossConfig bad_delta = LossConfig::huber_default();
    bad_delta.huber_delta = 0.0;
    CHECK_THROWS_AS(huber_ssim_loss(Var::leaf(t), Var::leaf(t), bad_delta), ConfigError);

    SsimConfig even_window;
    even_window.window_size = 10;
    CHECK_THROWS_AS(ssim_value(t, t, even_window), ConfigError);

    Tensor other = Tensor::full({1, 1, 12, 13}, 1.0);
    CHECK_THROWS_AS(ssim_value(t, other, SsimConfig{}), ConfigError);
    CHECK_THROWS_AS(loss_variant_from_name("mse"), ConfigError);
    CHECK(loss_variant_from_name("huber_ssim") == LossVariant::huber_ssim);
}
