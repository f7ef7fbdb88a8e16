#include <doctest.h>

#include <cmath>
#include <fstream>
#include <type_traits>

#include "helpers.hpp"
#include "pmnc/training.hpp"

using namespace pmnc;
using ad::Var;
using pmnc_test::fresh_dir;

namespace {

ModelConfig tiny_gru(int input_channels = 2, int output_size = 8) {
    ModelConfig cfg = ModelConfig::preset("convgru1");
    cfg.hidden_widths = {3, 4, 3};
    cfg.dropout_rates = {0.0, 0.0, 0.0};
    cfg.input_channels = input_channels;
    cfg.output_size = output_size;
    return cfg;
}

std::vector<Sample> smooth_samples(int n, int c, int hw_in, int hw_out, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Sample s;
        s.species = "pm2p5";
        s.init_time = UtcTime::from({2023, 1, 1 + i / 4}, 6 * (i % 4));
        s.input = Tensor({c, hw_in, hw_in});
        double fy = rng.uniform(0.2, 0.9), fx = rng.uniform(0.2, 0.9);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < hw_in; ++y)
                for (int x = 0; x < hw_in; ++x)
                    s.input.at3(ch, y, x) =
                        0.6 * std::sin(fy * y + ch) * std::cos(fx * x) + 0.1 * rng.uniform();
        s.target = Tensor({1, hw_out, hw_out});
        int off = (hw_in - hw_out) / 2;
        for (int y = 0; y < hw_out; ++y)
            for (int x = 0; x < hw_out; ++x)
                s.target.at3(0, y, x) = 0.5 * s.input.at3(0, y + off, x + off);
        out.push_back(std::move(s));
    }
    return out;
}

TrainValSplit split_of(std::vector<Sample> samples, std::size_t n_val) {
    TrainValSplit tv;
    for (std::size_t i = 0; i < samples.size(); ++i)
        (i + n_val < samples.size() ? tv.train : tv.val).push_back(std::move(samples[i]));
    return tv;
}

} // namespace

// the training entry point is typed to reject held-out test samples
static_assert(!std::is_invocable_v<decltype(&train), Model&, const std::string&,
                                   const TestSplit&, const LossConfig&, const TrainConfig&,
                                   const std::string&>);

TEST_CASE("plateau scheduler halves the rate exactly once after four stalls") {
    PlateauScheduler sched(0.5, 3, 1e-4);
    double lr = 1e-3;
    lr = sched.observe(1.0, lr); // becomes the best
    CHECK(lr == 1e-3);
    for (int i = 0; i < 3; ++i) {
        lr = sched.observe(1.0, lr); // within threshold: stalls 1..3
        CHECK(lr == 1e-3);
    }
    lr = sched.observe(1.0, lr); // 4th stall exceeds patience 3
    CHECK(lr == 0.5e-3);
    lr = sched.observe(1.0, lr); // counter was reset: no immediate second cut
    CHECK(lr == 0.5e-3);
    lr = sched.observe(0.5, lr); // real improvement: rate untouched
    CHECK(lr == 0.5e-3);
}

TEST_CASE("plateau threshold is relative") {
    PlateauScheduler sched(0.5, 0, 1e-4);
    double lr = 1.0;
    lr = sched.observe(100.0, lr);
    lr = sched.observe(99.999, lr); // 1e-5 relative: not an improvement
    CHECK(lr == 0.5);
    lr = sched.observe(99.0, lr); // 1% relative improvement
    CHECK(lr == 0.5);
}

TEST_CASE("cosine schedule endpoints and closed form") {
    CHECK(cosine_lr(1e-3, 0.0, 0, 100) == doctest::Approx(1e-3).epsilon(1e-12));
    CHECK(cosine_lr(1e-3, 0.0, 100, 100) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(1e-3, 1e-5, 50, 100) == doctest::Approx(0.5 * (1e-3 + 1e-5)).epsilon(1e-12));
}

TEST_CASE("unet-recipe LR trace follows the cosine closed form") {
    auto model = build_model(tiny_gru());
    auto tv = split_of(smooth_samples(10, 2, 16, 8, 50), 2);
    TrainConfig cfg = TrainConfig::unet_default();
    cfg.batch_size = 4;
    cfg.max_epochs = 5;
    cfg.seed = 7;
    auto dir = fresh_dir("train_cosine");
    auto res = train(*model, "pm2p5", tv, LossConfig::rmse_default(), cfg, dir.string());
    REQUIRE(res.history.size() == 5);
    for (const auto& rec : res.history) {
        double want = cosine_lr(cfg.learning_rate, cfg.cosine_min_lr, rec.epoch - 1, 5);
        CHECK(std::fabs(rec.lr - want) < 1e-9);
    }
}

TEST_CASE("validate is deterministic, batch-size independent and zero for a perfect model") {
    auto model = build_model(tiny_gru());
    auto samples = smooth_samples(6, 2, 16, 8, 51);
    // make each target the model's own prediction -> loss exactly 0
    for (auto& s : samples) {
        Tensor in({1, 2, 16, 16});
        in.data = s.input.data;
        Var out = model->forward(Var::leaf(in));
        s.target.data = out.value().data;
    }
    LossConfig lcfg = LossConfig::rmse_default();
    double v1 = validate(*model, samples, lcfg, 4);
    double v2 = validate(*model, samples, lcfg, 4);
    double v3 = validate(*model, samples, lcfg, 1);
    CHECK(v1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v1 == v2);
    CHECK(v1 == doctest::Approx(v3).epsilon(1e-12));

    // and against a manual per-sample average on imperfect predictions
    for (auto& s : samples)
        for (auto& t : s.target.data) t += 0.05;
    double v4 = validate(*model, samples, lcfg, 4);
    double manual = 0.0;
    for (const auto& s : samples) {
        Tensor in({1, 2, 16, 16});
        in.data = s.input.data;
        Tensor tg({1, 1, 8, 8});
        tg.data = s.target.data;
        manual += composite_loss(model->forward(Var::leaf(in)), Var::leaf(tg), lcfg).scalar();
    }
    CHECK(v4 == doctest::Approx(manual / 6.0).epsilon(1e-12));
}

TEST_CASE("gradient accumulation matches the equivalent large batch") {
    auto tv = split_of(smooth_samples(10, 2, 16, 8, 52), 2); // 8 train, 2 val
    LossConfig lcfg = LossConfig::rmse_default();

    auto run = [&](int batch, int accum, const char* dir_name) {
        auto model = build_model(tiny_gru());
        TrainConfig cfg = TrainConfig::recurrent_default();
        cfg.batch_size = batch;
        cfg.accumulation_steps = accum;
        cfg.max_epochs = 1;
        cfg.seed = 9;
        train(*model, "pm2p5", tv, lcfg, cfg, fresh_dir(dir_name).string());
        return model;
    };
    auto a = run(4, 2, "train_acc_a");
    auto b = run(8, 1, "train_acc_b");
    for (std::size_t i = 0; i < a->parameters().size(); ++i) {
        const auto& wa = a->parameters()[i].var.value().data;
        const auto& wb = b->parameters()[i].var.value().data;
        for (std::size_t k = 0; k < wa.size(); ++k) CHECK(std::fabs(wa[k] - wb[k]) < 1e-6);
    }
}

TEST_CASE("fixed seed gives a bit-stable loss history") {
    auto tv = split_of(smooth_samples(8, 2, 16, 8, 53), 2);
    auto run = [&](const char* dir_name) {
        ModelConfig mc = tiny_gru();
        mc.dropout_rates = {0.2, 0.3, 0.2}; // exercise the dropout stream too
        auto model = build_model(mc);
        TrainConfig cfg = TrainConfig::recurrent_default();
        cfg.batch_size = 3;
        cfg.max_epochs = 2;
        cfg.seed = 11;
        return train(*model, "pm2p5", tv, LossConfig::rmse_default(), cfg,
                     fresh_dir(dir_name).string());
    };
    auto r1 = run("train_det_a");
    auto r2 = run("train_det_b");
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t i = 0; i < r1.history.size(); ++i) {
        CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
        CHECK(r1.history[i].val_loss == r2.history[i].val_loss);
        CHECK(r1.history[i].lr == r2.history[i].lr);
    }
}

TEST_CASE("interrupt and resume reproduces the uninterrupted trajectory") {
    auto tv = split_of(smooth_samples(9, 2, 16, 8, 54), 2);
    LossConfig lcfg = LossConfig::rmse_default();
    TrainConfig cfg = TrainConfig::recurrent_default();
    cfg.batch_size = 4;
    cfg.seed = 13;

    cfg.max_epochs = 5;
    auto full_model = build_model(tiny_gru());
    auto full = train(*full_model, "pm2p5", tv, lcfg, cfg, fresh_dir("train_full").string());

    auto dir = fresh_dir("train_resume");
    auto part_model = build_model(tiny_gru());
    cfg.max_epochs = 3;
    auto part = train(*part_model, "pm2p5", tv, lcfg, cfg, dir.string());
    REQUIRE(part.history.size() == 3);
    cfg.max_epochs = 5;
    auto rest_model = build_model(tiny_gru()); // weights come from last.ckpt
    auto rest = train(*rest_model, "pm2p5", tv, lcfg, cfg, dir.string(), "", true);
    REQUIRE(rest.history.size() == 2);

    for (int e = 0; e < 3; ++e)
        CHECK(std::fabs(full.history[static_cast<std::size_t>(e)].train_loss -
                        part.history[static_cast<std::size_t>(e)].train_loss) < 1e-6);
    for (int e = 0; e < 2; ++e) {
        const auto& want = full.history[static_cast<std::size_t>(3 + e)];
        const auto& got = rest.history[static_cast<std::size_t>(e)];
        CHECK(got.epoch == want.epoch);
        CHECK(std::fabs(got.train_loss - want.train_loss) < 1e-6);
        CHECK(std::fabs(got.val_loss - want.val_loss) < 1e-6);
    }
    for (std::size_t i = 0; i < full_model->parameters().size(); ++i) {
        const auto& wa = full_model->parameters()[i].var.value().data;
        const auto& wb = rest_model->parameters()[i].var.value().data;
        for (std::size_t k = 0; k < wa.size(); ++k) CHECK(std::fabs(wa[k] - wb[k]) < 1e-9);
    }
}

TEST_CASE("resume without state files is an error") {
    auto tv = split_of(smooth_samples(6, 2, 16, 8, 55), 2);
    auto model = build_model(tiny_gru());
    TrainConfig cfg = TrainConfig::recurrent_default();
    cfg.max_epochs = 1;
    CHECK_THROWS_AS(train(*model, "pm2p5", tv, LossConfig::rmse_default(), cfg,
                          fresh_dir("train_no_state").string(), "", true),
                    DataError);
}

TEST_CASE("a small model overfits a handful of samples") {
    auto tv = split_of(smooth_samples(5, 2, 16, 8, 56), 1);
    ModelConfig mc = tiny_gru();
    mc.hidden_widths = {8, 12, 8};
    auto model = build_model(mc);
    TrainConfig cfg = TrainConfig::recurrent_default();
    cfg.batch_size = 4;
    cfg.max_epochs = 300;
    cfg.early_stop_patience = 300; // let it run until the loss target
    cfg.plateau_patience = 30;     // keep the rate up while overfitting
    cfg.seed = 17;
    auto res = train(*model, "pm2p5", tv, LossConfig::rmse_default(), cfg,
                     fresh_dir("train_overfit").string(), "", false, 0.1);
    REQUIRE(!res.history.empty());
    CHECK(res.history.back().train_loss < 0.1);
    CHECK(res.epochs_run < 300); // early exit fired, not the epoch cap
}

TEST_CASE("non-finite losses abort with a diagnostic") {
    auto samples = smooth_samples(6, 2, 16, 8, 57);
    samples[2].input.at3(0, 5, 5) = std::nan("");
    auto tv = split_of(std::move(samples), 2);
    auto model = build_model(tiny_gru());
    TrainConfig cfg = TrainConfig::recurrent_default();
    cfg.batch_size = 4;
    cfg.max_epochs = 1;
    CHECK_THROWS_WITH_AS(train(*model, "pm2p5", tv, LossConfig::rmse_default(), cfg,
                               fresh_dir("train_nan").string()),
                         doctest::Contains("non-finite"), RuntimeFailure);
}

TEST_CASE("history CSV and best checkpoint are written") {
    auto tv = split_of(smooth_samples(7, 2, 16, 8, 58), 2);
    auto model = build_model(tiny_gru());
    TrainConfig cfg = TrainConfig::recurrent_default();
    cfg.batch_size = 4;
    cfg.max_epochs = 2;
    auto dir = fresh_dir("train_artifacts");
    auto res = train(*model, "pm2p5", tv, LossConfig::rmse_default(), cfg, dir.string(),
                     "stats.json");

    std::ifstream f(dir / "history.csv");
    std::string line;
    REQUIRE(std::getline(f, line));
    CHECK(line == "epoch,train_loss,val_loss,lr");
    int rows = 0;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 2);

    CheckpointMeta meta;
    auto best = load_weights(res.best_checkpoint, &meta);
    CHECK(meta.species == "pm2p5");
    CHECK(meta.stats_ref == "stats.json");
    CHECK(meta.training_json.find("val_loss") != std::string::npos);
    CHECK(res.best_val_loss <= res.history.front().val_loss);
}

TEST_CASE("empty splits are rejected") {
    auto model = build_model(tiny_gru());
    TrainValSplit empty;
    CHECK_THROWS_AS(train(*model, "pm2p5", empty, LossConfig::rmse_default(),
                          TrainConfig::recurrent_default(), fresh_dir("train_empty").string()),
                    ConfigError);
}
