#include "pmnc/training.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

namespace pmnc {

using namespace ad;
using nlohmann::json;
namespace fs = std::filesystem;

const char* recipe_name(Recipe r) { return r == Recipe::recurrent ? "recurrent" : "unet"; }

Recipe recipe_from_name(const std::string& name) {
    if (name == "recurrent") return Recipe::recurrent;
    if (name == "unet") return Recipe::unet;
    throw ConfigError("unknown training recipe '" + name + "'");
}

TrainConfig TrainConfig::recurrent_default() { return {}; }

TrainConfig TrainConfig::unet_default() {
    TrainConfig c;
    c.recipe = Recipe::unet;
    c.accumulation_steps = 2;
    c.grad_clip_norm = 0.0;
    return c;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (accumulation_steps < 1) throw ConfigError("accumulation steps must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
    if (early_stop_patience < 1) throw ConfigError("early-stop patience must be >= 1");
    if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
        throw ConfigError("plateau factor must lie in (0, 1)");
    if (plateau_patience < 0) throw ConfigError("plateau patience must be >= 0");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

// --------------------------------------------------------------------- Adam

Adam::Adam(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(std::vector<NamedParam>& params) {
    if (m_.empty()) {
        for (auto& p : params) {
            m_.push_back(Tensor::zeros(p.var.value().shape));
            v_.push_back(Tensor::zeros(p.var.value().shape));
        }
    }
    if (m_.size() != params.size())
        throw RuntimeFailure("optimizer state does not match the parameter list");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& w = params[i].var.value_mut();
        const Tensor& g = params[i].var.grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            double gk = g.data[k];
            m.data[k] = beta1_ * m.data[k] + (1.0 - beta1_) * gk;
            v.data[k] = beta2_ * v.data[k] + (1.0 - beta2_) * gk * gk;
            double update = (m.data[k] / bc1) / (std::sqrt(v.data[k] / bc2) + eps_);
            if (weight_decay_ > 0.0) update += weight_decay_ * w.data[k]; // decoupled decay
            w.data[k] -= lr_ * update;
        }
    }
}

std::string Adam::state_json() const {
    json j{{"lr", lr_},     {"weight_decay", weight_decay_}, {"beta1", beta1_},
           {"beta2", beta2_}, {"eps", eps_},                   {"t", t_}};
    return j.dump();
}

void Adam::restore(const std::string& text, std::vector<Tensor> m, std::vector<Tensor> v) {
    json j = json::parse(text);
    lr_ = j.at("lr");
    weight_decay_ = j.at("weight_decay");
    beta1_ = j.at("beta1");
    beta2_ = j.at("beta2");
    eps_ = j.at("eps");
    t_ = j.at("t");
    m_ = std::move(m);
    v_ = std::move(v);
}

// --------------------------------------------------------------- schedulers

PlateauScheduler::PlateauScheduler(double factor, int patience, double rel_threshold)
    : factor_(factor), rel_threshold_(rel_threshold), patience_(patience) {}

double PlateauScheduler::observe(double val_loss, double current_lr) {
    if (!has_best_ || val_loss < best_ * (1.0 - rel_threshold_)) {
        best_ = val_loss;
        has_best_ = true;
        bad_epochs_ = 0;
        return current_lr;
    }
    if (++bad_epochs_ > patience_) {
        bad_epochs_ = 0;
        return current_lr * factor_;
    }
    return current_lr;
}

std::string PlateauScheduler::state_json() const {
    json j{{"factor", factor_},       {"rel_threshold", rel_threshold_},
           {"patience", patience_},   {"bad_epochs", bad_epochs_},
           {"best", best_},           {"has_best", has_best_}};
    return j.dump();
}

void PlateauScheduler::restore(const std::string& text) {
    json j = json::parse(text);
    factor_ = j.at("factor");
    rel_threshold_ = j.at("rel_threshold");
    patience_ = j.at("patience");
    bad_epochs_ = j.at("bad_epochs");
    best_ = j.at("best");
    has_best_ = j.at("has_best");
}

double cosine_lr(double base_lr, double min_lr, int epoch, int horizon) {
    if (horizon < 1) throw ConfigError("cosine horizon must be >= 1");
    double phase = 3.14159265358979323846 * static_cast<double>(epoch) / horizon;
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(phase));
}

// ------------------------------------------------------------ batch helpers

namespace {

struct Batch {
    Tensor input;  // (B, C, H, W)
    Tensor target; // (B, 1, h, w)
    int n = 0;
};

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                 std::size_t first, std::size_t last) {
    const Sample& head = samples[order[first]];
    int c = head.input.shape[0], hi = head.input.shape[1], wi = head.input.shape[2];
    int ho = head.target.shape[1], wo = head.target.shape[2];
    Batch b;
    b.n = static_cast<int>(last - first);
    b.input = Tensor({b.n, c, hi, wi});
    b.target = Tensor({b.n, 1, ho, wo});
    std::size_t in_item = head.input.size(), out_item = head.target.size();
    for (std::size_t i = first; i < last; ++i) {
        const Sample& s = samples[order[i]];
        std::copy(s.input.data.begin(), s.input.data.end(),
                  b.input.data.begin() + static_cast<std::ptrdiff_t>((i - first) * in_item));
        std::copy(s.target.data.begin(), s.target.data.end(),
                  b.target.data.begin() + static_cast<std::ptrdiff_t>((i - first) * out_item));
    }
    return b;
}

/// Mean of per-sample composite losses over a batch output.
Var batch_loss(const Var& output, const Var& target, const LossConfig& loss_cfg) {
    int n = output.value().shape[0];
    std::vector<Var> per_sample;
    per_sample.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        per_sample.push_back(
            composite_loss(slice_batch(output, i), slice_batch(target, i), loss_cfg));
    return mul_const(vsum(per_sample), 1.0 / n);
}

double global_grad_norm(const std::vector<NamedParam>& params) {
    double sq = 0.0;
    for (const auto& p : params)
        if (!p.var.node()->grad.data.empty())
            for (double g : p.var.node()->grad.data) sq += g * g;
    return std::sqrt(sq);
}

void clip_gradients(std::vector<NamedParam>& params, double max_norm) {
    double norm = global_grad_norm(params);
    if (norm <= max_norm || norm == 0.0) return;
    double scale = max_norm / norm;
    for (auto& p : params)
        if (!p.var.node()->grad.data.empty())
            for (double& g : p.var.node()->grad.data) g *= scale;
}

// -------------------------------------------------------- train-state file

constexpr char kStateMagic[] = "PMNCSTATE1\n";

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

struct LoopState {
    int epoch = 0; // last completed epoch
    double lr = 0.0;
    double best_val = 0.0;
    int best_epoch = 0;
    bool has_best = false;
    int stall_epochs = 0;
    long long global_step = 0;
};

void save_train_state(const std::string& path, const LoopState& ls, const Adam& opt,
                      const PlateauScheduler& plateau, const Rng& order_rng,
                      const Rng& dropout_rng, const Model& model, int batch_size) {
    json arrays = json::array();
    for (const auto& p : model.parameters())
        arrays.push_back({{"name", p.name}, {"shape", p.var.value().shape}});
    json header{{"schema", 1},
                {"epoch", ls.epoch},
                {"lr", ls.lr},
                {"best_val", ls.best_val},
                {"best_epoch", ls.best_epoch},
                {"has_best", ls.has_best},
                {"stall_epochs", ls.stall_epochs},
                {"global_step", ls.global_step},
                {"batch_size", batch_size},
                {"optimizer", json::parse(opt.state_json())},
                {"plateau", json::parse(plateau.state_json())},
                {"order_rng", order_rng.state()},
                {"dropout_rng", dropout_rng.state()},
                {"arrays", arrays}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write train state: " + path);
    std::string h = header.dump();
    f.write(kStateMagic, sizeof(kStateMagic) - 1);
    write_u64(f, h.size());
    f.write(h.data(), static_cast<std::streamsize>(h.size()));
    auto dump = [&f](const std::vector<Tensor>& ts) {
        for (const auto& t : ts)
            f.write(reinterpret_cast<const char*>(t.data.data()),
                    static_cast<std::streamsize>(t.size() * sizeof(double)));
    };
    dump(opt.moments_m());
    dump(opt.moments_v());
    if (!f) throw DataError("short write on train state: " + path);
}

void load_train_state(const std::string& path, LoopState& ls, Adam& opt,
                      PlateauScheduler& plateau, Rng& order_rng, Rng& dropout_rng,
                      const Model& model, int batch_size) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read train state: " + path);
    char magic[sizeof(kStateMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kStateMagic, sizeof(magic)) != 0)
        throw DataError("not a train-state file: " + path);
    std::uint64_t hlen = read_u64(f);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw DataError("truncated train state: " + path);
    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw DataError("corrupt train-state header: " + std::string(e.what()));
    }
    if (header.at("schema").get<int>() != 1)
        throw DataError("unsupported train-state schema version");

    json arrays = json::array();
    for (const auto& p : model.parameters())
        arrays.push_back({{"name", p.name}, {"shape", p.var.value().shape}});
    if (header.at("arrays") != arrays)
        throw DataError("train state does not match the model layout");
    if (header.at("batch_size").get<int>() != batch_size)
        std::cerr << "warning: resuming with batch size " << batch_size
                  << " but the interrupted run used " << header.at("batch_size").get<int>()
                  << "; the trajectory will diverge from an uninterrupted run\n";

    ls.epoch = header.at("epoch");
    ls.lr = header.at("lr");
    ls.best_val = header.at("best_val");
    ls.best_epoch = header.at("best_epoch");
    ls.has_best = header.at("has_best");
    ls.stall_epochs = header.at("stall_epochs");
    ls.global_step = header.at("global_step");
    plateau.restore(header.at("plateau").dump());
    order_rng.restore(header.at("order_rng"));
    dropout_rng.restore(header.at("dropout_rng"));

    std::vector<Tensor> m, v;
    auto read_arrays = [&](std::vector<Tensor>& out) {
        for (const auto& p : model.parameters()) {
            Tensor t(p.var.value().shape);
            f.read(reinterpret_cast<char*>(t.data.data()),
                   static_cast<std::streamsize>(t.size() * sizeof(double)));
            out.push_back(std::move(t));
        }
    };
    read_arrays(m);
    read_arrays(v);
    if (!f) throw DataError("truncated train-state payload: " + path);
    opt.restore(header.at("optimizer").dump(), std::move(m), std::move(v));
}

} // namespace

// ----------------------------------------------------------------- validate

double validate(Model& model, const std::vector<Sample>& val, const LossConfig& loss_cfg,
                int batch_size) {
    if (val.empty()) throw ConfigError("validation split is empty");
    std::vector<std::size_t> order(val.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    double sum = 0.0;
    for (std::size_t first = 0; first < val.size();
         first += static_cast<std::size_t>(batch_size)) {
        std::size_t last = std::min(val.size(), first + static_cast<std::size_t>(batch_size));
        Batch b = make_batch(val, order, first, last);
        Var out = model.forward(Var::leaf(std::move(b.input)), false, nullptr);
        Var target = Var::leaf(std::move(b.target));
        for (int i = 0; i < b.n; ++i)
            sum += composite_loss(slice_batch(out, i), slice_batch(target, i), loss_cfg).scalar();
    }
    return sum / static_cast<double>(val.size());
}

// -------------------------------------------------------------------- train

TrainResult train(Model& model, const std::string& species, const TrainValSplit& splits,
                  const LossConfig& loss_cfg, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& stats_ref, bool resume, double early_exit_train_loss) {
    cfg.validate();
    loss_cfg.validate();
    if (splits.train.empty() || splits.val.empty())
        throw ConfigError("train and validation splits must be non-empty");
    fs::create_directories(out_dir);

    Rng seed_root(cfg.seed);
    Rng order_rng = seed_root.substream(1);
    Rng dropout_rng = seed_root.substream(2);
    Adam opt(cfg.learning_rate, cfg.recipe == Recipe::unet ? cfg.weight_decay : 0.0);
    PlateauScheduler plateau(cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_rel_threshold);

    LoopState ls;
    ls.lr = cfg.learning_rate;
    std::string state_path = (fs::path(out_dir) / "train_state.bin").string();
    std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
    std::string best_path = (fs::path(out_dir) / "best.ckpt").string();
    std::string history_path = (fs::path(out_dir) / "history.csv").string();

    if (resume) {
        CheckpointMeta meta;
        auto restored = load_weights(last_path, &meta, &model.config(), species);
        for (std::size_t i = 0; i < model.parameters().size(); ++i)
            model.parameters()[i].var.value_mut() = restored->parameters()[i].var.value();
        auto bufs = model.buffers();
        auto rbufs = restored->buffers();
        for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].second = *rbufs[i].second;
        load_train_state(state_path, ls, opt, plateau, order_rng, dropout_rng, model,
                         cfg.batch_size);
    } else {
        std::ofstream f(history_path);
        f << "epoch,train_loss,val_loss,lr\n";
    }

    TrainResult result;
    result.best_epoch = ls.best_epoch;
    result.best_val_loss = ls.best_val;
    result.best_checkpoint = best_path;

    std::vector<std::size_t> order(splits.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = ls.epoch + 1; epoch <= cfg.max_epochs; ++epoch) {
        if (cfg.recipe == Recipe::unet)
            ls.lr = cosine_lr(cfg.learning_rate, cfg.cosine_min_lr, epoch - 1, cfg.max_epochs);
        opt.set_lr(ls.lr);

        // identity before shuffling, so the epoch's order is a function of
        // the generator state alone (resume-safe)
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t micro = static_cast<std::size_t>(cfg.batch_size);
        std::size_t group = micro * static_cast<std::size_t>(cfg.accumulation_steps);
        int batch_id = 0;
        for (std::size_t g0 = 0; g0 < order.size(); g0 += group) {
            std::size_t g1 = std::min(order.size(), g0 + group);
            model.zero_grad();
            for (std::size_t m0 = g0; m0 < g1; m0 += micro, ++batch_id) {
                std::size_t m1 = std::min(g1, m0 + micro);
                Batch b = make_batch(splits.train, order, m0, m1);
                Var out = model.forward(Var::leaf(std::move(b.input)), true, &dropout_rng);
                Var loss = batch_loss(out, Var::leaf(std::move(b.target)), loss_cfg);
                double lv = loss.scalar();
                if (!std::isfinite(lv))
                    throw RuntimeFailure("non-finite training loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(batch_id) + ", lr " +
                                         std::to_string(ls.lr));
                loss_sum += lv * static_cast<double>(m1 - m0);
                // gradients averaged across the accumulation window
                mul_const(loss, static_cast<double>(m1 - m0) / static_cast<double>(g1 - g0))
                    .backward();
            }
            if (cfg.recipe == Recipe::recurrent && cfg.grad_clip_norm > 0.0)
                clip_gradients(model.parameters(), cfg.grad_clip_norm);
            opt.step(model.parameters());
            ++ls.global_step;
        }
        model.zero_grad();
        double train_loss = loss_sum / static_cast<double>(order.size());
        double val_loss = validate(model, splits.val, loss_cfg, cfg.batch_size);

        result.history.push_back({epoch, train_loss, val_loss, ls.lr});
        {
            std::ofstream f(history_path, std::ios::app);
            f << epoch << "," << train_loss << "," << val_loss << "," << ls.lr << "\n";
        }

        bool improved = !ls.has_best || val_loss < ls.best_val;
        if (improved) {
            ls.best_val = val_loss;
            ls.best_epoch = epoch;
            ls.has_best = true;
            json tj{{"epoch", epoch}, {"val_loss", val_loss}, {"global_step", ls.global_step}};
            save_weights(model, best_path, {species, stats_ref, tj.dump()});
        }
        ls.stall_epochs = improved ? 0 : ls.stall_epochs + 1;

        if (cfg.recipe == Recipe::recurrent) ls.lr = plateau.observe(val_loss, ls.lr);

        ls.epoch = epoch;
        {
            json tj{{"epoch", epoch}, {"val_loss", val_loss}, {"global_step", ls.global_step}};
            save_weights(model, last_path, {species, stats_ref, tj.dump()});
            save_train_state(state_path, ls, opt, plateau, order_rng, dropout_rng, model,
                             cfg.batch_size);
        }

        result.epochs_run = epoch;
        result.best_epoch = ls.best_epoch;
        result.best_val_loss = ls.best_val;
        if (early_exit_train_loss > 0.0 && train_loss < early_exit_train_loss) break;
        if (ls.stall_epochs >= cfg.early_stop_patience) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

} // namespace pmnc
