#include "pmnc/models.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <json.hpp>

namespace pmnc {

using namespace ad;
using nlohmann::json;
namespace fs = std::filesystem;

const char* family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::convgru: return "convgru";
        case ModelFamily::convlstm: return "convlstm";
        default: return "unet";
    }
}

ModelFamily family_from_name(const std::string& name) {
    if (name == "convgru") return ModelFamily::convgru;
    if (name == "convlstm") return ModelFamily::convlstm;
    if (name == "unet") return ModelFamily::unet;
    throw ConfigError("unknown model family '" + name + "'");
}

void ModelConfig::validate() const {
    bool recurrent = family != ModelFamily::unet;
    std::size_t want = recurrent ? 3 : 5;
    if (hidden_widths.size() != want)
        throw ConfigError(std::string(family_name(family)) + " needs " + std::to_string(want) +
                          " hidden widths, got " + std::to_string(hidden_widths.size()));
    for (int w : hidden_widths)
        if (w <= 0) throw ConfigError("hidden widths must be positive");
    if (recurrent) {
        if (dropout_rates.size() != hidden_widths.size())
            throw ConfigError("dropout rates must match hidden widths");
        for (double r : dropout_rates)
            if (r < 0.0 || r >= 1.0) throw ConfigError("dropout rates must lie in [0, 1)");
    }
    if (kernel_size < 1 || kernel_size % 2 == 0)
        throw ConfigError("kernel size must be a positive odd number");
    if (input_channels <= 0) throw ConfigError("input channels must be positive");
    if (time_depth < 1) throw ConfigError("time depth must be >= 1");
    if (output_size < 1) throw ConfigError("output size must be positive");
}

std::string ModelConfig::to_json() const {
    json j{{"family", family_name(family)},
           {"hidden_widths", hidden_widths},
           {"kernel_size", kernel_size},
           {"dropout_rates", dropout_rates},
           {"input_channels", input_channels},
           {"time_depth", time_depth},
           {"output_size", output_size},
           {"init_seed", init_seed},
           {"lstm_forget_bias_one", lstm_forget_bias_one}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.family = family_from_name(j.at("family"));
    c.hidden_widths = j.at("hidden_widths").get<std::vector<int>>();
    c.kernel_size = j.at("kernel_size");
    c.dropout_rates = j.at("dropout_rates").get<std::vector<double>>();
    c.input_channels = j.at("input_channels");
    c.time_depth = j.at("time_depth");
    c.output_size = j.at("output_size");
    c.init_seed = j.at("init_seed");
    c.lstm_forget_bias_one = j.at("lstm_forget_bias_one");
    c.validate();
    return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
    ModelConfig c;
    if (name == "convgru1" || name == "convlstm1") {
        c.hidden_widths = {64, 128, 64};
        c.dropout_rates = {0.2, 0.3, 0.2};
    } else if (name == "convgru2" || name == "convlstm2") {
        c.hidden_widths = {128, 64, 128};
        c.dropout_rates = {0.3, 0.2, 0.3};
    } else if (name == "unet") {
        c.family = ModelFamily::unet;
        c.hidden_widths = {16, 32, 64, 128, 256};
        c.dropout_rates.clear();
    } else {
        throw ConfigError("unknown model preset '" + name + "'");
    }
    if (name.rfind("convlstm", 0) == 0) c.family = ModelFamily::convlstm;
    c.validate();
    return c;
}

// --------------------------------------------------------------- Model base

Var Model::add_param(const std::string& name, Tensor init) {
    Var v = Var::leaf(std::move(init), true);
    params_.push_back({name, v});
    return v;
}

ParameterCount Model::count_parameters() const {
    ParameterCount pc;
    std::vector<std::string> order;
    std::map<std::string, long long> by_layer;
    for (const auto& p : params_) {
        std::string layer = p.name.substr(0, p.name.find('.'));
        if (!by_layer.count(layer)) order.push_back(layer);
        long long n = static_cast<long long>(p.var.value().size());
        by_layer[layer] += n;
        pc.total += n;
    }
    for (const auto& layer : order) pc.per_layer.emplace_back(layer, by_layer[layer]);
    return pc;
}

void Model::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

namespace {

/// Variance-scaling fan-in initialization; `gain2` is the squared gain
/// (2 for rectified-linear paths, 1 for saturating gates).
Tensor conv_init(int cout, int cin, int k, double gain2, Rng rng) {
    Tensor w({cout, cin, k, k});
    double std = std::sqrt(gain2 / (static_cast<double>(cin) * k * k));
    for (auto& v : w.data) v = rng.normal(0.0, std);
    return w;
}

void check_input(const Tensor& x, const ModelConfig& cfg) {
    if (x.shape.size() != 4)
        throw ConfigError("model input must be NCHW, got " + x.shape_str());
    int want_c = cfg.time_depth * cfg.input_channels;
    if (x.shape[1] != want_c)
        throw ConfigError("model input needs " + std::to_string(want_c) + " channels, got " +
                          std::to_string(x.shape[1]));
    if (x.shape[2] < cfg.output_size || x.shape[3] < cfg.output_size)
        throw ConfigError("model input smaller than the output window");
}

// ------------------------------------------------------- recurrent families

class RecurrentModel : public Model {
public:
    explicit RecurrentModel(ModelConfig cfg) : Model(std::move(cfg)) {
        cfg_.validate();
        bool lstm = cfg_.family == ModelFamily::convlstm;
        int k = cfg_.kernel_size;
        Rng seed(cfg_.init_seed);
        int cin = cfg_.input_channels;
        for (std::size_t l = 0; l < cfg_.hidden_widths.size(); ++l) {
            int h = cfg_.hidden_widths[l];
            std::string base = "layer" + std::to_string(l + 1);
            if (lstm) {
                Tensor b = Tensor::zeros({4 * h});
                if (cfg_.lstm_forget_bias_one)
                    for (int i = h; i < 2 * h; ++i) b.data[static_cast<std::size_t>(i)] = 1.0;
                add_param(base + ".gates.w",
                          conv_init(4 * h, cin + h, k, 1.0, seed.substream(10 * l)));
                add_param(base + ".gates.b", std::move(b));
            } else {
                add_param(base + ".gates.w",
                          conv_init(2 * h, cin + h, k, 1.0, seed.substream(10 * l)));
                add_param(base + ".gates.b", Tensor::zeros({2 * h}));
                add_param(base + ".cand.w",
                          conv_init(h, cin + h, k, 1.0, seed.substream(10 * l + 1)));
                add_param(base + ".cand.b", Tensor::zeros({h}));
            }
            cin = h;
        }
        add_param("head.w", conv_init(1, cfg_.hidden_widths.back(), 1, 1.0, seed.substream(99)));
        add_param("head.b", Tensor::zeros({1}));
    }

    Var forward(const Var& input, bool training, Rng* dropout_rng) override {
        check_input(input.value(), cfg_);
        bool needs_rng = false;
        for (double r : cfg_.dropout_rates) needs_rng |= r > 0.0;
        if (training && needs_rng && !dropout_rng)
            throw ConfigError("training-mode forward with dropout needs an RNG");

        int n = input.value().shape[0];
        int hh = input.value().shape[2], ww = input.value().shape[3];
        bool lstm = cfg_.family == ModelFamily::convlstm;
        std::size_t layers = cfg_.hidden_widths.size();

        std::vector<Var> h(layers), c(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            h[l] = Var::leaf(Tensor::zeros({n, cfg_.hidden_widths[l], hh, ww}));
            if (lstm) c[l] = Var::leaf(Tensor::zeros({n, cfg_.hidden_widths[l], hh, ww}));
        }

        Var last;
        for (int t = 0; t < cfg_.time_depth; ++t) {
            Var x = slice_channels(input, t * cfg_.input_channels, (t + 1) * cfg_.input_channels);
            for (std::size_t l = 0; l < layers; ++l) {
                if (lstm)
                    step_lstm(l, x, h[l], c[l]);
                else
                    h[l] = step_gru(l, x, h[l]);
                h[l] = dropout_channels(h[l], cfg_.dropout_rates[l], *pick_rng(dropout_rng),
                                        training);
                x = h[l];
            }
            last = x;
        }
        Var cropped = crop_center(last, cfg_.output_size, cfg_.output_size);
        return tanh_(conv2d(cropped, param("head.w"), param("head.b"), 0));
    }

private:
    Rng* pick_rng(Rng* rng) {
        static Rng dummy(0); // dropout_channels ignores the RNG in eval mode
        return rng ? rng : &dummy;
    }

    Var param(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.var;
        throw RuntimeFailure("missing parameter '" + name + "'");
    }

    Var step_gru(std::size_t l, const Var& x, const Var& h_prev) {
        std::string base = "layer" + std::to_string(l + 1);
        int hw = cfg_.hidden_widths[l];
        int pad = cfg_.kernel_size / 2;
        Var zr = conv2d(concat_channels(x, h_prev), param(base + ".gates.w"),
                        param(base + ".gates.b"), pad);
        Var z = sigmoid(slice_channels(zr, 0, hw));
        Var r = sigmoid(slice_channels(zr, hw, 2 * hw));
        Var cand = tanh_(conv2d(concat_channels(x, mul(r, h_prev)), param(base + ".cand.w"),
                                param(base + ".cand.b"), pad));
        // (1-z) h + z cand
        return add(sub(h_prev, mul(z, h_prev)), mul(z, cand));
    }

    void step_lstm(std::size_t l, const Var& x, Var& h_prev, Var& c_prev) {
        std::string base = "layer" + std::to_string(l + 1);
        int hw = cfg_.hidden_widths[l];
        int pad = cfg_.kernel_size / 2;
        Var gates = conv2d(concat_channels(x, h_prev), param(base + ".gates.w"),
                           param(base + ".gates.b"), pad);
        Var i = sigmoid(slice_channels(gates, 0, hw));
        Var f = sigmoid(slice_channels(gates, hw, 2 * hw));
        Var o = sigmoid(slice_channels(gates, 2 * hw, 3 * hw));
        Var g = tanh_(slice_channels(gates, 3 * hw, 4 * hw));
        c_prev = add(mul(f, c_prev), mul(i, g));
        h_prev = mul(o, tanh_(c_prev));
    }
};

// -------------------------------------------------------------------- U-Net

class UnetModel : public Model {
public:
    explicit UnetModel(ModelConfig cfg) : Model(std::move(cfg)) {
        cfg_.validate();
        Rng seed(cfg_.init_seed);
        int cin = cfg_.time_depth * cfg_.input_channels;
        const auto& w = cfg_.hidden_widths;
        for (std::size_t l = 0; l < w.size(); ++l) {
            add_block("enc" + std::to_string(l + 1), cin, w[l], seed.substream(l));
            cin = w[l];
        }
        for (std::size_t l = w.size() - 1; l-- > 0;) {
            int skip = w[l];
            add_block("dec" + std::to_string(l + 1), cin + skip, w[l], seed.substream(100 + l));
            cin = w[l];
        }
        add_param("head.w", conv_init(1, w.front(), 1, 1.0, seed.substream(999)));
        add_param("head.b", Tensor::zeros({1}));
    }

    Var forward(const Var& input, bool training, Rng*) override {
        check_input(input.value(), cfg_);
        int divisor = 1 << (static_cast<int>(cfg_.hidden_widths.size()) - 1);
        if (input.value().shape[2] % divisor || input.value().shape[3] % divisor)
            throw ConfigError("unet input spatial size must be divisible by " +
                              std::to_string(divisor));

        const auto& w = cfg_.hidden_widths;
        std::vector<Var> skips;
        Var x = input;
        for (std::size_t l = 0; l < w.size(); ++l) {
            if (l > 0) x = maxpool2(x);
            x = block("enc" + std::to_string(l + 1), x, training);
            if (l + 1 < w.size()) skips.push_back(x);
        }
        for (std::size_t l = w.size() - 1; l-- > 0;) {
            x = upsample_bilinear2(x);
            x = block("dec" + std::to_string(l + 1), concat_channels(skips[l], x), training);
        }
        Var out = tanh_(conv2d(x, param("head.w"), param("head.b"), 0));
        return crop_center(out, cfg_.output_size, cfg_.output_size);
    }

private:
    struct BnPair {
        BatchNormState s1, s2;
    };

    void add_block(const std::string& base, int cin, int cout, Rng rng) {
        int k = cfg_.kernel_size;
        add_param(base + ".conv1.w", conv_init(cout, cin, k, 2.0, rng.substream(1)));
        add_param(base + ".conv1.b", Tensor::zeros({cout}));
        add_param(base + ".bn1.gamma", Tensor::full({cout}, 1.0));
        add_param(base + ".bn1.beta", Tensor::zeros({cout}));
        add_param(base + ".conv2.w", conv_init(cout, cout, k, 2.0, rng.substream(2)));
        add_param(base + ".conv2.b", Tensor::zeros({cout}));
        add_param(base + ".bn2.gamma", Tensor::full({cout}, 1.0));
        add_param(base + ".bn2.beta", Tensor::zeros({cout}));
        auto& bn = bn_[base];
        bn.s1.running_mean = Tensor::zeros({cout});
        bn.s1.running_var = Tensor::full({cout}, 1.0);
        bn.s2.running_mean = Tensor::zeros({cout});
        bn.s2.running_var = Tensor::full({cout}, 1.0);
        add_buffer(base + ".bn1.running_mean", &bn.s1.running_mean);
        add_buffer(base + ".bn1.running_var", &bn.s1.running_var);
        add_buffer(base + ".bn2.running_mean", &bn.s2.running_mean);
        add_buffer(base + ".bn2.running_var", &bn.s2.running_var);
    }

    Var block(const std::string& base, const Var& x, bool training) {
        int pad = cfg_.kernel_size / 2;
        auto& bn = bn_.at(base);
        Var y = conv2d(x, param(base + ".conv1.w"), param(base + ".conv1.b"), pad);
        y = relu(batchnorm2d(y, param(base + ".bn1.gamma"), param(base + ".bn1.beta"), bn.s1,
                             training));
        y = conv2d(y, param(base + ".conv2.w"), param(base + ".conv2.b"), pad);
        return relu(batchnorm2d(y, param(base + ".bn2.gamma"), param(base + ".bn2.beta"), bn.s2,
                                training));
    }

    Var param(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.var;
        throw RuntimeFailure("missing parameter '" + name + "'");
    }

    std::map<std::string, BnPair> bn_;
};

} // namespace

std::unique_ptr<Model> build_model(const ModelConfig& cfg) {
    cfg.validate();
    if (cfg.family == ModelFamily::unet) return std::make_unique<UnetModel>(cfg);
    return std::make_unique<RecurrentModel>(cfg);
}

// -------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[] = "PMNCKPT1\n";

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

json array_manifest(const Model& model) {
    json arrays = json::array();
    for (const auto& p : model.parameters())
        arrays.push_back({{"name", p.name}, {"shape", p.var.value().shape}, {"kind", "param"}});
    for (const auto& [name, t] : const_cast<Model&>(model).buffers())
        arrays.push_back({{"name", name}, {"shape", t->shape}, {"kind", "buffer"}});
    return arrays;
}

void write_doubles(std::ostream& os, const Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
}

} // namespace

void save_weights(const Model& model, const std::string& path, const CheckpointMeta& meta) {
    json header{{"schema", 1},
                {"config", json::parse(model.config().to_json())},
                {"species", meta.species},
                {"stats_ref", meta.stats_ref},
                {"training", meta.training_json.empty() ? json::object()
                                                        : json::parse(meta.training_json)},
                {"arrays", array_manifest(model)}};
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write checkpoint: " + path);
    std::string h = header.dump();
    f.write(kMagic, sizeof(kMagic) - 1);
    write_u64(f, h.size());
    f.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& p : model.parameters()) write_doubles(f, p.var.value());
    for (const auto& [name, t] : const_cast<Model&>(model).buffers()) write_doubles(f, *t);
    if (!f) throw DataError("short write on checkpoint: " + path);
}

std::unique_ptr<Model> load_weights(const std::string& path, CheckpointMeta* meta,
                                    const ModelConfig* expect,
                                    const std::string& expected_species) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read checkpoint: " + path);
    char magic[sizeof(kMagic) - 1];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw DataError("not a checkpoint file: " + path);
    std::uint64_t hlen = read_u64(f);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw DataError("truncated checkpoint header: " + path);

    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw DataError("corrupt checkpoint header: " + std::string(e.what()));
    }
    if (header.at("schema").get<int>() != 1)
        throw DataError("unsupported checkpoint schema version");

    ModelConfig cfg = ModelConfig::from_json(header.at("config").dump());
    if (expect && expect->to_json() != cfg.to_json())
        throw DataError("checkpoint config does not match the requested configuration");

    std::string species = header.at("species");
    if (!expected_species.empty() && species != expected_species)
        std::cerr << "warning: checkpoint " << path << " was trained for " << species
                  << " but is being loaded for " << expected_species << "\n";

    auto model = build_model(cfg);
    json expected_manifest = array_manifest(*model);
    if (header.at("arrays") != expected_manifest)
        throw DataError("checkpoint array manifest does not match the model layout");

    auto read_into = [&](Tensor& t, const std::string& name) {
        f.read(reinterpret_cast<char*>(t.data.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!f) throw DataError("truncated checkpoint payload at array '" + name + "'");
    };
    for (auto& p : model->parameters()) read_into(p.var.value_mut(), p.name);
    for (auto& [name, t] : model->buffers()) read_into(*t, name);

    if (meta) {
        meta->species = species;
        meta->stats_ref = header.at("stats_ref");
        meta->training_json = header.at("training").dump();
    }
    return model;
}

void export_weights(const Model& model, const std::string& dir) {
    fs::create_directories(dir);
    {
        std::ofstream f(fs::path(dir) / "config.json");
        f << model.config().to_json() << "\n";
    }
    json manifest{{"format", "raw little-endian float64, C row-major"},
                  {"arrays", array_manifest(model)}};
    {
        std::ofstream f(fs::path(dir) / "manifest.json");
        f << manifest.dump(2) << "\n";
    }
    auto dump = [&](const std::string& name, const Tensor& t) {
        std::string fname = name;
        for (auto& ch : fname)
            if (ch == '.') ch = '_';
        std::ofstream f(fs::path(dir) / (fname + ".bin"), std::ios::binary);
        if (!f) throw DataError("cannot write export array: " + name);
        write_doubles(f, t);
    };
    for (const auto& p : model.parameters()) dump(p.name, p.var.value());
    for (const auto& [name, t] : const_cast<Model&>(model).buffers()) dump(name, *t);
}

} // namespace pmnc
