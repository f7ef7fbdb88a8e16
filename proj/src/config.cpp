#include "pmnc/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pmnc/errors.hpp"

namespace pmnc {

using nlohmann::json;

namespace {

/// Overlays j[key] onto `out` when present; errors name the full path.
template <typename T>
void get_if(const json& j, const std::string& prefix, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for field '" + prefix + key + "'");
    }
}

void get_date_if(const json& j, const std::string& prefix, const char* key, Date& out) {
    std::string s = out.str();
    get_if(j, prefix, key, s);
    try {
        out = Date::parse(s);
    } catch (const std::exception&) {
        throw ConfigError("config: bad date for field '" + prefix + key + "'");
    }
}

json window_json(const DomainSpec& w) {
    return json{{"lat_north", w.lat_north},
                {"lat_south", w.lat_south},
                {"lon_west", w.lon_west},
                {"lon_east", w.lon_east}};
}

void read_window(const json& j, const std::string& prefix, DomainSpec& w) {
    get_if(j, prefix, "lat_north", w.lat_north);
    get_if(j, prefix, "lat_south", w.lat_south);
    get_if(j, prefix, "lon_west", w.lon_west);
    get_if(j, prefix, "lon_east", w.lon_east);
}

void read_var_synth(const json& j, const std::string& prefix, synth::VarSynth& v) {
    get_if(j, prefix, "base", v.base);
    get_if(j, prefix, "spatial_amp", v.spatial_amp);
    get_if(j, prefix, "seasonal_amp", v.seasonal_amp);
    get_if(j, prefix, "diurnal_amp", v.diurnal_amp);
    get_if(j, prefix, "corr_len_cells", v.corr_len_cells);
    get_if(j, prefix, "advect_u", v.advect_u);
    get_if(j, prefix, "advect_v", v.advect_v);
    get_if(j, prefix, "noise_amp", v.noise_amp);
    get_if(j, prefix, "non_negative", v.non_negative);
    get_if(j, prefix, "static_field", v.static_field);
    get_if(j, prefix, "unit_interval", v.unit_interval);
    get_if(j, prefix, "units", v.units);
}

} // namespace

ExperimentConfig ExperimentConfig::defaults(const std::string& preset,
                                            const std::string& species) {
    ExperimentConfig c;
    c.preset = preset;
    c.species = species;
    c.model = ModelConfig::preset(preset);
    if (c.model.family == ModelFamily::unet) {
        c.loss = LossConfig::huber_default();
        c.train = TrainConfig::unet_default();
    } else {
        c.loss = LossConfig::rmse_default();
        c.train = TrainConfig::recurrent_default();
    }
    return c;
}

void ExperimentConfig::validate() const {
    if (archive_root.empty()) throw ConfigError("config: 'paths.archive_root' is required");
    if (output_dir.empty()) throw ConfigError("config: 'paths.output_dir' is required");
    VariableSet::pm_channel(species); // throws ConfigError on unknown species
    model.validate();
    loss.validate();
    train.validate();
    if (split.train_fraction <= 0.0 || split.train_fraction >= 1.0)
        throw ConfigError("config: 'split.train_fraction' must lie in (0, 1)");
    resolve_window(input_window, grid);
    resolve_window(output_window, grid);
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["paths"] = json{{"archive_root", archive_root},
                      {"output_dir", output_dir},
                      {"stats", stats_path},
                      {"pattern", archive_pattern}};
    j["species"] = species;
    j["preset"] = preset;
    j["grid"] = json{{"lat_first", grid.lat_first},
                     {"lon_first", grid.lon_first},
                     {"resolution", grid.resolution},
                     {"n_lat", grid.n_lat},
                     {"n_lon", grid.n_lon}};
    j["input_window"] = window_json(input_window);
    j["output_window"] = window_json(output_window);
    j["model"] = json::parse(model.to_json());
    j["loss"] = json{{"variant", loss_variant_name(loss.variant)},
                     {"accuracy_weight", loss.accuracy_weight},
                     {"ssim_weight", loss.ssim_weight},
                     {"huber_delta", loss.huber_delta},
                     {"epsilon", loss.epsilon},
                     {"ssim", json{{"window_size", loss.ssim.window_size},
                                   {"sigma", loss.ssim.sigma},
                                   {"dynamic_range", loss.ssim.dynamic_range}}}};
    j["train"] = json{{"recipe", recipe_name(train.recipe)},
                      {"batch_size", train.batch_size},
                      {"learning_rate", train.learning_rate},
                      {"weight_decay", train.weight_decay},
                      {"plateau_factor", train.plateau_factor},
                      {"plateau_patience", train.plateau_patience},
                      {"plateau_rel_threshold", train.plateau_rel_threshold},
                      {"accumulation_steps", train.accumulation_steps},
                      {"max_epochs", train.max_epochs},
                      {"early_stop_patience", train.early_stop_patience},
                      {"grad_clip_norm", train.grad_clip_norm},
                      {"cosine_min_lr", train.cosine_min_lr},
                      {"seed", train.seed}};
    j["split"] = json{{"train_fraction", split.train_fraction},
                      {"seed", split.seed},
                      {"train_from", split.train_from.str()},
                      {"train_to", split.train_to.str()},
                      {"test_from", split.test_from.str()},
                      {"test_to", split.test_to.str()}};
    if (has_scenario) {
        json vars = json::object();
        j["scenario"] = json{{"seed", scenario.seed},
                             {"mini", scenario.mini},
                             {"from", scenario.from.str()},
                             {"to", scenario.to.str()},
                             {"pm_units", scenario.pm_units},
                             {"blob_count", scenario.blob_count},
                             {"vars", vars}};
    }
    return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }

    std::string preset = "convgru1";
    std::string species = "pm2p5";
    get_if(j, "", "preset", preset);
    get_if(j, "", "species", species);
    ExperimentConfig c = defaults(preset, species);

    if (j.contains("paths")) {
        const json& p = j.at("paths");
        get_if(p, "paths.", "archive_root", c.archive_root);
        get_if(p, "paths.", "output_dir", c.output_dir);
        get_if(p, "paths.", "stats", c.stats_path);
        get_if(p, "paths.", "pattern", c.archive_pattern);
    }
    if (j.contains("scenario")) {
        const json& s = j.at("scenario");
        bool mini = false;
        get_if(s, "scenario.", "mini", mini);
        c.scenario = mini ? synth::ScenarioConfig::mini_profile()
                          : synth::ScenarioConfig::defaults();
        c.has_scenario = true;
        get_if(s, "scenario.", "seed", c.scenario.seed);
        get_date_if(s, "scenario.", "from", c.scenario.from);
        get_date_if(s, "scenario.", "to", c.scenario.to);
        get_if(s, "scenario.", "pm_units", c.scenario.pm_units);
        get_if(s, "scenario.", "blob_count", c.scenario.blob_count);
        if (s.contains("vars"))
            for (const auto& [name, body] : s.at("vars").items()) {
                auto it = c.scenario.vars.find(name);
                if (it == c.scenario.vars.end())
                    throw ConfigError("config: 'scenario.vars." + name +
                                      "' is not a canonical variable");
                read_var_synth(body, "scenario.vars." + name + ".", it->second);
            }
        c.grid = c.scenario.grid; // explicit "grid" below still wins
    }
    if (j.contains("grid")) {
        const json& g = j.at("grid");
        get_if(g, "grid.", "lat_first", c.grid.lat_first);
        get_if(g, "grid.", "lon_first", c.grid.lon_first);
        get_if(g, "grid.", "resolution", c.grid.resolution);
        get_if(g, "grid.", "n_lat", c.grid.n_lat);
        get_if(g, "grid.", "n_lon", c.grid.n_lon);
    }
    if (j.contains("input_window")) read_window(j.at("input_window"), "input_window.", c.input_window);
    if (j.contains("output_window"))
        read_window(j.at("output_window"), "output_window.", c.output_window);

    if (j.contains("model")) {
        json m = json::parse(c.model.to_json());
        m.merge_patch(j.at("model"));
        try {
            c.model = ModelConfig::from_json(m.dump());
        } catch (const json::exception&) {
            throw ConfigError("config: malformed 'model' section");
        }
    }
    if (j.contains("loss")) {
        const json& l = j.at("loss");
        if (l.contains("variant")) {
            std::string v;
            get_if(l, "loss.", "variant", v);
            c.loss.variant = loss_variant_from_name(v);
        }
        get_if(l, "loss.", "accuracy_weight", c.loss.accuracy_weight);
        get_if(l, "loss.", "ssim_weight", c.loss.ssim_weight);
        get_if(l, "loss.", "huber_delta", c.loss.huber_delta);
        get_if(l, "loss.", "epsilon", c.loss.epsilon);
        if (l.contains("ssim")) {
            const json& s = l.at("ssim");
            get_if(s, "loss.ssim.", "window_size", c.loss.ssim.window_size);
            get_if(s, "loss.ssim.", "sigma", c.loss.ssim.sigma);
            get_if(s, "loss.ssim.", "dynamic_range", c.loss.ssim.dynamic_range);
        }
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        if (t.contains("recipe")) {
            std::string r;
            get_if(t, "train.", "recipe", r);
            c.train.recipe = recipe_from_name(r);
        }
        get_if(t, "train.", "batch_size", c.train.batch_size);
        get_if(t, "train.", "learning_rate", c.train.learning_rate);
        get_if(t, "train.", "weight_decay", c.train.weight_decay);
        get_if(t, "train.", "plateau_factor", c.train.plateau_factor);
        get_if(t, "train.", "plateau_patience", c.train.plateau_patience);
        get_if(t, "train.", "plateau_rel_threshold", c.train.plateau_rel_threshold);
        get_if(t, "train.", "accumulation_steps", c.train.accumulation_steps);
        get_if(t, "train.", "max_epochs", c.train.max_epochs);
        get_if(t, "train.", "early_stop_patience", c.train.early_stop_patience);
        get_if(t, "train.", "grad_clip_norm", c.train.grad_clip_norm);
        get_if(t, "train.", "cosine_min_lr", c.train.cosine_min_lr);
        get_if(t, "train.", "seed", c.train.seed);
    }
    if (j.contains("split")) {
        const json& s = j.at("split");
        get_if(s, "split.", "train_fraction", c.split.train_fraction);
        get_if(s, "split.", "seed", c.split.seed);
        get_date_if(s, "split.", "train_from", c.split.train_from);
        get_date_if(s, "split.", "train_to", c.split.train_to);
        get_date_if(s, "split.", "test_from", c.split.test_from);
        get_date_if(s, "split.", "test_to", c.split.test_to);
    }
    if (c.stats_path.empty() && !c.output_dir.empty())
        c.stats_path = c.output_dir + "/stats.json";
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path,
                                        const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(apply_overrides(buf.str(), overrides));
}

void ExperimentConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw RuntimeFailure("config: cannot write " + path);
    out << to_json();
}

std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& overrides) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    for (const std::string& ov : overrides) {
        std::size_t eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must look like dotted.path=value: '" + ov + "'");
        std::string path = ov.substr(0, eq);
        std::string raw = ov.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::exception&) {
            value = raw; // unquoted strings pass through verbatim
        }
        json* node = &doc;
        std::size_t start = 0;
        while (true) {
            std::size_t dot = path.find('.', start);
            std::string key = path.substr(start, dot - start);
            if (key.empty())
                throw ConfigError("override has an empty path segment: '" + ov + "'");
            if (!node->is_object() && !node->is_null())
                throw ConfigError("override path crosses a non-object: '" + ov + "'");
            if (dot == std::string::npos) {
                (*node)[key] = value;
                break;
            }
            node = &(*node)[key];
            start = dot + 1;
        }
    }
    return doc.dump();
}

} // namespace pmnc
