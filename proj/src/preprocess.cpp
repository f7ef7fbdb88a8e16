#include "pmnc/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pmnc/rng.hpp"

namespace pmnc {

using nlohmann::json;

double NormalizationStats::stat(int channel) const {
    return max_abs.at(static_cast<std::size_t>(channel));
}

double NormalizationStats::stat(const std::string& canonical) const {
    int idx = VariableSet::index(canonical);
    if (idx < 0) throw ConfigError("unknown variable '" + canonical + "'");
    return max_abs[static_cast<std::size_t>(idx)];
}

std::string NormalizationStats::to_json() const {
    json j;
    for (int i = 0; i < VariableSet::kCount; ++i)
        j["max_abs"][VariableSet::names()[i]] = max_abs[static_cast<std::size_t>(i)];
    j["provenance"] = {{"from", from_date}, {"to", to_date},
                       {"files", file_count}, {"frames", frame_count}};
    return j.dump(2);
}

NormalizationStats NormalizationStats::from_json(const std::string& text) {
    NormalizationStats s;
    json j = json::parse(text);
    for (int i = 0; i < VariableSet::kCount; ++i)
        s.max_abs[static_cast<std::size_t>(i)] = j.at("max_abs").at(VariableSet::names()[i]);
    const auto& p = j.at("provenance");
    s.from_date = p.at("from");
    s.to_date = p.at("to");
    s.file_count = p.at("files");
    s.frame_count = p.at("frames");
    return s;
}

void NormalizationStats::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write stats sidecar: " + path);
    f << to_json() << "\n";
}

NormalizationStats NormalizationStats::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read stats sidecar: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return from_json(text);
    } catch (const json::exception& e) {
        throw DataError("malformed stats sidecar " + path + ": " + e.what());
    }
}

NormalizationStats compute_stats(const Catalog& catalog, const Date& from, const Date& to,
                                 const GridDomain& input_domain, const GridSpec& grid) {
    NormalizationStats s;
    s.from_date = from.str();
    s.to_date = to.str();
    for (const auto& entry : catalog) {
        if (entry.date < from || entry.date > to || entry.path.empty()) continue;
        auto frames = read_day(entry.path, input_domain, grid);
        if (!frames.empty()) ++s.file_count;
        for (const auto& frame : frames) {
            ++s.frame_count;
            for (int ch = 0; ch < VariableSet::kCount; ++ch) {
                const double* p = &frame.data.at3(ch, 0, 0);
                std::size_t n = static_cast<std::size_t>(input_domain.n_lat) * input_domain.n_lon;
                double m = s.max_abs[static_cast<std::size_t>(ch)];
                for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(p[i]));
                s.max_abs[static_cast<std::size_t>(ch)] = m;
            }
        }
    }
    if (s.frame_count == 0)
        throw DataError("no readable frames in " + from.str() + ".." + to.str());
    return s;
}

Tensor normalize(const AnalysisFrame& frame, const NormalizationStats& stats) {
    for (int ch = 0; ch < VariableSet::kCount; ++ch)
        if (!(stats.stat(ch) > 0.0) || !std::isfinite(stats.stat(ch)))
            throw ConfigError(std::string("invalid normalization stat for '") +
                              VariableSet::names()[ch] + "'");
    Tensor out(frame.data.shape);
    std::size_t plane = frame.data.size() / VariableSet::kCount;
    for (int ch = 0; ch < VariableSet::kCount; ++ch) {
        double inv = 1.0 / stats.stat(ch);
        const double* src = frame.data.ptr() + ch * plane;
        double* dst = out.ptr() + ch * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * inv;
    }
    return out;
}

Tensor denormalize(const Tensor& field, const std::string& species,
                   const NormalizationStats& stats) {
    int ch = VariableSet::pm_channel(species);
    double scale = stats.stat(ch);
    Tensor out(field.shape);
    for (std::size_t i = 0; i < field.size(); ++i) out.data[i] = field.data[i] * scale;
    return out;
}

std::vector<Sample> build_samples(const Catalog& catalog, const std::string& species,
                                  const NormalizationStats& stats, const GridDomain& input_domain,
                                  const GridDomain& output_domain, const GridSpec& grid,
                                  BuildReport* report) {
    int pm_ch = VariableSet::pm_channel(species);
    CropOffsets crop = centered_crop_offsets(input_domain, output_domain);
    BuildReport rep;

    // Frames for the current day and the next (for the 18 UTC -> 00 UTC pair).
    std::vector<Sample> samples;
    std::vector<AnalysisFrame> day, next;
    auto load = [&](const CatalogEntry& e) -> std::vector<AnalysisFrame> {
        if (e.path.empty()) return {};
        return read_day(e.path, input_domain, grid);
    };

    for (std::size_t i = 0; i < catalog.size(); ++i) {
        day = (i == 0) ? load(catalog[i]) : std::move(next);
        next = (i + 1 < catalog.size()) ? load(catalog[i + 1]) : std::vector<AnalysisFrame>{};

        for (const auto& frame : day) {
            UtcTime target_time = frame.timestamp.plus_hours(6);
            const AnalysisFrame* target_frame = nullptr;
            for (const auto& cand : day)
                if (cand.timestamp == target_time) target_frame = &cand;
            for (const auto& cand : next)
                if (cand.timestamp == target_time) target_frame = &cand;
            if (!target_frame) {
                ++rep.dropped_missing_successor;
                continue;
            }

            Sample s;
            s.species = species;
            s.init_time = frame.timestamp;
            s.input = normalize(frame, stats);
            s.target = Tensor({1, output_domain.n_lat, output_domain.n_lon});
            double inv = 1.0 / stats.stat(pm_ch);
            for (int y = 0; y < output_domain.n_lat; ++y)
                for (int x = 0; x < output_domain.n_lon; ++x)
                    s.target.at3(0, y, x) =
                        target_frame->data.at3(pm_ch, y + crop.row, x + crop.col) * inv;
            ++rep.produced;
            samples.push_back(std::move(s));
        }
    }

    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.init_time < b.init_time; });
    if (report) *report = rep;
    return samples;
}

std::pair<TrainValSplit, TestSplit> split_samples(std::vector<Sample> samples,
                                                  const SplitSpec& spec) {
    std::vector<Sample> train_range;
    TestSplit test;
    for (auto& s : samples) {
        Date d = s.init_time.date();
        if (d >= spec.train_from && d <= spec.train_to)
            train_range.push_back(std::move(s));
        else if (d >= spec.test_from && d <= spec.test_to)
            test.test.push_back(std::move(s));
    }
    if (train_range.empty()) throw ConfigError("no samples in the train/validation date range");
    if (test.test.empty()) throw ConfigError("no samples in the test date range");

    std::vector<std::size_t> idx(train_range.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(idx);

    auto n_train = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(train_range.size())));
    n_train = std::min(n_train, train_range.size());
    if (n_train == 0 || n_train == train_range.size())
        throw ConfigError("split produced an empty train or validation partition");

    TrainValSplit tv;
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i < n_train ? tv.train : tv.val).push_back(std::move(train_range[idx[i]]));
    return {std::move(tv), std::move(test)};
}

void write_manifest(const std::string& path, const TrainValSplit& tv, const TestSplit& test) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write manifest: " + path);
    f << "init_time,species,target_time,split\n";
    auto row = [&f](const Sample& s, const char* split) {
        f << s.init_time.str() << "," << s.species << "," << s.init_time.plus_hours(6).str()
          << "," << split << "\n";
    };
    for (const auto& s : tv.train) row(s, "train");
    for (const auto& s : tv.val) row(s, "val");
    for (const auto& s : test.test) row(s, "test");
}

} // namespace pmnc
