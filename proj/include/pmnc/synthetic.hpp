#pragma once

#include <map>
#include <string>
#include <vector>

#include "pmnc/cams.hpp"
#include "pmnc/grid.hpp"
#include "pmnc/rng.hpp"
#include "pmnc/tensor.hpp"
#include "pmnc/time.hpp"

namespace pmnc::synth {

/// Per-variable field synthesis parameters. Fields evolve as a periodic
/// integer-cell advection of a fixed random blob field plus seasonal and
/// diurnal modulation plus optional noise: with zero modulation and zero
/// noise, frame(t+6h) is exactly frame(t) rolled by (advect_v, advect_u).
struct VarSynth {
    double base = 0.0;          // additive level, physical units
    double spatial_amp = 1.0;   // blob amplitude scale
    double seasonal_amp = 0.0;  // annual sine amplitude
    double diurnal_amp = 0.0;   // daily sine amplitude
    double corr_len_cells = 8;  // blob width
    int advect_u = 0;           // cells per 6h, positive = eastward
    int advect_v = 0;           // cells per 6h, positive = southward
    double noise_amp = 0.0;     // white noise amplitude per timestamp
    bool non_negative = false;  // clamp at 0 after noise
    bool static_field = false;  // no advection or modulation (lsm, z_surface)
    bool unit_interval = false; // rescale base field to [0, 1] (lsm)
    std::string units;          // written as the variable's units attribute
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    Date from{2021, 1, 1};
    Date to{2021, 1, 3};
    GridSpec grid;                      // true 451x900 global grid by default
    bool mini = false;                  // reduced non-conformant grid profile
    std::string pm_units = "kg m**-3";  // stored PM units; ingest converts
    int blob_count = 16;
    std::map<std::string, VarSynth> vars; // keyed by canonical name

    /// Paper-geometry scenario with physically plausible levels.
    static ScenarioConfig defaults();

    /// Small fast grid (4-degree, 46x90) for unit tests; flagged synthetic,
    /// not conformant to the analysis geometry.
    static ScenarioConfig mini_profile();
};

/// Writes one NetCDF per day under out_root and returns the catalog.
Catalog generate_archive(const ScenarioConfig& cfg, const std::string& out_root);

/// In-memory frame synthesis (what generate_archive writes, pre-rounding).
Tensor synthesize_field(const ScenarioConfig& cfg, const std::string& var, const UtcTime& t);

/// (prediction, target) pairs with closed-form RMSE/MAE/Bias, cycling
/// through: identical pair, constant offset +c, alternating +/-c error.
struct FixturePair {
    Tensor pred;
    Tensor target;
};
std::vector<FixturePair> make_fixture_pairs(int n, int height, int width, double c = 2.5);

} // namespace pmnc::synth
