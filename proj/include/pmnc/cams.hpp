#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "pmnc/grid.hpp"
#include "pmnc/tensor.hpp"
#include "pmnc/time.hpp"

namespace pmnc {

/// The ten canonical surface variables, in fixed channel order. The three
/// PM species occupy the last three slots.
class VariableSet {
public:
    static constexpr int kCount = 10;
    static const std::array<const char*, kCount>& names();

    static int index(const std::string& canonical); // -1 when unknown
    static bool is_pm(int channel) { return channel >= kCount - 3; }
    static int pm_channel(const std::string& species); // pm1/pm2p5/pm10 -> 7/8/9

    /// Maps a file variable name (CAMS short or long form) to the canonical
    /// name, or "" when unrecognized.
    static std::string canonical_from_alias(const std::string& file_name);

    /// Aliases accepted for a canonical name, in preference order.
    static std::vector<std::string> aliases_of(const std::string& canonical);
};

/// One analysis timestamp, windowed to a domain. Values are physical units
/// (PM converted to ug/m3 at ingest when the file stores kg/m3).
struct AnalysisFrame {
    UtcTime timestamp;
    Tensor data; // (10, n_lat, n_lon)
    std::array<std::string, VariableSet::kCount> units;
};

struct CatalogEntry {
    Date date;
    std::string path;       // empty when the day has no file
    std::vector<int> hours; // analysis hours present, ascending
};

using Catalog = std::vector<CatalogEntry>;

/// Reads one daily file, windowed to `domain` on source grid `grid`.
/// Returns up to four frames (00/06/12/18 UTC) in ascending time order.
std::vector<AnalysisFrame> read_day(const std::string& path, const GridDomain& domain,
                                    const GridSpec& grid = {});

/// Deterministic date-sorted catalog over [from, to]; days without a file
/// get an empty timestamp set. File naming: <root>/YYYY-MM-DD.nc by default;
/// `pattern` replaces "{date}".
Catalog scan_archive(const std::string& root, const Date& from, const Date& to,
                     const std::string& pattern = "{date}.nc");

} // namespace pmnc
