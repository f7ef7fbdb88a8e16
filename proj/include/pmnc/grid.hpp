#pragma once

#include <string>

#include "pmnc/errors.hpp"

namespace pmnc {

/// Description of the source grid: regular lat/lon, latitudes descending
/// from lat_first, longitudes ascending from lon_first. Defaults to the
/// global 0.4-degree analysis grid (451 x 900).
struct GridSpec {
    double lat_first = 90.0;
    double lon_first = 0.0;
    double resolution = 0.4;
    int n_lat = 451;
    int n_lon = 900;

    double lat_at(int row) const { return lat_first - row * resolution; }
    double lon_at(int col) const { return lon_first + col * resolution; }
};

/// Requested window, degrees. lat_north >= lat_south; longitudes must not
/// wrap (lon_west < lon_east).
struct DomainSpec {
    double lat_north = 0.0;
    double lat_south = 0.0;
    double lon_west = 0.0;
    double lon_east = 0.0;
};

/// Resolved window with index ranges into the source grid. Row 0 is the
/// northernmost latitude (descending convention preserved end-to-end).
struct GridDomain {
    double lat_start = 0.0; // northmost, degrees north
    double lat_end = 0.0;   // southmost
    double lon_start = 0.0; // westmost, degrees east
    double lon_end = 0.0;
    double resolution = 0.4;
    int n_lat = 0;
    int n_lon = 0;
    int lat_index_start = 0;
    int lon_index_start = 0;
};

/// Maps lat/lon bounds onto grid indices; both endpoints inclusive.
/// Throws ConfigError for misaligned bounds or windows outside the grid.
GridDomain resolve_window(const DomainSpec& spec, const GridSpec& grid = {});

/// The experiment's fixed domains on the true global grid.
DomainSpec input_domain_spec();  // 256x256: 73.6N..28.4S, 32.0E..134.0E
DomainSpec output_domain_spec(); // 128x128: 48.0N..2.8S, 57.6E..108.4E

/// Centered crop relationship between two resolved windows, in rows/cols.
/// Throws ConfigError if `inner` is not properly centered inside `outer`.
struct CropOffsets {
    int row = 0;
    int col = 0;
};
CropOffsets centered_crop_offsets(const GridDomain& outer, const GridDomain& inner);

} // namespace pmnc
