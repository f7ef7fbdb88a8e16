#include "pmnc/grid.hpp"

#include <cmath>

namespace pmnc {

namespace {

/// Nearest grid index for a coordinate offset; rejects off-grid values.
int aligned_index(double offset, double resolution, const char* what) {
    double steps = offset / resolution;
    double rounded = std::round(steps);
    if (std::fabs(steps - rounded) > 1e-6)
        throw ConfigError(std::string(what) + " bound " + std::to_string(offset) +
                          " is not a multiple of the grid resolution " +
                          std::to_string(resolution));
    return static_cast<int>(rounded);
}

} // namespace

GridDomain resolve_window(const DomainSpec& spec, const GridSpec& grid) {
    if (spec.lat_north < spec.lat_south)
        throw ConfigError("window latitude bounds reversed (north < south)");
    if (spec.lon_west >= spec.lon_east)
        throw ConfigError("window longitude bounds reversed or dateline-wrapping; "
                          "wrapping windows are unsupported");

    int row_start = aligned_index(grid.lat_first - spec.lat_north, grid.resolution, "latitude");
    int row_end = aligned_index(grid.lat_first - spec.lat_south, grid.resolution, "latitude");
    int col_start = aligned_index(spec.lon_west - grid.lon_first, grid.resolution, "longitude");
    int col_end = aligned_index(spec.lon_east - grid.lon_first, grid.resolution, "longitude");

    if (row_start < 0 || row_end >= grid.n_lat || col_start < 0 || col_end >= grid.n_lon)
        throw ConfigError("window exceeds the source grid (rows " + std::to_string(row_start) +
                          ".." + std::to_string(row_end) + ", cols " + std::to_string(col_start) +
                          ".." + std::to_string(col_end) + ")");

    GridDomain d;
    d.lat_start = grid.lat_at(row_start);
    d.lat_end = grid.lat_at(row_end);
    d.lon_start = grid.lon_at(col_start);
    d.lon_end = grid.lon_at(col_end);
    d.resolution = grid.resolution;
    d.n_lat = row_end - row_start + 1;
    d.n_lon = col_end - col_start + 1;
    d.lat_index_start = row_start;
    d.lon_index_start = col_start;
    return d;
}

DomainSpec input_domain_spec() { return {73.6, -28.4, 32.0, 134.0}; }
DomainSpec output_domain_spec() { return {48.0, -2.8, 57.6, 108.4}; }

CropOffsets centered_crop_offsets(const GridDomain& outer, const GridDomain& inner) {
    int dr = inner.lat_index_start - outer.lat_index_start;
    int dc = inner.lon_index_start - outer.lon_index_start;
    if (dr < 0 || dc < 0 || dr * 2 != outer.n_lat - inner.n_lat ||
        dc * 2 != outer.n_lon - inner.n_lon)
        throw ConfigError("inner window is not a centered crop of the outer window");
    return {dr, dc};
}

} // namespace pmnc
