#pragma once

#include "downgen/grid.hpp"

#include <cstdint>
#include <vector>

namespace downgen {

/// Factors of the fixed downsampling map between the fine and coarse grids.
struct DownsampleSpec {
    int spatial_factor = 4;
    int temporal_window = kStepsPerDay;

    void validate() const;
};

/// Block mean in space and window mean in time.
/// Output shape [nt / temporal_window, nx / f, ny / f, nv].
GridField coarsen(const GridField& field, const DownsampleSpec& spec);

/// Spatial block mean only (no temporal averaging).
GridField coarsen_spatial(const GridField& field, int spatial_factor);

/// Bicubic (Keys, a = -0.5) interpolation onto the grid `spatial_factor`
/// times finer. Samples outside the coarse cell centers use linearly
/// extrapolated ghost values, so affine fields are reproduced exactly.
GridField interp_spatial(const GridField& field, int spatial_factor);

/// Bicubic interpolation in space plus nearest-neighbour replication in time:
/// each coarse step is repeated `temporal_window` times.
GridField interp_upsample(const GridField& field, const DownsampleSpec& spec);

/// cos(lat)-weighted spatial mean over a latitude band followed by a boxcar
/// filter of `window_steps` samples.
struct RollingSeries {
    std::vector<double> values;
    std::vector<std::int64_t> center_hours;
};

/// Per-step cos(lat)-weighted mean of one variable over lat in [lat_min, lat_max].
std::vector<double> zonal_weighted_mean(const GridField& field, std::size_t var, double lat_min,
                                        double lat_max);

/// The boxcar output is cropped by half a window at each end, so it has
/// nt - window_steps + 1 samples.
RollingSeries zonal_weighted_rolling_mean(const GridField& field, std::size_t var, double lat_min,
                                          double lat_max, std::size_t window_steps);

/// Ordinary least-squares slope of y against x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace downgen
