#pragma once

#include "downgen/grid.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace downgen {

inline constexpr double kClimStdFloor = 1e-6;

/// Grouping of timestamps into (day-of-year bucket, time-of-day bucket) keys.
struct ClimGrouping {
    int doy_buckets = kDaysPerYear;
    int tod_buckets = 1;

    int size() const { return doy_buckets * tod_buckets; }
    int doy_bucket(std::int64_t hour) const;
    int tod_bucket(std::int64_t hour) const;
    int group_of(std::int64_t hour) const { return doy_bucket(hour) * tod_buckets + tod_bucket(hour); }
    void validate() const;
};

/// Per-group pixelwise mean / std tables, each [G, nx, ny, nv].
struct Climatology {
    ClimGrouping grouping;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nv = 0;
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<std::size_t> counts;  // samples per group

    std::size_t group_size() const { return nx * ny * nv; }
    std::span<const double> mean_of(int group) const {
        return {mean.data() + static_cast<std::size_t>(group) * group_size(), group_size()};
    }
    std::span<const double> std_of(int group) const {
        return {std.data() + static_cast<std::size_t>(group) * group_size(), group_size()};
    }
};

/// Pooled climatology of all time steps of `fields`. Every group needs at
/// least two samples; std is floored at `std_floor`.
Climatology compute_climatology(std::span<const GridField> fields, ClimGrouping grouping,
                                double std_floor = kClimStdFloor);
Climatology compute_climatology(const GridField& field, ClimGrouping grouping,
                                double std_floor = kClimStdFloor);

/// Climatology restricted to time steps with stamps in [begin_hour, end_hour).
Climatology compute_climatology(const GridField& field, ClimGrouping grouping, std::int64_t begin_hour,
                                std::int64_t end_hour, double std_floor = kClimStdFloor);

/// Expand the mean (or std) table onto the time axis of `like`.
GridField clim_mean_field(const Climatology& clim, const GridField& like);
GridField clim_std_field(const Climatology& clim, const GridField& like);

}  // namespace downgen
