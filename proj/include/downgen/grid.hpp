#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace downgen {

// Calendar conventions: timestamps are integer hours since the epoch, the fine
// cadence is bi-hourly and every year has 365 days.
inline constexpr int kHoursPerDay = 24;
inline constexpr int kStepsPerDay = 12;
inline constexpr int kHoursPerStep = kHoursPerDay / kStepsPerDay;
inline constexpr int kDaysPerYear = 365;

/// Day of year in [0, 365) for an hour stamp.
int day_of_year(std::int64_t hour);
/// Hour within the day in [0, 24).
int hour_of_day(std::int64_t hour);
/// Circular day-of-year distance in [0, 182].
int doy_distance(int a, int b);

/// Day index since the epoch (floor division).
std::int64_t day_index(std::int64_t hour);

struct GridShape {
    std::size_t nt = 0;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nv = 0;

    std::size_t size() const { return nt * nx * ny * nv; }
    std::size_t step_size() const { return nx * ny * nv; }
    bool operator==(const GridShape&) const = default;
};

/// Uniformly spaced time axis.
struct TimeAxis {
    std::int64_t time0 = 0;
    std::int64_t dt_hours = kHoursPerStep;

    std::int64_t at(std::size_t t) const { return time0 + static_cast<std::int64_t>(t) * dt_hours; }
    bool operator==(const TimeAxis&) const = default;
};

/// Dense [time, lon, lat, variable] array with coordinate metadata.
///
/// Storage is C-order with the variable axis fastest, so one time step is a
/// contiguous block of nx*ny*nv values.
struct GridField {
    GridShape shape;
    std::vector<double> data;
    TimeAxis time;
    std::vector<double> lon;
    std::vector<double> lat;
    std::vector<std::string> var_names;
    std::optional<int> member_id;

    /// Zero-filled field with the given metadata. Coordinates must match the shape.
    static GridField make(GridShape shape, TimeAxis time, std::vector<double> lon,
                          std::vector<double> lat, std::vector<std::string> var_names,
                          std::optional<int> member_id = std::nullopt);

    /// Zero-filled field with the same metadata as `like` but `nt` steps.
    static GridField like(const GridField& like, std::size_t nt);

    std::size_t index(std::size_t t, std::size_t i, std::size_t j, std::size_t v) const {
        return ((t * shape.nx + i) * shape.ny + j) * shape.nv + v;
    }
    double& at(std::size_t t, std::size_t i, std::size_t j, std::size_t v) { return data[index(t, i, j, v)]; }
    double at(std::size_t t, std::size_t i, std::size_t j, std::size_t v) const { return data[index(t, i, j, v)]; }

    std::span<double> step(std::size_t t) {
        return {data.data() + t * shape.step_size(), shape.step_size()};
    }
    std::span<const double> step(std::size_t t) const {
        return {data.data() + t * shape.step_size(), shape.step_size()};
    }

    std::int64_t timestamp(std::size_t t) const { return time.at(t); }

    /// Steps [t0, t1) as a new field.
    GridField slice_time(std::size_t t0, std::size_t t1) const;

    /// Throws ShapeError / ValidationError when an invariant does not hold.
    void validate() const;

    /// True when shape, coordinates and names agree (data is not compared).
    bool same_layout(const GridField& other) const;
};

/// Concatenate fields along time. Spacing must continue uniformly.
GridField concat_time(std::span<const GridField> parts);

/// Evenly spaced cell-center coordinates: start + (k + 0.5) * step.
std::vector<double> cell_centers(double start, double step, std::size_t n);

/// Per-pixel mean and standard deviation fields (training-period statistics).
struct EnsembleStats {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nv = 0;
    std::vector<double> mean;  // [nx, ny, nv]
    std::vector<double> std;   // [nx, ny, nv]

    std::size_t size() const { return nx * ny * nv; }
};

/// Mean / population std over time steps whose stamps fall in [begin_hour, end_hour).
EnsembleStats compute_stats(const GridField& field, std::int64_t begin_hour, std::int64_t end_hour,
                            double std_floor = 1e-6);
/// Statistics over all time steps.
EnsembleStats compute_stats(const GridField& field, double std_floor = 1e-6);

/// (y - mean) / std, pixelwise.
GridField normalize(const GridField& field, const EnsembleStats& stats);
/// Inverse of normalize.
GridField denormalize(const GridField& field, const EnsembleStats& stats);

}  // namespace downgen
