#pragma once

#include "downgen/grid.hpp"

#include <cstdint>
#include <vector>

namespace downgen {

struct TrackPoint {
    std::int64_t time = 0;  ///< hours
    std::size_t i = 0;
    std::size_t j = 0;
    double lon = 0.0;
    double lat = 0.0;
    double slp = 0.0;        ///< Pa
    double wind_max = 0.0;   ///< m/s, maximum within the wind radius
    double elevation = 0.0;  ///< m
};

struct CycloneTrack {
    std::vector<TrackPoint> points;

    std::int64_t duration_hours() const {
        return points.empty() ? 0 : points.back().time - points.front().time;
    }
};

/// Detection and stitching thresholds; distances are great-circle degrees.
struct TrackerConfig {
    double contour_delta = 240.0;   ///< required SLP rise (Pa) ...
    double contour_radius = 4.0;    ///< ... within this distance
    double merge_radius = 2.0;
    double wind_radius = 2.0;
    double wind_threshold = 10.0;
    std::size_t wind_min_points = 8;
    double elevation_max = 100.0;
    std::size_t elevation_min_points = 8;
    std::int64_t min_duration_hours = 54;
    std::int64_t max_gap_hours = 24;
    double max_step_distance = 8.0;
};

/// Every `factor`-th time step (6-hourly snapshots from bi-hourly data with factor 3).
GridField subsample_time(const GridField& field, std::size_t factor);

/// One variable as a single-variable field.
GridField extract_variable(const GridField& field, std::size_t var);

/// Pressure minima at one time step that pass the closed-contour test, after
/// merging. slp and wind are one-variable fields; elevation has one step.
std::vector<TrackPoint> detect_candidates(const GridField& slp, const GridField& wind, const GridField& elevation,
                                          std::size_t t, const TrackerConfig& cfg = {});

/// Candidates at every step stitched into tracks and filtered by duration,
/// wind and elevation criteria.
std::vector<CycloneTrack> detect_cyclones(const GridField& slp, const GridField& wind, const GridField& elevation,
                                          const TrackerConfig& cfg = {});

/// Track density on the (lon, lat) grid: each track point contributes a
/// spherical Gaussian of unit standard deviation (per square degree), averaged
/// over members. Returns [nx * ny] with lat fastest.
std::vector<double> cyclone_density(const std::vector<std::vector<CycloneTrack>>& members, const std::vector<double>& lon,
                                    const std::vector<double>& lat);

}  // namespace downgen
