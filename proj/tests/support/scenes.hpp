#pragma once

#include "downgen/grid.hpp"
#include "downgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace downgen::scenes {

struct Scene {
    GridField slp;
    GridField wind;
    GridField elevation;
    std::vector<std::pair<double, double>> centres;
};

struct SceneSpec {
    std::size_t hours = 60;
    double depth = 500.0;      // Pa
    double radius = 2.0;       // degrees
    double speed = 0.5;        // degrees per 6 h step
    double wind = 15.0;        // m/s
    double elevation = 0.0;    // m
    double background = 101000.0;
};

// Gaussian depression moving east on a 0.5 degree grid at 6-hourly cadence.
inline Scene make_scene(const SceneSpec& s) {
    const std::size_t nt = s.hours / 6 + 1;
    const auto lon = cell_centers(0.0, 0.5, 80);
    const auto lat = cell_centers(5.0, 0.5, 40);
    Scene out{GridField::make({nt, 80, 40, 1}, TimeAxis{0, 6}, lon, lat, {"slp"}),
              GridField::make({nt, 80, 40, 1}, TimeAxis{0, 6}, lon, lat, {"wind"}),
              GridField::make({1, 80, 40, 1}, TimeAxis{0, 6}, lon, lat, {"z"}),
              {}};
    std::fill(out.elevation.data.begin(), out.elevation.data.end(), s.elevation);
    for (std::size_t t = 0; t < nt; ++t) {
        const double clon = lon[20] + s.speed * static_cast<double>(t);
        const double clat = lat[20];
        out.centres.emplace_back(clon, clat);
        for (std::size_t i = 0; i < 80; ++i) {
            for (std::size_t j = 0; j < 40; ++j) {
                const double d = great_circle_distance(clon, clat, lon[i], lat[j]);
                out.slp.at(t, i, j, 0) = s.background - s.depth * std::exp(-0.5 * d * d / (s.radius * s.radius));
                out.wind.at(t, i, j, 0) = d < 3.0 ? s.wind : 3.0;
            }
        }
    }
    return out;
}

}  // namespace downgen::scenes
