#include "downgen/cyclones.hpp"

#include "downgen/error.hpp"
#include "downgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <tuple>

namespace downgen {

GridField subsample_time(const GridField& field, std::size_t factor) {
    if (factor == 0) {
        throw ValidationError("subsample factor must be >= 1");
    }
    const std::size_t nt = (field.shape.nt + factor - 1) / factor;
    GridField out = GridField::like(field, nt);
    out.time.dt_hours = field.time.dt_hours * static_cast<std::int64_t>(factor);
    for (std::size_t t = 0; t < nt; ++t) {
        const auto src = field.step(t * factor);
        std::copy(src.begin(), src.end(), out.step(t).begin());
    }
    return out;
}

GridField extract_variable(const GridField& field, std::size_t var) {
    if (var >= field.shape.nv) {
        throw ShapeError("extract_variable: index out of range");
    }
    GridField out = GridField::make({field.shape.nt, field.shape.nx, field.shape.ny, 1}, field.time, field.lon, field.lat,
                                    {field.var_names[var]}, field.member_id);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
        out.data[k] = field.data[k * field.shape.nv + var];
    }
    return out;
}

namespace {

void check_inputs(const GridField& slp, const GridField& wind, const GridField& elevation) {
    const auto& s = slp.shape;
    if (s.nv != 1 || wind.shape.nv != 1 || elevation.shape.nv != 1) {
        throw ShapeError("tracker inputs must be single-variable fields");
    }
    if (wind.shape.nt != s.nt || wind.shape.nx != s.nx || wind.shape.ny != s.ny) {
        throw ShapeError("tracker: wind does not match pressure");
    }
    if (elevation.shape.nt < 1 || elevation.shape.nx != s.nx || elevation.shape.ny != s.ny) {
        throw ShapeError("tracker: elevation does not match the grid");
    }
}

// Flood fill through cells below min + delta; the contour is closed when the
// fill neither leaves the radius nor reaches the domain edge.
bool closed_contour(const GridField& slp, std::size_t t, std::size_t ci, std::size_t cj, const TrackerConfig& cfg) {
    const std::size_t nx = slp.shape.nx;
    const std::size_t ny = slp.shape.ny;
    const double threshold = slp.at(t, ci, cj, 0) + cfg.contour_delta;
    std::vector<char> seen(nx * ny, 0);
    std::deque<std::pair<std::size_t, std::size_t>> queue{{ci, cj}};
    seen[ci * ny + cj] = 1;
    while (!queue.empty()) {
        const auto [i, j] = queue.front();
        queue.pop_front();
        if (great_circle_distance(slp.lon[ci], slp.lat[cj], slp.lon[i], slp.lat[j]) > cfg.contour_radius) {
            return false;
        }
        if (i == 0 || j == 0 || i + 1 == nx || j + 1 == ny) {
            return false;
        }
        for (int di = -1; di <= 1; ++di) {
            for (int dj = -1; dj <= 1; ++dj) {
                const std::size_t a = i + static_cast<std::size_t>(di);
                const std::size_t b = j + static_cast<std::size_t>(dj);
                if (!seen[a * ny + b] && slp.at(t, a, b, 0) < threshold) {
                    seen[a * ny + b] = 1;
                    queue.emplace_back(a, b);
                }
            }
        }
    }
    return true;
}

bool strict_local_min(const GridField& slp, std::size_t t, std::size_t i, std::size_t j) {
    const double v = slp.at(t, i, j, 0);
    for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
            if (di == 0 && dj == 0) {
                continue;
            }
            const long a = static_cast<long>(i) + di;
            const long b = static_cast<long>(j) + dj;
            if (a < 0 || b < 0 || a >= static_cast<long>(slp.shape.nx) || b >= static_cast<long>(slp.shape.ny)) {
                continue;
            }
            if (slp.at(t, static_cast<std::size_t>(a), static_cast<std::size_t>(b), 0) <= v) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace

std::vector<TrackPoint> detect_candidates(const GridField& slp, const GridField& wind, const GridField& elevation,
                                          std::size_t t, const TrackerConfig& cfg) {
    check_inputs(slp, wind, elevation);
    if (t >= slp.shape.nt) {
        throw ShapeError("detect_candidates: time index out of range");
    }
    const std::size_t nx = slp.shape.nx;
    const std::size_t ny = slp.shape.ny;
    std::vector<TrackPoint> found;
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < ny; ++j) {
            if (!strict_local_min(slp, t, i, j) || !closed_contour(slp, t, i, j, cfg)) {
                continue;
            }
            TrackPoint p;
            p.time = slp.timestamp(t);
            p.i = i;
            p.j = j;
            p.lon = slp.lon[i];
            p.lat = slp.lat[j];
            p.slp = slp.at(t, i, j, 0);
            p.elevation = elevation.at(0, i, j, 0);
            p.wind_max = -std::numeric_limits<double>::infinity();
            for (std::size_t a = 0; a < nx; ++a) {
                for (std::size_t b = 0; b < ny; ++b) {
                    if (great_circle_distance(p.lon, p.lat, slp.lon[a], slp.lat[b]) <= cfg.wind_radius) {
                        p.wind_max = std::max(p.wind_max, wind.at(t, a, b, 0));
                    }
                }
            }
            found.push_back(p);
        }
    }
    // Merge: deeper minima suppress shallower ones nearby.
    std::stable_sort(found.begin(), found.end(), [](const TrackPoint& a, const TrackPoint& b) { return a.slp < b.slp; });
    std::vector<TrackPoint> kept;
    for (const auto& p : found) {
        const bool near = std::any_of(kept.begin(), kept.end(), [&](const TrackPoint& k) {
            return great_circle_distance(p.lon, p.lat, k.lon, k.lat) <= cfg.merge_radius;
        });
        if (!near) {
            kept.push_back(p);
        }
    }
    return kept;
}

std::vector<CycloneTrack> detect_cyclones(const GridField& slp, const GridField& wind, const GridField& elevation,
                                          const TrackerConfig& cfg) {
    check_inputs(slp, wind, elevation);
    const std::int64_t dt = slp.time.dt_hours;
    std::vector<CycloneTrack> tracks;
    for (std::size_t t = 0; t < slp.shape.nt; ++t) {
        const auto cands = detect_candidates(slp, wind, elevation, t, cfg);
        const std::int64_t now = slp.timestamp(t);
        // Greedy nearest-neighbour assignment to tracks still within the gap allowance.
        std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
        for (std::size_t k = 0; k < tracks.size(); ++k) {
            const auto& last = tracks[k].points.back();
            if (now - last.time > dt + cfg.max_gap_hours) {
                continue;
            }
            for (std::size_t c = 0; c < cands.size(); ++c) {
                const double d = great_circle_distance(last.lon, last.lat, cands[c].lon, cands[c].lat);
                if (d <= cfg.max_step_distance) {
                    pairs.emplace_back(d, k, c);
                }
            }
        }
        std::sort(pairs.begin(), pairs.end());
        std::vector<char> track_used(tracks.size(), 0);
        std::vector<char> cand_used(cands.size(), 0);
        for (const auto& [d, k, c] : pairs) {
            if (!track_used[k] && !cand_used[c]) {
                track_used[k] = 1;
                cand_used[c] = 1;
                tracks[k].points.push_back(cands[c]);
            }
        }
        for (std::size_t c = 0; c < cands.size(); ++c) {
            if (!cand_used[c]) {
                tracks.push_back(CycloneTrack{{cands[c]}});
            }
        }
    }
    std::vector<CycloneTrack> out;
    for (auto& tr : tracks) {
        const auto windy = std::count_if(tr.points.begin(), tr.points.end(),
                                         [&](const TrackPoint& p) { return p.wind_max >= cfg.wind_threshold; });
        const auto low = std::count_if(tr.points.begin(), tr.points.end(),
                                       [&](const TrackPoint& p) { return p.elevation < cfg.elevation_max; });
        if (tr.duration_hours() >= cfg.min_duration_hours && static_cast<std::size_t>(windy) >= cfg.wind_min_points &&
            static_cast<std::size_t>(low) >= cfg.elevation_min_points) {
            out.push_back(std::move(tr));
        }
    }
    return out;
}

std::vector<double> cyclone_density(const std::vector<std::vector<CycloneTrack>>& members, const std::vector<double>& lon,
                                    const std::vector<double>& lat) {
    std::vector<double> out(lon.size() * lat.size(), 0.0);
    if (members.empty()) {
        return out;
    }
    const double norm = 1.0 / (2.0 * std::numbers::pi);
    for (const auto& tracks : members) {
        for (const auto& tr : tracks) {
            for (const auto& p : tr.points) {
                for (std::size_t i = 0; i < lon.size(); ++i) {
                    for (std::size_t j = 0; j < lat.size(); ++j) {
                        const double d = great_circle_distance(p.lon, p.lat, lon[i], lat[j]);
                        out[i * lat.size() + j] += norm * std::exp(-0.5 * d * d);
                    }
                }
            }
        }
    }
    for (auto& v : out) {
        v /= static_cast<double>(members.size());
    }
    return out;
}

}  // namespace downgen
