#include "downgen/grid.hpp"

#include "downgen/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace downgen {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

void check_stats_shape(const GridField& field, const EnsembleStats& stats) {
    if (field.shape.nx != stats.nx || field.shape.ny != stats.ny || field.shape.nv != stats.nv) {
        std::ostringstream msg;
        msg << "stats shape [" << stats.nx << "," << stats.ny << "," << stats.nv
            << "] does not match field [" << field.shape.nx << "," << field.shape.ny << ","
            << field.shape.nv << "]";
        throw ShapeError(msg.str());
    }
}

}  // namespace

int day_of_year(std::int64_t hour) {
    return static_cast<int>(floor_mod(floor_div(hour, kHoursPerDay), kDaysPerYear));
}

int hour_of_day(std::int64_t hour) { return static_cast<int>(floor_mod(hour, kHoursPerDay)); }

int doy_distance(int a, int b) {
    const int d = std::abs(a - b) % kDaysPerYear;
    return std::min(d, kDaysPerYear - d);
}

std::int64_t day_index(std::int64_t hour) { return floor_div(hour, kHoursPerDay); }

GridField GridField::make(GridShape shape, TimeAxis time, std::vector<double> lon,
                          std::vector<double> lat, std::vector<std::string> var_names,
                          std::optional<int> member_id) {
    GridField f;
    f.shape = shape;
    f.data.assign(shape.size(), 0.0);
    f.time = time;
    f.lon = std::move(lon);
    f.lat = std::move(lat);
    f.var_names = std::move(var_names);
    f.member_id = member_id;
    if (f.lon.size() != shape.nx || f.lat.size() != shape.ny || f.var_names.size() != shape.nv) {
        throw ShapeError("coordinate lengths do not match field shape");
    }
    return f;
}

GridField GridField::like(const GridField& like, std::size_t nt) {
    GridShape s = like.shape;
    s.nt = nt;
    return make(s, like.time, like.lon, like.lat, like.var_names, like.member_id);
}

GridField GridField::slice_time(std::size_t t0, std::size_t t1) const {
    if (t0 > t1 || t1 > shape.nt) {
        throw ShapeError("time slice out of range");
    }
    GridField out = like(*this, t1 - t0);
    out.time.time0 = time.at(t0);
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(t0 * shape.step_size()),
              data.begin() + static_cast<std::ptrdiff_t>(t1 * shape.step_size()), out.data.begin());
    return out;
}

void GridField::validate() const {
    if (data.size() != shape.size()) {
        throw ShapeError("data payload size does not match shape");
    }
    if (lon.size() != shape.nx || lat.size() != shape.ny || var_names.size() != shape.nv) {
        throw ShapeError("coordinate lengths do not match field shape");
    }
    if (time.dt_hours <= 0) {
        throw ValidationError("time step must be positive");
    }
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw ValidationError("field contains non-finite values");
        }
    }
}

bool GridField::same_layout(const GridField& other) const {
    return shape == other.shape && lon == other.lon && lat == other.lat &&
           var_names == other.var_names;
}

GridField concat_time(std::span<const GridField> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_time needs at least one part");
    }
    std::size_t nt = 0;
    for (const auto& p : parts) {
        if (p.shape.nx != parts[0].shape.nx || p.shape.ny != parts[0].shape.ny ||
            p.shape.nv != parts[0].shape.nv || p.time.dt_hours != parts[0].time.dt_hours) {
            throw ShapeError("concat_time: incompatible parts");
        }
        if (p.time.time0 != parts[0].time.at(nt)) {
            throw ShapeError("concat_time: parts are not contiguous in time");
        }
        nt += p.shape.nt;
    }
    GridField out = GridField::like(parts[0], nt);
    auto it = out.data.begin();
    for (const auto& p : parts) {
        it = std::copy(p.data.begin(), p.data.end(), it);
    }
    return out;
}

std::vector<double> cell_centers(double start, double step, std::size_t n) {
    std::vector<double> c(n);
    for (std::size_t k = 0; k < n; ++k) {
        c[k] = start + (static_cast<double>(k) + 0.5) * step;
    }
    return c;
}

EnsembleStats compute_stats(const GridField& field, std::int64_t begin_hour, std::int64_t end_hour,
                            double std_floor) {
    EnsembleStats s;
    s.nx = field.shape.nx;
    s.ny = field.shape.ny;
    s.nv = field.shape.nv;
    const std::size_t n = s.size();
    s.mean.assign(n, 0.0);
    s.std.assign(n, 0.0);
    std::size_t count = 0;
    for (std::size_t t = 0; t < field.shape.nt; ++t) {
        const auto stamp = field.timestamp(t);
        if (stamp < begin_hour || stamp >= end_hour) {
            continue;
        }
        auto row = field.step(t);
        for (std::size_t k = 0; k < n; ++k) {
            s.mean[k] += row[k];
        }
        ++count;
    }
    if (count == 0) {
        throw ValidationError("compute_stats: no time steps inside the requested period");
    }
    for (auto& m : s.mean) {
        m /= static_cast<double>(count);
    }
    for (std::size_t t = 0; t < field.shape.nt; ++t) {
        const auto stamp = field.timestamp(t);
        if (stamp < begin_hour || stamp >= end_hour) {
            continue;
        }
        auto row = field.step(t);
        for (std::size_t k = 0; k < n; ++k) {
            const double d = row[k] - s.mean[k];
            s.std[k] += d * d;
        }
    }
    for (auto& v : s.std) {
        v = std::max(std::sqrt(v / static_cast<double>(count)), std_floor);
    }
    return s;
}

EnsembleStats compute_stats(const GridField& field, double std_floor) {
    if (field.shape.nt == 0) {
        throw ValidationError("compute_stats: empty field");
    }
    return compute_stats(field, field.timestamp(0), field.timestamp(field.shape.nt - 1) + 1, std_floor);
}

GridField normalize(const GridField& field, const EnsembleStats& stats) {
    check_stats_shape(field, stats);
    GridField out = field;
    const std::size_t n = stats.size();
    for (std::size_t t = 0; t < field.shape.nt; ++t) {
        auto row = out.step(t);
        for (std::size_t k = 0; k < n; ++k) {
            row[k] = (row[k] - stats.mean[k]) / stats.std[k];
        }
    }
    return out;
}

GridField denormalize(const GridField& field, const EnsembleStats& stats) {
    check_stats_shape(field, stats);
    GridField out = field;
    const std::size_t n = stats.size();
    for (std::size_t t = 0; t < field.shape.nt; ++t) {
        auto row = out.step(t);
        for (std::size_t k = 0; k < n; ++k) {
            row[k] = row[k] * stats.std[k] + stats.mean[k];
        }
    }
    return out;
}

}  // namespace downgen
