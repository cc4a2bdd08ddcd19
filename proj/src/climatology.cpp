#include "downgen/climatology.hpp"

#include "downgen/error.hpp"
#include "downgen/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace downgen {

int ClimGrouping::doy_bucket(std::int64_t hour) const {
    return day_of_year(hour) * doy_buckets / kDaysPerYear;
}

int ClimGrouping::tod_bucket(std::int64_t hour) const {
    return hour_of_day(hour) * tod_buckets / kHoursPerDay;
}

void ClimGrouping::validate() const {
    if (doy_buckets < 1 || doy_buckets > kDaysPerYear || tod_buckets < 1 || tod_buckets > kHoursPerDay) {
        throw ValidationError("climatology grouping out of range");
    }
}

namespace {

Climatology climatology_impl(std::span<const GridField> fields, ClimGrouping grouping,
                             std::int64_t begin_hour, std::int64_t end_hour, double std_floor) {
    grouping.validate();
    if (fields.empty()) {
        throw ValidationError("compute_climatology: no input fields");
    }
    Climatology c;
    c.grouping = grouping;
    c.nx = fields[0].shape.nx;
    c.ny = fields[0].shape.ny;
    c.nv = fields[0].shape.nv;
    for (const auto& f : fields) {
        if (f.shape.nx != c.nx || f.shape.ny != c.ny || f.shape.nv != c.nv) {
            throw ShapeError("compute_climatology: fields have different spatial shapes");
        }
    }
    const auto G = static_cast<std::size_t>(grouping.size());
    const std::size_t n = c.group_size();
    c.mean.assign(G * n, 0.0);
    c.std.assign(G * n, 0.0);
    c.counts.assign(G, 0);

    // Bucket the time steps once, then reduce each group independently.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> members(G);
    for (std::size_t f = 0; f < fields.size(); ++f) {
        for (std::size_t t = 0; t < fields[f].shape.nt; ++t) {
            const auto stamp = fields[f].timestamp(t);
            if (stamp < begin_hour || stamp >= end_hour) {
                continue;
            }
            members[static_cast<std::size_t>(grouping.group_of(stamp))].emplace_back(f, t);
        }
    }
    for (std::size_t g = 0; g < G; ++g) {
        if (members[g].size() < 2) {
            throw ValidationError("compute_climatology: group " + std::to_string(g) + " has " +
                                  std::to_string(members[g].size()) + " samples (need >= 2)");
        }
    }

    parallel_for(G, [&](std::size_t g) {
        double* mean = c.mean.data() + g * n;
        double* sd = c.std.data() + g * n;
        for (const auto& [f, t] : members[g]) {
            auto row = fields[f].step(t);
            for (std::size_t k = 0; k < n; ++k) {
                mean[k] += row[k];
            }
        }
        const auto cnt = static_cast<double>(members[g].size());
        for (std::size_t k = 0; k < n; ++k) {
            mean[k] /= cnt;
        }
        for (const auto& [f, t] : members[g]) {
            auto row = fields[f].step(t);
            for (std::size_t k = 0; k < n; ++k) {
                const double d = row[k] - mean[k];
                sd[k] += d * d;
            }
        }
        for (std::size_t k = 0; k < n; ++k) {
            sd[k] = std::max(std::sqrt(sd[k] / cnt), std_floor);
        }
        c.counts[g] = members[g].size();
    });
    return c;
}

GridField expand(const Climatology& clim, const GridField& like, bool use_mean) {
    if (like.shape.nx != clim.nx || like.shape.ny != clim.ny || like.shape.nv != clim.nv) {
        throw ShapeError("climatology does not match field shape");
    }
    GridField out = GridField::like(like, like.shape.nt);
    for (std::size_t t = 0; t < like.shape.nt; ++t) {
        const int g = clim.grouping.group_of(like.timestamp(t));
        auto src = use_mean ? clim.mean_of(g) : clim.std_of(g);
        std::copy(src.begin(), src.end(), out.step(t).begin());
    }
    return out;
}

}  // namespace

Climatology compute_climatology(std::span<const GridField> fields, ClimGrouping grouping, double std_floor) {
    return climatology_impl(fields, grouping, std::numeric_limits<std::int64_t>::min(),
                            std::numeric_limits<std::int64_t>::max(), std_floor);
}

Climatology compute_climatology(const GridField& field, ClimGrouping grouping, double std_floor) {
    return compute_climatology(std::span<const GridField>(&field, 1), grouping, std_floor);
}

Climatology compute_climatology(const GridField& field, ClimGrouping grouping, std::int64_t begin_hour,
                                std::int64_t end_hour, double std_floor) {
    return climatology_impl(std::span<const GridField>(&field, 1), grouping, begin_hour, end_hour, std_floor);
}

GridField clim_mean_field(const Climatology& clim, const GridField& like) { return expand(clim, like, true); }

GridField clim_std_field(const Climatology& clim, const GridField& like) { return expand(clim, like, false); }

}  // namespace downgen
