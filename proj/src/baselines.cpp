#include "downgen/baselines.hpp"

#include "downgen/error.hpp"

#include <algorithm>
#include <string>

namespace downgen {

namespace {

void check_clim(const Climatology& clim, const GridField& field, const char* what) {
    if (clim.nx != field.shape.nx || clim.ny != field.shape.ny || clim.nv != field.shape.nv) {
        throw ShapeError(std::string(what) + ": climatology grid does not match the field");
    }
}

// Whole days of `field` whose first stamp lies in [begin, end).
GridField period_days(const GridField& field, std::int64_t begin, std::int64_t end) {
    const auto spd = static_cast<std::size_t>(kHoursPerDay / field.time.dt_hours);
    std::size_t first = field.shape.nt;
    std::size_t last = 0;
    for (std::size_t d = 0; (d + 1) * spd <= field.shape.nt; ++d) {
        const auto stamp = field.timestamp(d * spd);
        if (stamp >= begin && stamp < end) {
            first = std::min(first, d);
            last = d + 1;
        }
    }
    if (first >= last) {
        throw ValidationError("training period contains no whole day");
    }
    return field.slice_time(first * spd, last * spd);
}

}  // namespace

QmModel fit_qm(const GridField& member, const GridField& target_coarse, ClimGrouping grouping, std::int64_t begin_hour,
               std::int64_t end_hour) {
    if (member.shape.nx != target_coarse.shape.nx || member.shape.ny != target_coarse.shape.ny ||
        member.shape.nv != target_coarse.shape.nv) {
        throw ShapeError("fit_qm: member and target grids differ");
    }
    return QmModel{compute_climatology(member, grouping, begin_hour, end_hour),
                   compute_climatology(target_coarse, grouping, begin_hour, end_hour)};
}

GridField qm_bias_correct(const GridField& y, const QmModel& model) {
    check_clim(model.member, y, "qm");
    check_clim(model.target, y, "qm");
    if (model.member.grouping.size() != model.target.grouping.size()) {
        throw ValidationError("qm: member and target climatologies use different groupings");
    }
    GridField out = y;
    const std::size_t n = y.shape.step_size();
    for (std::size_t t = 0; t < y.shape.nt; ++t) {
        const int g = model.member.grouping.group_of(y.timestamp(t));
        const auto mm = model.member.mean_of(g);
        const auto ms = model.member.std_of(g);
        const auto ts = model.target.std_of(g);
        auto dst = out.step(t);
        for (std::size_t k = 0; k < n; ++k) {
            dst[k] = (dst[k] - mm[k]) / ms[k] * ts[k];
        }
    }
    return out;
}

GridField qm_debias(const GridField& y, const QmModel& model) {
    GridField out = qm_bias_correct(y, model);
    const std::size_t n = y.shape.step_size();
    for (std::size_t t = 0; t < y.shape.nt; ++t) {
        const auto tm = model.target.mean_of(model.target.grouping.group_of(y.timestamp(t)));
        auto dst = out.step(t);
        for (std::size_t k = 0; k < n; ++k) {
            dst[k] += tm[k];
        }
    }
    return out;
}

GridField bcsd_spatial_disagg(const GridField& y_quantile, const Climatology& fine_daily_clim, int spatial_factor) {
    GridField out = interp_spatial(y_quantile, spatial_factor);
    check_clim(fine_daily_clim, out, "bcsd spatial disaggregation");
    const GridField cm = clim_mean_field(fine_daily_clim, out);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += cm.data[i];
    }
    return out;
}

GridField bcsd_temporal_disagg(const GridField& x_daily_mean, std::span<const GridField> pool, std::mt19937_64& rng,
                               int doy_window) {
    if (x_daily_mean.time.dt_hours != kHoursPerDay) {
        throw ShapeError("temporal disaggregation expects daily means");
    }
    if (pool.empty()) {
        throw ValidationError("temporal disaggregation: empty analog pool");
    }
    const std::int64_t dt = pool.front().time.dt_hours;
    if (dt <= 0 || kHoursPerDay % dt != 0) {
        throw ShapeError("temporal disaggregation: pool time step must divide a day");
    }
    const auto spd = static_cast<std::size_t>(kHoursPerDay / dt);
    struct Analog {
        std::size_t field;
        std::size_t day;
        int doy;
    };
    std::vector<Analog> analogs;
    for (std::size_t p = 0; p < pool.size(); ++p) {
        const auto& f = pool[p];
        if (f.time.dt_hours != dt || f.shape.nx != x_daily_mean.shape.nx || f.shape.ny != x_daily_mean.shape.ny ||
            f.shape.nv != x_daily_mean.shape.nv) {
            throw ShapeError("temporal disaggregation: pool field " + std::to_string(p) + " does not match the output grid");
        }
        for (std::size_t d = 0; (d + 1) * spd <= f.shape.nt; ++d) {
            analogs.push_back({p, d, day_of_year(f.timestamp(d * spd))});
        }
    }

    GridField out = GridField::make({x_daily_mean.shape.nt * spd, x_daily_mean.shape.nx, x_daily_mean.shape.ny,
                                     x_daily_mean.shape.nv},
                                    TimeAxis{x_daily_mean.time.time0, dt}, x_daily_mean.lon, x_daily_mean.lat,
                                    x_daily_mean.var_names, x_daily_mean.member_id);
    const std::size_t n = x_daily_mean.shape.step_size();
    std::vector<const Analog*> candidates;
    std::vector<double> hist_mean(n);
    for (std::size_t d = 0; d < x_daily_mean.shape.nt; ++d) {
        const int doy = day_of_year(x_daily_mean.timestamp(d));
        candidates.clear();
        for (const auto& a : analogs) {
            if (doy_distance(a.doy, doy) <= doy_window) {
                candidates.push_back(&a);
            }
        }
        if (candidates.empty()) {
            throw ValidationError("temporal disaggregation: no analog for day of year " + std::to_string(doy));
        }
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        const Analog& a = *candidates[pick(rng)];
        const GridField& src = pool[a.field];
        std::fill(hist_mean.begin(), hist_mean.end(), 0.0);
        for (std::size_t s = 0; s < spd; ++s) {
            const auto h = src.step(a.day * spd + s);
            for (std::size_t k = 0; k < n; ++k) {
                hist_mean[k] += h[k];
            }
        }
        for (auto& m : hist_mean) {
            m /= static_cast<double>(spd);
        }
        const auto target = x_daily_mean.step(d);
        for (std::size_t s = 0; s < spd; ++s) {
            const auto h = src.step(a.day * spd + s);
            auto dst = out.step(d * spd + s);
            for (std::size_t k = 0; k < n; ++k) {
                dst[k] = h[k] - hist_mean[k] + target[k];
            }
        }
    }
    return out;
}

void BcsdConfig::validate() const {
    grouping.validate();
    downsample.validate();
    if (grouping.tod_buckets != 1) {
        throw ValidationError("BCSD works on daily data; time-of-day buckets must be 1");
    }
    if (analog_doy_window < 0) {
        throw ValidationError("analog day-of-year window must be >= 0");
    }
}

BcsdModel fit_bcsd(const GridField& member, const GridField& fine_truth, const BcsdConfig& cfg) {
    cfg.validate();
    const GridField target_coarse = coarsen(fine_truth, cfg.downsample);
    const GridField fine_daily = coarsen(fine_truth, DownsampleSpec{1, cfg.downsample.temporal_window});
    BcsdModel m;
    m.cfg = cfg;
    m.qm = fit_qm(member, target_coarse, cfg.grouping, cfg.train_begin_hour, cfg.train_end_hour);
    m.fine_daily_clim = compute_climatology(fine_daily, cfg.grouping, cfg.train_begin_hour, cfg.train_end_hour);
    m.pool.push_back(period_days(fine_truth, cfg.train_begin_hour, cfg.train_end_hour));
    return m;
}

GridField bcsd_pipeline(const GridField& y, const BcsdModel& model, std::mt19937_64& rng) {
    const GridField yq = qm_bias_correct(y, model.qm);
    const GridField x_dm = bcsd_spatial_disagg(yq, model.fine_daily_clim, model.cfg.downsample.spatial_factor);
    return bcsd_temporal_disagg(x_dm, model.pool, rng, model.cfg.analog_doy_window);
}

}  // namespace downgen
