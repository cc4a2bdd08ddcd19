#pragma once

#include "downgen/climatology.hpp"
#include "downgen/grid.hpp"
#include "downgen/resample.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace downgen {

/// Climatologies of a biased member and of the coarse target, same grouping.
struct QmModel {
    Climatology member;
    Climatology target;
};

/// Fit both climatologies on [begin_hour, end_hour).
QmModel fit_qm(const GridField& member, const GridField& target_coarse, ClimGrouping grouping,
               std::int64_t begin_hour = std::numeric_limits<std::int64_t>::min(),
               std::int64_t end_hour = std::numeric_limits<std::int64_t>::max());

/// Gaussian quantile map of the anomaly: (y - mu_m) / sd_m * sd_t per pixel and group.
GridField qm_bias_correct(const GridField& y, const QmModel& model);

/// Quantile map plus the target climatological mean.
GridField qm_debias(const GridField& y, const QmModel& model);

/// Cubic interpolation of the mapped anomaly plus the fine daily climatological mean.
GridField bcsd_spatial_disagg(const GridField& y_quantile, const Climatology& fine_daily_clim, int spatial_factor);

/// Bi-hourly sequence whose daily means equal x_daily_mean exactly: for every
/// day a historical day with the same day of year (within doy_window) is drawn
/// uniformly from the pool and shifted by the difference of daily means.
GridField bcsd_temporal_disagg(const GridField& x_daily_mean, std::span<const GridField> pool, std::mt19937_64& rng,
                               int doy_window = 0);

struct BcsdConfig {
    ClimGrouping grouping{kDaysPerYear, 1};
    DownsampleSpec downsample;
    int analog_doy_window = 0;
    std::int64_t train_begin_hour = std::numeric_limits<std::int64_t>::min();
    std::int64_t train_end_hour = std::numeric_limits<std::int64_t>::max();

    void validate() const;
};

struct BcsdModel {
    BcsdConfig cfg;
    QmModel qm;
    Climatology fine_daily_clim;
    std::vector<GridField> pool;  ///< fine training sequences
};

/// Fit from a daily coarse member and the fine bi-hourly truth.
BcsdModel fit_bcsd(const GridField& member, const GridField& fine_truth, const BcsdConfig& cfg);

/// Bias correction, spatial disaggregation and temporal disaggregation.
GridField bcsd_pipeline(const GridField& y, const BcsdModel& model, std::mt19937_64& rng);

}  // namespace downgen
