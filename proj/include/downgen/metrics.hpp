#pragma once

#include "downgen/climatology.hpp"
#include "downgen/grid.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace downgen {

// ---- derived physical variables ------------------------------------------------------

/// Surface pressure (Pa) from sea-level pressure P0 (Pa), temperature T (K)
/// and surface height z_s (m) with the barotropic formula.
double surface_pressure(double p0, double t, double z_s);

/// Saturation vapour pressure (hPa), Magnus form.
double saturation_vapor_pressure(double t);

/// Relative humidity in percent from specific humidity q (kg/kg), T (K) and
/// pressure P (Pa). Not clipped.
double relative_humidity(double q, double t, double p);

/// Heat index in Fahrenheit from temperature in Fahrenheit and RH in percent.
double heat_index_f(double t_f, double rh);
/// Heat index in Kelvin from temperature in Kelvin and RH in percent.
double heat_index(double t, double rh);

double kelvin_to_fahrenheit(double t);
double fahrenheit_to_kelvin(double f);

/// Advisory thresholds (K): caution, extreme caution, danger, extreme danger.
inline constexpr std::array<double, 4> kHeatAdvisoryK{300.0, 305.0, 312.6, 325.0};
/// Number of advisory thresholds exceeded by a heat index in Kelvin.
int heat_advisory_level(double hi);

/// Adds relative humidity and heat index to a field holding temperature,
/// wind, specific humidity and sea-level pressure. elevation is [1, nx, ny, 1].
GridField with_derived_variables(const GridField& field, const GridField& elevation);

// ---- samples -----------------------------------------------------------------------------

/// n samples of a d-dimensional quantity, row-major [n, d].
struct SampleSet {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> values;

    double at(std::size_t k, std::size_t dim) const { return values[k * d + dim]; }
    /// Samples of one dimension.
    std::vector<double> column(std::size_t dim) const;
};

/// One variable of every time step of every field; dimensions are pixels.
SampleSet samples_of(std::span<const GridField> fields, std::size_t var);
SampleSet samples_of(const GridField& field, std::size_t var);

// ---- pointwise distribution errors -------------------------------------------------

/// Per-dimension |mean(pred) - mean(ref)|.
std::vector<double> mab_field(const SampleSet& pred, const SampleSet& ref);
double mab(const SampleSet& pred, const SampleSet& ref);

/// 1-D Wasserstein-1 distance: integral of |F - G| over the union support.
double wasserstein1(std::span<const double> pred, std::span<const double> ref);
std::vector<double> wasserstein1_field(const SampleSet& pred, const SampleSet& ref);
double wasserstein1(const SampleSet& pred, const SampleSet& ref);

/// Percentile with linear interpolation between order statistics; p in (0, 100).
double percentile(std::span<const double> x, double p);
std::vector<double> percentile_error_field(const SampleSet& pred, const SampleSet& ref, double p);
double percentile_mae(const SampleSet& pred, const SampleSet& ref, double p);

// ---- correlations -----------------------------------------------------------------------

/// Pearson correlation; NaN when either series has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);
/// Spearman rank correlation (average ranks for ties).
double spearman(std::span<const double> a, std::span<const double> b);

/// Correlations over time between the centre pixel and every pixel of the box
/// [ci - half, ci + half] x [cj - half, cj + half] clipped to the grid.
struct CorrelationMatrix {
    std::size_t rows = 0;  ///< along lon
    std::size_t cols = 0;  ///< along lat
    std::vector<double> rho;
    std::size_t excluded = 0;  ///< zero-variance pixels (rho is NaN there)
};
CorrelationMatrix spatial_correlation(std::span<const GridField> fields, std::size_t var, std::size_t ci,
                                      std::size_t cj, std::size_t half);

/// Frobenius norm of the difference of the two correlation matrices over the
/// pixels valid in both.
double spatial_corr_error(const CorrelationMatrix& pred, const CorrelationMatrix& ref);

// ---- temporal spectra -------------------------------------------------------------------

/// Mean-removed periodogram |X(f_k)|^2 / T for k = 1 .. n/2, T = n dt.
std::vector<double> periodogram(std::span<const double> x, double dt = 1.0);

/// Member-averaged periodogram of equally long series.
std::vector<double> ensemble_psd(const std::vector<std::vector<double>>& series, double dt = 1.0);

/// Mean |log(psd_pred) - log(psd_ref)| with both spectra floored at `floor`.
double psd_log_error(std::span<const double> psd_pred, std::span<const double> psd_ref, double floor = 1e-12);
double temporal_psd_error(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& ref,
                          double dt = 1.0);

/// Time series of one variable at every pixel of every field.
std::vector<std::vector<double>> pixel_series(std::span<const GridField> fields, std::size_t var);

// ---- compound events --------------------------------------------------------------------

/// Fraction of days that belong to a run of at least h consecutive days with
/// value > threshold + delta.
double heat_streak_prob(std::span<const double> tmax, std::span<const double> threshold, std::size_t h, double delta);

/// Daily maximum of every variable over whole days of a sub-daily field.
GridField daily_max(const GridField& field);

/// Per-pixel heat streak probability of one variable of a daily field; the
/// threshold is the climatological mean of its group.
std::vector<double> heat_streak_field(std::span<const GridField> daily, std::size_t var, const Climatology& clim,
                                      std::size_t h, double delta);

/// Mean squared difference of two per-pixel maps.
double mean_squared_difference(std::span<const double> a, std::span<const double> b);

// ---- geometry ------------------------------------------------------------------------------

/// Central angle in degrees between (lon, lat) points given in degrees.
double great_circle_distance(double lon1, double lat1, double lon2, double lat2);

// ---- reports ----------------------------------------------------------------------------------

struct MetricEntry {
    std::string metric;
    std::string variable;
    std::string method;
    std::string units;
    double value = 0.0;
};

/// Named scalar results plus optional per-pixel maps.
struct MetricReport {
    std::string period;
    std::vector<MetricEntry> entries;

    void add(std::string metric, std::string variable, std::string method, std::string units, double value);
    /// One row per (metric, variable, method).
    void write_csv(const std::filesystem::path& path) const;
    /// One row per (metric, variable), one column per method in `methods`.
    void write_comparison_csv(const std::filesystem::path& path, const std::vector<std::string>& methods) const;
};

}  // namespace downgen
