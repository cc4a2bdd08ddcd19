#pragma once

#include "downgen/grid.hpp"
#include "downgen/resample.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace downgen {

/// Variable order shared by every synthetic field.
enum SynthVar : std::size_t { kTemperature = 0, kWindSpeed = 1, kHumidity = 2, kPressure = 3 };
inline constexpr std::size_t kSynthVars = 4;

std::vector<std::string> synth_var_names();

/// Distortions applied to the biased "climate model" members.
struct SynthBias {
    double mean_offset = 0.0;         ///< added offset, in units of each variable's scale
    double var_scale = 1.0;           ///< multiplies the noise amplitude
    double spectral_tilt = 0.0;       ///< added to the spectral slope
    double season_phase_shift = 0.0;  ///< days
    double cross_corr_scale = 1.0;    ///< off-diagonal correlations are multiplied by this

    void validate() const;
};

struct SynthConfig {
    std::size_t nx = 32;
    std::size_t ny = 16;
    double lon0 = 0.0;
    double lat0 = 20.0;
    double grid_step = 1.0;  ///< degrees per fine cell
    std::size_t n_days = 365;
    std::size_t n_members = 2;
    std::int64_t time0 = 0;  ///< hours since epoch of the first step

    double spectral_slope = 3.0;
    double noise_amp = 1.0;        ///< noise std in units of each variable's scale
    double memory_days = 1.0;      ///< AR(1) e-folding time of the noise
    double seasonal_amp = 1.5;     ///< in scale units
    double diurnal_amp = 0.5;      ///< in scale units
    double lat_gradient = 1.0;     ///< pole-to-equator contrast across the domain, scale units
    double trend_per_year = 0.0;   ///< temperature trend in K / year
    double hill_height = 1200.0;   ///< height of the Gaussian hill in metres

    SynthBias bias;
    DownsampleSpec downsample;
    std::uint64_t rng_seed = 1234;
    bool keep_fine = true;  ///< store the fine truth (otherwise only its coarsened form)

    void validate() const;
    std::vector<double> lon() const;
    std::vector<double> lat() const;
};

/// Per-variable physical base value and scale.
struct VarProfile {
    double base;
    double scale;
};
const std::array<VarProfile, kSynthVars>& var_profiles();

/// Target correlation matrix of the four noise components (row-major 4x4).
const std::array<double, kSynthVars * kSynthVars>& synth_correlation();

/// Unpaired synthetic data set.
struct SynthPair {
    GridField fine_truth;                 ///< empty when keep_fine is false
    GridField coarse_truth;               ///< coarsen(fine_truth), computed on the fly
    std::vector<GridField> coarse_biased; ///< one per member
    GridField elevation_fine;             ///< single step, one variable (metres)
    GridField elevation_coarse;
};

/// Static elevation field (Gaussian hill) on the fine grid.
GridField synth_elevation(const SynthConfig& cfg);

/// Fine "weather truth": trend, seasonal, diurnal and spatially correlated noise.
GridField gen_fine_ensemble(const SynthConfig& cfg);

/// Biased coarse members. `fine` supplies only the calendar; every member is
/// an independent draw.
std::vector<GridField> gen_biased_coarse_ensemble(const SynthConfig& cfg, const GridField& fine);

/// Truth (fine and coarse) and members in one pass, generated day by day so
/// the fine field need not be kept in memory.
SynthPair gen_synth_pair(const SynthConfig& cfg);

/// One unit-variance periodic noise field with isotropic modal power |k|^-slope
/// (zero mean mode). Exposed for spectrum tests.
std::vector<double> spectral_noise_field(std::size_t nx, std::size_t ny, double slope, std::uint64_t seed);

}  // namespace downgen
