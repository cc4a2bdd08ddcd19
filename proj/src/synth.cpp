#include "downgen/synth.hpp"

#include "downgen/error.hpp"
#include "downgen/fft.hpp"
#include "downgen/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <random>

namespace downgen {

std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

namespace {

// Seasonal, diurnal and meridional sign weights per variable.
constexpr std::array<double, kSynthVars> kSeasonW = {1.0, -0.4, 0.8, -0.5};
constexpr std::array<double, kSynthVars> kDiurnalW = {1.0, 0.6, -0.3, -0.2};
constexpr std::array<double, kSynthVars> kLatW = {1.0, -0.5, 0.8, -0.3};
constexpr double kSeasonPeakDay = 200.0;
constexpr double kDiurnalPeakHour = 15.0;
constexpr double kLapseRate = 0.0065;          // K per metre
constexpr double kHumidityPerKelvin = 0.07;    // fractional humidity increase per K of warming
constexpr double kHoursPerYear = 24.0 * kDaysPerYear;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

/// Filters white noise into a unit-variance field with modal power |k|^-slope.
class SpectralShaper {
public:
    SpectralShaper(std::size_t nx, std::size_t ny, double slope) : nx_(nx), ny_(ny), nyh_(ny / 2 + 1) {
        const std::size_t n = nx * ny;
        real_ = fftw_alloc_real(n);
        spec_ = fftw_alloc_complex(nx * nyh_);
        {
            std::lock_guard lock(fftw_plan_mutex());
            fwd_ = fftw_plan_dft_r2c_2d(static_cast<int>(nx), static_cast<int>(ny), real_, spec_, FFTW_ESTIMATE);
            inv_ = fftw_plan_dft_c2r_2d(static_cast<int>(nx), static_cast<int>(ny), spec_, real_, FFTW_ESTIMATE);
        }
        auto amplitude = [&](std::size_t m, std::size_t q) {
            const double kx = static_cast<double>(m <= nx / 2 ? static_cast<long>(m) : static_cast<long>(m) - static_cast<long>(nx)) / static_cast<double>(nx);
            const double ky = static_cast<double>(q <= ny / 2 ? static_cast<long>(q) : static_cast<long>(q) - static_cast<long>(ny)) / static_cast<double>(ny);
            const double k = std::sqrt(kx * kx + ky * ky);
            return k > 0.0 ? std::pow(k, -slope / 2.0) : 0.0;
        };
        double power = 0.0;
        for (std::size_t m = 0; m < nx; ++m) {
            for (std::size_t q = 0; q < ny; ++q) {
                const double a = amplitude(m, q);
                power += a * a;
            }
        }
        const double norm = std::sqrt(power / static_cast<double>(n));
        amp_.resize(nx * nyh_);
        for (std::size_t m = 0; m < nx; ++m) {
            for (std::size_t q = 0; q < nyh_; ++q) {
                // c2r is unnormalized, so fold 1/N into the filter.
                amp_[m * nyh_ + q] = norm > 0.0 ? amplitude(m, q) / (norm * static_cast<double>(n)) : 0.0;
            }
        }
    }
    SpectralShaper(const SpectralShaper&) = delete;
    SpectralShaper& operator=(const SpectralShaper&) = delete;
    ~SpectralShaper() {
        {
            std::lock_guard lock(fftw_plan_mutex());
            fftw_destroy_plan(fwd_);
            fftw_destroy_plan(inv_);
        }
        fftw_free(real_);
        fftw_free(spec_);
    }

    /// white -> shaped, both nx*ny row-major.
    void apply(const double* white, double* shaped) {
        const std::size_t n = nx_ * ny_;
        std::copy(white, white + n, real_);
        fftw_execute(fwd_);
        for (std::size_t k = 0; k < nx_ * nyh_; ++k) {
            spec_[k][0] *= amp_[k];
            spec_[k][1] *= amp_[k];
        }
        fftw_execute(inv_);
        std::copy(real_, real_ + n, shaped);
    }

private:
    std::size_t nx_;
    std::size_t ny_;
    std::size_t nyh_;
    double* real_ = nullptr;
    fftw_complex* spec_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan inv_ = nullptr;
    std::vector<double> amp_;
};

Eigen::Matrix4d mixing_matrix(double cross_corr_scale) {
    const auto& r = synth_correlation();
    Eigen::Matrix4d R;
    for (std::size_t a = 0; a < kSynthVars; ++a) {
        for (std::size_t b = 0; b < kSynthVars; ++b) {
            R(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                a == b ? 1.0 : cross_corr_scale * r[a * kSynthVars + b];
        }
    }
    Eigen::LLT<Eigen::Matrix4d> llt(R);
    if (llt.info() != Eigen::Success) {
        throw ValidationError("cross-correlation matrix is not positive definite");
    }
    return llt.matrixL();
}

/// One independent realization (truth or one member), advanced step by step.
class StreamGenerator {
public:
    StreamGenerator(const SynthConfig& cfg, const SynthBias& bias, std::uint64_t stream,
                    const std::vector<double>& elevation)
        : cfg_(cfg),
          bias_(bias),
          shaper_(cfg.nx, cfg.ny, cfg.spectral_slope + bias.spectral_tilt),
          mix_(mixing_matrix(bias.cross_corr_scale)),
          rng_(make_rng(cfg.rng_seed, stream)),
          elevation_(elevation) {
        const std::size_t n = cfg.nx * cfg.ny;
        phi_ = std::exp(-static_cast<double>(kHoursPerStep) / (cfg.memory_days * kHoursPerDay));
        state_.assign(kSynthVars * n, 0.0);
        shaped_.assign(kSynthVars * n, 0.0);
        for (auto& s : state_) {
            s = normal_(rng_);
        }
        started_ = false;
    }

    /// Write the step at `hour` into out[nx*ny*nv] (variable fastest).
    void step(std::int64_t hour, double* out) {
        const std::size_t n = cfg_.nx * cfg_.ny;
        if (started_) {
            const double innov = std::sqrt(1.0 - phi_ * phi_);
            for (auto& s : state_) {
                s = phi_ * s + innov * normal_(rng_);
            }
        }
        started_ = true;
        for (std::size_t v = 0; v < kSynthVars; ++v) {
            shaper_.apply(state_.data() + v * n, shaped_.data() + v * n);
        }
        const auto& prof = var_profiles();
        const double doy = static_cast<double>(day_of_year(hour)) + hour_of_day(hour) / 24.0;
        const double season_phase = 2.0 * std::numbers::pi * (doy - kSeasonPeakDay - bias_.season_phase_shift) / kDaysPerYear;
        const double diurnal = std::cos(2.0 * std::numbers::pi * (hour_of_day(hour) - kDiurnalPeakHour) / 24.0);
        const double warming = cfg_.trend_per_year * static_cast<double>(hour) / kHoursPerYear;
        const double amp = cfg_.noise_amp * bias_.var_scale;
        const double season = std::cos(season_phase);
        for (std::size_t i = 0; i < cfg_.nx; ++i) {
            for (std::size_t j = 0; j < cfg_.ny; ++j) {
                const std::size_t p = i * cfg_.ny + j;
                const double lat_frac = (static_cast<double>(j) + 0.5) / static_cast<double>(cfg_.ny);
                double noise[kSynthVars];
                for (std::size_t a = 0; a < kSynthVars; ++a) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b <= a; ++b) {
                        acc += mix_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * shaped_[b * n + p];
                    }
                    noise[a] = acc;
                }
                double* cell = out + p * kSynthVars;
                for (std::size_t v = 0; v < kSynthVars; ++v) {
                    const double sc = prof[v].scale;
                    double val = prof[v].base;
                    val += cfg_.lat_gradient * kLatW[v] * sc * (0.5 - lat_frac);
                    val += cfg_.seasonal_amp * kSeasonW[v] * sc * (1.0 + 0.5 * lat_frac) * season;
                    val += cfg_.diurnal_amp * kDiurnalW[v] * sc * diurnal;
                    val += bias_.mean_offset * sc;
                    val += amp * sc * noise[v];
                    cell[v] = val;
                }
                cell[kTemperature] += warming - kLapseRate * elevation_[p];
                cell[kHumidity] += kHumidityPerKelvin * prof[kHumidity].base * warming;
                cell[kWindSpeed] = std::max(cell[kWindSpeed], 0.0);
                cell[kHumidity] = std::max(cell[kHumidity], 0.0);
            }
        }
    }

private:
    const SynthConfig& cfg_;
    SynthBias bias_;
    SpectralShaper shaper_;
    Eigen::Matrix4d mix_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    const std::vector<double>& elevation_;
    double phi_ = 0.0;
    bool started_ = false;
    std::vector<double> state_;
    std::vector<double> shaped_;
};

struct StreamOutput {
    GridField fine;    // filled only when requested
    GridField coarse;
};

StreamOutput run_stream(const SynthConfig& cfg, const SynthBias& bias, std::uint64_t stream,
                        const std::vector<double>& elevation, bool keep_fine, std::optional<int> member_id) {
    const std::size_t nt = cfg.n_days * kStepsPerDay;
    const auto w = static_cast<std::size_t>(cfg.downsample.temporal_window);
    StreamGenerator gen(cfg, bias, stream, elevation);
    GridField chunk = GridField::make({w, cfg.nx, cfg.ny, kSynthVars}, TimeAxis{cfg.time0, kHoursPerStep}, cfg.lon(),
                                      cfg.lat(), synth_var_names(), member_id);
    StreamOutput out;
    if (keep_fine) {
        out.fine = GridField::make({nt, cfg.nx, cfg.ny, kSynthVars}, TimeAxis{cfg.time0, kHoursPerStep}, cfg.lon(),
                                   cfg.lat(), synth_var_names(), member_id);
    }
    std::vector<GridField> parts;
    parts.reserve(nt / w);
    for (std::size_t c = 0; c < nt / w; ++c) {
        chunk.time.time0 = cfg.time0 + static_cast<std::int64_t>(c * w) * kHoursPerStep;
        for (std::size_t k = 0; k < w; ++k) {
            gen.step(chunk.timestamp(k), chunk.step(k).data());
        }
        if (keep_fine) {
            std::copy(chunk.data.begin(), chunk.data.end(), out.fine.step(c * w).begin());
        }
        parts.push_back(coarsen(chunk, cfg.downsample));
    }
    out.coarse = concat_time(parts);
    return out;
}

}  // namespace

std::vector<std::string> synth_var_names() {
    return {"temperature", "wind_speed", "specific_humidity", "sea_level_pressure"};
}

const std::array<VarProfile, kSynthVars>& var_profiles() {
    static const std::array<VarProfile, kSynthVars> p = {{
        {295.0, 3.0},       // K
        {6.0, 2.0},         // m/s
        {0.012, 0.002},     // kg/kg
        {101300.0, 300.0},  // Pa
    }};
    return p;
}

const std::array<double, kSynthVars * kSynthVars>& synth_correlation() {
    static const std::array<double, kSynthVars * kSynthVars> r = {
        1.0,  -0.3, 0.6,  -0.4,  //
        -0.3, 1.0,  -0.2, -0.5,  //
        0.6,  -0.2, 1.0,  -0.3,  //
        -0.4, -0.5, -0.3, 1.0,
    };
    return r;
}

void SynthBias::validate() const {
    if (!(var_scale > 0.0)) {
        throw ValidationError("bias.var_scale must be > 0");
    }
    if (cross_corr_scale < 0.0 || cross_corr_scale > 1.0) {
        throw ValidationError("bias.cross_corr_scale must lie in [0, 1]");
    }
}

void SynthConfig::validate() const {
    downsample.validate();
    bias.validate();
    if (nx == 0 || ny == 0 || n_days == 0) {
        throw ValidationError("synth grid and n_days must be positive");
    }
    const auto f = static_cast<std::size_t>(downsample.spatial_factor);
    if (nx % f != 0 || ny % f != 0 || (n_days * kStepsPerDay) % static_cast<std::size_t>(downsample.temporal_window) != 0) {
        throw ValidationError("synth grid is not divisible by the downsampling factors");
    }
    if (noise_amp < 0.0 || seasonal_amp < 0.0 || diurnal_amp < 0.0 || hill_height < 0.0 || lat_gradient < 0.0) {
        throw ValidationError("synth amplitudes must be >= 0");
    }
    if (!(memory_days > 0.0)) {
        throw ValidationError("synth memory_days must be > 0");
    }
    if (time0 % kHoursPerDay != 0) {
        throw ValidationError("synth time0 must fall on a day boundary");
    }
}

std::vector<double> SynthConfig::lon() const { return cell_centers(lon0, grid_step, nx); }
std::vector<double> SynthConfig::lat() const { return cell_centers(lat0, grid_step, ny); }

GridField synth_elevation(const SynthConfig& cfg) {
    GridField e = GridField::make({1, cfg.nx, cfg.ny, 1}, TimeAxis{cfg.time0, kHoursPerStep}, cfg.lon(), cfg.lat(),
                                  {"elevation"});
    const double cx = 0.5 * static_cast<double>(cfg.nx);
    const double cy = 0.5 * static_cast<double>(cfg.ny);
    const double radius = static_cast<double>(std::min(cfg.nx, cfg.ny)) / 5.0;
    for (std::size_t i = 0; i < cfg.nx; ++i) {
        for (std::size_t j = 0; j < cfg.ny; ++j) {
            const double dx = static_cast<double>(i) + 0.5 - cx;
            const double dy = static_cast<double>(j) + 0.5 - cy;
            e.at(0, i, j, 0) = cfg.hill_height * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
        }
    }
    return e;
}

SynthPair gen_synth_pair(const SynthConfig& cfg) {
    cfg.validate();
    const GridField elev = synth_elevation(cfg);
    const std::size_t streams = cfg.n_members + 1;
    std::vector<StreamOutput> outputs(streams);
    parallel_for(streams, [&](std::size_t s) {
        if (s == 0) {
            outputs[0] = run_stream(cfg, SynthBias{}, 0, elev.data, cfg.keep_fine, std::nullopt);
        } else {
            outputs[s] = run_stream(cfg, cfg.bias, s, elev.data, false, static_cast<int>(s - 1));
        }
    });
    SynthPair pair;
    pair.fine_truth = std::move(outputs[0].fine);
    pair.coarse_truth = std::move(outputs[0].coarse);
    for (std::size_t s = 1; s < streams; ++s) {
        pair.coarse_biased.push_back(std::move(outputs[s].coarse));
    }
    pair.elevation_fine = elev;
    pair.elevation_coarse = coarsen_spatial(elev, cfg.downsample.spatial_factor);
    return pair;
}

GridField gen_fine_ensemble(const SynthConfig& cfg) {
    cfg.validate();
    const GridField elev = synth_elevation(cfg);
    return run_stream(cfg, SynthBias{}, 0, elev.data, true, std::nullopt).fine;
}

std::vector<GridField> gen_biased_coarse_ensemble(const SynthConfig& cfg, const GridField& fine) {
    SynthConfig c = cfg;
    c.time0 = fine.time.time0;
    if (fine.time.dt_hours != kHoursPerStep || fine.shape.nt % kStepsPerDay != 0) {
        throw ShapeError("gen_biased_coarse_ensemble: fine field must cover whole days at the base cadence");
    }
    c.n_days = fine.shape.nt / kStepsPerDay;
    c.validate();
    const GridField elev = synth_elevation(c);
    std::vector<GridField> members(c.n_members);
    parallel_for(c.n_members, [&](std::size_t m) {
        members[m] = run_stream(c, c.bias, m + 1, elev.data, false, static_cast<int>(m)).coarse;
    });
    return members;
}

std::vector<double> spectral_noise_field(std::size_t nx, std::size_t ny, double slope, std::uint64_t seed) {
    SpectralShaper shaper(nx, ny, slope);
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> white(nx * ny);
    for (auto& w : white) {
        w = normal(rng);
    }
    std::vector<double> out(nx * ny);
    shaper.apply(white.data(), out.data());
    return out;
}

}  // namespace downgen
