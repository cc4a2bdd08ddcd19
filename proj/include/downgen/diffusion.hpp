#pragma once

#include "downgen/climatology.hpp"
#include "downgen/grid.hpp"
#include "downgen/nn.hpp"
#include "downgen/optim.hpp"
#include "downgen/resample.hpp"
#include "downgen/unet.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace downgen {

// ---- noise schedules --------------------------------------------------------------

inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kSigmaMax = 80.0;

enum class ScheduleKind { kEdm, kTangent };

ScheduleKind parse_schedule(const std::string& name);
std::string schedule_name(ScheduleKind kind);

/// Tangent schedule sigma(tau) for tau in [0, 1]: 0 at tau = 0, sigma_max at tau = 1.
double tangent_sigma(double tau, double sigma_max = kSigmaMax);

/// (smax^(1/rho) + i/(n-1) (smin^(1/rho) - smax^(1/rho)))^rho for i = 0..n-1.
std::vector<double> sigma_steps_edm(std::size_t n = 256, double sigma_min = kSigmaMin, double sigma_max = kSigmaMax,
                                    double rho = 7.0);
/// tangent_sigma on tau_i = 1 - i/(n-1); ends at exactly zero.
std::vector<double> sigma_steps_tangent(std::size_t n = 256, double sigma_max = kSigmaMax);
std::vector<double> sigma_steps(ScheduleKind kind, std::size_t n, double sigma_min, double sigma_max);

/// Draw from LogUniform(sigma_min, sigma_max).
double sample_training_sigma(std::mt19937_64& rng, double sigma_min = kSigmaMin, double sigma_max = kSigmaMax);

/// Noise weighting 1 + 1/sigma^2.
double loss_weight(double sigma);

/// z0 + sigma * eps.
nn::Tensor perturb(const nn::Tensor& z0, double sigma, const nn::Tensor& eps);

/// One step of the first-order exponential solver from sigma to sigma_prev.
/// sigma_prev may be zero (the step then returns d).
void exponential_step(std::span<double> z, std::span<const double> d, std::span<const double> eps, double sigma,
                      double sigma_prev);

/// Coefficients (a, b, c) of z, D and eps in the exponential step.
struct StepCoefficients {
    double a;
    double b;
    double c;
};
StepCoefficients exponential_coefficients(double sigma, double sigma_prev);

// ---- preconditioned denoiser ------------------------------------------------------------

struct Preconditioning {
    double c_skip;
    double c_out;
    double c_in;
    double c_noise;
};
Preconditioning precondition(double sigma);

/// D(z, sigma, cond) = c_skip z + c_out F(c_in z, c_noise, cond) with F a ConvUNet.
class Denoiser {
public:
    /// `net.in_channels` and `net.out_channels` must agree.
    explicit Denoiser(nn::UNetConfig net, std::string prefix = "denoiser");

    /// z: [N, C, H, W], one sigma per sample, cond: [N, Cc, H, W].
    nn::Var forward(nn::Graph& g, const nn::Tensor& z, const std::vector<double>& sigma, nn::Var cond) const;
    /// Inference at a single noise level; a null cond uses the zero tensor.
    nn::Tensor operator()(const nn::Tensor& z, double sigma, const nn::Tensor* cond) const;

    /// Zero tensor shaped like the conditioning for a batch matching z.
    nn::Tensor null_cond(const nn::Tensor& z) const;

    nn::ParamStore& params() { return *store_; }
    const nn::ParamStore& params() const { return *store_; }
    const nn::UNetConfig& net_config() const { return net_->config(); }

private:
    std::unique_ptr<nn::ParamStore> store_;
    std::unique_ptr<nn::ConvUNet> net_;
};

/// (1 + g) D(z, sigma, cond) - g D(z, sigma, null). A null cond returns the
/// unconditional output for any g.
nn::Tensor cfg_denoise(const Denoiser& model, const nn::Tensor& z, double sigma, const nn::Tensor* cond, double g);

/// Zeroes the conditioning of each sample with probability p. Returns the mask
/// of dropped samples.
std::vector<bool> drop_conditioning(nn::Tensor& cond, double p, std::mt19937_64& rng);

/// sum_n lambda(sigma_n) mean ||D(z0 + sigma_n eps_n) - z0||^2 / N.
nn::Var denoise_loss(nn::Graph& g, const Denoiser& model, const nn::Tensor& z0, const std::vector<double>& sigma,
                     const nn::Tensor& eps, const nn::Tensor& cond);

/// Denoiser callback for the sampler: maps (z, sigma) to the estimate of z0.
using DenoiseFn = std::function<nn::Tensor(const nn::Tensor& z, double sigma)>;

/// Reverse-time sampler: z starts at sigmas[0] * noise and follows the
/// exponential solver down the grid. `noise_fn` fills a buffer with standard
/// normal draws; it is called once for the start and once per step.
nn::Tensor run_sampler(const DenoiseFn& denoise, const std::vector<std::size_t>& shape, const std::vector<double>& sigmas,
                       const std::function<void(std::span<double>)>& noise_fn);

/// Fill with standard normal draws in order.
void fill_normal(std::span<double> out, std::mt19937_64& rng);

// ---- super-resolution model ------------------------------------------------------------

struct DiffusionConfig {
    std::size_t window_days = 3;
    DownsampleSpec downsample;
    ClimGrouping residual_grouping{kDaysPerYear, kStepsPerDay};
    double sigma_min = kSigmaMin;
    double sigma_max = kSigmaMax;
    double p_uncond = 0.15;
    double guidance = 1.0;
    std::size_t sample_steps = 256;
    ScheduleKind schedule = ScheduleKind::kEdm;
    std::size_t batch_size = 4;
    std::size_t train_steps = 2000;
    std::int64_t train_begin_hour = std::numeric_limits<std::int64_t>::min();
    std::int64_t train_end_hour = std::numeric_limits<std::int64_t>::max();
    std::uint64_t seed = 0;
    nn::AdamConfig adam;
    nn::UNetConfig net;  ///< channel counts are filled in from the data

    std::size_t window_steps() const { return window_days * static_cast<std::size_t>(downsample.temporal_window); }
    void validate() const;
};

/// Normalization of the residual target and of the coarse input.
struct SrNormalization {
    DownsampleSpec downsample;
    Climatology residual_clim;   ///< of x - I(C'x), grouped by (day of year, fine step)
    EnsembleStats input_stats;   ///< date-agnostic per-pixel stats of the coarse input
};

/// Fit the normalization on the fine truth restricted to [begin, end).
SrNormalization fit_sr_normalization(const GridField& x, const DownsampleSpec& spec, ClimGrouping grouping,
                                     std::int64_t begin_hour, std::int64_t end_hour);

/// Normalized residual target and normalized coarse input of a fine field.
struct SrPair {
    GridField residual;  ///< fine, climatology-normalized
    GridField cond;      ///< coarse, standardized
};
SrPair make_training_pair(const GridField& x, const SrNormalization& norm);

/// I(y') + clim_mean + clim_std * r, the inverse of make_training_pair.
GridField reconstruct(const GridField& residual, const GridField& y_coarse, const SrNormalization& norm);

class SrModel {
public:
    SrModel(DiffusionConfig cfg, SrNormalization norm, std::size_t nx_fine, std::size_t ny_fine, std::size_t nv);

    /// Conditioning channels for a window of coarse days: standardized,
    /// interpolated onto the fine grid, days folded into channels.
    nn::Tensor window_cond(const GridField& y_coarse_norm_fine, std::size_t day0) const;
    /// Fine-grid, standardized version of a coarse input.
    GridField prepare_cond(const GridField& y_coarse) const;

    /// One window: y' must hold window_days daily steps.
    GridField sample(const GridField& y_coarse, double guidance, std::mt19937_64& rng) const;

    Denoiser& denoiser() { return *denoiser_; }
    const Denoiser& denoiser() const { return *denoiser_; }
    const DiffusionConfig& config() const { return cfg_; }
    const SrNormalization& normalization() const { return norm_; }
    std::size_t nx_fine() const { return nx_; }
    std::size_t ny_fine() const { return ny_; }
    std::size_t nv() const { return nv_; }
    std::vector<double> sigma_grid() const;
    /// Replace the sampling grid used by sample() and the long-trajectory sampler.
    void set_sampling(std::size_t steps, ScheduleKind schedule);

    void save(const std::filesystem::path& dir, const nn::AdamState* adam = nullptr) const;
    static SrModel load(const std::filesystem::path& dir);

private:
    DiffusionConfig cfg_;
    SrNormalization norm_;
    std::size_t nx_;
    std::size_t ny_;
    std::size_t nv_;
    std::unique_ptr<Denoiser> denoiser_;
};

struct SrTrainLogRow {
    std::size_t step;
    double loss;
    double lr;
};

/// Random window batches of (normalized residual, conditioning) from a fine truth field.
class SrBatcher {
public:
    SrBatcher(const SrModel& model, const GridField& x);

    /// z0: [B, window_steps * V, nx, ny]; cond: [B, window_days * V, nx, ny].
    void sample(std::size_t batch, std::mt19937_64& rng, nn::Tensor& z0, nn::Tensor& cond) const;
    std::size_t n_windows() const { return starts_.size(); }

private:
    const SrModel& model_;
    GridField residual_;
    GridField cond_fine_;
    std::vector<std::size_t> starts_;  // valid first coarse day of a window
};

/// Generic denoiser training loop; `next_batch` provides (z0, cond).
void train_denoiser(Denoiser& model, const std::function<void(std::mt19937_64&, nn::Tensor&, nn::Tensor&)>& next_batch,
                    const DiffusionConfig& cfg, std::vector<SrTrainLogRow>* log = nullptr);

/// Fit normalization on the training period and train the denoiser.
SrModel train_sr(const GridField& x, const DiffusionConfig& cfg, std::vector<SrTrainLogRow>* log = nullptr);

}  // namespace downgen
