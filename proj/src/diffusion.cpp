#include "downgen/diffusion.hpp"

#include "downgen/error.hpp"
#include "downgen/io.hpp"
#include "downgen/layout.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace downgen {

// ---- schedules -----------------------------------------------------------------

ScheduleKind parse_schedule(const std::string& name) {
    if (name == "edm") {
        return ScheduleKind::kEdm;
    }
    if (name == "tangent") {
        return ScheduleKind::kTangent;
    }
    throw ConfigError("unknown noise schedule '" + name + "' (expected edm or tangent)");
}

std::string schedule_name(ScheduleKind kind) { return kind == ScheduleKind::kEdm ? "edm" : "tangent"; }

double tangent_sigma(double tau, double sigma_max) {
    if (tau <= 0.0) {
        return 0.0;
    }
    if (tau >= 1.0) {
        return sigma_max;
    }
    return (std::tan(3.0 * tau - 1.5) - std::tan(-1.5)) / (std::tan(1.5) - std::tan(-1.5)) * sigma_max;
}

std::vector<double> sigma_steps_edm(std::size_t n, double sigma_min, double sigma_max, double rho) {
    if (n < 2) {
        throw ValidationError("noise grid needs at least two points");
    }
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
        throw ValidationError("noise grid needs 0 < sigma_min < sigma_max");
    }
    const double a = std::pow(sigma_max, 1.0 / rho);
    const double b = std::pow(sigma_min, 1.0 / rho);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::pow(a + static_cast<double>(i) / static_cast<double>(n - 1) * (b - a), rho);
    }
    // pin the endpoints against pow round-off
    out.front() = sigma_max;
    out.back() = sigma_min;
    return out;
}

std::vector<double> sigma_steps_tangent(std::size_t n, double sigma_max) {
    if (n < 2) {
        throw ValidationError("noise grid needs at least two points");
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = tangent_sigma(1.0 - static_cast<double>(i) / static_cast<double>(n - 1), sigma_max);
    }
    return out;
}

std::vector<double> sigma_steps(ScheduleKind kind, std::size_t n, double sigma_min, double sigma_max) {
    return kind == ScheduleKind::kEdm ? sigma_steps_edm(n, sigma_min, sigma_max) : sigma_steps_tangent(n, sigma_max);
}

double sample_training_sigma(std::mt19937_64& rng, double sigma_min, double sigma_max) {
    std::uniform_real_distribution<double> u(std::log(sigma_min), std::log(sigma_max));
    return std::exp(u(rng));
}

double loss_weight(double sigma) { return 1.0 + 1.0 / (sigma * sigma); }

nn::Tensor perturb(const nn::Tensor& z0, double sigma, const nn::Tensor& eps) {
    if (z0.shape != eps.shape) {
        throw ShapeError("perturb: noise shape " + nn::shape_string(eps.shape) + " differs from " +
                         nn::shape_string(z0.shape));
    }
    nn::Tensor out = z0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] += sigma * eps.data[i];
    }
    return out;
}

StepCoefficients exponential_coefficients(double sigma, double sigma_prev) {
    if (!(sigma > 0.0) || sigma_prev < 0.0 || sigma_prev > sigma) {
        throw ValidationError("exponential step needs 0 <= sigma_prev <= sigma with sigma > 0");
    }
    const double r = (sigma_prev * sigma_prev) / (sigma * sigma);
    return {r, 1.0 - r, sigma_prev / sigma * std::sqrt(sigma * sigma - sigma_prev * sigma_prev)};
}

void exponential_step(std::span<double> z, std::span<const double> d, std::span<const double> eps, double sigma,
                      double sigma_prev) {
    if (d.size() != z.size() || eps.size() != z.size()) {
        throw ShapeError("exponential step: state, denoiser output and noise sizes differ");
    }
    const auto k = exponential_coefficients(sigma, sigma_prev);
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = k.a * z[i] + k.b * d[i] + k.c * eps[i];
    }
}

void fill_normal(std::span<double> out, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : out) {
        v = n(rng);
    }
}

nn::Tensor run_sampler(const DenoiseFn& denoise, const std::vector<std::size_t>& shape, const std::vector<double>& sigmas,
                       const std::function<void(std::span<double>)>& noise_fn) {
    if (sigmas.size() < 2) {
        throw ValidationError("sampler needs at least two noise levels");
    }
    nn::Tensor z = nn::Tensor::zeros(shape);
    noise_fn(z.data);
    for (auto& v : z.data) {
        v *= sigmas.front();
    }
    nn::Tensor eps = nn::Tensor::zeros(shape);
    for (std::size_t k = 0; k + 1 < sigmas.size(); ++k) {
        const nn::Tensor d = denoise(z, sigmas[k]);
        noise_fn(eps.data);
        exponential_step(z.data, d.data, eps.data, sigmas[k], sigmas[k + 1]);
        for (double v : z.data) {
            if (!std::isfinite(v)) {
                throw NumericalError("sampler state became non-finite at step " + std::to_string(k));
            }
        }
    }
    return z;
}

// ---- denoiser ------------------------------------------------------------------------

Preconditioning precondition(double sigma) {
    if (!(sigma > 0.0)) {
        throw ValidationError("preconditioning needs sigma > 0");
    }
    const double s2 = 1.0 + sigma * sigma;
    return {1.0 / s2, sigma / std::sqrt(s2), 1.0 / std::sqrt(s2), 0.25 * std::log(sigma)};
}

Denoiser::Denoiser(nn::UNetConfig net, std::string prefix) {
    if (net.in_channels != net.out_channels) {
        throw ValidationError("denoiser: input and output channel counts must agree");
    }
    store_ = std::make_unique<nn::ParamStore>();
    net_ = std::make_unique<nn::ConvUNet>(std::move(net), *store_, std::move(prefix));
}

nn::Var Denoiser::forward(nn::Graph& g, const nn::Tensor& z, const std::vector<double>& sigma, nn::Var cond) const {
    const std::size_t N = z.dim(0);
    if (sigma.size() != N) {
        throw ShapeError("denoiser: need one noise level per sample");
    }
    const std::size_t per = z.size() / N;
    nn::Tensor skip = z;
    nn::Tensor scaled = z;
    std::vector<double> c_out(N);
    std::vector<double> c_noise(N);
    for (std::size_t n = 0; n < N; ++n) {
        const auto p = precondition(sigma[n]);
        c_out[n] = p.c_out;
        c_noise[n] = p.c_noise;
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
            skip.data[i] = p.c_skip * z.data[i];
            scaled.data[i] = p.c_in * z.data[i];
        }
    }
    nn::Var f = net_->forward(g, g.input(std::move(scaled)), cond, c_noise);
    return nn::add(g.input(std::move(skip)), nn::scale_per_sample(f, c_out));
}

nn::Tensor Denoiser::null_cond(const nn::Tensor& z) const {
    return nn::Tensor::zeros({z.dim(0), net_->config().cond_channels, z.dim(2), z.dim(3)});
}

nn::Tensor Denoiser::operator()(const nn::Tensor& z, double sigma, const nn::Tensor* cond) const {
    nn::Graph g(false);
    nn::Var c = cond ? g.input(*cond) : g.input(null_cond(z));
    return forward(g, z, std::vector<double>(z.dim(0), sigma), c).value();
}

nn::Tensor cfg_denoise(const Denoiser& model, const nn::Tensor& z, double sigma, const nn::Tensor* cond, double g) {
    if (!cond) {
        return model(z, sigma, nullptr);
    }
    nn::Tensor c = model(z, sigma, cond);
    if (g == 0.0) {
        return c;
    }
    const nn::Tensor u = model(z, sigma, nullptr);
    for (std::size_t i = 0; i < c.size(); ++i) {
        c.data[i] = (1.0 + g) * c.data[i] - g * u.data[i];
    }
    return c;
}

std::vector<bool> drop_conditioning(nn::Tensor& cond, double p, std::mt19937_64& rng) {
    const std::size_t N = cond.dim(0);
    const std::size_t per = cond.size() / N;
    std::bernoulli_distribution drop(p);
    std::vector<bool> mask(N);
    for (std::size_t n = 0; n < N; ++n) {
        mask[n] = drop(rng);
        if (mask[n]) {
            std::fill(cond.data.begin() + static_cast<std::ptrdiff_t>(n * per),
                      cond.data.begin() + static_cast<std::ptrdiff_t>((n + 1) * per), 0.0);
        }
    }
    return mask;
}

nn::Var denoise_loss(nn::Graph& g, const Denoiser& model, const nn::Tensor& z0, const std::vector<double>& sigma,
                     const nn::Tensor& eps, const nn::Tensor& cond) {
    if (z0.shape != eps.shape || z0.dim(0) == 0) {
        throw ShapeError("denoise_loss: empty batch or noise shape mismatch");
    }
    const std::size_t N = z0.dim(0);
    const std::size_t per = z0.size() / N;
    nn::Tensor zt = z0;
    std::vector<double> w(N);
    for (std::size_t n = 0; n < N; ++n) {
        w[n] = loss_weight(sigma.at(n));
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
            zt.data[i] += sigma[n] * eps.data[i];
        }
    }
    nn::Var d = model.forward(g, zt, sigma, g.input(cond));
    return nn::weighted_mse(d, g.input(z0), w);
}

// ---- normalization ------------------------------------------------------------------------

void DiffusionConfig::validate() const {
    downsample.validate();
    residual_grouping.validate();
    if (window_days == 0 || batch_size == 0 || sample_steps < 2) {
        throw ValidationError("diffusion: window, batch and step counts must be positive");
    }
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) {
        throw ValidationError("diffusion: need 0 < sigma_min < sigma_max");
    }
    if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) {
        throw ValidationError("diffusion: p_uncond must lie in [0, 1]");
    }
    if (kHoursPerDay % downsample.temporal_window != 0 ||
        kHoursPerDay / downsample.temporal_window != kHoursPerStep) {
        throw ValidationError("diffusion: the temporal window must span one day of fine steps");
    }
    adam.validate();
}

SrNormalization fit_sr_normalization(const GridField& x, const DownsampleSpec& spec, ClimGrouping grouping,
                                     std::int64_t begin_hour, std::int64_t end_hour) {
    const GridField coarse = coarsen(x, spec);
    const GridField interp = interp_upsample(coarse, spec);
    GridField residual = x;
    for (std::size_t i = 0; i < residual.data.size(); ++i) {
        residual.data[i] -= interp.data[i];
    }
    SrNormalization n;
    n.downsample = spec;
    n.residual_clim = compute_climatology(residual, grouping, begin_hour, end_hour);
    n.input_stats = compute_stats(coarse, begin_hour, end_hour);
    return n;
}

SrPair make_training_pair(const GridField& x, const SrNormalization& norm) {
    const GridField coarse = coarsen(x, norm.downsample);
    const GridField interp = interp_upsample(coarse, norm.downsample);
    const GridField cm = clim_mean_field(norm.residual_clim, x);
    const GridField cs = clim_std_field(norm.residual_clim, x);
    SrPair p{x, normalize(coarse, norm.input_stats)};
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        p.residual.data[i] = (x.data[i] - interp.data[i] - cm.data[i]) / cs.data[i];
    }
    return p;
}

GridField reconstruct(const GridField& residual, const GridField& y_coarse, const SrNormalization& norm) {
    GridField out = interp_upsample(y_coarse, norm.downsample);
    if (out.shape != residual.shape) {
        throw ShapeError("reconstruct: residual does not match the upsampled coarse input");
    }
    const GridField cm = clim_mean_field(norm.residual_clim, out);
    const GridField cs = clim_std_field(norm.residual_clim, out);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += cm.data[i] + cs.data[i] * residual.data[i];
    }
    return out;
}

// ---- SR model --------------------------------------------------------------------------------

SrModel::SrModel(DiffusionConfig cfg, SrNormalization norm, std::size_t nx_fine, std::size_t ny_fine, std::size_t nv)
    : cfg_(std::move(cfg)), norm_(std::move(norm)), nx_(nx_fine), ny_(ny_fine), nv_(nv) {
    cfg_.validate();
    const auto f = static_cast<std::size_t>(cfg_.downsample.spatial_factor);
    if (norm_.input_stats.nx * f != nx_ || norm_.input_stats.ny * f != ny_ || norm_.input_stats.nv != nv_ ||
        norm_.residual_clim.nx != nx_ || norm_.residual_clim.ny != ny_ || norm_.residual_clim.nv != nv_) {
        throw ShapeError("SR model: normalization does not match the fine grid");
    }
    cfg_.net.in_channels = cfg_.window_steps() * nv_;
    cfg_.net.out_channels = cfg_.window_steps() * nv_;
    cfg_.net.cond_channels = cfg_.window_days * nv_;
    denoiser_ = std::make_unique<Denoiser>(cfg_.net);
}

void SrModel::set_sampling(std::size_t steps, ScheduleKind schedule) {
    if (steps < 2) {
        throw ValidationError("sample_steps must be >= 2");
    }
    cfg_.sample_steps = steps;
    cfg_.schedule = schedule;
}

std::vector<double> SrModel::sigma_grid() const {
    return sigma_steps(cfg_.schedule, cfg_.sample_steps, cfg_.sigma_min, cfg_.sigma_max);
}

GridField SrModel::prepare_cond(const GridField& y_coarse) const {
    if (y_coarse.time.dt_hours != kHoursPerDay) {
        throw ShapeError("SR conditioning must be a daily field");
    }
    return interp_spatial(normalize(y_coarse, norm_.input_stats), cfg_.downsample.spatial_factor);
}

nn::Tensor SrModel::window_cond(const GridField& y_coarse_norm_fine, std::size_t day0) const {
    nn::Tensor t = nn::Tensor::zeros({1, cfg_.window_days * nv_, nx_, ny_});
    t.data = window_to_channels(y_coarse_norm_fine, day0, cfg_.window_days);
    return t;
}

GridField SrModel::sample(const GridField& y_coarse, double guidance, std::mt19937_64& rng) const {
    if (y_coarse.shape.nt != cfg_.window_days) {
        throw ShapeError("SR sample: conditioning must hold exactly " + std::to_string(cfg_.window_days) + " days");
    }
    const GridField cond_fine = prepare_cond(y_coarse);
    const nn::Tensor cond = window_cond(cond_fine, 0);
    GridField residual = GridField::like(interp_upsample(y_coarse, cfg_.downsample), cfg_.window_steps());
    const std::size_t W = cfg_.window_steps();
    GridField scratch = residual;
    auto noise = [&](std::span<double> out) {
        // Draw in grid order, then fold into channels, so windows of a longer
        // trajectory see the same numbers.
        fill_normal(scratch.data, rng);
        const auto chw = window_to_channels(scratch, 0, W);
        std::copy(chw.begin(), chw.end(), out.begin());
    };
    const DenoiseFn fn = [&](const nn::Tensor& z, double sigma) {
        return cfg_denoise(*denoiser_, z, sigma, &cond, guidance);
    };
    const nn::Tensor z = run_sampler(fn, {1, W * nv_, nx_, ny_}, sigma_grid(), noise);
    channels_to_window(z.data, residual, 0, W);
    return reconstruct(residual, y_coarse, norm_);
}

namespace {

constexpr const char* kSrFile = "sr.json";

nlohmann::json diffusion_to_json(const DiffusionConfig& c) {
    nlohmann::json j;
    j["window_days"] = c.window_days;
    j["spatial_factor"] = c.downsample.spatial_factor;
    j["temporal_window"] = c.downsample.temporal_window;
    j["doy_buckets"] = c.residual_grouping.doy_buckets;
    j["tod_buckets"] = c.residual_grouping.tod_buckets;
    j["sigma_min"] = c.sigma_min;
    j["sigma_max"] = c.sigma_max;
    j["p_uncond"] = c.p_uncond;
    j["guidance"] = c.guidance;
    j["sample_steps"] = c.sample_steps;
    j["schedule"] = schedule_name(c.schedule);
    j["batch_size"] = c.batch_size;
    j["train_steps"] = c.train_steps;
    j["train_begin_hour"] = c.train_begin_hour;
    j["train_end_hour"] = c.train_end_hour;
    j["seed"] = c.seed;
    j["adam"] = nlohmann::json::parse(c.adam.to_json());
    j["net"] = nlohmann::json::parse(c.net.to_json());
    return j;
}

DiffusionConfig diffusion_from_json(const nlohmann::json& j) {
    DiffusionConfig c;
    c.window_days = j.at("window_days");
    c.downsample.spatial_factor = j.at("spatial_factor");
    c.downsample.temporal_window = j.at("temporal_window");
    c.residual_grouping.doy_buckets = j.at("doy_buckets");
    c.residual_grouping.tod_buckets = j.at("tod_buckets");
    c.sigma_min = j.at("sigma_min");
    c.sigma_max = j.at("sigma_max");
    c.p_uncond = j.at("p_uncond");
    c.guidance = j.at("guidance");
    c.sample_steps = j.at("sample_steps");
    c.schedule = parse_schedule(j.at("schedule"));
    c.batch_size = j.at("batch_size");
    c.train_steps = j.at("train_steps");
    c.train_begin_hour = j.at("train_begin_hour");
    c.train_end_hour = j.at("train_end_hour");
    c.seed = j.at("seed");
    c.adam = nn::AdamConfig::from_json(j.at("adam").dump());
    c.net = nn::UNetConfig::from_json(j.at("net").dump());
    return c;
}

}  // namespace

void SrModel::save(const std::filesystem::path& dir, const nn::AdamState* adam) const {
    std::filesystem::create_directories(dir);
    nlohmann::json j = diffusion_to_json(cfg_);
    j["nx_fine"] = nx_;
    j["ny_fine"] = ny_;
    j["nv"] = nv_;
    {
        std::ofstream out(dir / kSrFile, std::ios::trunc);
        out << j.dump(1) << '\n';
        if (!out) {
            throw Error("cannot write '" + (dir / kSrFile).string() + "'");
        }
    }
    const auto& c = norm_.residual_clim;
    const std::vector<std::size_t> shape{static_cast<std::size_t>(c.grouping.size()), c.nx, c.ny, c.nv};
    write_npy(dir / "residual_clim_mean.npy", shape, c.mean);
    write_npy(dir / "residual_clim_std.npy", shape, c.std);
    write_stats(dir, "input", norm_.input_stats);
    nn::save_checkpoint(dir / "params", denoiser_->params(), adam, cfg_.net.to_json());
}

SrModel SrModel::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / kSrFile);
    if (!in) {
        throw FormatError("no SR model in '" + dir.string() + "'");
    }
    DiffusionConfig cfg;
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t nv = 0;
    try {
        nlohmann::json j;
        in >> j;
        cfg = diffusion_from_json(j);
        nx = j.at("nx_fine");
        ny = j.at("ny_fine");
        nv = j.at("nv");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed sr.json: ") + e.what());
    }
    SrNormalization norm;
    norm.downsample = cfg.downsample;
    auto mean = read_npy(dir / "residual_clim_mean.npy");
    auto sd = read_npy(dir / "residual_clim_std.npy");
    if (mean.shape.size() != 4 || mean.shape != sd.shape ||
        mean.shape[0] != static_cast<std::size_t>(cfg.residual_grouping.size())) {
        throw FormatError("residual climatology files do not match sr.json");
    }
    auto& c = norm.residual_clim;
    c.grouping = cfg.residual_grouping;
    c.nx = mean.shape[1];
    c.ny = mean.shape[2];
    c.nv = mean.shape[3];
    c.mean = std::move(mean.data);
    c.std = std::move(sd.data);
    c.counts.assign(static_cast<std::size_t>(c.grouping.size()), 0);
    norm.input_stats = read_stats(dir, "input");
    SrModel model(cfg, std::move(norm), nx, ny, nv);
    nn::load_checkpoint(dir / "params", model.denoiser().params(), nullptr);
    return model;
}

// ---- training ------------------------------------------------------------------------------

SrBatcher::SrBatcher(const SrModel& model, const GridField& x) : model_(model) {
    const auto& cfg = model.config();
    SrPair pair = make_training_pair(x, model.normalization());
    residual_ = std::move(pair.residual);
    cond_fine_ = interp_spatial(pair.cond, cfg.downsample.spatial_factor);
    const std::size_t D = cfg.window_days;
    for (std::size_t d = 0; d + D <= cond_fine_.shape.nt; ++d) {
        if (cond_fine_.timestamp(d) >= cfg.train_begin_hour &&
            cond_fine_.timestamp(d + D - 1) + kHoursPerDay <= cfg.train_end_hour) {
            starts_.push_back(d);
        }
    }
    if (starts_.empty()) {
        throw ValidationError("SR training: no complete window inside the training period");
    }
}

void SrBatcher::sample(std::size_t batch, std::mt19937_64& rng, nn::Tensor& z0, nn::Tensor& cond) const {
    const auto& cfg = model_.config();
    const std::size_t W = cfg.window_steps();
    const std::size_t V = model_.nv();
    const std::size_t plane = model_.nx_fine() * model_.ny_fine();
    z0 = nn::Tensor::zeros({batch, W * V, model_.nx_fine(), model_.ny_fine()});
    cond = nn::Tensor::zeros({batch, cfg.window_days * V, model_.nx_fine(), model_.ny_fine()});
    std::uniform_int_distribution<std::size_t> pick(0, starts_.size() - 1);
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t d = starts_[pick(rng)];
        const auto r = window_to_channels(residual_, d * static_cast<std::size_t>(cfg.downsample.temporal_window), W);
        const auto c = window_to_channels(cond_fine_, d, cfg.window_days);
        std::copy(r.begin(), r.end(), z0.data.begin() + static_cast<std::ptrdiff_t>(b * W * V * plane));
        std::copy(c.begin(), c.end(), cond.data.begin() + static_cast<std::ptrdiff_t>(b * cfg.window_days * V * plane));
    }
}

void train_denoiser(Denoiser& model, const std::function<void(std::mt19937_64&, nn::Tensor&, nn::Tensor&)>& next_batch,
                    const DiffusionConfig& cfg, std::vector<SrTrainLogRow>* log) {
    nn::AdamConfig ac = cfg.adam;
    ac.total_steps = cfg.train_steps;
    nn::Adam adam(ac, model.params());
    std::mt19937_64 rng(cfg.seed);
    nn::Tensor z0;
    nn::Tensor cond;
    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        next_batch(rng, z0, cond);
        drop_conditioning(cond, cfg.p_uncond, rng);
        std::vector<double> sigma(z0.dim(0));
        for (auto& s : sigma) {
            s = sample_training_sigma(rng, cfg.sigma_min, cfg.sigma_max);
        }
        nn::Tensor eps = nn::Tensor::zeros(z0.shape);
        fill_normal(eps.data, rng);
        model.params().zero_grad();
        nn::Graph g(true);
        nn::Var loss = denoise_loss(g, model, z0, sigma, eps, cond);
        const double lv = loss.value().data[0];
        if (!std::isfinite(lv)) {
            throw NumericalError("denoiser training diverged at step " + std::to_string(step));
        }
        g.backward(loss);
        const double lr = adam.step(model.params());
        if (log) {
            log->push_back({step, lv, lr});
        }
    }
}

SrModel train_sr(const GridField& x, const DiffusionConfig& cfg, std::vector<SrTrainLogRow>* log) {
    cfg.validate();
    SrNormalization norm =
        fit_sr_normalization(x, cfg.downsample, cfg.residual_grouping, cfg.train_begin_hour, cfg.train_end_hour);
    SrModel model(cfg, std::move(norm), x.shape.nx, x.shape.ny, x.shape.nv);
    SrBatcher batcher(model, x);
    train_denoiser(
        model.denoiser(),
        [&](std::mt19937_64& rng, nn::Tensor& z0, nn::Tensor& cond) { batcher.sample(cfg.batch_size, rng, z0, cond); },
        cfg, log);
    return model;
}

}  // namespace downgen
