#include "downgen/reflow.hpp"

#include "downgen/error.hpp"
#include "downgen/io.hpp"
#include "downgen/layout.hpp"
#include "downgen/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace downgen {

namespace {

void require_daily(const GridField& f, const char* what) {
    if (f.time.dt_hours != kHoursPerDay) {
        throw ShapeError(std::string(what) + " must be a daily field");
    }
}

}  // namespace

void ReflowConfig::validate() const {
    if (chunk_days == 0 || chunks_per_batch == 0 || rk4_steps == 0 || transport_batch == 0) {
        throw ValidationError("reflow: chunk, batch and solver sizes must be positive");
    }
    if (season_window_days < 0 || season_window_days > 182) {
        throw ValidationError("reflow: season window must lie in [0, 182] days");
    }
    if (!(tau_min >= 0.0 && tau_min < tau_max && tau_max <= 1.0)) {
        throw ValidationError("reflow: need 0 <= tau_min < tau_max <= 1");
    }
    if (train_begin_hour >= train_end_hour) {
        throw ValidationError("reflow: empty training period");
    }
    adam.validate();
}

EnsembleStats training_stats(const GridField& field, const ReflowConfig& cfg) {
    if (!cfg.standardize) {
        EnsembleStats s;
        s.nx = field.shape.nx;
        s.ny = field.shape.ny;
        s.nv = field.shape.nv;
        s.mean.assign(s.size(), 0.0);
        s.std.assign(s.size(), 1.0);
        return s;
    }
    return compute_stats(field, cfg.train_begin_hour, cfg.train_end_hour);
}

// ---- Coupler ------------------------------------------------------------------

Coupler::Coupler(const std::vector<GridField>& members, const GridField& target, const ReflowConfig& cfg,
                 const std::vector<EnsembleStats>& member_stats, const EnsembleStats& target_stats)
    : members_(members), target_(target), cfg_(cfg), member_stats_(member_stats), target_stats_(target_stats) {
    if (members.empty()) {
        throw ValidationError("coupling: no biased members");
    }
    require_daily(target, "reflow target");
    auto starts = [&](const GridField& f) {
        std::vector<std::size_t> out;
        const std::size_t L = cfg.chunk_days;
        for (std::size_t t = 0; t + L <= f.shape.nt; ++t) {
            if (f.timestamp(t) >= cfg.train_begin_hour && f.timestamp(t + L - 1) < cfg.train_end_hour) {
                out.push_back(t);
            }
        }
        return out;
    };
    for (const auto& m : members) {
        require_daily(m, "reflow member");
        if (m.shape.nx != target.shape.nx || m.shape.ny != target.shape.ny || m.shape.nv != target.shape.nv) {
            throw ShapeError("coupling: member and target grids differ");
        }
        member_starts_.push_back(starts(m));
        if (member_starts_.back().empty()) {
            throw ValidationError("coupling: a member has no complete chunk in the training period");
        }
    }
    target_by_doy_.resize(kDaysPerYear);
    for (std::size_t t : starts(target)) {
        target_by_doy_[static_cast<std::size_t>(day_of_year(target.timestamp(t)))].push_back(t);
    }
}

CouplingBatch Coupler::sample(std::size_t n_chunks, std::mt19937_64& rng) const {
    const std::size_t L = cfg_.chunk_days;
    const auto& s = target_.shape;
    const std::size_t V = s.nv;
    const std::size_t plane = s.nx * s.ny;
    CouplingBatch b;
    b.y0 = nn::Tensor::zeros({n_chunks * L, V, s.nx, s.ny});
    b.y1 = nn::Tensor::zeros({n_chunks * L, V, s.nx, s.ny});
    b.cond = nn::Tensor::zeros({n_chunks * L, 2 * V, s.nx, s.ny});
    for (std::size_t c = 0; c < n_chunks; ++c) {
        const auto m = static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, members_.size() - 1)(rng));
        const auto& ms = member_starts_[m];
        const std::size_t s0 = ms[std::uniform_int_distribution<std::size_t>(0, ms.size() - 1)(rng)];
        const int doy0 = day_of_year(members_[m].timestamp(s0));
        std::size_t total = 0;
        for (int d = -cfg_.season_window_days; d <= cfg_.season_window_days; ++d) {
            total += target_by_doy_[static_cast<std::size_t>(((doy0 + d) % kDaysPerYear + kDaysPerYear) % kDaysPerYear)].size();
            if (2 * cfg_.season_window_days + 1 >= kDaysPerYear) {
                break;
            }
        }
        if (total == 0) {
            throw ValidationError("coupling: empty season window around day " + std::to_string(doy0));
        }
        std::size_t pick = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
        std::size_t s1 = 0;
        for (int d = -cfg_.season_window_days; d <= cfg_.season_window_days; ++d) {
            const auto& bucket =
                target_by_doy_[static_cast<std::size_t>(((doy0 + d) % kDaysPerYear + kDaysPerYear) % kDaysPerYear)];
            if (pick < bucket.size()) {
                s1 = bucket[pick];
                break;
            }
            pick -= bucket.size();
        }
        const auto& mstat = member_stats_[m];
        for (std::size_t k = 0; k < L; ++k) {
            const std::size_t n = c * L + k;
            auto row0 = members_[m].step(s0 + k);
            auto row1 = target_.step(s1 + k);
            for (std::size_t p = 0; p < plane; ++p) {
                for (std::size_t v = 0; v < V; ++v) {
                    const std::size_t q = p * V + v;
                    b.y0.data[(n * V + v) * plane + p] = (row0[q] - mstat.mean[q]) / mstat.std[q];
                    b.y1.data[(n * V + v) * plane + p] = (row1[q] - target_stats_.mean[q]) / target_stats_.std[q];
                    b.cond.data[(n * 2 * V + v) * plane + p] = (mstat.mean[q] - target_stats_.mean[q]) / target_stats_.std[q];
                    b.cond.data[(n * 2 * V + V + v) * plane + p] = std::log(mstat.std[q] / target_stats_.std[q]);
                }
            }
            b.member.push_back(static_cast<int>(m));
            b.doy0.push_back(day_of_year(members_[m].timestamp(s0 + k)));
            b.doy1.push_back(day_of_year(target_.timestamp(s1 + k)));
        }
    }
    return b;
}

// ---- ReflowModel ----------------------------------------------------------------

ReflowModel::ReflowModel(ReflowConfig cfg, std::vector<EnsembleStats> member_stats, EnsembleStats target_stats)
    : cfg_(std::move(cfg)), member_stats_(std::move(member_stats)), target_stats_(std::move(target_stats)) {
    cfg_.validate();
    for (const auto& m : member_stats_) {
        if (m.nx != target_stats_.nx || m.ny != target_stats_.ny || m.nv != target_stats_.nv) {
            throw ShapeError("reflow: member statistics do not match target statistics");
        }
    }
    cfg_.net.in_channels = target_stats_.nv;
    cfg_.net.out_channels = target_stats_.nv;
    cfg_.net.cond_channels = 2 * target_stats_.nv;
    cfg_.net.pool_cond = true;
    store_ = std::make_unique<nn::ParamStore>();
    net_ = std::make_unique<nn::ConvUNet>(cfg_.net, *store_, "velocity");
}

std::vector<double> ReflowModel::cond_channels(int member) const {
    if (member < 0 || static_cast<std::size_t>(member) >= member_stats_.size()) {
        throw ValidationError("reflow: no statistics for member " + std::to_string(member));
    }
    const auto& ms = member_stats_[static_cast<std::size_t>(member)];
    const auto& ts = target_stats_;
    const std::size_t V = ts.nv;
    const std::size_t plane = ts.nx * ts.ny;
    std::vector<double> out(2 * V * plane);
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t v = 0; v < V; ++v) {
            const std::size_t q = p * V + v;
            out[v * plane + p] = (ms.mean[q] - ts.mean[q]) / ts.std[q];
            out[(V + v) * plane + p] = std::log(ms.std[q] / ts.std[q]);
        }
    }
    return out;
}

nn::Tensor ReflowModel::cond_batch(int member, std::size_t n) const {
    const auto one = cond_channels(member);
    nn::Tensor t = nn::Tensor::zeros({n, 2 * target_stats_.nv, target_stats_.nx, target_stats_.ny});
    for (std::size_t k = 0; k < n; ++k) {
        std::copy(one.begin(), one.end(), t.data.begin() + static_cast<std::ptrdiff_t>(k * one.size()));
    }
    return t;
}

nn::Var ReflowModel::velocity(nn::Graph& g, nn::Var y, nn::Var cond, const std::vector<double>& tau) const {
    return net_->forward(g, y, cond, tau);
}

nn::Tensor ReflowModel::velocity(const nn::Tensor& y, const nn::Tensor& cond, const std::vector<double>& tau) const {
    nn::Graph g(false);
    return net_->forward(g, g.input(y), g.input(cond), tau).value();
}

nn::Tensor ReflowModel::integrate(const nn::Tensor& y, const nn::Tensor& cond, bool reverse) const {
    const std::size_t n = y.dim(0);
    const double h = (reverse ? -1.0 : 1.0) / static_cast<double>(cfg_.rk4_steps);
    nn::Tensor state = y;
    nn::Tensor tmp = y;
    auto shifted = [&](const nn::Tensor& k, double a) {
        for (std::size_t i = 0; i < state.size(); ++i) {
            tmp.data[i] = state.data[i] + a * k.data[i];
        }
        return tmp;
    };
    for (std::size_t step = 0; step < cfg_.rk4_steps; ++step) {
        const double t0 = reverse ? 1.0 - static_cast<double>(step) / static_cast<double>(cfg_.rk4_steps)
                                  : static_cast<double>(step) / static_cast<double>(cfg_.rk4_steps);
        const std::vector<double> ta(n, t0);
        const std::vector<double> tb(n, t0 + 0.5 * h);
        const std::vector<double> tc(n, t0 + h);
        const nn::Tensor k1 = velocity(state, cond, ta);
        const nn::Tensor k2 = velocity(shifted(k1, 0.5 * h), cond, tb);
        const nn::Tensor k3 = velocity(shifted(k2, 0.5 * h), cond, tb);
        const nn::Tensor k4 = velocity(shifted(k3, h), cond, tc);
        for (std::size_t i = 0; i < state.size(); ++i) {
            state.data[i] += h / 6.0 * (k1.data[i] + 2.0 * k2.data[i] + 2.0 * k3.data[i] + k4.data[i]);
            if (!std::isfinite(state.data[i])) {
                throw NumericalError("reflow transport produced a non-finite state");
            }
        }
    }
    return state;
}

GridField ReflowModel::transport(const GridField& y, int member) const {
    if (member < 0 || static_cast<std::size_t>(member) >= member_stats_.size()) {
        throw ValidationError("transport: no statistics for member " + std::to_string(member));
    }
    const auto& ms = member_stats_[static_cast<std::size_t>(member)];
    GridField norm = normalize(y, ms);
    GridField out = GridField::like(y, y.shape.nt);
    const std::size_t B = cfg_.transport_batch;
    const std::size_t n_batches = (y.shape.nt + B - 1) / B;
    parallel_for(n_batches, [&](std::size_t b) {
        std::vector<std::size_t> steps;
        for (std::size_t t = b * B; t < std::min(y.shape.nt, (b + 1) * B); ++t) {
            steps.push_back(t);
        }
        nn::Tensor x = steps_to_tensor(norm, steps);
        nn::Tensor moved = integrate(x, cond_batch(member, steps.size()), false);
        tensor_to_steps(moved, out, steps);
    });
    return denormalize(out, target_stats_);
}

void ReflowModel::save(const std::filesystem::path& dir, const nn::AdamState* adam) const {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["chunk_days"] = cfg_.chunk_days;
    j["season_window_days"] = cfg_.season_window_days;
    j["chunks_per_batch"] = cfg_.chunks_per_batch;
    j["train_steps"] = cfg_.train_steps;
    j["tau_min"] = cfg_.tau_min;
    j["tau_max"] = cfg_.tau_max;
    j["rk4_steps"] = cfg_.rk4_steps;
    j["transport_batch"] = cfg_.transport_batch;
    j["standardize"] = cfg_.standardize;
    j["train_begin_hour"] = cfg_.train_begin_hour;
    j["train_end_hour"] = cfg_.train_end_hour;
    j["seed"] = cfg_.seed;
    j["adam"] = nlohmann::json::parse(cfg_.adam.to_json());
    j["net"] = nlohmann::json::parse(cfg_.net.to_json());
    j["n_members"] = member_stats_.size();
    {
        std::ofstream out(dir / "reflow.json", std::ios::trunc);
        out << j.dump(1) << '\n';
    }
    write_stats(dir, "target", target_stats_);
    for (std::size_t m = 0; m < member_stats_.size(); ++m) {
        write_stats(dir, "member" + std::to_string(m), member_stats_[m]);
    }
    nn::save_checkpoint(dir / "params", *store_, adam, cfg_.net.to_json());
}

ReflowModel ReflowModel::load(const std::filesystem::path& dir) {
    std::ifstream in(dir / "reflow.json");
    if (!in) {
        throw FormatError("no reflow model in '" + dir.string() + "'");
    }
    ReflowConfig cfg;
    std::size_t n_members = 0;
    try {
        nlohmann::json j;
        in >> j;
        cfg.chunk_days = j.at("chunk_days");
        cfg.season_window_days = j.at("season_window_days");
        cfg.chunks_per_batch = j.at("chunks_per_batch");
        cfg.train_steps = j.at("train_steps");
        cfg.tau_min = j.at("tau_min");
        cfg.tau_max = j.at("tau_max");
        cfg.rk4_steps = j.at("rk4_steps");
        cfg.transport_batch = j.at("transport_batch");
        cfg.standardize = j.at("standardize");
        cfg.train_begin_hour = j.at("train_begin_hour");
        cfg.train_end_hour = j.at("train_end_hour");
        cfg.seed = j.at("seed");
        cfg.adam = nn::AdamConfig::from_json(j.at("adam").dump());
        cfg.net = nn::UNetConfig::from_json(j.at("net").dump());
        n_members = j.at("n_members");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed reflow.json: ") + e.what());
    }
    std::vector<EnsembleStats> ms;
    for (std::size_t m = 0; m < n_members; ++m) {
        ms.push_back(read_stats(dir, "member" + std::to_string(m)));
    }
    ReflowModel model(cfg, std::move(ms), read_stats(dir, "target"));
    nn::load_checkpoint(dir / "params", model.params(), nullptr);
    return model;
}

nn::Var reflow_loss(nn::Graph& g, const ReflowModel& model, const CouplingBatch& batch, const std::vector<double>& tau) {
    const auto& y0 = batch.y0;
    const auto& y1 = batch.y1;
    if (y0.shape != y1.shape || tau.size() != y0.dim(0)) {
        throw ShapeError("reflow_loss: batch and tau sizes disagree");
    }
    const std::size_t per = y0.size() / y0.dim(0);
    nn::Tensor yt = y0;
    nn::Tensor disp = y0;
    for (std::size_t n = 0; n < tau.size(); ++n) {
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
            yt.data[i] = tau[n] * y1.data[i] + (1.0 - tau[n]) * y0.data[i];
            disp.data[i] = y1.data[i] - y0.data[i];
        }
    }
    nn::Var v = model.velocity(g, g.input(std::move(yt)), g.input(batch.cond), tau);
    return nn::weighted_mse(v, g.input(std::move(disp)), std::vector<double>(tau.size(), 1.0));
}

ReflowModel train_reflow(const std::vector<GridField>& members, const GridField& target, const ReflowConfig& cfg,
                         std::vector<TrainLogRow>* log) {
    cfg.validate();
    std::vector<EnsembleStats> ms;
    for (const auto& m : members) {
        ms.push_back(training_stats(m, cfg));
    }
    EnsembleStats ts = training_stats(target, cfg);
    ReflowModel model(cfg, ms, ts);
    Coupler coupler(members, target, model.config(), model.member_stats(), model.target_stats());
    nn::AdamConfig ac = cfg.adam;
    ac.total_steps = cfg.train_steps;
    nn::Adam adam(ac, model.params());
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> utau(cfg.tau_min, cfg.tau_max);
    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        CouplingBatch batch = coupler.sample(cfg.chunks_per_batch, rng);
        std::vector<double> tau(batch.y0.dim(0));
        for (auto& t : tau) {
            t = utau(rng);
        }
        model.params().zero_grad();
        nn::Graph g(true);
        nn::Var loss = reflow_loss(g, model, batch, tau);
        const double lv = loss.value().data[0];
        if (!std::isfinite(lv)) {
            throw NumericalError("reflow training diverged at step " + std::to_string(step));
        }
        g.backward(loss);
        const double lr = adam.step(model.params());
        if (log) {
            log->push_back({step, lv, lr});
        }
    }
    return model;
}

}  // namespace downgen
