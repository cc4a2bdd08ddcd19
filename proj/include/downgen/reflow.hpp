#pragma once

#include "downgen/grid.hpp"
#include "downgen/nn.hpp"
#include "downgen/optim.hpp"
#include "downgen/unet.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <vector>

namespace downgen {

struct ReflowConfig {
    std::size_t chunk_days = 8;
    int season_window_days = 15;
    std::size_t chunks_per_batch = 2;
    std::size_t train_steps = 2000;
    double tau_min = 1e-3;
    double tau_max = 1.0 - 1e-3;
    std::size_t rk4_steps = 100;
    std::size_t transport_batch = 64;
    bool standardize = true;  ///< normalize each member / the target by its own statistics
    std::int64_t train_begin_hour = std::numeric_limits<std::int64_t>::min();
    std::int64_t train_end_hour = std::numeric_limits<std::int64_t>::max();
    std::uint64_t seed = 0;
    nn::AdamConfig adam;
    nn::UNetConfig net;  ///< channel counts are filled in from the data

    void validate() const;
};

/// One training batch: chunk pairs flattened to snapshots.
struct CouplingBatch {
    nn::Tensor y0;    ///< normalized biased snapshots [N, V, nx, ny]
    nn::Tensor y1;    ///< normalized target snapshots [N, V, nx, ny]
    nn::Tensor cond;  ///< member conditioning channels [N, 2V, nx, ny]
    std::vector<int> member;
    std::vector<int> doy0;
    std::vector<int> doy1;
};

/// Independent coupling of biased member chunks with target chunks whose start
/// day of year lies within the season window.
class Coupler {
public:
    Coupler(const std::vector<GridField>& members, const GridField& target, const ReflowConfig& cfg,
            const std::vector<EnsembleStats>& member_stats, const EnsembleStats& target_stats);

    CouplingBatch sample(std::size_t n_chunks, std::mt19937_64& rng) const;

private:
    const std::vector<GridField>& members_;
    const GridField& target_;
    const ReflowConfig& cfg_;
    const std::vector<EnsembleStats>& member_stats_;
    const EnsembleStats& target_stats_;
    std::vector<std::vector<std::size_t>> member_starts_;  // valid chunk starts per member
    std::vector<std::vector<std::size_t>> target_by_doy_;  // target chunk starts grouped by start doy
};

/// Learned velocity field together with the normalization statistics.
class ReflowModel {
public:
    ReflowModel(ReflowConfig cfg, std::vector<EnsembleStats> member_stats, EnsembleStats target_stats);

    /// Conditioning channels for a member: (mean_i - mean')/std' and log(std_i/std'),
    /// laid out [2V, nx, ny].
    std::vector<double> cond_channels(int member) const;
    /// Repeat cond_channels over a batch.
    nn::Tensor cond_batch(int member, std::size_t n) const;

    /// v(y, tau; cond) on a graph.
    nn::Var velocity(nn::Graph& g, nn::Var y, nn::Var cond, const std::vector<double>& tau) const;
    /// Velocity without recording.
    nn::Tensor velocity(const nn::Tensor& y, const nn::Tensor& cond, const std::vector<double>& tau) const;

    /// Fixed-step RK4 from tau = 0 to 1 (or back from 1 to 0 when reverse).
    nn::Tensor integrate(const nn::Tensor& y, const nn::Tensor& cond, bool reverse = false) const;

    /// Normalize with member stats, integrate, denormalize with target stats.
    GridField transport(const GridField& y, int member) const;

    nn::ParamStore& params() { return *store_; }
    const nn::ParamStore& params() const { return *store_; }
    const nn::ConvUNet& net() const { return *net_; }
    const ReflowConfig& config() const { return cfg_; }
    const std::vector<EnsembleStats>& member_stats() const { return member_stats_; }
    const EnsembleStats& target_stats() const { return target_stats_; }

    void save(const std::filesystem::path& dir, const nn::AdamState* adam = nullptr) const;
    static ReflowModel load(const std::filesystem::path& dir);

private:
    ReflowConfig cfg_;
    std::vector<EnsembleStats> member_stats_;
    EnsembleStats target_stats_;
    std::unique_ptr<nn::ParamStore> store_;
    std::unique_ptr<nn::ConvUNet> net_;
};

/// Mean squared residual between the straight-line displacement y1 - y0 and
/// the predicted velocity at y_tau = tau y1 + (1 - tau) y0.
nn::Var reflow_loss(nn::Graph& g, const ReflowModel& model, const CouplingBatch& batch, const std::vector<double>& tau);

struct TrainLogRow {
    std::size_t step;
    double loss;
    double lr;
};

/// Statistics over the configured training period (identity when standardize is off).
EnsembleStats training_stats(const GridField& field, const ReflowConfig& cfg);

/// Train a velocity field on biased members vs the coarse target.
ReflowModel train_reflow(const std::vector<GridField>& members, const GridField& target, const ReflowConfig& cfg,
                         std::vector<TrainLogRow>* log = nullptr);

}  // namespace downgen
