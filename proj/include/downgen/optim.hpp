#pragma once

#include "downgen/nn.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace downgen::nn {

/// Adam with linear warm-up followed by cosine decay from peak_lr to end_lr.
struct AdamConfig {
    double peak_lr = 1e-3;
    double end_lr = 1e-6;
    std::size_t warmup_steps = 100;
    std::size_t total_steps = 1000;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 0.6;  ///< global gradient norm limit (<= 0 disables)

    double lr_at(std::size_t step) const;
    void validate() const;
    std::string to_json() const;
    static AdamConfig from_json(const std::string& text);
};

struct AdamState {
    std::size_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

/// Global L2 norm of all gradients.
double global_grad_norm(const ParamStore& store);

/// Scale all gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_global_norm(ParamStore& store, double max_norm);

class Adam {
public:
    Adam(AdamConfig cfg, const ParamStore& store);

    /// Clip, then apply one update with the scheduled learning rate. Throws
    /// NumericalError for non-finite gradients. Returns the learning rate used.
    double step(ParamStore& store);

    const AdamConfig& config() const { return cfg_; }
    AdamState& state() { return state_; }
    const AdamState& state() const { return state_; }

private:
    AdamConfig cfg_;
    AdamState state_;
};

/// Checkpoint directory: one NPY file per tensor plus manifest.json holding
/// names, shapes, the optimizer step and a free-form architecture string.
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store, const AdamState* adam,
                     const std::string& arch_json);

/// Load values (and optimizer moments if `adam` is given) into an existing
/// store with matching names and shapes. Returns the architecture string.
std::string load_checkpoint(const std::filesystem::path& dir, ParamStore& store, AdamState* adam);

/// Architecture string of a checkpoint without loading tensors.
std::string read_checkpoint_arch(const std::filesystem::path& dir);

}  // namespace downgen::nn
