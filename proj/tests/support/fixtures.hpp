#pragma once

#include "downgen/diffusion.hpp"
#include "downgen/grid.hpp"
#include "downgen/nn.hpp"
#include "downgen/unet.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace downgen::fixtures {

inline nn::UNetConfig tiny_net(std::size_t c, std::size_t cc, std::uint64_t seed) {
    nn::UNetConfig n;
    n.in_channels = c;
    n.out_channels = c;
    n.cond_channels = cc;
    n.widths = {3, 4, 4};
    n.n_freqs = 2;
    n.embed_dim = 4;
    n.seed = seed;
    return n;
}

inline nn::Tensor randn(std::vector<std::size_t> shape, std::uint64_t seed) {
    nn::Tensor t = nn::Tensor::zeros(std::move(shape));
    std::mt19937_64 rng(seed);
    fill_normal(t.data, rng);
    return t;
}

/// Fine field on a 3 x 2 coarse grid (factor 4) with n_days days of 12 steps.
inline GridField fine_field(std::size_t n_days, std::size_t nv, std::uint64_t seed) {
    std::vector<std::string> names;
    for (std::size_t v = 0; v < nv; ++v) {
        names.push_back("v" + std::to_string(v));
    }
    GridField f = GridField::make({n_days * kStepsPerDay, 12, 8, nv}, TimeAxis{0, kHoursPerStep},
                                  cell_centers(0, 0.25, 12), cell_centers(20, 0.25, 8), names);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    for (std::size_t t = 0; t < f.shape.nt; ++t) {
        const double season = std::sin(2.0 * 3.14159 * static_cast<double>(t) / (kStepsPerDay * 30.0));
        for (std::size_t i = 0; i < 12; ++i) {
            for (std::size_t j = 0; j < 8; ++j) {
                for (std::size_t v = 0; v < nv; ++v) {
                    f.at(t, i, j, v) = 10.0 * static_cast<double>(v) + season + 0.1 * static_cast<double>(i) + n(rng);
                }
            }
        }
    }
    return f;
}

/// A few training steps of a tiny denoiser with a short sampling grid.
inline DiffusionConfig small_sr_config() {
    DiffusionConfig c;
    c.residual_grouping = {1, kStepsPerDay};
    c.sample_steps = 16;
    c.batch_size = 2;
    c.train_steps = 3;
    c.net.widths = {3, 4, 4};
    c.net.n_freqs = 2;
    c.net.embed_dim = 4;
    c.seed = 5;
    c.adam.warmup_steps = 1;
    return c;
}

}  // namespace downgen::fixtures
