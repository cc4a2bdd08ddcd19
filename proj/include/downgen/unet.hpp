#pragma once

#include "downgen/nn.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace downgen::nn {

/// [cos(a_k s), sin(a_k s)] with a_k log-spaced in [1, max_freq]. Returns [N, 2K].
Tensor fourier_features(const std::vector<double>& s, std::size_t n_freqs, double max_freq);

struct UNetConfig {
    std::size_t in_channels = 1;
    std::size_t cond_channels = 0;   ///< spatial conditioning channels (0 = none)
    std::size_t out_channels = 1;
    bool pool_cond = false;          ///< also feed the spatial mean of cond into the embedding
    std::vector<std::size_t> widths = {16, 32, 64};
    std::size_t n_freqs = 8;
    double max_freq = 32.0;  ///< highest embedding frequency
    std::size_t embed_dim = 32;
    double init_std = 0.02;
    std::uint64_t seed = 0;

    void validate() const;
    std::string to_json() const;
    static UNetConfig from_json(const std::string& text);
};

/// Small conditioned conv U-Net: Fourier-embedded scalar -> FiLM in every
/// residual block, encoded conditioning concatenated with the input, stride-2
/// downsampling, nearest upsampling with skip connections. The output
/// convolution and all FiLM projections start at zero, so the network is
/// identically zero at initialisation.
class ConvUNet {
public:
    ConvUNet(UNetConfig cfg, ParamStore& store, std::string prefix = "net");

    /// x: [N, in, H, W]; cond: [N, cond, H, W] (ignored when cond_channels == 0);
    /// s: one embedding scalar per sample.
    Var forward(Graph& g, Var x, std::optional<Var> cond, const std::vector<double>& s) const;

    const UNetConfig& config() const { return cfg_; }

private:
    struct Conv {
        Param* w;
        Param* b;
    };
    struct Dense {
        Param* w;
        Param* b;
    };
    struct ResBlock {
        Conv conv1;
        Conv conv2;
        Dense film;
        std::size_t channels;
    };

    Conv make_conv(const std::string& name, std::size_t ci, std::size_t co, bool zero);
    Dense make_dense(const std::string& name, std::size_t fi, std::size_t fo, bool zero);
    ResBlock make_res(const std::string& name, std::size_t c);
    Var apply(Graph& g, const Conv& c, Var x, int stride) const;
    Var apply(Graph& g, const Dense& d, Var x) const;
    Var apply_res(Graph& g, const ResBlock& r, Var x, Var emb) const;

    UNetConfig cfg_;
    ParamStore& store_;
    std::string prefix_;
    std::uint64_t seed_counter_;

    Dense embed1_{};
    Dense embed2_{};
    std::optional<Dense> pool_{};
    std::optional<Conv> cond_enc_{};
    Conv conv_in_{};
    std::vector<ResBlock> down_res_;
    std::vector<Conv> down_conv_;   // level l >= 1
    std::vector<Conv> up_conv_;     // level l in [0, L-2]
    std::vector<ResBlock> up_res_;
    Conv conv_out_{};
};

}  // namespace downgen::nn
