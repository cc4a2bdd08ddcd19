#include "downgen/unet.hpp"

#include "downgen/error.hpp"

#include <json.hpp>

#include <cmath>

namespace downgen::nn {

Tensor fourier_features(const std::vector<double>& s, std::size_t n_freqs, double max_freq) {
    if (n_freqs == 0 || !(max_freq >= 1.0)) {
        throw ValidationError("fourier_features: need at least one frequency and max_freq >= 1");
    }
    Tensor out = Tensor::zeros({s.size(), 2 * n_freqs});
    for (std::size_t n = 0; n < s.size(); ++n) {
        for (std::size_t k = 0; k < n_freqs; ++k) {
            const double e = n_freqs > 1 ? static_cast<double>(k) / static_cast<double>(n_freqs - 1) : 0.0;
            const double a = std::pow(max_freq, e);
            out.data[n * 2 * n_freqs + k] = std::cos(a * s[n]);
            out.data[n * 2 * n_freqs + n_freqs + k] = std::sin(a * s[n]);
        }
    }
    return out;
}

void UNetConfig::validate() const {
    if (in_channels == 0 || out_channels == 0 || widths.empty() || n_freqs == 0 || embed_dim == 0 ||
        !(max_freq >= 1.0)) {
        throw ValidationError("unet: channel counts, widths and embedding sizes must be positive");
    }
    if (pool_cond && cond_channels == 0) {
        throw ValidationError("unet: pool_cond needs conditioning channels");
    }
    for (auto w : widths) {
        if (w == 0) {
            throw ValidationError("unet: zero width");
        }
    }
}

std::string UNetConfig::to_json() const {
    nlohmann::json j;
    j["in_channels"] = in_channels;
    j["cond_channels"] = cond_channels;
    j["out_channels"] = out_channels;
    j["pool_cond"] = pool_cond;
    j["widths"] = widths;
    j["n_freqs"] = n_freqs;
    j["max_freq"] = max_freq;
    j["embed_dim"] = embed_dim;
    j["init_std"] = init_std;
    j["seed"] = seed;
    return j.dump();
}

UNetConfig UNetConfig::from_json(const std::string& text) {
    UNetConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        c.in_channels = j.at("in_channels");
        c.cond_channels = j.at("cond_channels");
        c.out_channels = j.at("out_channels");
        c.pool_cond = j.at("pool_cond");
        c.widths = j.at("widths").get<std::vector<std::size_t>>();
        c.n_freqs = j.at("n_freqs");
        c.max_freq = j.at("max_freq");
        c.embed_dim = j.at("embed_dim");
        c.init_std = j.at("init_std");
        c.seed = j.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad network description: ") + e.what());
    }
    c.validate();
    return c;
}

ConvUNet::ConvUNet(UNetConfig cfg, ParamStore& store, std::string prefix)
    : cfg_(std::move(cfg)), store_(store), prefix_(std::move(prefix)), seed_counter_(cfg_.seed * 1000003ULL + 17) {
    cfg_.validate();
    const auto& w = cfg_.widths;
    const std::size_t E = cfg_.embed_dim;
    embed1_ = make_dense("embed1", 2 * cfg_.n_freqs, E, false);
    embed2_ = make_dense("embed2", E, E, false);
    if (cfg_.pool_cond) {
        pool_ = make_dense("pool", cfg_.cond_channels, E, false);
    }
    std::size_t in = cfg_.in_channels;
    if (cfg_.cond_channels > 0) {
        cond_enc_ = make_conv("cond_enc", cfg_.cond_channels, w[0], false);
        in += w[0];
    }
    conv_in_ = make_conv("conv_in", in, w[0], false);
    for (std::size_t l = 0; l < w.size(); ++l) {
        if (l > 0) {
            down_conv_.push_back(make_conv("down" + std::to_string(l), w[l - 1], w[l], false));
        }
        down_res_.push_back(make_res("enc" + std::to_string(l), w[l]));
    }
    for (std::size_t l = w.size() - 1; l-- > 0;) {
        up_conv_.push_back(make_conv("up" + std::to_string(l), w[l + 1] + w[l], w[l], false));
        up_res_.push_back(make_res("dec" + std::to_string(l), w[l]));
    }
    conv_out_ = make_conv("conv_out", w[0], cfg_.out_channels, true);
}

ConvUNet::Conv ConvUNet::make_conv(const std::string& name, std::size_t ci, std::size_t co, bool zero) {
    const std::string base = prefix_ + "." + name;
    Tensor wt = zero ? Tensor::zeros({co, ci, 3, 3}) : truncated_normal({co, ci, 3, 3}, cfg_.init_std, seed_counter_++);
    Param& pw = store_.add(base + ".w", std::move(wt));
    Param& pb = store_.add(base + ".b", Tensor::zeros({co}));
    return Conv{&pw, &pb};
}

ConvUNet::Dense ConvUNet::make_dense(const std::string& name, std::size_t fi, std::size_t fo, bool zero) {
    const std::string base = prefix_ + "." + name;
    Tensor wt = zero ? Tensor::zeros({fo, fi}) : truncated_normal({fo, fi}, cfg_.init_std, seed_counter_++);
    Param& pw = store_.add(base + ".w", std::move(wt));
    Param& pb = store_.add(base + ".b", Tensor::zeros({fo}));
    return Dense{&pw, &pb};
}

ConvUNet::ResBlock ConvUNet::make_res(const std::string& name, std::size_t c) {
    ResBlock r;
    r.conv1 = make_conv(name + ".conv1", c, c, false);
    r.conv2 = make_conv(name + ".conv2", c, c, false);
    r.film = make_dense(name + ".film", cfg_.embed_dim, 2 * c, true);
    r.channels = c;
    return r;
}

Var ConvUNet::apply(Graph& g, const Conv& c, Var x, int stride) const {
    return conv2d(x, g.param(*c.w), g.param(*c.b), stride);
}

Var ConvUNet::apply(Graph& g, const Dense& d, Var x) const { return dense(x, g.param(*d.w), g.param(*d.b)); }

Var ConvUNet::apply_res(Graph& g, const ResBlock& r, Var x, Var emb) const {
    Var mod = apply(g, r.film, emb);
    Var s = slice_features(mod, 0, r.channels);
    Var b = slice_features(mod, r.channels, 2 * r.channels);
    Var h = apply(g, r.conv1, x, 1);
    h = silu(film(h, s, b));
    h = apply(g, r.conv2, h, 1);
    return add(x, h);
}

Var ConvUNet::forward(Graph& g, Var x, std::optional<Var> cond, const std::vector<double>& s) const {
    const auto& X = x.value();
    if (X.rank() != 4 || X.dim(1) != cfg_.in_channels) {
        throw ShapeError("unet: input " + shape_string(X.shape) + " does not have " + std::to_string(cfg_.in_channels) +
                         " channels");
    }
    if (s.size() != X.dim(0)) {
        throw ShapeError("unet: need one embedding scalar per sample");
    }
    Var emb = apply(g, embed2_, silu(apply(g, embed1_, g.input(fourier_features(s, cfg_.n_freqs, cfg_.max_freq)))));
    Var h = x;
    if (cfg_.cond_channels > 0) {
        if (!cond) {
            throw ShapeError("unet: conditioning input required");
        }
        const auto& C = cond->value();
        if (C.rank() != 4 || C.dim(0) != X.dim(0) || C.dim(1) != cfg_.cond_channels || C.dim(2) != X.dim(2) ||
            C.dim(3) != X.dim(3)) {
            throw ShapeError("unet: conditioning " + shape_string(C.shape) + " does not match input " +
                             shape_string(X.shape));
        }
        if (pool_) {
            emb = add(emb, apply(g, *pool_, spatial_mean(*cond)));
        }
        h = concat_channels(h, silu(apply(g, *cond_enc_, *cond, 1)));
    }
    emb = silu(emb);
    h = apply(g, conv_in_, h, 1);
    std::vector<Var> skips;
    for (std::size_t l = 0; l < down_res_.size(); ++l) {
        if (l > 0) {
            h = silu(apply(g, down_conv_[l - 1], h, 2));
        }
        h = apply_res(g, down_res_[l], h, emb);
        skips.push_back(h);
    }
    for (std::size_t k = 0; k < up_conv_.size(); ++k) {
        const std::size_t l = down_res_.size() - 2 - k;
        const Var skip = skips[l];
        h = upsample_to(h, skip.value().dim(2), skip.value().dim(3));
        h = concat_channels(h, skip);
        h = silu(apply(g, up_conv_[k], h, 1));
        h = apply_res(g, up_res_[k], h, emb);
    }
    return apply(g, conv_out_, h, 1);
}

}  // namespace downgen::nn
