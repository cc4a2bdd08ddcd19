#include "downgen/optim.hpp"

#include "downgen/error.hpp"
#include "downgen/io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numbers>

namespace downgen::nn {

double AdamConfig::lr_at(std::size_t step) const {
    if (step < warmup_steps) {
        return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    }
    const std::size_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
    const double p = std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
    return end_lr + 0.5 * (peak_lr - end_lr) * (1.0 + std::cos(std::numbers::pi * p));
}

std::string AdamConfig::to_json() const {
    nlohmann::json j;
    j["peak_lr"] = peak_lr;
    j["end_lr"] = end_lr;
    j["warmup_steps"] = warmup_steps;
    j["total_steps"] = total_steps;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["eps"] = eps;
    j["clip_norm"] = clip_norm;
    return j.dump();
}

AdamConfig AdamConfig::from_json(const std::string& text) {
    AdamConfig a;
    try {
        const auto j = nlohmann::json::parse(text);
        a.peak_lr = j.at("peak_lr");
        a.end_lr = j.at("end_lr");
        a.warmup_steps = j.at("warmup_steps");
        a.total_steps = j.at("total_steps");
        a.beta1 = j.at("beta1");
        a.beta2 = j.at("beta2");
        a.eps = j.at("eps");
        a.clip_norm = j.at("clip_norm");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad optimizer description: ") + e.what());
    }
    a.validate();
    return a;
}

void AdamConfig::validate() const {
    if (!(peak_lr > 0.0) || end_lr < 0.0 || end_lr > peak_lr) {
        throw ValidationError("adam: need 0 <= end_lr <= peak_lr and peak_lr > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0)) {
        throw ValidationError("adam: betas must lie in [0, 1) and eps > 0");
    }
}

double global_grad_norm(const ParamStore& store) {
    double acc = 0.0;
    for (std::size_t k = 0; k < store.size(); ++k) {
        for (double g : store[k].grad.data) {
            acc += g * g;
        }
    }
    return std::sqrt(acc);
}

double clip_global_norm(ParamStore& store, double max_norm) {
    const double norm = global_grad_norm(store);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (std::size_t k = 0; k < store.size(); ++k) {
            for (double& g : store[k].grad.data) {
                g *= scale;
            }
        }
    }
    return norm;
}

Adam::Adam(AdamConfig cfg, const ParamStore& store) : cfg_(cfg) {
    cfg_.validate();
    for (std::size_t k = 0; k < store.size(); ++k) {
        state_.m.push_back(Tensor::zeros(store[k].value.shape));
        state_.v.push_back(Tensor::zeros(store[k].value.shape));
    }
}

double Adam::step(ParamStore& store) {
    if (store.size() != state_.m.size()) {
        throw ShapeError("adam: parameter store changed size");
    }
    for (std::size_t k = 0; k < store.size(); ++k) {
        for (double g : store[k].grad.data) {
            if (!std::isfinite(g)) {
                throw NumericalError("adam: non-finite gradient in '" + store[k].name + "'");
            }
        }
    }
    clip_global_norm(store, cfg_.clip_norm);
    const double lr = cfg_.lr_at(state_.step);
    ++state_.step;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(state_.step));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(state_.step));
    for (std::size_t k = 0; k < store.size(); ++k) {
        auto& p = store[k];
        auto& m = state_.m[k].data;
        auto& v = state_.v[k].data;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad.data[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            p.value.data[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
        }
    }
    return lr;
}

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kFormat = "downgen-checkpoint-1";

void load_into(const std::filesystem::path& file, Tensor& dst, const std::string& name) {
    auto arr = read_npy(file);
    if (arr.shape != dst.shape) {
        throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_string(arr.shape) + ", expected " +
                         shape_string(dst.shape));
    }
    dst.data = std::move(arr.data);
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / kManifest);
    if (!in) {
        throw FormatError("no checkpoint manifest in '" + dir.string() + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint manifest: ") + e.what());
    }
    if (j.value("format", "") != kFormat) {
        throw FormatError("unknown checkpoint format in '" + dir.string() + "'");
    }
    return j;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store, const AdamState* adam,
                     const std::string& arch_json) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format"] = kFormat;
    j["arch"] = arch_json;
    j["step"] = adam ? adam->step : 0;
    j["has_adam"] = adam != nullptr;
    j["params"] = nlohmann::json::array();
    for (std::size_t k = 0; k < store.size(); ++k) {
        const auto& p = store[k];
        const std::string file = "param_" + std::to_string(k) + ".npy";
        write_npy(dir / file, p.value.shape, p.value.data);
        nlohmann::json e;
        e["name"] = p.name;
        e["shape"] = p.value.shape;
        e["file"] = file;
        if (adam) {
            e["adam_m"] = "adam_m_" + std::to_string(k) + ".npy";
            e["adam_v"] = "adam_v_" + std::to_string(k) + ".npy";
            write_npy(dir / e["adam_m"].get<std::string>(), adam->m.at(k).shape, adam->m.at(k).data);
            write_npy(dir / e["adam_v"].get<std::string>(), adam->v.at(k).shape, adam->v.at(k).data);
        }
        j["params"].push_back(e);
    }
    std::ofstream out(dir / kManifest, std::ios::trunc);
    out << j.dump(1) << '\n';
    if (!out) {
        throw Error("failed to write checkpoint manifest in '" + dir.string() + "'");
    }
}

std::string load_checkpoint(const std::filesystem::path& dir, ParamStore& store, AdamState* adam) {
    const auto j = read_manifest(dir);
    const auto& params = j.at("params");
    if (params.size() != store.size()) {
        throw ShapeError("checkpoint has " + std::to_string(params.size()) + " tensors, model has " +
                         std::to_string(store.size()));
    }
    if (adam && !j.value("has_adam", false)) {
        throw FormatError("checkpoint has no optimizer state");
    }
    if (adam) {
        adam->m.resize(store.size());
        adam->v.resize(store.size());
        adam->step = j.at("step");
    }
    for (std::size_t k = 0; k < store.size(); ++k) {
        const auto& e = params[k];
        auto& p = store[k];
        if (e.at("name").get<std::string>() != p.name) {
            throw ShapeError("checkpoint tensor " + std::to_string(k) + " is '" + e.at("name").get<std::string>() +
                             "', model expects '" + p.name + "'");
        }
        load_into(dir / e.at("file").get<std::string>(), p.value, p.name);
        if (adam) {
            adam->m[k] = Tensor::zeros(p.value.shape);
            adam->v[k] = Tensor::zeros(p.value.shape);
            load_into(dir / e.at("adam_m").get<std::string>(), adam->m[k], p.name);
            load_into(dir / e.at("adam_v").get<std::string>(), adam->v[k], p.name);
        }
    }
    return j.at("arch").get<std::string>();
}

std::string read_checkpoint_arch(const std::filesystem::path& dir) { return read_manifest(dir).at("arch").get<std::string>(); }

}  // namespace downgen::nn
