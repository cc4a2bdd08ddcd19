#include "downgen/multidiffusion.hpp"

#include "downgen/error.hpp"
#include "downgen/layout.hpp"
#include "downgen/parallel.hpp"
#include "downgen/resample.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace downgen {

void WindowLayout::validate() const {
    if (windows == 0 || window_len == 0) {
        throw ValidationError("window layout needs at least one non-empty window");
    }
    if (overlap > window_len) {
        throw ValidationError("window overlap exceeds the window length");
    }
    if (overlap == window_len && windows > 2) {
        throw ValidationError("fully overlapping windows are only supported for a pair");
    }
    // Each window meets at most two neighbours; their shared spans must not touch.
    if (windows > 2 && 2 * overlap > window_len) {
        throw ValidationError("window overlap exceeds half the window length");
    }
}

WindowLayout make_layout(std::size_t windows, std::size_t window_len, std::size_t overlap) {
    WindowLayout l{windows, window_len, overlap};
    l.validate();
    return l;
}

WindowLayout partition(std::size_t total_len, std::size_t window_len, std::size_t overlap) {
    if (overlap >= window_len) {
        throw ValidationError("partition: overlap must be shorter than the window");
    }
    const std::size_t stride = window_len - overlap;
    if (total_len < window_len || (total_len - overlap) % stride != 0) {
        throw ValidationError("partition: length " + std::to_string(total_len) + " is not M * " +
                              std::to_string(stride) + " + " + std::to_string(overlap));
    }
    return make_layout((total_len - overlap) / stride, window_len, overlap);
}

std::vector<std::vector<double>> shared_noise(const WindowLayout& layout, std::size_t nx, std::size_t ny,
                                              std::size_t nv, std::mt19937_64& rng) {
    layout.validate();
    const std::size_t step = nx * ny * nv;
    std::vector<double> global(layout.total_len() * step);
    fill_normal(global, rng);
    std::vector<std::vector<double>> out(layout.windows);
    std::vector<double> window(layout.window_len * step);
    for (std::size_t j = 0; j < layout.windows; ++j) {
        const auto first = global.begin() + static_cast<std::ptrdiff_t>(layout.start(j) * step);
        std::copy(first, first + static_cast<std::ptrdiff_t>(window.size()), window.begin());
        // Grid order [t, x, y, v] to channels [t * V + v, x, y].
        auto& chw = out[j];
        chw.resize(window.size());
        const std::size_t plane = nx * ny;
        for (std::size_t t = 0; t < layout.window_len; ++t) {
            for (std::size_t p = 0; p < plane; ++p) {
                for (std::size_t v = 0; v < nv; ++v) {
                    chw[(t * nv + v) * plane + p] = window[(t * plane + p) * nv + v];
                }
            }
        }
    }
    return out;
}

namespace {

void check_window(const nn::Tensor& t, const WindowLayout& layout, std::size_t nv) {
    if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != layout.window_len * nv) {
        throw ShapeError("window tensor " + nn::shape_string(t.shape) + " does not hold " +
                         std::to_string(layout.window_len) + " steps of " + std::to_string(nv) + " variables");
    }
}

}  // namespace

void consolidate(nn::Tensor& left, nn::Tensor& right, const WindowLayout& layout, std::size_t nv) {
    check_window(left, layout, nv);
    check_window(right, layout, nv);
    if (left.shape != right.shape) {
        throw ShapeError("consolidate: neighbouring windows differ in shape");
    }
    const std::size_t plane = left.dim(2) * left.dim(3);
    const std::size_t n = layout.overlap * nv * plane;
    const std::size_t offset = layout.stride() * nv * plane;
    for (std::size_t i = 0; i < n; ++i) {
        const double m = 0.5 * (left.data[offset + i] + right.data[i]);
        left.data[offset + i] = m;
        right.data[i] = m;
    }
}

void consolidate_all(std::vector<nn::Tensor>& d, const WindowLayout& layout, std::size_t nv) {
    if (d.size() != layout.windows) {
        throw ShapeError("consolidate: expected " + std::to_string(layout.windows) + " windows");
    }
    for (std::size_t j = 0; j + 1 < d.size(); ++j) {
        consolidate(d[j], d[j + 1], layout, nv);
    }
}

std::vector<nn::Tensor> run_multidiffusion(const WindowDenoiseFn& denoise, const WindowLayout& layout, std::size_t nx,
                                           std::size_t ny, std::size_t nv, const std::vector<double>& sigmas,
                                           std::mt19937_64& rng, const StepObserver& observer) {
    layout.validate();
    if (sigmas.size() < 2) {
        throw ValidationError("sampler needs at least two noise levels");
    }
    const std::vector<std::size_t> shape{1, layout.window_len * nv, nx, ny};
    std::vector<nn::Tensor> z(layout.windows, nn::Tensor::zeros(shape));
    {
        auto noise = shared_noise(layout, nx, ny, nv, rng);
        for (std::size_t j = 0; j < layout.windows; ++j) {
            z[j].data = std::move(noise[j]);
            for (auto& v : z[j].data) {
                v *= sigmas.front();
            }
        }
    }
    std::vector<nn::Tensor> d(layout.windows);
    for (std::size_t k = 0; k + 1 < sigmas.size(); ++k) {
        parallel_for(layout.windows, [&](std::size_t j) { d[j] = denoise(j, z[j], sigmas[k]); });
        for (std::size_t j = 0; j < layout.windows; ++j) {
            if (d[j].shape != shape) {
                throw ShapeError("window denoiser returned " + nn::shape_string(d[j].shape));
            }
        }
        consolidate_all(d, layout, nv);
        const auto eps = shared_noise(layout, nx, ny, nv, rng);
        for (std::size_t j = 0; j < layout.windows; ++j) {
            exponential_step(z[j].data, d[j].data, eps[j], sigmas[k], sigmas[k + 1]);
            for (double v : z[j].data) {
                if (!std::isfinite(v)) {
                    throw NumericalError("sampler state of window " + std::to_string(j) +
                                         " became non-finite at step " + std::to_string(k));
                }
            }
        }
        if (observer) {
            observer(k, z);
        }
    }
    return z;
}

void combine_windows(const std::vector<nn::Tensor>& z, const WindowLayout& layout, GridField& field) {
    layout.validate();
    if (z.size() != layout.windows || field.shape.nt != layout.total_len()) {
        throw ShapeError("combine: field or window count does not match the layout");
    }
    const std::size_t nv = field.shape.nv;
    const std::size_t plane = field.shape.nx * field.shape.ny;
    for (std::size_t j = 0; j < layout.windows; ++j) {
        check_window(z[j], layout, nv);
        if (z[j].dim(2) != field.shape.nx || z[j].dim(3) != field.shape.ny) {
            throw ShapeError("combine: window grid does not match the field");
        }
        if (j > 0) {
            const std::size_t n = layout.overlap * nv * plane;
            const double* left = z[j - 1].data.data() + layout.stride() * nv * plane;
            if (std::memcmp(left, z[j].data.data(), n * sizeof(double)) != 0) {
                throw Error("combine: windows " + std::to_string(j - 1) + " and " + std::to_string(j) +
                            " disagree on their shared steps");
            }
        }
    }
    // Right windows first so the left window wins in every overlap.
    for (std::size_t j = layout.windows; j-- > 0;) {
        channels_to_window(z[j].data, field, layout.start(j), layout.window_len);
    }
}

WindowLayout sr_layout(const SrModel& model, std::size_t windows) {
    const auto& cfg = model.config();
    const auto day = static_cast<std::size_t>(cfg.downsample.temporal_window);
    return make_layout(windows, cfg.window_steps(), std::min(day, cfg.window_steps()));
}

GridField sample_long(const SrModel& model, const GridField& y_coarse, const WindowLayout& layout, double guidance,
                      std::mt19937_64& rng, const StepObserver& observer) {
    layout.validate();
    const auto& cfg = model.config();
    const auto day = static_cast<std::size_t>(cfg.downsample.temporal_window);
    if (layout.window_len != cfg.window_steps() || layout.overlap % day != 0) {
        throw ValidationError("sample_long: layout must use " + std::to_string(cfg.window_steps()) +
                              "-step windows with whole-day overlaps");
    }
    if (y_coarse.shape.nt * day != layout.total_len()) {
        throw ShapeError("sample_long: conditioning holds " + std::to_string(y_coarse.shape.nt) + " days but the layout spans " +
                         std::to_string(layout.total_len()) + " steps");
    }
    const GridField cond_fine = model.prepare_cond(y_coarse);
    std::vector<nn::Tensor> cond(layout.windows);
    for (std::size_t j = 0; j < layout.windows; ++j) {
        cond[j] = model.window_cond(cond_fine, layout.start(j) / day);
    }
    const WindowDenoiseFn fn = [&](std::size_t j, const nn::Tensor& z, double sigma) {
        return cfg_denoise(model.denoiser(), z, sigma, &cond[j], guidance);
    };
    const auto z = run_multidiffusion(fn, layout, model.nx_fine(), model.ny_fine(), model.nv(), model.sigma_grid(), rng,
                                      observer);
    GridField residual = GridField::like(interp_upsample(y_coarse, cfg.downsample), layout.total_len());
    combine_windows(z, layout, residual);
    return reconstruct(residual, y_coarse, model.normalization());
}

}  // namespace downgen
