#include "downgen/layout.hpp"

#include "downgen/error.hpp"

namespace downgen {

nn::Tensor steps_to_tensor(const GridField& field, std::span<const std::size_t> steps) {
    const auto& s = field.shape;
    nn::Tensor t = nn::Tensor::zeros({steps.size(), s.nv, s.nx, s.ny});
    const std::size_t plane = s.nx * s.ny;
    for (std::size_t n = 0; n < steps.size(); ++n) {
        if (steps[n] >= s.nt) {
            throw ShapeError("steps_to_tensor: step out of range");
        }
        auto row = field.step(steps[n]);
        double* dst = t.data.data() + n * s.nv * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t v = 0; v < s.nv; ++v) {
                dst[v * plane + p] = row[p * s.nv + v];
            }
        }
    }
    return t;
}

void tensor_to_steps(const nn::Tensor& t, GridField& field, std::span<const std::size_t> steps) {
    const auto& s = field.shape;
    if (t.rank() != 4 || t.dim(0) != steps.size() || t.dim(1) != s.nv || t.dim(2) != s.nx || t.dim(3) != s.ny) {
        throw ShapeError("tensor_to_steps: tensor " + nn::shape_string(t.shape) + " does not fit field");
    }
    const std::size_t plane = s.nx * s.ny;
    for (std::size_t n = 0; n < steps.size(); ++n) {
        auto row = field.step(steps[n]);
        const double* src = t.data.data() + n * s.nv * plane;
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t v = 0; v < s.nv; ++v) {
                row[p * s.nv + v] = src[v * plane + p];
            }
        }
    }
}

std::vector<double> table_to_chw(std::span<const double> table, std::size_t nx, std::size_t ny, std::size_t nv) {
    if (table.size() != nx * ny * nv) {
        throw ShapeError("table_to_chw: size mismatch");
    }
    std::vector<double> out(table.size());
    const std::size_t plane = nx * ny;
    for (std::size_t p = 0; p < plane; ++p) {
        for (std::size_t v = 0; v < nv; ++v) {
            out[v * plane + p] = table[p * nv + v];
        }
    }
    return out;
}

std::vector<double> window_to_channels(const GridField& field, std::size_t t0, std::size_t len) {
    const auto& s = field.shape;
    if (t0 + len > s.nt) {
        throw ShapeError("window_to_channels: window exceeds field");
    }
    const std::size_t plane = s.nx * s.ny;
    std::vector<double> out(len * s.nv * plane);
    for (std::size_t t = 0; t < len; ++t) {
        auto row = field.step(t0 + t);
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t v = 0; v < s.nv; ++v) {
                out[(t * s.nv + v) * plane + p] = row[p * s.nv + v];
            }
        }
    }
    return out;
}

void channels_to_window(std::span<const double> chw, GridField& field, std::size_t t0, std::size_t len) {
    const auto& s = field.shape;
    const std::size_t plane = s.nx * s.ny;
    if (t0 + len > s.nt || chw.size() != len * s.nv * plane) {
        throw ShapeError("channels_to_window: window does not fit field");
    }
    for (std::size_t t = 0; t < len; ++t) {
        auto row = field.step(t0 + t);
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t v = 0; v < s.nv; ++v) {
                row[p * s.nv + v] = chw[(t * s.nv + v) * plane + p];
            }
        }
    }
}

}  // namespace downgen
