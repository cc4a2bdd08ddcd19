#pragma once

#include "downgen/grid.hpp"
#include "downgen/nn.hpp"

#include <span>
#include <vector>

namespace downgen {

/// Gather time steps of a field into an image batch [N, V, nx, ny].
nn::Tensor steps_to_tensor(const GridField& field, std::span<const std::size_t> steps);

/// Scatter an image batch [N, V, nx, ny] back into the given time steps.
void tensor_to_steps(const nn::Tensor& t, GridField& field, std::span<const std::size_t> steps);

/// Per-pixel table [nx, ny, nv] (variable fastest) as channels [nv, nx, ny].
std::vector<double> table_to_chw(std::span<const double> table, std::size_t nx, std::size_t ny, std::size_t nv);

/// Fold `len` consecutive steps starting at t0 into channels: [len * V, nx, ny]
/// with channel index t * V + v.
std::vector<double> window_to_channels(const GridField& field, std::size_t t0, std::size_t len);

/// Inverse of window_to_channels, writing into field steps [t0, t0 + len).
void channels_to_window(std::span<const double> chw, GridField& field, std::size_t t0, std::size_t len);

}  // namespace downgen
