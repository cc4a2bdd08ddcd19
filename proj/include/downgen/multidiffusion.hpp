#pragma once

#include "downgen/diffusion.hpp"
#include "downgen/grid.hpp"
#include "downgen/nn.hpp"

#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace downgen {

/// Staggered windows along the fine time axis. Window j covers
/// [j * (window_len - overlap), j * (window_len - overlap) + window_len).
struct WindowLayout {
    std::size_t windows = 1;
    std::size_t window_len = 36;
    std::size_t overlap = 12;

    std::size_t stride() const { return window_len - overlap; }
    std::size_t start(std::size_t j) const { return j * stride(); }
    std::size_t total_len() const { return windows * stride() + overlap; }
    void validate() const;
};

/// Layout with `windows` windows. overlap == window_len is accepted for two
/// windows (both then cover the same span).
WindowLayout make_layout(std::size_t windows, std::size_t window_len, std::size_t overlap);

/// Layout exactly covering total_len; throws ValidationError when the lengths
/// do not fit M (window_len - overlap) + overlap for an integer M >= 1.
WindowLayout partition(std::size_t total_len, std::size_t window_len, std::size_t overlap);

/// One global standard-normal field of total_len steps drawn in grid order and
/// sliced per window, each slice folded into channels [window_len * nv, nx, ny].
std::vector<std::vector<double>> shared_noise(const WindowLayout& layout, std::size_t nx, std::size_t ny,
                                              std::size_t nv, std::mt19937_64& rng);

/// Replace the shared steps of two neighbouring windows by their mean.
/// Both tensors hold [1, window_len * nv, nx, ny].
void consolidate(nn::Tensor& left, nn::Tensor& right, const WindowLayout& layout, std::size_t nv);

/// Consolidate every neighbouring pair from left to right.
void consolidate_all(std::vector<nn::Tensor>& d, const WindowLayout& layout, std::size_t nv);

/// Denoiser for window j at noise level sigma.
using WindowDenoiseFn = std::function<nn::Tensor(std::size_t window, const nn::Tensor& z, double sigma)>;
/// Called after every solver step with the current window states.
using StepObserver = std::function<void(std::size_t step, const std::vector<nn::Tensor>& z)>;

/// Overlapped sampler: windows are denoised independently (possibly in
/// parallel), consolidated with their neighbours and advanced with shared noise.
std::vector<nn::Tensor> run_multidiffusion(const WindowDenoiseFn& denoise, const WindowLayout& layout, std::size_t nx,
                                           std::size_t ny, std::size_t nv, const std::vector<double>& sigmas,
                                           std::mt19937_64& rng, const StepObserver& observer = {});

/// Stitch window states into `field` steps [0, total_len). Overlaps take the
/// left window and must agree bitwise with the right one.
void combine_windows(const std::vector<nn::Tensor>& z, const WindowLayout& layout, GridField& field);

/// Layout of `windows` SR windows with a one-day overlap for a model.
WindowLayout sr_layout(const SrModel& model, std::size_t windows);

/// Long trajectory from daily coarse input covering total_len / temporal_window days.
GridField sample_long(const SrModel& model, const GridField& y_coarse, const WindowLayout& layout, double guidance,
                      std::mt19937_64& rng, const StepObserver& observer = {});

}  // namespace downgen
