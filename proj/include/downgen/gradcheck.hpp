#pragma once

#include "downgen/nn.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace downgen::nn {

struct GradCheckResult {
    double max_rel_error = 0.0;  ///< worst per-tensor ||analytic - numeric|| / max(norms)
    std::string worst_param;
    std::size_t checked_entries = 0;
};

/// Compare reverse-mode gradients of `loss` with central finite differences
/// for every parameter in `store`. `max_entries` > 0 limits the entries probed
/// per tensor (chosen with `seed`).
GradCheckResult grad_check(ParamStore& store, const std::function<Var(Graph&)>& loss, double eps = 1e-5,
                           std::size_t max_entries = 0, std::uint64_t seed = 0);

/// Overwrite every parameter with N(0, std^2) draws so zero-initialised
/// branches are exercised.
void randomize_params(ParamStore& store, double std, std::uint64_t seed);

}  // namespace downgen::nn
