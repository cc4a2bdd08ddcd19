#include "downgen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace downgen::nn {

GradCheckResult grad_check(ParamStore& store, const std::function<Var(Graph&)>& loss, double eps,
                           std::size_t max_entries, std::uint64_t seed) {
    store.zero_grad();
    {
        Graph g(true);
        Var l = loss(g);
        g.backward(l);
    }
    auto eval = [&]() {
        Graph g(false);
        return loss(g).value().data.at(0);
    };
    std::mt19937_64 rng(seed);
    GradCheckResult res;
    for (std::size_t k = 0; k < store.size(); ++k) {
        Param& p = store[k];
        std::vector<std::size_t> idx(p.value.size());
        std::iota(idx.begin(), idx.end(), 0);
        if (max_entries > 0 && idx.size() > max_entries) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries);
        }
        double diff2 = 0.0;
        double a2 = 0.0;
        double n2 = 0.0;
        for (std::size_t i : idx) {
            const double orig = p.value.data[i];
            p.value.data[i] = orig + eps;
            const double up = eval();
            p.value.data[i] = orig - eps;
            const double down = eval();
            p.value.data[i] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = p.grad.data[i];
            diff2 += (analytic - numeric) * (analytic - numeric);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
            ++res.checked_entries;
        }
        const double scale = std::sqrt(std::max(a2, n2));
        // Tensors whose gradient is numerically zero are compared in absolute terms.
        const double rel = scale > 1e-8 ? std::sqrt(diff2) / scale : std::sqrt(diff2);
        if (rel > res.max_rel_error || res.worst_param.empty()) {
            res.max_rel_error = std::max(res.max_rel_error, rel);
            if (rel >= res.max_rel_error) {
                res.worst_param = p.name;
            }
        }
    }
    return res;
}

void randomize_params(ParamStore& store, double std, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std);
    for (std::size_t k = 0; k < store.size(); ++k) {
        for (double& v : store[k].value.data) {
            v = normal(rng);
        }
    }
}

}  // namespace downgen::nn
