#include "downgen/resample.hpp"

#include "downgen/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

namespace downgen {

void DownsampleSpec::validate() const {
    if (spatial_factor < 1 || temporal_window < 1) {
        throw ValidationError("downsample factors must be >= 1");
    }
}

namespace {

struct Tap {
    std::size_t index;
    double weight;
};

// Keys cubic convolution kernel with a = -0.5.
double keys_kernel(double x) {
    constexpr double a = -0.5;
    x = std::abs(x);
    if (x <= 1.0) {
        return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    }
    if (x < 2.0) {
        return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    }
    return 0.0;
}

// Express sample k (possibly outside [0, n)) as a combination of real samples
// using linear extrapolation from the nearest two edge values.
void add_sample(std::vector<Tap>& taps, long k, std::size_t n, double w) {
    auto push = [&](std::size_t idx, double weight) {
        for (auto& t : taps) {
            if (t.index == idx) {
                t.weight += weight;
                return;
            }
        }
        taps.push_back({idx, weight});
    };
    const long last = static_cast<long>(n) - 1;
    if (n == 1) {
        push(0, w);
    } else if (k < 0) {
        // g(k) = f0 + k (f1 - f0)
        push(0, w * (1.0 - static_cast<double>(k)));
        push(1, w * static_cast<double>(k));
    } else if (k > last) {
        const double d = static_cast<double>(k - last);
        push(static_cast<std::size_t>(last), w * (1.0 + d));
        push(static_cast<std::size_t>(last - 1), -w * d);
    } else {
        push(static_cast<std::size_t>(k), w);
    }
}

// Interpolation taps for each fine index along one axis.
std::vector<std::vector<Tap>> axis_taps(std::size_t n_coarse, int factor) {
    const std::size_t n_fine = n_coarse * static_cast<std::size_t>(factor);
    std::vector<std::vector<Tap>> taps(n_fine);
    for (std::size_t k = 0; k < n_fine; ++k) {
        // Fine cell center in coarse index units.
        const double u = (static_cast<double>(k) + 0.5) / factor - 0.5;
        const double base = std::floor(u);
        const double frac = u - base;
        const long i0 = static_cast<long>(base);
        for (int m = -1; m <= 2; ++m) {
            const double w = keys_kernel(frac - m);
            if (w != 0.0) {
                add_sample(taps[k], i0 + m, n_coarse, w);
            }
        }
    }
    return taps;
}

std::vector<double> refine_coords(const std::vector<double>& coarse, int factor) {
    const double step = coarse.size() > 1 ? coarse[1] - coarse[0] : 1.0;
    std::vector<double> fine;
    fine.reserve(coarse.size() * static_cast<std::size_t>(factor));
    for (double c : coarse) {
        for (int k = 0; k < factor; ++k) {
            fine.push_back(c + ((k + 0.5) / factor - 0.5) * step);
        }
    }
    return fine;
}

std::vector<double> block_mean_coords(const std::vector<double>& fine, int factor) {
    const auto f = static_cast<std::size_t>(factor);
    std::vector<double> coarse(fine.size() / f, 0.0);
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        for (std::size_t m = 0; m < f; ++m) {
            coarse[k] += fine[k * f + m];
        }
        coarse[k] /= static_cast<double>(f);
    }
    return coarse;
}

}  // namespace

GridField coarsen(const GridField& field, const DownsampleSpec& spec) {
    spec.validate();
    const auto f = static_cast<std::size_t>(spec.spatial_factor);
    const auto w = static_cast<std::size_t>(spec.temporal_window);
    const auto& s = field.shape;
    if (s.nx % f != 0 || s.ny % f != 0 || s.nt % w != 0) {
        std::ostringstream msg;
        msg << "coarsen: shape [" << s.nt << "," << s.nx << "," << s.ny << "] not divisible by (" << w
            << "," << f << "," << f << ")";
        throw ShapeError(msg.str());
    }
    GridShape out_shape{s.nt / w, s.nx / f, s.ny / f, s.nv};
    GridField out = GridField::make(out_shape, TimeAxis{field.time.time0, field.time.dt_hours * static_cast<std::int64_t>(w)},
                                    block_mean_coords(field.lon, spec.spatial_factor),
                                    block_mean_coords(field.lat, spec.spatial_factor), field.var_names,
                                    field.member_id);
    const double inv = 1.0 / static_cast<double>(w * f * f);
    std::vector<double> acc(s.nv);
    for (std::size_t T = 0; T < out_shape.nt; ++T) {
        for (std::size_t I = 0; I < out_shape.nx; ++I) {
            for (std::size_t J = 0; J < out_shape.ny; ++J) {
                std::fill(acc.begin(), acc.end(), 0.0);
                for (std::size_t t = T * w; t < (T + 1) * w; ++t) {
                    for (std::size_t i = I * f; i < (I + 1) * f; ++i) {
                        for (std::size_t j = J * f; j < (J + 1) * f; ++j) {
                            const double* src = &field.data[field.index(t, i, j, 0)];
                            for (std::size_t v = 0; v < s.nv; ++v) {
                                acc[v] += src[v];
                            }
                        }
                    }
                }
                for (std::size_t v = 0; v < s.nv; ++v) {
                    out.at(T, I, J, v) = acc[v] * inv;
                }
            }
        }
    }
    return out;
}

GridField coarsen_spatial(const GridField& field, int spatial_factor) {
    return coarsen(field, DownsampleSpec{spatial_factor, 1});
}

GridField interp_spatial(const GridField& field, int spatial_factor) {
    if (spatial_factor < 1) {
        throw ValidationError("interp_spatial: factor must be >= 1");
    }
    const auto& s = field.shape;
    const auto f = static_cast<std::size_t>(spatial_factor);
    const auto tx = axis_taps(s.nx, spatial_factor);
    const auto ty = axis_taps(s.ny, spatial_factor);
    GridShape out_shape{s.nt, s.nx * f, s.ny * f, s.nv};
    GridField out = GridField::make(out_shape, field.time, refine_coords(field.lon, spatial_factor),
                                    refine_coords(field.lat, spatial_factor), field.var_names, field.member_id);
    // Separable: along lon into tmp [nx_f, ny_c, nv], then along lat.
    std::vector<double> tmp(out_shape.nx * s.ny * s.nv);
    for (std::size_t t = 0; t < s.nt; ++t) {
        std::fill(tmp.begin(), tmp.end(), 0.0);
        for (std::size_t i = 0; i < out_shape.nx; ++i) {
            for (const auto& tap : tx[i]) {
                for (std::size_t j = 0; j < s.ny; ++j) {
                    const double* src = &field.data[field.index(t, tap.index, j, 0)];
                    double* dst = &tmp[(i * s.ny + j) * s.nv];
                    for (std::size_t v = 0; v < s.nv; ++v) {
                        dst[v] += tap.weight * src[v];
                    }
                }
            }
        }
        for (std::size_t i = 0; i < out_shape.nx; ++i) {
            for (std::size_t j = 0; j < out_shape.ny; ++j) {
                double* dst = &out.data[out.index(t, i, j, 0)];
                for (const auto& tap : ty[j]) {
                    const double* src = &tmp[(i * s.ny + tap.index) * s.nv];
                    for (std::size_t v = 0; v < s.nv; ++v) {
                        dst[v] += tap.weight * src[v];
                    }
                }
            }
        }
    }
    return out;
}

GridField interp_upsample(const GridField& field, const DownsampleSpec& spec) {
    spec.validate();
    const auto w = static_cast<std::size_t>(spec.temporal_window);
    if (field.time.dt_hours % spec.temporal_window != 0) {
        throw ShapeError("interp_upsample: coarse time step not divisible by temporal window");
    }
    GridField spatial = interp_spatial(field, spec.spatial_factor);
    if (w == 1) {
        return spatial;
    }
    GridField out = GridField::like(spatial, spatial.shape.nt * w);
    out.time.dt_hours = field.time.dt_hours / spec.temporal_window;
    for (std::size_t t = 0; t < spatial.shape.nt; ++t) {
        auto src = spatial.step(t);
        for (std::size_t k = 0; k < w; ++k) {
            std::copy(src.begin(), src.end(), out.step(t * w + k).begin());
        }
    }
    return out;
}

std::vector<double> zonal_weighted_mean(const GridField& field, std::size_t var, double lat_min,
                                        double lat_max) {
    if (var >= field.shape.nv) {
        throw ShapeError("zonal_weighted_mean: variable index out of range");
    }
    std::vector<std::pair<std::size_t, double>> rows;
    double wsum = 0.0;
    for (std::size_t j = 0; j < field.shape.ny; ++j) {
        if (field.lat[j] >= lat_min && field.lat[j] <= lat_max) {
            const double w = std::cos(field.lat[j] * std::numbers::pi / 180.0);
            rows.emplace_back(j, w);
            wsum += w * static_cast<double>(field.shape.nx);
        }
    }
    if (rows.empty()) {
        throw ValidationError("zonal_weighted_mean: latitude band contains no grid rows");
    }
    std::vector<double> series(field.shape.nt, 0.0);
    for (std::size_t t = 0; t < field.shape.nt; ++t) {
        double acc = 0.0;
        for (std::size_t i = 0; i < field.shape.nx; ++i) {
            for (const auto& [j, w] : rows) {
                acc += w * field.at(t, i, j, var);
            }
        }
        series[t] = acc / wsum;
    }
    return series;
}

RollingSeries zonal_weighted_rolling_mean(const GridField& field, std::size_t var, double lat_min,
                                          double lat_max, std::size_t window_steps) {
    if (window_steps == 0 || window_steps > field.shape.nt) {
        throw ValidationError("zonal_weighted_rolling_mean: window longer than series");
    }
    const auto series = zonal_weighted_mean(field, var, lat_min, lat_max);
    RollingSeries out;
    const std::size_t n = series.size() - window_steps + 1;
    out.values.resize(n);
    out.center_hours.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t m = 0; m < window_steps; ++m) {
            acc += series[k + m];
        }
        out.values[k] = acc / static_cast<double>(window_steps);
        out.center_hours[k] = field.timestamp(k + window_steps / 2);
    }
    return out;
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ValidationError("ols_slope: need two equally sized series of length >= 2");
    }
    const auto n = static_cast<double>(x.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        mx += x[k];
        my += y[k];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    if (sxx == 0.0) {
        throw ValidationError("ols_slope: x has zero variance");
    }
    return sxy / sxx;
}

}  // namespace downgen
