#include <doctest.h>

#include "downgen/error.hpp"
#include "downgen/resample.hpp"
#include "downgen/synth.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

using namespace downgen;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.nx = 8;
    c.ny = 8;
    c.n_days = 30;
    c.n_members = 2;
    c.downsample = DownsampleSpec{2, kStepsPerDay};
    c.rng_seed = 99;
    return c;
}

std::vector<double> pixel_series(const GridField& f, std::size_t i, std::size_t j, std::size_t v) {
    std::vector<double> s(f.shape.nt);
    for (std::size_t t = 0; t < f.shape.nt; ++t) {
        s[t] = f.at(t, i, j, v);
    }
    return s;
}

double w1_equal_size(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        acc += std::abs(a[k] - b[k]);
    }
    return acc / static_cast<double>(a.size());
}

double pixel_mean_w1(const GridField& a, const GridField& b, std::size_t v) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.shape.nx; ++i) {
        for (std::size_t j = 0; j < a.shape.ny; ++j) {
            acc += w1_equal_size(pixel_series(a, i, j, v), pixel_series(b, i, j, v));
        }
    }
    return acc / static_cast<double>(a.shape.nx * a.shape.ny);
}

}  // namespace

TEST_CASE("synthetic field is constant when every term is off") {
    SynthConfig c = small_config();
    c.noise_amp = 0.0;
    c.seasonal_amp = 0.0;
    c.diurnal_amp = 0.0;
    c.lat_gradient = 0.0;
    c.hill_height = 0.0;
    c.n_days = 2;
    auto f = gen_fine_ensemble(c);
    const auto& prof = var_profiles();
    for (std::size_t t = 0; t < f.shape.nt; ++t) {
        for (std::size_t p = 0; p < 64; ++p) {
            for (std::size_t v = 0; v < kSynthVars; ++v) {
                CHECK(f.data[(t * 64 + p) * 4 + v] == prof[v].base);
            }
        }
    }
}

TEST_CASE("synthetic generation is deterministic and members differ") {
    SynthConfig c = small_config();
    auto a = gen_synth_pair(c);
    auto b = gen_synth_pair(c);
    CHECK(a.fine_truth.data == b.fine_truth.data);
    CHECK(a.coarse_biased[1].data == b.coarse_biased[1].data);
    CHECK(a.coarse_biased[0].data != a.coarse_biased[1].data);
    CHECK(a.coarse_biased[0].data != a.coarse_truth.data);
    CHECK(a.coarse_biased[0].member_id == 0);
    CHECK(a.coarse_biased[1].member_id == 1);
}

TEST_CASE("coarse truth is the coarsened fine truth bit for bit") {
    SynthConfig c = small_config();
    auto pair = gen_synth_pair(c);
    auto again = coarsen(pair.fine_truth, c.downsample);
    CHECK(again.shape == pair.coarse_truth.shape);
    CHECK(std::memcmp(again.data.data(), pair.coarse_truth.data.data(), again.data.size() * sizeof(double)) == 0);
    CHECK(again.time == pair.coarse_truth.time);
    CHECK(pair.coarse_truth.time.time0 == pair.fine_truth.time.time0);
    CHECK(pair.coarse_truth.shape.nt * kStepsPerDay == pair.fine_truth.shape.nt);
}

TEST_CASE("standalone generators agree with the paired generator") {
    SynthConfig c = small_config();
    auto pair = gen_synth_pair(c);
    auto fine = gen_fine_ensemble(c);
    CHECK(fine.data == pair.fine_truth.data);
    auto members = gen_biased_coarse_ensemble(c, fine);
    REQUIRE(members.size() == 2);
    CHECK(members[1].data == pair.coarse_biased[1].data);
}

TEST_CASE("noise spectrum follows the prescribed slope") {
    const std::size_t n = 128;
    const double slope = 3.0;
    const std::size_t nh = n / 2 + 1;
    std::vector<double> power(n * nh, 0.0);
    std::vector<double> buf(n * n);
    auto* spec = fftw_alloc_complex(n * nh);
    fftw_plan plan = fftw_plan_dft_r2c_2d(n, n, buf.data(), spec, FFTW_ESTIMATE);
    double var = 0.0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        auto field = spectral_noise_field(n, n, slope, static_cast<std::uint64_t>(s + 1));
        double m = 0.0;
        for (double v : field) {
            m += v;
            var += v * v;
        }
        CHECK(std::abs(m) < 1e-9);
        std::copy(field.begin(), field.end(), buf.begin());
        fftw_execute(plan);
        for (std::size_t k = 0; k < n * nh; ++k) {
            power[k] += spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
        }
    }
    fftw_destroy_plan(plan);
    fftw_free(spec);
    var /= static_cast<double>(seeds * n * n);
    CHECK(var == doctest::Approx(1.0).epsilon(0.25).scale(0));
    // Radially bin integer |k| in [2, 20] and fit log power against log k.
    std::vector<double> bin_power(64, 0.0);
    std::vector<double> bin_count(64, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
        for (std::size_t q = 0; q < nh; ++q) {
            const double kx = m <= n / 2 ? static_cast<double>(m) : static_cast<double>(m) - n;
            const double k = std::sqrt(kx * kx + static_cast<double>(q * q));
            const auto b = static_cast<std::size_t>(std::lround(k));
            if (b >= 2 && b <= 20) {
                bin_power[b] += power[m * nh + q];
                bin_count[b] += 1.0;
            }
        }
    }
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t b = 2; b <= 20; ++b) {
        lx.push_back(std::log(static_cast<double>(b)));
        ly.push_back(std::log(bin_power[b] / bin_count[b]));
    }
    const double fitted = -ols_slope(lx, ly);
    CHECK(std::abs(fitted - slope) < 0.2);
}

TEST_CASE("injected warming trend is recovered") {
    SynthConfig c = small_config();
    c.n_days = 3650;
    c.n_members = 3;
    c.trend_per_year = 0.02;
    c.keep_fine = false;
    c.bias.mean_offset = 1.0;
    c.bias.var_scale = 1.5;
    auto pair = gen_synth_pair(c);
    auto trend_of = [](const GridField& f) {
        auto r = zonal_weighted_rolling_mean(f, kTemperature, -90.0, 90.0, 365);
        std::vector<double> years(r.values.size());
        for (std::size_t k = 0; k < years.size(); ++k) {
            years[k] = static_cast<double>(r.center_hours[k]) / (24.0 * 365.0);
        }
        return ols_slope(years, r.values);
    };
    CHECK(std::abs(trend_of(pair.coarse_truth) - 0.02) < 0.002);
    double mean_trend = 0.0;
    for (const auto& m : pair.coarse_biased) {
        mean_trend += trend_of(m) / 3.0;
    }
    CHECK(std::abs(mean_trend - 0.02) < 0.002);
}

TEST_CASE("zero-bias members match the truth distribution") {
    SynthConfig c = small_config();
    c.n_days = 1000;
    c.n_members = 1;
    c.seasonal_amp = 0.0;
    c.memory_days = 0.2;
    c.keep_fine = false;
    auto pair = gen_synth_pair(c);
    const auto& member = pair.coarse_biased[0];
    const auto& truth = pair.coarse_truth;
    const double observed = pixel_mean_w1(member, truth, kTemperature);
    // Permutation null: randomly exchange whole days between the two sets.
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> null;
    for (int rep = 0; rep < 30; ++rep) {
        GridField a = member;
        GridField b = truth;
        for (std::size_t t = 0; t < a.shape.nt; ++t) {
            if (coin(rng)) {
                auto sa = a.step(t);
                auto sb = b.step(t);
                std::swap_ranges(sa.begin(), sa.end(), sb.begin());
            }
        }
        null.push_back(pixel_mean_w1(a, b, kTemperature));
    }
    double m = 0.0;
    for (double v : null) {
        m += v / static_cast<double>(null.size());
    }
    double sd = 0.0;
    for (double v : null) {
        sd += (v - m) * (v - m) / static_cast<double>(null.size() - 1);
    }
    sd = std::sqrt(sd);
    CHECK(observed < m + 3.0 * sd);
}

TEST_CASE("mean offset shifts member means by one scale unit") {
    SynthConfig c = small_config();
    c.n_days = 1000;
    c.n_members = 1;
    c.seasonal_amp = 0.0;
    c.memory_days = 0.2;
    c.keep_fine = false;
    c.bias.mean_offset = 1.0;
    auto pair = gen_synth_pair(c);
    const double scale = var_profiles()[kTemperature].scale;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            auto a = pixel_series(pair.coarse_biased[0], i, j, kTemperature);
            auto b = pixel_series(pair.coarse_truth, i, j, kTemperature);
            double ma = 0.0;
            double mb = 0.0;
            for (std::size_t t = 0; t < a.size(); ++t) {
                ma += a[t];
                mb += b[t];
            }
            const auto n = static_cast<double>(a.size());
            ma /= n;
            mb /= n;
            double va = 0.0;
            double vb = 0.0;
            for (std::size_t t = 0; t < a.size(); ++t) {
                va += (a[t] - ma) * (a[t] - ma);
                vb += (b[t] - mb) * (b[t] - mb);
            }
            const double se = std::sqrt(va / n / n + vb / n / n);
            CHECK(std::abs((ma - mb) - scale) < 4.0 * std::sqrt(2.0) * se);
        }
    }
}

TEST_CASE("synth config validation") {
    SynthConfig c = small_config();
    c.bias.var_scale = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config();
    c.nx = 7;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = small_config();
    c.seasonal_amp = -1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}
