#include <doctest.h>

#include "downgen/error.hpp"
#include "downgen/layout.hpp"
#include "downgen/multidiffusion.hpp"
#include "downgen/parallel.hpp"
#include "downgen/resample.hpp"
#include "support/fixtures.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace downgen;
using namespace downgen::fixtures;

namespace {

bool same_bytes(const double* a, const double* b, std::size_t n) { return std::memcmp(a, b, n * sizeof(double)) == 0; }

// True when every neighbouring pair agrees bitwise on its shared steps.
bool overlaps_identical(const std::vector<nn::Tensor>& z, const WindowLayout& l, std::size_t nv) {
    const std::size_t plane = z.front().dim(2) * z.front().dim(3);
    for (std::size_t j = 0; j + 1 < z.size(); ++j) {
        if (!same_bytes(z[j].data.data() + l.stride() * nv * plane, z[j + 1].data.data(), l.overlap * nv * plane)) {
            return false;
        }
    }
    return true;
}

// Gaussian-prior denoiser whose prior scale differs per window so that
// consolidation has real work to do.
WindowDenoiseFn window_gaussian() {
    return [](std::size_t j, const nn::Tensor& z, double sigma) {
        const double s2 = 1.0 + 0.5 * static_cast<double>(j);
        nn::Tensor d = z;
        for (auto& v : d.data) {
            v *= s2 / (s2 + sigma * sigma);
        }
        return d;
    };
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("window partition arithmetic") {
    const auto one = partition(36, 36, 12);
    CHECK(one.windows == 1);
    CHECK(one.total_len() == 36);

    const auto two = partition(60, 36, 12);
    CHECK(two.windows == 2);
    CHECK(two.start(0) == 0);
    CHECK(two.start(1) == 24);
    CHECK(two.start(0) + two.window_len == 36);

    CHECK(partition(396, 36, 12).windows == 16);
    for (std::size_t m = 1; m <= 8; ++m) {
        const auto l = make_layout(m, 36, 12);
        CHECK(l.total_len() == m * 24 + 12);
        CHECK(partition(l.total_len(), 36, 12).windows == m);
        // Exact covering: each window begins where its predecessor's overlap begins.
        for (std::size_t j = 1; j < m; ++j) {
            CHECK(l.start(j - 1) + l.window_len - l.start(j) == 12);
        }
        CHECK(l.start(m - 1) + l.window_len == l.total_len());
    }

    CHECK_THROWS_AS(partition(50, 36, 12), ValidationError);
    CHECK_THROWS_AS(partition(24, 36, 12), ValidationError);
    CHECK_THROWS_AS(partition(36, 36, 36), ValidationError);
    CHECK_THROWS_AS(make_layout(0, 36, 12), ValidationError);
    CHECK_THROWS_AS(make_layout(3, 36, 36), ValidationError);
    CHECK_THROWS_AS(make_layout(3, 36, 20), ValidationError);
    CHECK(make_layout(2, 36, 36).total_len() == 36);
}

TEST_CASE("shared noise is identical on overlaps and independent elsewhere") {
    const auto l = make_layout(3, 12, 4);
    std::mt19937_64 rng(3);
    const std::size_t nx = 10, ny = 12, nv = 2;
    const auto eps = shared_noise(l, nx, ny, nv, rng);
    REQUIRE(eps.size() == 3);
    const std::size_t plane = nx * ny;
    const std::size_t n_overlap = l.overlap * nv * plane;
    for (std::size_t j = 0; j + 1 < 3; ++j) {
        CHECK(same_bytes(eps[j].data() + l.stride() * nv * plane, eps[j + 1].data(), n_overlap));
    }
    // Window 0 steps [0, 8) against window 1 steps [4, 12): disjoint in global time.
    const std::size_t n = 8 * nv * plane;
    std::vector<double> a(eps[0].begin(), eps[0].begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<double> b(eps[1].begin() + static_cast<std::ptrdiff_t>(n_overlap), eps[1].end());
    REQUIRE(a.size() == b.size());
    CHECK(a.size() >= 1000);
    CHECK(std::abs(pearson(a, b)) < 0.05);

    // A single window reduces to a plain draw folded into channels.
    const GridField ref_field = fine_field(1, nv, 0);
    GridField g = GridField::like(ref_field, 12);
    std::mt19937_64 r1(9);
    std::mt19937_64 r2(9);
    fill_normal(g.data, r1);
    const auto single = shared_noise(make_layout(1, 12, 4), 12, 8, nv, r2);
    CHECK(single.front() == window_to_channels(g, 0, 12));
}

TEST_CASE("shared noise slices a single global draw") {
    // Over many elements the non-overlap draws behave like independent normals.
    const auto l = make_layout(2, 4, 2);
    std::mt19937_64 rng(11);
    const auto eps = shared_noise(l, 50, 50, 1, rng);
    const std::size_t half = 2 * 2500;
    std::vector<double> a(eps[0].begin(), eps[0].begin() + static_cast<std::ptrdiff_t>(half));
    std::vector<double> b(eps[1].begin() + static_cast<std::ptrdiff_t>(half), eps[1].end());
    CHECK(a.size() == 5000);
    CHECK(std::abs(pearson(a, b)) < 0.05);
}

TEST_CASE("consolidation averages shared steps only") {
    const auto l = make_layout(2, 3, 1);
    const std::size_t nv = 2;
    nn::Tensor a = randn({1, 6, 2, 1}, 1);
    nn::Tensor b = randn({1, 6, 2, 1}, 2);

    SUBCASE("identical outputs are unchanged") {
        nn::Tensor c = a;
        nn::Tensor d = a;
        // Shift d so its first step equals a's last step.
        std::copy(a.data.begin() + 8, a.data.end(), d.data.begin());
        const nn::Tensor c0 = c;
        const nn::Tensor d0 = d;
        consolidate(c, d, l, nv);
        CHECK(c.data == c0.data);
        CHECK(d.data == d0.data);
    }
    SUBCASE("a and b become their mean in both windows") {
        nn::Tensor c = a;
        nn::Tensor d = b;
        consolidate(c, d, l, nv);
        // Last step of a holds elements [8, 12); first step of b holds [0, 4).
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(c.data[8 + i] == 0.5 * (a.data[8 + i] + b.data[i]));
            CHECK(d.data[i] == c.data[8 + i]);
        }
        for (std::size_t i = 0; i < 8; ++i) {
            CHECK(c.data[i] == a.data[i]);
            CHECK(d.data[4 + i] == b.data[4 + i]);
        }
    }
    SUBCASE("shape mismatch") {
        nn::Tensor c = a;
        nn::Tensor d = randn({1, 4, 2, 1}, 3);
        CHECK_THROWS_AS(consolidate(c, d, l, nv), ShapeError);
    }
}

TEST_CASE("three chained windows consolidate both edges of the middle window") {
    const auto l = make_layout(3, 3, 1);
    // One scalar per step: window j holds values 10 j + {0, 1, 2}.
    std::vector<nn::Tensor> d(3, nn::Tensor::zeros({1, 3, 1, 1}));
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t t = 0; t < 3; ++t) {
            d[j].data[t] = 10.0 * static_cast<double>(j) + static_cast<double>(t);
        }
    }
    consolidate_all(d, l, 1);
    CHECK(d[0].data == std::vector<double>{0, 1, 6});
    CHECK(d[1].data == std::vector<double>{6, 11, 16});
    CHECK(d[2].data == std::vector<double>{16, 21, 22});
}

TEST_CASE("overlapped sampler keeps neighbouring windows bitwise coherent after every step") {
    const auto sigmas = sigma_steps_edm(32);
    for (std::size_t m : {2, 4, 8}) {
        CAPTURE(m);
        const auto l = make_layout(m, 6, 2);
        std::mt19937_64 rng(m);
        std::size_t steps = 0;
        bool coherent = true;
        const auto z = run_multidiffusion(window_gaussian(), l, 3, 2, 2, sigmas, rng,
                                          [&](std::size_t, const std::vector<nn::Tensor>& s) {
                                              coherent = coherent && overlaps_identical(s, l, 2);
                                              ++steps;
                                          });
        CHECK(steps == sigmas.size() - 1);
        CHECK(coherent);
        GridField out = GridField::make({l.total_len(), 3, 2, 2}, TimeAxis{0, kHoursPerStep}, cell_centers(0, 1, 3),
                                        cell_centers(0, 1, 2), {"a", "b"});
        combine_windows(z, l, out);
        // Every step is taken from the window that covers it.
        for (std::size_t j = 0; j < m; ++j) {
            const auto w = window_to_channels(out, l.start(j), l.window_len);
            CHECK(w == z[j].data);
        }
    }
}

TEST_CASE("overlapped sampler is independent of the worker count") {
    const auto l = make_layout(4, 6, 2);
    const auto sigmas = sigma_steps_edm(24);
    std::mt19937_64 r1(5);
    std::mt19937_64 r2(5);
    set_worker_count(1);
    const auto a = run_multidiffusion(window_gaussian(), l, 3, 3, 1, sigmas, r1);
    set_worker_count(4);
    const auto b = run_multidiffusion(window_gaussian(), l, 3, 3, 1, sigmas, r2);
    set_worker_count(0);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(a[j].data == b[j].data);
    }
}

TEST_CASE("overlapped sampler with a shared Gaussian prior reproduces the prior variance") {
    const double s2 = 2.0;
    const WindowDenoiseFn fn = [&](std::size_t, const nn::Tensor& z, double sigma) {
        nn::Tensor d = z;
        for (auto& v : d.data) {
            v *= s2 / (s2 + sigma * sigma);
        }
        return d;
    };
    const auto l = make_layout(3, 4, 2);
    std::mt19937_64 rng(21);
    const auto z = run_multidiffusion(fn, l, 40, 40, 1, sigma_steps_edm(), rng);
    GridField out = GridField::make({l.total_len(), 40, 40, 1}, TimeAxis{0, kHoursPerStep}, cell_centers(0, 1, 40),
                                    cell_centers(0, 1, 40), {"a"});
    combine_windows(z, l, out);
    double m = 0, s = 0;
    for (double v : out.data) {
        m += v;
    }
    m /= static_cast<double>(out.data.size());
    for (double v : out.data) {
        s += (v - m) * (v - m);
    }
    s /= static_cast<double>(out.data.size());
    CHECK(out.data.size() == 12800);
    CHECK(s == doctest::Approx(s2).epsilon(0.05).scale(0));
}

TEST_CASE("combine rejects windows that disagree on shared steps") {
    const auto l = make_layout(2, 3, 1);
    std::vector<nn::Tensor> z{randn({1, 3, 1, 1}, 1), randn({1, 3, 1, 1}, 2)};
    GridField out = GridField::make({5, 1, 1, 1}, TimeAxis{0, kHoursPerStep}, {0.0}, {0.0}, {"a"});
    CHECK_THROWS_AS(combine_windows(z, l, out), Error);
    z[1].data[0] = z[0].data[2];
    combine_windows(z, l, out);
    CHECK(out.data == std::vector<double>{z[0].data[0], z[0].data[1], z[0].data[2], z[1].data[1], z[1].data[2]});
}

TEST_CASE("long SR sampling reduces to the single-window sampler") {
    const GridField x = fine_field(10, 2, 4);
    const auto cfg = small_sr_config();
    const SrModel model = train_sr(x, cfg);
    const GridField y_all = coarsen(x, cfg.downsample);

    const GridField y3 = y_all.slice_time(2, 5);
    std::mt19937_64 r1(31);
    std::mt19937_64 r2(31);
    std::mt19937_64 r3(31);
    const GridField plain = model.sample(y3, 1.0, r1);
    const GridField one = sample_long(model, y3, sr_layout(model, 1), 1.0, r2);
    CHECK(one.data == plain.data);
    CHECK(one.time.time0 == plain.time.time0);
    // Two windows covering the same span are a degenerate single window.
    const GridField two = sample_long(model, y3, make_layout(2, 36, 36), 1.0, r3);
    CHECK(two.data == plain.data);

    const auto l = sr_layout(model, 3);
    CHECK(l.total_len() == 84);
    const GridField y7 = y_all.slice_time(1, 8);
    std::mt19937_64 r4(8);
    bool coherent = true;
    const GridField long_sample =
        sample_long(model, y7, l, 1.0, r4, [&](std::size_t, const std::vector<nn::Tensor>& z) {
            coherent = coherent && overlaps_identical(z, l, 2);
        });
    CHECK(coherent);
    CHECK(long_sample.shape == GridShape{84, 12, 8, 2});
    CHECK(long_sample.timestamp(0) == y7.timestamp(0));
    for (double v : long_sample.data) {
        CHECK(std::isfinite(v));
    }
    std::mt19937_64 r5(8);
    CHECK_THROWS_AS(sample_long(model, y_all.slice_time(0, 6), l, 1.0, r5), ShapeError);
    CHECK_THROWS_AS(sample_long(model, y3, make_layout(1, 24, 12), 1.0, r5), ValidationError);
}
