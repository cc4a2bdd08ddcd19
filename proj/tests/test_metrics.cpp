#include <doctest.h>

#include "downgen/error.hpp"
#include "downgen/io.hpp"
#include "downgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

using namespace downgen;

namespace {

// NWS procedure: Steadman average first, full regression only when that
// average reaches 80 F.
double nws_heat_index(double t, double rh) {
    const double simple = 0.5 * (t + 61.0 + ((t - 68.0) * 1.2) + (rh * 0.094));
    if ((simple + t) / 2.0 < 80.0) {
        return simple;
    }
    const double c[9] = {-42.379,    2.04901523, 10.14333127, -0.22475541, -6.83783e-3,
                         -5.481717e-2, 1.22874e-3, 8.5282e-4,   -1.99e-6};
    double hi = c[0] + c[1] * t + c[2] * rh + c[3] * t * rh + c[4] * t * t + c[5] * rh * rh + c[6] * t * t * rh +
                c[7] * t * rh * rh + c[8] * t * t * rh * rh;
    if (rh < 13 && t > 80 && t < 112) {
        hi -= ((13 - rh) / 4) * std::sqrt((17 - std::fabs(t - 95.0)) / 17);
    }
    if (rh > 85 && t > 80 && t < 87) {
        hi += ((rh - 85) / 10) * ((87 - t) / 5);
    }
    return hi;
}

SampleSet random_set(std::size_t n, std::size_t d, double shift, double scale, std::uint64_t seed) {
    SampleSet s;
    s.n = n;
    s.d = d;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    for (std::size_t k = 0; k < n * d; ++k) {
        s.values.push_back(shift + scale * g(rng));
    }
    return s;
}

SampleSet shifted(SampleSet s, double c) {
    for (auto& v : s.values) {
        v += c;
    }
    return s;
}

// Brute force: mark every day covered by an all-exceeding h-window.
double streak_bruteforce(const std::vector<double>& x, const std::vector<double>& th, std::size_t h, double delta) {
    std::vector<char> mark(x.size(), 0);
    for (std::size_t i = 0; i + h <= x.size(); ++i) {
        bool all = true;
        for (std::size_t k = i; k < i + h; ++k) {
            all = all && x[k] > th[k] + delta;
        }
        if (all) {
            for (std::size_t k = i; k < i + h; ++k) {
                mark[k] = 1;
            }
        }
    }
    return static_cast<double>(std::count(mark.begin(), mark.end(), 1)) / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("barotropic surface pressure") {
    CHECK(surface_pressure(101325.0, 288.15, 0.0) == 101325.0);
    CHECK(surface_pressure(101325.0, 288.15, 1000.0) == doctest::Approx(90124.27796536457).epsilon(1e-12).scale(0));
    double prev = 101325.0;
    for (double z = 100; z <= 3000; z += 100) {
        const double p = surface_pressure(101325.0, 280.0, z);
        CHECK(p < prev);
        prev = p;
    }
    CHECK_THROWS_AS(surface_pressure(101325.0, 0.0, 10.0), ValidationError);
}

TEST_CASE("relative humidity") {
    CHECK(saturation_vapor_pressure(273.15) == 6.112);
    CHECK(relative_humidity(0.0, 290.0, 101325.0) == 0.0);
    // Invert e(q) = e_s at 293.15 K and 1013.25 hPa.
    const double es = 23.36947123406443;
    const double q = 0.622 * es / (1013.25 - 0.378 * es);
    CHECK(std::abs(relative_humidity(q, 293.15, 101325.0) - 100.0) < 1e-9);
    CHECK_THROWS_AS(relative_humidity(-0.1, 290.0, 1e5), ValidationError);
    CHECK_THROWS_AS(relative_humidity(0.01, 20.0, 1e5), ValidationError);
}

TEST_CASE("heat index") {
    CHECK(heat_index_f(70.0, 50.0) == doctest::Approx(69.05).epsilon(1e-12).scale(0));
    // 75 F / 50 %: the regression stays below 80 F, so the simple branch applies.
    const double simple = 0.5 * (75.0 + 61.0 + (75.0 - 68.0) * 1.2 + 0.094 * 50.0);
    CHECK(heat_index_f(75.0, 50.0) == doctest::Approx(simple).epsilon(1e-14));
    CHECK(simple < 80.0);

    double worst = 0.0;
    for (double t = 80.0; t <= 110.0; t += 1.0) {
        for (double rh = 40.0; rh <= 100.0; rh += 1.0) {
            worst = std::max(worst, std::abs(heat_index_f(t, rh) - nws_heat_index(t, rh)));
        }
    }
    CHECK(worst <= 1.5);
    for (double rh = 40.0; rh <= 100.0; rh += 5.0) {
        for (double t = 80.0; t < 110.0; t += 0.5) {
            CHECK(heat_index_f(t + 0.5, rh) > heat_index_f(t, rh));
        }
    }
    CHECK(heat_index(fahrenheit_to_kelvin(70.0), 50.0) == doctest::Approx(fahrenheit_to_kelvin(69.05)).epsilon(1e-12));
    CHECK(heat_advisory_level(299.0) == 0);
    CHECK(heat_advisory_level(306.0) == 2);
    CHECK(heat_advisory_level(330.0) == 4);
}

TEST_CASE("mean absolute bias") {
    const SampleSet a = random_set(50, 7, 0.0, 1.0, 1);
    CHECK(mab(a, a) == 0.0);
    CHECK(mab(shifted(a, 2.0), a) == doctest::Approx(2.0).epsilon(1e-12));
    const SampleSet b = random_set(80, 7, 0.3, 2.0, 2);
    double direct = 0.0;
    for (std::size_t d = 0; d < 7; ++d) {
        double ma = 0, mb = 0;
        for (std::size_t k = 0; k < 50; ++k) {
            ma += a.values[k * 7 + d] / 50.0;
        }
        for (std::size_t k = 0; k < 80; ++k) {
            mb += b.values[k * 7 + d] / 80.0;
        }
        direct += std::abs(ma - mb) / 7.0;
    }
    CHECK(std::abs(mab(a, b) - direct) < 1e-12);
    CHECK_THROWS_AS(mab(SampleSet{0, 7, {}}, a), ValidationError);
}

TEST_CASE("Wasserstein-1 distance") {
    const std::vector<double> zero{0.0};
    const std::vector<double> one{1.0};
    CHECK(wasserstein1(zero, one) == 1.0);
    const SampleSet a = random_set(200, 5, 0.0, 1.0, 3);
    const SampleSet b = random_set(200, 5, 0.5, 1.5, 4);
    const SampleSet c = random_set(130, 5, -0.2, 0.7, 5);
    CHECK(wasserstein1(a, a) == 0.0);
    for (std::size_t d = 0; d < 5; ++d) {
        auto x = a.column(d);
        auto y = b.column(d);
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        double oracle = 0.0;
        for (std::size_t k = 0; k < 200; ++k) {
            oracle += std::abs(x[k] - y[k]) / 200.0;
        }
        CHECK(std::abs(wasserstein1(a.column(d), b.column(d)) - oracle) <= 1e-9);
    }
    const double ab = wasserstein1(a, b);
    const double ba = wasserstein1(b, a);
    const double ac = wasserstein1(a, c);
    const double cb = wasserstein1(c, b);
    CHECK(ab > 0.0);
    CHECK(std::abs(ab - ba) < 1e-12);
    CHECK(ab <= ac + cb + 1e-12);
    CHECK(std::abs(wasserstein1(shifted(a, 3.25), shifted(c, 3.25)) - ac) < 1e-12);
    CHECK_THROWS_AS(wasserstein1(std::vector<double>{}, one), ValidationError);
}

TEST_CASE("percentile error") {
    const SampleSet a = random_set(101, 4, 0.0, 1.0, 6);
    CHECK(percentile_mae(a, a, 99.0) == 0.0);
    for (double p : {1.0, 37.5, 99.0}) {
        CHECK(percentile_mae(shifted(a, 1.5), a, p) == doctest::Approx(1.5).epsilon(1e-12));
    }
    // Direct oracle: with 101 samples the 37th percentile sits at index 37 exactly
    // and the 37.5th halfway between indices 37 and 38.
    auto x = a.column(2);
    std::sort(x.begin(), x.end());
    CHECK(std::abs(percentile(a.column(2), 37.0) - x[37]) <= 1e-12);
    CHECK(std::abs(percentile(a.column(2), 37.5) - 0.5 * (x[37] + x[38])) <= 1e-12);
    CHECK(percentile(a.column(2), 0.0) == x.front());
    CHECK(percentile(a.column(2), 100.0) == x.back());
    const SampleSet b = random_set(57, 4, 0.1, 1.2, 7);
    double direct = 0.0;
    for (std::size_t d = 0; d < 4; ++d) {
        auto u = a.column(d);
        auto v = b.column(d);
        std::sort(u.begin(), u.end());
        std::sort(v.begin(), v.end());
        const double hu = 0.9 * 100.0;
        const double hv = 0.9 * 56.0;
        const double pu = u[90] + (hu - 90.0) * (u[91] - u[90]);
        const auto lv = static_cast<std::size_t>(hv);
        const double pv = v[lv] + (hv - static_cast<double>(lv)) * (v[lv + 1] - v[lv]);
        direct += std::abs(pu - pv) / 4.0;
    }
    CHECK(std::abs(percentile_mae(a, b, 90.0) - direct) <= 1e-12);
    CHECK_THROWS_AS(percentile(std::vector<double>{}, 50.0), ValidationError);
}

TEST_CASE("rank and linear correlation") {
    const std::vector<double> a{1, 2, 3, 4, 5};
    const std::vector<double> b{2, 4, 6, 8, 10};
    const std::vector<double> c{1, 8, 27, 64, 125};
    CHECK(pearson(a, b) == doctest::Approx(1.0));
    CHECK(pearson(a, c) < 1.0);
    CHECK(spearman(a, c) == doctest::Approx(1.0));
    const std::vector<double> ties{1, 1, 2, 2, 3};
    // Average ranks 0.5 0.5 2.5 2.5 4 against 0 1 2 3 4.
    const std::vector<double> r{0.5, 0.5, 2.5, 2.5, 4.0};
    const std::vector<double> q{0, 1, 2, 3, 4};
    CHECK(spearman(ties, a) == doctest::Approx(pearson(r, q)).epsilon(1e-14));
    CHECK(std::isnan(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3})));
}

TEST_CASE("spatial correlation matrix and error") {
    GridField f = GridField::make({4, 3, 3, 1}, TimeAxis{0, kHoursPerDay}, {0, 1, 2}, {0, 1, 2}, {"w"});
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    for (auto& v : f.data) {
        v = g(rng);
    }
    const auto m = spatial_correlation(std::span(&f, 1), 0, 1, 1, 1);
    CHECK(m.rows == 3);
    CHECK(m.cols == 3);
    CHECK(m.rho[4] == doctest::Approx(1.0).epsilon(1e-15));
    // Hand-computed Pearson for the corner pixel (0, 2).
    double x[4], y[4];
    for (std::size_t t = 0; t < 4; ++t) {
        x[t] = f.at(t, 1, 1, 0);
        y[t] = f.at(t, 0, 2, 0);
    }
    const double mx = (x[0] + x[1] + x[2] + x[3]) / 4, my = (y[0] + y[1] + y[2] + y[3]) / 4;
    double sxy = 0, sxx = 0, syy = 0;
    for (int t = 0; t < 4; ++t) {
        sxy += (x[t] - mx) * (y[t] - my);
        sxx += (x[t] - mx) * (x[t] - mx);
        syy += (y[t] - my) * (y[t] - my);
    }
    CHECK(m.rho[2] == doctest::Approx(sxy / std::sqrt(sxx * syy)).epsilon(1e-14));
    for (double r : m.rho) {
        CHECK(r >= -1.0 - 1e-15);
        CHECK(r <= 1.0 + 1e-15);
    }
    CHECK(spatial_corr_error(m, m) == 0.0);

    GridField h = f;
    for (std::size_t t = 0; t < 4; ++t) {
        h.at(t, 0, 2, 0) = static_cast<double>(t);
    }
    const auto m2 = spatial_correlation(std::span(&h, 1), 0, 1, 1, 1);
    CHECK(spatial_corr_error(m2, m) == doctest::Approx(std::abs(m2.rho[2] - m.rho[2])).epsilon(1e-14));

    for (std::size_t t = 0; t < 4; ++t) {
        h.at(t, 2, 0, 0) = 5.0;
    }
    const auto m3 = spatial_correlation(std::span(&h, 1), 0, 1, 1, 1);
    CHECK(m3.excluded == 1);
    // Corner box clipped at the grid edge.
    const auto corner = spatial_correlation(std::span(&f, 1), 0, 0, 0, 1);
    CHECK(corner.rows == 2);
    CHECK(corner.cols == 2);
}

TEST_CASE("temporal power spectra") {
    const std::size_t n = 64;
    std::vector<double> s(n);
    for (std::size_t k = 0; k < n; ++k) {
        s[k] = std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(k) / n) + 3.0;
    }
    const auto psd = periodogram(s, 2.0);
    CHECK(psd.size() == 32);
    CHECK(std::max_element(psd.begin(), psd.end()) - psd.begin() == 4);  // bin k = 5
    // DFT oracle: |X_5|^2 = (n / 2)^2 over T = n dt.
    CHECK(psd[4] == doctest::Approx(32.0 * 32.0 / 128.0).epsilon(1e-12));
    CHECK(psd[0] < 1e-20);

    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> a(1000, std::vector<double>(64));
    std::vector<std::vector<double>> b(1000, std::vector<double>(64));
    for (auto& x : a) {
        for (auto& v : x) {
            v = g(rng);
        }
    }
    for (auto& x : b) {
        for (auto& v : x) {
            v = g(rng);
        }
    }
    CHECK(temporal_psd_error(a, a) == 0.0);
    CHECK(temporal_psd_error(a, b) < 0.2);
    CHECK_THROWS_AS(ensemble_psd({std::vector<double>(8), std::vector<double>(9)}), ShapeError);
}

TEST_CASE("heat streak probability") {
    const std::vector<double> zero(10, 0.0);
    CHECK(heat_streak_prob(std::vector<double>(10, -1.0), zero, 3, 0.0) == 0.0);
    std::vector<double> run3(10, 0.0);
    run3[4] = run3[5] = run3[6] = 2.0;
    CHECK(heat_streak_prob(run3, zero, 3, 1.0) == doctest::Approx(0.3));
    std::vector<double> run4(12, 0.0);
    run4[1] = run4[2] = run4[3] = run4[4] = 2.0;
    CHECK(heat_streak_prob(run4, std::vector<double>(12, 0.0), 3, 1.0) == doctest::Approx(4.0 / 12.0));

    std::mt19937_64 rng(10);
    std::normal_distribution<double> g;
    std::uniform_int_distribution<std::size_t> hd(1, 5);
    bool all_match = true;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> x(60), th(60);
        for (std::size_t k = 0; k < 60; ++k) {
            x[k] = g(rng) + 0.8;
            th[k] = 0.1 * g(rng);
        }
        const std::size_t h = hd(rng);
        all_match = all_match && heat_streak_prob(x, th, h, 0.3) == streak_bruteforce(x, th, h, 0.3);
        if (h == 1) {
            std::size_t above = 0;
            for (std::size_t k = 0; k < 60; ++k) {
                above += x[k] > th[k] + 0.3;
            }
            CHECK(heat_streak_prob(x, th, 1, 0.3) == static_cast<double>(above) / 60.0);
        }
    }
    CHECK(all_match);
    CHECK_THROWS_AS(heat_streak_prob(std::vector<double>(2), std::vector<double>(2), 3, 0.0), ValidationError);
}

TEST_CASE("daily maximum and heat streak maps") {
    GridField f = GridField::make({24, 1, 2, 1}, TimeAxis{0, kHoursPerStep}, {0.0}, {0.0, 1.0}, {"t"});
    for (std::size_t t = 0; t < 24; ++t) {
        f.at(t, 0, 0, 0) = static_cast<double>(t % 12);
        f.at(t, 0, 1, 0) = -static_cast<double>(t);
    }
    const GridField m = daily_max(f);
    CHECK(m.shape.nt == 2);
    CHECK(m.time.dt_hours == kHoursPerDay);
    CHECK(m.at(0, 0, 0, 0) == 11.0);
    CHECK(m.at(1, 0, 1, 0) == -12.0);

    Climatology clim;
    clim.grouping = {1, 1};
    clim.nx = 1;
    clim.ny = 2;
    clim.nv = 1;
    clim.mean = {5.0, 0.0};
    clim.std = {1.0, 1.0};
    clim.counts = {2};
    const auto p = heat_streak_field(std::span(&m, 1), 0, clim, 2, 1.0);
    CHECK(p == std::vector<double>{1.0, 0.0});
    CHECK(mean_squared_difference(p, std::vector<double>{0.0, 0.0}) == 0.5);
}

TEST_CASE("great circle distance") {
    CHECK(great_circle_distance(12.0, 34.0, 12.0, 34.0) == 0.0);
    CHECK(great_circle_distance(0.0, 90.0, 0.0, -90.0) == doctest::Approx(180.0).epsilon(1e-12));
    CHECK(great_circle_distance(0.0, 0.0, 90.0, 0.0) == doctest::Approx(90.0).epsilon(1e-12));
    CHECK(great_circle_distance(10.0, 0.0, 10.0, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("derived variables on a field") {
    GridField f = GridField::make({1, 1, 2, 4}, TimeAxis{0, kHoursPerStep}, {0.0}, {0.0, 1.0}, {"t", "w", "q", "p"});
    f.step(0)[0] = 305.0;
    f.step(0)[1] = 3.0;
    f.step(0)[2] = 0.015;
    f.step(0)[3] = 101000.0;
    std::copy(f.step(0).begin(), f.step(0).begin() + 4, f.step(0).begin() + 4);
    GridField elev = GridField::make({1, 1, 2, 1}, TimeAxis{0, kHoursPerStep}, {0.0}, {0.0, 1.0}, {"z"});
    elev.data = {0.0, 500.0};
    const GridField d = with_derived_variables(f, elev);
    CHECK(d.shape.nv == 6);
    CHECK(d.var_names[4] == "relative_humidity");
    const double rh0 = relative_humidity(0.015, 305.0, 101000.0);
    CHECK(d.at(0, 0, 0, 4) == rh0);
    CHECK(d.at(0, 0, 1, 4) < rh0);
    CHECK(d.at(0, 0, 0, 5) == heat_index(305.0, rh0));
}

TEST_CASE("metric report CSVs") {
    MetricReport r;
    r.period = "test";
    r.add("wd", "temperature", "GenBCSR", "K", 0.5);
    r.add("wd", "temperature", "BCSD", "K", 0.75);
    r.add("mab", "temperature", "GenBCSR", "K", 0.1);
    const auto dir = std::filesystem::temp_directory_path() / "downgen_metric_report";
    std::filesystem::create_directories(dir);
    r.write_comparison_csv(dir / "cmp.csv", {"GenBCSR", "BCSD"});
    std::ifstream in(dir / "cmp.csv");
    std::stringstream ss;
    ss << in.rdbuf();
    const auto rows = parse_csv(ss.str());
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == std::vector<std::string>{"metric", "variable", "units", "GenBCSR", "BCSD"});
    CHECK(rows[1] == std::vector<std::string>{"wd", "temperature", "K", "0.5", "0.75"});
    CHECK(rows[2] == std::vector<std::string>{"mab", "temperature", "K", "0.1", ""});
    std::filesystem::remove_all(dir);
}
