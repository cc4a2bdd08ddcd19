#include <doctest.h>

#include "downgen/climatology.hpp"
#include "downgen/error.hpp"
#include "downgen/io.hpp"
#include "downgen/resample.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace downgen;

namespace {

GridField make_field(std::size_t nt, std::size_t nx, std::size_t ny, std::size_t nv, std::int64_t dt = 2) {
    std::vector<std::string> names;
    for (std::size_t v = 0; v < nv; ++v) {
        names.push_back("v" + std::to_string(v));
    }
    return GridField::make({nt, nx, ny, nv}, TimeAxis{0, dt}, cell_centers(0.0, 1.0, nx),
                           cell_centers(10.0, 1.0, ny), names);
}

void fill_random(GridField& f, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : f.data) {
        v = n(rng);
    }
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "downgen_test_grid";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("calendar helpers use floor semantics") {
    CHECK(day_of_year(0) == 0);
    CHECK(day_of_year(24 * 365) == 0);
    CHECK(day_of_year(-1) == 364);
    CHECK(hour_of_day(-2) == 22);
    CHECK(day_index(-1) == -1);
}

TEST_CASE("npy round trip is bit exact") {
    GridField f = make_field(4, 8, 8, 2);
    fill_random(f, 1);
    f.member_id = 3;
    f.time.time0 = 48;
    const auto path = temp_dir() / "roundtrip.npy";
    write_array(f, path);
    GridField g = read_array(path);
    CHECK(g.shape == f.shape);
    CHECK(std::memcmp(g.data.data(), f.data.data(), f.data.size() * sizeof(double)) == 0);
    CHECK(g.lon == f.lon);
    CHECK(g.lat == f.lat);
    CHECK(g.var_names == f.var_names);
    CHECK(g.member_id == f.member_id);
    CHECK(g.time == f.time);
}

TEST_CASE("npy payload is readable as a standard header") {
    const auto path = temp_dir() / "hdr.npy";
    write_npy(path, {2, 3}, {1, 2, 3, 4, 5, 6});
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(bytes.substr(0, 6) == "\x93NUMPY");
    CHECK((bytes.size() - 48) % 64 == 0);
    CHECK(bytes.find("'shape': (2, 3)") != std::string::npos);
    auto arr = read_npy(path);
    CHECK(arr.shape == std::vector<std::size_t>{2, 3});
    CHECK(arr.data[5] == 6.0);
}

TEST_CASE("bad magic is a format error") {
    const auto path = temp_dir() / "bad.npy";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTNPY-garbage-bytes";
    }
    CHECK_THROWS_AS(read_array(path), FormatError);
}

TEST_CASE("writing NaN is rejected") {
    GridField f = make_field(1, 2, 2, 1);
    f.data[2] = std::nan("");
    CHECK_THROWS_AS(write_array(f, temp_dir() / "nan.npy"), ValidationError);
}

TEST_CASE("csv quoting follows RFC 4180") {
    CHECK(csv_quote("plain") == "plain");
    CHECK(csv_quote("a,b") == "\"a,b\"");
    CHECK(csv_quote("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CsvTable t({"name", "value"});
    t.add_row({"x,y", "1"});
    t.add_row({"line\nbreak", "2"});
    auto rows = parse_csv(t.to_string());
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][0] == "x,y");
    CHECK(rows[2][0] == "line\nbreak");
    CHECK_THROWS_AS(t.add_row({"only one"}), ShapeError);
}

TEST_CASE("climatology of a constant field hits the floor") {
    GridField f = make_field(24, 2, 2, 1, 12);
    std::fill(f.data.begin(), f.data.end(), 3.25);
    auto c = compute_climatology(f, ClimGrouping{1, 1});
    for (double m : c.mean) {
        CHECK(m == 3.25);
    }
    for (double s : c.std) {
        CHECK(s == kClimStdFloor);
    }
}

TEST_CASE("alternating field has mean 0 std 1") {
    GridField f = make_field(20, 1, 1, 1, 1);
    for (std::size_t t = 0; t < 20; ++t) {
        f.data[t] = (t % 2 == 0) ? 1.0 : -1.0;
    }
    auto c = compute_climatology(f, ClimGrouping{1, 1});
    CHECK(c.mean[0] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(c.std[0] == doctest::Approx(1.0));
}

TEST_CASE("seasonal sinusoid group means track the sinusoid") {
    // Three years of daily data; every year repeats the same seasonal value plus
    // a zero-mean offset over years, so each doy group mean is the sinusoid.
    const std::size_t years = 3;
    GridField f = make_field(years * 365, 1, 1, 1, 24);
    const double offsets[3] = {-0.5, 0.25, 0.25};
    for (std::size_t t = 0; t < f.shape.nt; ++t) {
        const double doy = static_cast<double>(t % 365);
        f.data[t] = 2.0 * std::sin(2.0 * std::numbers::pi * doy / 365.0) + offsets[t / 365];
    }
    auto c = compute_climatology(f, ClimGrouping{365, 1});
    for (int d = 0; d < 365; ++d) {
        CHECK(std::abs(c.mean_of(d)[0] - 2.0 * std::sin(2.0 * std::numbers::pi * d / 365.0)) < 1e-12);
    }
}

TEST_CASE("climatology with an empty group fails") {
    GridField f = make_field(10, 1, 1, 1, 24);
    CHECK_THROWS_AS(compute_climatology(f, ClimGrouping{365, 1}), ValidationError);
}

TEST_CASE("normalize and denormalize") {
    GridField f = make_field(5, 3, 2, 2);
    fill_random(f, 7);
    auto stats = compute_stats(f);
    SUBCASE("mean maps to zero") {
        GridField m = GridField::like(f, 1);
        std::copy(stats.mean.begin(), stats.mean.end(), m.data.begin());
        for (double v : normalize(m, stats).data) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("round trip") {
        auto back = denormalize(normalize(f, stats), stats);
        for (std::size_t k = 0; k < f.data.size(); ++k) {
            CHECK(std::abs(back.data[k] - f.data[k]) < 1e-12);
        }
    }
    SUBCASE("std two") {
        EnsembleStats s = stats;
        std::fill(s.std.begin(), s.std.end(), 2.0);
        GridField m = GridField::like(f, 1);
        for (std::size_t k = 0; k < s.size(); ++k) {
            m.data[k] = s.mean[k] + 2.0;
        }
        for (double v : normalize(m, s).data) {
            CHECK(v == doctest::Approx(1.0));
        }
    }
    SUBCASE("shape mismatch") {
        EnsembleStats s = stats;
        s.nx = 4;
        CHECK_THROWS_AS(normalize(f, s), ShapeError);
    }
}

TEST_CASE("coarsen") {
    SUBCASE("constant") {
        GridField f = make_field(24, 4, 4, 1);
        std::fill(f.data.begin(), f.data.end(), 1.75);
        auto c = coarsen(f, DownsampleSpec{2, 12});
        CHECK(c.shape == GridShape{2, 2, 2, 1});
        for (double v : c.data) {
            CHECK(v == 1.75);
        }
        CHECK(c.time.dt_hours == 24);
    }
    SUBCASE("block mean") {
        GridField f = make_field(1, 2, 2, 1);
        f.data = {1, 3, 5, 7};
        auto c = coarsen(f, DownsampleSpec{2, 1});
        CHECK(c.data[0] == 4.0);
        CHECK(c.lon[0] == doctest::Approx(1.0));
    }
    SUBCASE("white noise variance drops by f^2") {
        GridField f = make_field(1, 400, 400, 1);
        fill_random(f, 3);
        auto c = coarsen(f, DownsampleSpec{4, 1});
        double m = 0.0;
        for (double v : c.data) {
            m += v;
        }
        m /= static_cast<double>(c.data.size());
        double var = 0.0;
        for (double v : c.data) {
            var += (v - m) * (v - m);
        }
        var /= static_cast<double>(c.data.size());
        CHECK(c.data.size() == 10000);
        CHECK(std::abs(var * 16.0 - 1.0) < 0.1);
    }
    SUBCASE("indivisible") {
        GridField f = make_field(12, 5, 4, 1);
        CHECK_THROWS_AS(coarsen(f, DownsampleSpec{2, 12}), ShapeError);
    }
}

TEST_CASE("interp_upsample") {
    const DownsampleSpec spec{4, 12};
    GridField y = make_field(3, 5, 4, 2, 24);
    SUBCASE("constant") {
        std::fill(y.data.begin(), y.data.end(), -2.5);
        auto x = interp_upsample(y, spec);
        CHECK(x.shape == GridShape{36, 20, 16, 2});
        CHECK(x.time.dt_hours == 2);
        for (double v : x.data) {
            CHECK(std::abs(v + 2.5) < 1e-12);
        }
    }
    SUBCASE("mean shift equivariance") {
        fill_random(y, 11);
        GridField shifted = y;
        for (auto& v : shifted.data) {
            v += 3.5;
        }
        auto a = interp_upsample(y, spec);
        auto b = interp_upsample(shifted, spec);
        for (std::size_t k = 0; k < a.data.size(); ++k) {
            CHECK(std::abs(b.data[k] - a.data[k] - 3.5) < 1e-12);
        }
    }
    SUBCASE("bilinear ramp reproduced") {
        // y = 1 + 0.5 i - 2 j + 0.25 i j on coarse indices; fine pixel k sits at
        // coarse coordinate (k + 0.5) / f - 0.5.
        for (std::size_t t = 0; t < 3; ++t) {
            for (std::size_t i = 0; i < 5; ++i) {
                for (std::size_t j = 0; j < 4; ++j) {
                    for (std::size_t v = 0; v < 2; ++v) {
                        const double di = static_cast<double>(i);
                        const double dj = static_cast<double>(j);
                        y.at(t, i, j, v) = 1.0 + 0.5 * di - 2.0 * dj + 0.25 * di * dj + static_cast<double>(v);
                    }
                }
            }
        }
        auto x = interp_upsample(y, spec);
        for (std::size_t i = 0; i < 20; ++i) {
            for (std::size_t j = 0; j < 16; ++j) {
                const double u = (i + 0.5) / 4.0 - 0.5;
                const double w = (j + 0.5) / 4.0 - 0.5;
                const double expect = 1.0 + 0.5 * u - 2.0 * w + 0.25 * u * w + 1.0;
                CHECK(std::abs(x.at(13, i, j, 1) - expect) < 1e-12);
            }
        }
    }
    SUBCASE("coarsen after interp recovers constants and ramps") {
        for (std::size_t t = 0; t < 3; ++t) {
            for (std::size_t i = 0; i < 5; ++i) {
                for (std::size_t j = 0; j < 4; ++j) {
                    y.at(t, i, j, 0) = 4.0;
                    y.at(t, i, j, 1) = 0.3 * static_cast<double>(i) - 0.7 * static_cast<double>(j) + t;
                }
            }
        }
        auto back = coarsen(interp_upsample(y, spec), spec);
        CHECK(back.shape == y.shape);
        for (std::size_t k = 0; k < y.data.size(); ++k) {
            CHECK(std::abs(back.data[k] - y.data[k]) < 1e-10);
        }
        CHECK(back.lon == y.lon);
    }
}

TEST_CASE("zonal weighted rolling mean") {
    GridField f = make_field(40, 3, 4, 1);
    SUBCASE("constant") {
        std::fill(f.data.begin(), f.data.end(), 7.0);
        auto r = zonal_weighted_rolling_mean(f, 0, 0.0, 90.0, 5);
        CHECK(r.values.size() == 36);
        for (double v : r.values) {
            CHECK(v == doctest::Approx(7.0));
        }
    }
    SUBCASE("linear in time is preserved") {
        for (std::size_t t = 0; t < 40; ++t) {
            for (std::size_t k = 0; k < 12; ++k) {
                f.data[t * 12 + k] = 0.5 * static_cast<double>(t);
            }
        }
        auto r = zonal_weighted_rolling_mean(f, 0, 0.0, 90.0, 7);
        for (std::size_t k = 0; k < r.values.size(); ++k) {
            CHECK(r.values[k] == doctest::Approx(0.5 * static_cast<double>(k + 3)));
            CHECK(r.center_hours[k] == static_cast<std::int64_t>((k + 3) * 2));
        }
    }
    SUBCASE("step function matches direct convolution") {
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (std::size_t t = 0; t < 40; ++t) {
            for (std::size_t i = 0; i < 3; ++i) {
                for (std::size_t j = 0; j < 4; ++j) {
                    f.at(t, i, j, 0) = (t >= 17 ? 2.0 : -1.0) + (j == 0 ? u(rng) : 0.0);
                }
            }
        }
        // Band excludes row j = 0 (lat 10.5), so only the step survives.
        auto r = zonal_weighted_rolling_mean(f, 0, 11.0, 14.0, 6);
        for (std::size_t k = 0; k < r.values.size(); ++k) {
            double acc = 0.0;
            for (std::size_t m = 0; m < 6; ++m) {
                acc += (k + m >= 17) ? 2.0 : -1.0;
            }
            CHECK(std::abs(r.values[k] - acc / 6.0) < 1e-12);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(zonal_weighted_rolling_mean(f, 0, 0.0, 90.0, 41), ValidationError);
        CHECK_THROWS_AS(zonal_weighted_rolling_mean(f, 0, 50.0, 60.0, 3), ValidationError);
    }
}

TEST_CASE("ols slope") {
    CHECK(ols_slope({0, 1, 2, 3}, {1, 3, 5, 7}) == doctest::Approx(2.0));
}
