#include <doctest.h>

#include "downgen/cli.hpp"
#include "downgen/config.hpp"
#include "downgen/error.hpp"
#include "downgen/io.hpp"
#include "downgen/pipeline.hpp"
#include "support/tempdir.hpp"

#include <fstream>
#include <sstream>

using namespace downgen;
namespace fs = std::filesystem;

namespace {

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    if (out_text) {
        *out_text = out.str();
    }
    if (err_text) {
        *err_text = err.str();
    }
    return code;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("config defaults, parsing and overrides") {
    const PipelineConfig d = PipelineConfig::defaults();
    CHECK_NOTHROW(d.check());
    CHECK(PipelineConfig::parse(PipelineConfig::default_text()) == d);
    CHECK(PipelineConfig::parse(d.to_ini()) == d);

    const PipelineConfig c = PipelineConfig::parse("rng_seed = 9\n[synth]\nnx = 24 \n; comment\n[sample]\nschedule=tangent\n");
    CHECK(c.rng_seed() == 9);
    CHECK(c.synth().nx == 24);
    CHECK(c.sample().schedule == ScheduleKind::kTangent);
    CHECK(c.synth().ny == d.synth().ny);

    PipelineConfig o = d;
    o.apply_override("debias.widths=4, 8,16");
    CHECK(o.debias().net.widths == std::vector<std::size_t>{4, 8, 16});
    o.apply_override("rng_seed=5");
    CHECK(o.rng_seed() == 5);
    CHECK(o.stage_seed("sr") != o.stage_seed("debias"));
    CHECK(o.stage_seed("sr") == PipelineConfig::parse("rng_seed=5").stage_seed("sr"));
}

TEST_CASE("config errors name the offending key") {
    auto message = [](auto&& f) {
        try {
            f();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message([] { PipelineConfig::parse("[synth]\nnxx = 3\n"); }).find("synth.nxx") != std::string::npos);
    CHECK(message([] { PipelineConfig::parse("[bogus]\n"); }).find("bogus") != std::string::npos);
    CHECK(message([] { PipelineConfig::parse("seed = 1\n"); }).find("seed") != std::string::npos);
    CHECK(message([] { PipelineConfig::parse("[synth]\nnx\n"); }).find("line 2") != std::string::npos);
    CHECK(message([] { PipelineConfig::defaults().apply_override("sr.nope=1"); }).find("sr.nope") != std::string::npos);
    CHECK(message([] { PipelineConfig::parse("[synth]\nnx = ten\n").synth(); }).find("synth.nx") != std::string::npos);
    CHECK(message([] { PipelineConfig::parse("[debias]\nstandardize = maybe\n").debias(); })
              .find("debias.standardize") != std::string::npos);
    CHECK(message([] { PipelineConfig::parse("[synth]\nnx = 10\n").check(); }) != "no error");  // not divisible by 4
    CHECK(message([] { PipelineConfig::parse("[synth]\ntrain_days = 761\n").check(); }).find("train_days") !=
          std::string::npos);
}

TEST_CASE("sample period resolution") {
    GridField daily = GridField::make({40, 1, 1, 1}, TimeAxis{0, kHoursPerDay}, {0.0}, {0.0}, {"x"});
    const std::int64_t train_end = 30 * kHoursPerDay;
    SampleSettings s;
    SamplePeriod p = resolve_period(daily, train_end, s, 3);
    CHECK(p.first_day == 30);
    CHECK(p.days == 10);
    CHECK(p.windows == 5);  // 2 * 5 + 1 = 11 >= 10
    CHECK(p.covered_days == 11);

    s.windows = 4;
    p = resolve_period(daily, train_end, s, 3);
    CHECK(p.days == 9);
    CHECK(p.covered_days == 9);

    s.length_days = 9;
    CHECK(resolve_period(daily, train_end, s, 3).windows == 4);
    s.length_days = 8;
    CHECK_THROWS_AS(resolve_period(daily, train_end, s, 3), ConfigError);

    s = {};
    s.start_day = 2;
    s.length_days = 1;
    p = resolve_period(daily, train_end, s, 3);
    CHECK(p.first_day == 2);
    CHECK(p.windows == 1);
    CHECK(p.covered_days == 3);

    s.length_days = 39;
    CHECK_THROWS_AS(resolve_period(daily, train_end, s, 3), ConfigError);
    s = {};
    CHECK_THROWS_AS(resolve_period(daily, 50 * kHoursPerDay, s, 3), ConfigError);
}

TEST_CASE("run directories are write-once") {
    test::TempDir tmp;
    const PipelineConfig cfg = PipelineConfig::defaults();
    {
        RunDirectory run(tmp.path() / "r", "x", cfg);
        run.set_attribute("train_end_hour", std::int64_t{48});
        run.finish();
    }
    CHECK(PipelineConfig::load(tmp.path() / "r" / "config.ini") == cfg);
    CHECK(read_train_end(tmp.path() / "r") == 48);
    CHECK_THROWS_AS(RunDirectory(tmp.path() / "r", "x", cfg), ConfigError);
    fs::create_directories(tmp.path() / "empty");
    CHECK_NOTHROW(RunDirectory(tmp.path() / "empty", "x", cfg));
    CHECK_THROWS_AS(read_train_end(tmp.path() / "empty"), ConfigError);
}

TEST_CASE("evaluation of the truth against itself is error free") {
    GridField truth = GridField::make({48, 4, 4, 4}, TimeAxis{0, kHoursPerStep}, cell_centers(0, 1, 4),
                                      cell_centers(30, 1, 4), synth_var_names());
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    for (std::size_t t = 0; t < truth.shape.nt; ++t) {
        for (std::size_t k = 0; k < 16; ++k) {
            truth.data[(t * 16 + k) * 4 + 0] = 295.0 + n(rng);
            truth.data[(t * 16 + k) * 4 + 1] = 6.0 + n(rng);
            truth.data[(t * 16 + k) * 4 + 2] = 0.012 + 0.001 * n(rng);
            truth.data[(t * 16 + k) * 4 + 3] = 101300.0 + 100.0 * n(rng);
        }
    }
    GridField elev = GridField::make({1, 4, 4, 1}, truth.time, truth.lon, truth.lat, {"z"});
    EvaluateSettings s;
    s.streak_days = 1;
    s.streak_doy_buckets = 1;
    GridField shifted = truth;
    for (std::size_t k = 0; k < shifted.data.size(); k += 4) {
        shifted.data[k] += 2.0;
    }
    const auto res = evaluate_methods(truth, truth, elev, {{"same", {truth}}, {"warm", {shifted}}}, s);
    std::size_t checked = 0;
    for (const auto& e : res.report.entries) {
        if (e.method == "same") {
            INFO(e.metric << " " << e.variable);
            CHECK(e.value == doctest::Approx(0.0));
            ++checked;
        }
        if (e.method == "warm" && e.variable == "temperature" && (e.metric == "mab" || e.metric == "wd")) {
            CHECK(e.value == doctest::Approx(2.0));
        }
    }
    CHECK(checked == 6 * 5 + 2);
    GridField wrong = truth.slice_time(0, 24);
    CHECK_THROWS_AS(evaluate_methods(truth, truth, elev, {{"bad", {wrong}}}, s), ShapeError);
}

TEST_CASE("command-line exit codes") {
    test::TempDir tmp;
    std::string out;
    std::string err;
    CHECK(cli({"--help"}, &out) == kExitOk);
    CHECK(out.find("e2e") != std::string::npos);
    CHECK(cli({}, nullptr, &err) == kExitUsage);
    CHECK(cli({"frobnicate"}, nullptr, &err) == kExitUsage);
    CHECK(cli({"default-config"}, &out) == kExitOk);
    CHECK(PipelineConfig::parse(out) == PipelineConfig::defaults());

    const fs::path ini = tmp.path() / "bad.ini";
    std::ofstream(ini) << "[sr]\nwindow_dayz = 3\n";
    CHECK(cli({"gen-data", "-c", ini.string(), "-o", (tmp.path() / "g").string()}, nullptr, &err) == kExitUsage);
    CHECK(err.find("sr.window_dayz") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.path() / "g"));

    CHECK(cli({"gen-data", "--set", "synth.bogus=1"}, nullptr, &err) == kExitUsage);
    CHECK(err.find("synth.bogus") != std::string::npos);
    CHECK(cli({"train-sr", "-o", (tmp.path() / "s").string()}, nullptr, &err) == kExitUsage);  // --data missing
    CHECK(cli({"train-sr", "-d", (tmp.path() / "missing").string(), "-o", (tmp.path() / "s").string()}, nullptr,
              &err) == kExitUsage);
    CHECK(cli({"sample", "-m", tmp.path().string(), "-i", tmp.path().string(), "--length-days", "8", "--windows",
               "3"},
              nullptr, &err) == kExitUsage);
}

TEST_CASE("stage-by-stage commands reproduce the chained run") {
    test::TempDir tmp;
    const fs::path ini = tmp.path() / "tiny.ini";
    std::ofstream(ini) << test::tiny_pipeline_ini();
    const auto p = [&](const char* name) { return (tmp.path() / name).string(); };
    const std::vector<std::string> base{"-c", ini.string()};
    auto run = [&](std::vector<std::string> args) {
        args.insert(args.end(), base.begin(), base.end());
        std::string err;
        const int code = cli(args, nullptr, &err);
        INFO(err);
        return code;
    };
    REQUIRE(run({"gen-data", "-o", p("data")}) == kExitOk);
    CHECK(run({"gen-data", "-o", p("data")}) == kExitUsage);  // write-once
    REQUIRE(run({"train-debias", "-d", p("data"), "-o", p("dm")}) == kExitOk);
    REQUIRE(run({"debias", "-d", p("data"), "-m", p("dm"), "-o", p("deb")}) == kExitOk);
    REQUIRE(run({"train-sr", "-d", p("data"), "-o", p("srm")}) == kExitOk);
    REQUIRE(run({"sample", "-m", p("srm"), "-i", p("deb"), "-o", p("gen")}) == kExitOk);
    REQUIRE(run({"baseline-bcsd", "-d", p("data"), "-o", p("bcsd")}) == kExitOk);
    REQUIRE(run({"baseline-qm", "-d", p("data"), "-o", p("qm")}) == kExitOk);
    REQUIRE(run({"sample", "-m", p("srm"), "-i", p("qm"), "-o", p("qmsr")}) == kExitOk);
    REQUIRE(run({"sample", "-m", p("srm"), "-i", p("data"), "-o", p("sr")}) == kExitOk);
    REQUIRE(run({"evaluate", "-d", p("data"), "--method", "GenBCSR=" + p("gen"), "--method", "BCSD=" + p("bcsd"),
                 "--method", "QMSR=" + p("qmsr"), "--method", "SR=" + p("sr"), "--svg", "-o", p("eval")}) == kExitOk);
    REQUIRE(run({"e2e", "-o", p("e2e")}) == kExitOk);

    const std::string cmp = slurp(tmp.path() / "eval" / "comparison.csv");
    CHECK(cmp.rfind("metric,variable,units,GenBCSR,BCSD,QMSR,SR\r\n", 0) == 0);
    CHECK(cmp == slurp(tmp.path() / "e2e" / "evaluate" / "comparison.csv"));
    CHECK(slurp(tmp.path() / "eval" / "metrics.csv") == slurp(tmp.path() / "e2e" / "evaluate" / "metrics.csv"));
    CHECK(fs::exists(tmp.path() / "eval" / "fields" / "mab_heat_index.svg"));

    // Sample shape follows --length-days and --windows.
    REQUIRE(run({"sample", "-m", p("srm"), "-i", p("deb"), "--length-days", "5", "-o", p("five")}) == kExitOk);
    const auto five = read_members(tmp.path() / "five");
    CHECK(five.front().shape.nt == 5 * kStepsPerDay);
    REQUIRE(run({"sample", "-m", p("srm"), "-i", p("deb"), "--windows", "1", "--start-day", "0", "-o", p("one")}) ==
            kExitOk);
    const auto one = read_members(tmp.path() / "one");
    CHECK(one.front().shape.nt == 3 * kStepsPerDay);
    CHECK(one.front().time.time0 == 0);
    CHECK(run({"sample", "-m", p("srm"), "-i", p("deb"), "--length-days", "400", "-o", p("long")}) == kExitUsage);
}
