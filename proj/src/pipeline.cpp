#include "downgen/pipeline.hpp"

#include "downgen/baselines.hpp"
#include "downgen/climatology.hpp"
#include "downgen/diffusion.hpp"
#include "downgen/error.hpp"
#include "downgen/io.hpp"
#include "downgen/multidiffusion.hpp"
#include "downgen/reflow.hpp"
#include "downgen/svg.hpp"
#include "downgen/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

namespace downgen {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_manifest(const fs::path& dir) {
    const fs::path p = dir / "manifest.json";
    std::ifstream in(p);
    if (!in) {
        throw ConfigError("not a completed run directory (no manifest.json): " + dir.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("malformed manifest " + p.string() + ": " + e.what());
    }
}

void write_loss_log(const fs::path& path, const std::vector<std::size_t>& steps, const std::vector<double>& loss,
                    const std::vector<double>& lr) {
    CsvTable t({"step", "loss", "lr"});
    for (std::size_t k = 0; k < steps.size(); ++k) {
        t.add_row({std::to_string(steps[k]), format_double(loss[k]), format_double(lr[k])});
    }
    t.write(path);
}

// Daily coarse input over the days covered by the sampler windows; days past
// the end of the input repeat its last day.
GridField period_input(const GridField& daily, const SamplePeriod& p) {
    GridField out = GridField::like(daily, p.covered_days);
    out.time.time0 = daily.timestamp(p.first_day);
    for (std::size_t d = 0; d < p.covered_days; ++d) {
        const std::size_t src = std::min(p.first_day + d, daily.shape.nt - 1);
        const auto s = daily.step(src);
        std::copy(s.begin(), s.end(), out.step(d).begin());
    }
    return out;
}

std::string units_of(const std::string& var) {
    static const std::map<std::string, std::string> units{
        {"temperature", "K"},       {"wind_speed", "m/s"},         {"specific_humidity", "kg/kg"},
        {"sea_level_pressure", "Pa"}, {"relative_humidity", "%"}, {"heat_index", "K"},
    };
    const auto it = units.find(var);
    return it == units.end() ? "" : it->second;
}

std::size_t var_index(const GridField& f, const std::string& name) {
    const auto it = std::find(f.var_names.begin(), f.var_names.end(), name);
    if (it == f.var_names.end()) {
        throw ShapeError("field has no variable " + name);
    }
    return static_cast<std::size_t>(it - f.var_names.begin());
}

std::vector<double> pooled(std::span<const GridField> fields, std::size_t var) {
    std::vector<double> out;
    for (const auto& f : fields) {
        for (std::size_t k = var; k < f.data.size(); k += f.shape.nv) {
            out.push_back(f.data[k]);
        }
    }
    return out;
}

std::string percentile_label(double p) {
    std::ostringstream s;
    s << "p" << format_double(p) << "_mae";
    return s.str();
}

}  // namespace

// ---- run directories -------------------------------------------------------------------------

RunDirectory::RunDirectory(fs::path root, std::string command, const PipelineConfig& cfg)
    : root_(std::move(root)), command_(std::move(command)) {
    if (fs::exists(root_) && (!fs::is_directory(root_) || !fs::is_empty(root_))) {
        throw ConfigError("run directory already exists and is not empty: " + root_.string());
    }
    fs::create_directories(root_);
    cfg.write(root_ / "config.ini");
}

void RunDirectory::set_attribute(const std::string& key, const std::string& value) { text_attrs_[key] = value; }

void RunDirectory::set_attribute(const std::string& key, std::int64_t value) { int_attrs_[key] = value; }

void RunDirectory::add_input(const std::string& role, const fs::path& dir) { inputs_.emplace_back(role, dir.string()); }

void RunDirectory::add_output(const std::string& relative) { outputs_.push_back(relative); }

void RunDirectory::finish() const {
    json j;
    j["command"] = command_;
    j["config"] = "config.ini";
    for (const auto& [k, v] : text_attrs_) {
        j[k] = v;
    }
    for (const auto& [k, v] : int_attrs_) {
        j[k] = v;
    }
    j["inputs"] = json::object();
    for (const auto& [role, dir] : inputs_) {
        j["inputs"][role] = dir;
    }
    j["outputs"] = outputs_;
    write_text_file(root_ / "manifest.json", j.dump(2) + "\n");
}

std::string member_file(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "member_%03zu.npy", k);
    return buf;
}

std::vector<GridField> read_members(const fs::path& dir) {
    std::vector<GridField> out;
    for (std::size_t k = 0;; ++k) {
        const fs::path p = dir / member_file(k);
        if (!fs::exists(p)) {
            break;
        }
        out.push_back(read_array(p));
    }
    if (out.empty()) {
        throw ConfigError("no member arrays in " + dir.string());
    }
    return out;
}

void write_members(RunDirectory& run, const std::vector<GridField>& members) {
    for (std::size_t k = 0; k < members.size(); ++k) {
        write_array(members[k], run.path(member_file(k)));
        run.add_output(member_file(k));
    }
}

std::int64_t read_train_end(const fs::path& dir) {
    const json j = read_manifest(dir);
    if (!j.contains("train_end_hour") || !j["train_end_hour"].is_number_integer()) {
        throw FormatError("manifest of " + dir.string() + " has no train_end_hour");
    }
    return j["train_end_hour"].get<std::int64_t>();
}

SamplePeriod resolve_period(const GridField& daily, std::int64_t train_end_hour, const SampleSettings& s,
                            std::size_t window_days) {
    if (daily.time.dt_hours != kHoursPerDay) {
        throw ShapeError("sampler input must be daily");
    }
    if (window_days < 2) {
        throw ConfigError("window_days must be >= 2 for overlapped sampling");
    }
    SamplePeriod p;
    if (s.start_day >= 0) {
        p.first_day = static_cast<std::size_t>(s.start_day);
    } else {
        p.first_day = daily.shape.nt;
        for (std::size_t t = 0; t < daily.shape.nt; ++t) {
            if (daily.timestamp(t) >= train_end_hour) {
                p.first_day = t;
                break;
            }
        }
    }
    if (p.first_day >= daily.shape.nt) {
        throw ConfigError("sample period starts after the end of the input");
    }
    const std::size_t available = daily.shape.nt - p.first_day;
    const std::size_t stride = window_days - 1;
    if (s.windows > 0) {
        p.windows = s.windows;
        p.covered_days = p.windows * stride + 1;
        if (s.length_days > 0 && s.length_days != p.covered_days) {
            throw ConfigError(std::to_string(s.windows) + " windows cover " + std::to_string(p.covered_days) +
                              " days, not the requested " + std::to_string(s.length_days));
        }
        p.days = p.covered_days;
    } else {
        p.days = s.length_days > 0 ? s.length_days : available;
        p.windows = std::max<std::size_t>(1, (p.days - 1 + stride - 1) / stride);
        p.covered_days = p.windows * stride + 1;
    }
    if (p.days > available) {
        throw ConfigError("sample period of " + std::to_string(p.days) + " days exceeds the " +
                          std::to_string(available) + " available input days");
    }
    return p;
}

// ---- stages ------------------------------------------------------------------------------------

void stage_gen_data(const PipelineConfig& cfg, const fs::path& out) {
    const SynthConfig sc = cfg.synth();
    const std::size_t train_days = cfg.train_days();
    RunDirectory run(out, "gen-data", cfg);
    const SynthPair p = gen_synth_pair(sc);
    write_array(p.fine_truth, run.path("fine_truth.npy"));
    write_array(p.coarse_truth, run.path("coarse_truth.npy"));
    write_array(p.elevation_fine, run.path("elevation_fine.npy"));
    write_array(p.elevation_coarse, run.path("elevation_coarse.npy"));
    for (const char* f : {"fine_truth.npy", "coarse_truth.npy", "elevation_fine.npy", "elevation_coarse.npy"}) {
        run.add_output(f);
    }
    write_members(run, p.coarse_biased);
    run.set_attribute("train_end_hour", sc.time0 + static_cast<std::int64_t>(train_days) * kHoursPerDay);
    run.finish();
}

void stage_train_debias(const PipelineConfig& cfg, const fs::path& data, const fs::path& out) {
    ReflowConfig rc = cfg.debias();
    const std::int64_t train_end = read_train_end(data);
    rc.train_end_hour = train_end;
    const auto members = read_members(data);
    const GridField target = read_array(data / "coarse_truth.npy");
    RunDirectory run(out, "train-debias", cfg);
    run.add_input("data", data);
    std::vector<TrainLogRow> log;
    const ReflowModel model = train_reflow(members, target, rc, &log);
    model.save(run.path("model"));
    std::vector<std::size_t> steps;
    std::vector<double> loss;
    std::vector<double> lr;
    for (const auto& r : log) {
        steps.push_back(r.step);
        loss.push_back(r.loss);
        lr.push_back(r.lr);
    }
    write_loss_log(run.path("loss.csv"), steps, loss, lr);
    run.add_output("model");
    run.add_output("loss.csv");
    run.set_attribute("train_end_hour", train_end);
    run.finish();
}

void stage_debias(const PipelineConfig& cfg, const fs::path& data, const fs::path& model_dir, const fs::path& out) {
    const ReflowModel model = ReflowModel::load(model_dir / "model");
    const auto members = read_members(data);
    if (members.size() != model.member_stats().size()) {
        throw ConfigError("debias model was trained on " + std::to_string(model.member_stats().size()) +
                          " members, input has " + std::to_string(members.size()));
    }
    const std::int64_t train_end = read_train_end(data);
    RunDirectory run(out, "debias", cfg);
    run.add_input("data", data);
    run.add_input("model", model_dir);
    std::vector<GridField> debiased;
    for (std::size_t k = 0; k < members.size(); ++k) {
        debiased.push_back(model.transport(members[k], static_cast<int>(k)));
    }
    write_members(run, debiased);
    run.set_attribute("train_end_hour", train_end);
    run.finish();
}

void stage_train_sr(const PipelineConfig& cfg, const fs::path& data, const fs::path& out) {
    DiffusionConfig dc = cfg.sr();
    const std::int64_t train_end = read_train_end(data);
    dc.train_end_hour = train_end;
    const GridField x = read_array(data / "fine_truth.npy");
    RunDirectory run(out, "train-sr", cfg);
    run.add_input("data", data);
    std::vector<SrTrainLogRow> log;
    const SrModel model = train_sr(x, dc, &log);
    model.save(run.path("model"));
    std::vector<std::size_t> steps;
    std::vector<double> loss;
    std::vector<double> lr;
    for (const auto& r : log) {
        steps.push_back(r.step);
        loss.push_back(r.loss);
        lr.push_back(r.lr);
    }
    write_loss_log(run.path("loss.csv"), steps, loss, lr);
    run.add_output("model");
    run.add_output("loss.csv");
    run.set_attribute("train_end_hour", train_end);
    run.finish();
}

void stage_sample(const PipelineConfig& cfg, const fs::path& model_dir, const fs::path& input, const fs::path& out) {
    const SampleSettings s = cfg.sample();
    SrModel model = SrModel::load(model_dir / "model");
    model.set_sampling(s.steps, s.schedule);
    const auto members = read_members(input);
    const std::int64_t train_end = read_train_end(input);
    std::vector<SamplePeriod> periods;
    for (const auto& m : members) {
        periods.push_back(resolve_period(m, train_end, s, model.config().window_days));
    }
    RunDirectory run(out, "sample", cfg);
    run.add_input("model", model_dir);
    run.add_input("input", input);
    std::vector<GridField> samples;
    for (std::size_t k = 0; k < members.size(); ++k) {
        const SamplePeriod& p = periods[k];
        const GridField y = period_input(members[k], p);
        std::mt19937_64 rng(cfg.stage_seed("sample.member" + std::to_string(k)));
        GridField x = sample_long(model, y, sr_layout(model, p.windows), s.guidance, rng);
        x = x.slice_time(0, p.days * kStepsPerDay);
        x.member_id = static_cast<int>(k);
        samples.push_back(std::move(x));
    }
    write_members(run, samples);
    run.set_attribute("train_end_hour", train_end);
    run.set_attribute("windows", static_cast<std::int64_t>(periods.front().windows));
    run.finish();
}

void stage_baseline_bcsd(const PipelineConfig& cfg, const fs::path& data, const fs::path& out) {
    BcsdConfig bc = cfg.baseline();
    const SampleSettings s = cfg.sample();
    const std::size_t window_days = cfg.sr().window_days;
    const std::int64_t train_end = read_train_end(data);
    bc.train_end_hour = train_end;
    const auto members = read_members(data);
    const GridField fine = read_array(data / "fine_truth.npy");
    RunDirectory run(out, "baseline-bcsd", cfg);
    run.add_input("data", data);
    std::vector<GridField> outputs;
    for (std::size_t k = 0; k < members.size(); ++k) {
        const SamplePeriod p = resolve_period(members[k], train_end, s, window_days);
        const BcsdModel model = fit_bcsd(members[k], fine, bc);
        std::mt19937_64 rng(cfg.stage_seed("bcsd.member" + std::to_string(k)));
        GridField x = bcsd_pipeline(members[k].slice_time(p.first_day, p.first_day + p.days), model, rng);
        x.member_id = static_cast<int>(k);
        outputs.push_back(std::move(x));
    }
    write_members(run, outputs);
    run.set_attribute("train_end_hour", train_end);
    run.finish();
}

void stage_baseline_qm(const PipelineConfig& cfg, const fs::path& data, const fs::path& out) {
    const BcsdConfig bc = cfg.baseline();
    const std::int64_t train_end = read_train_end(data);
    const auto members = read_members(data);
    const GridField target = read_array(data / "coarse_truth.npy");
    RunDirectory run(out, "baseline-qm", cfg);
    run.add_input("data", data);
    std::vector<GridField> outputs;
    for (const auto& m : members) {
        const QmModel qm = fit_qm(m, target, bc.grouping, std::numeric_limits<std::int64_t>::min(), train_end);
        outputs.push_back(qm_debias(m, qm));
    }
    write_members(run, outputs);
    run.set_attribute("train_end_hour", train_end);
    run.finish();
}

EvaluationResult evaluate_methods(const GridField& truth, const GridField& truth_train, const GridField& elevation,
                                  const std::vector<std::pair<std::string, std::vector<GridField>>>& methods,
                                  const EvaluateSettings& settings) {
    for (const auto& [name, fields] : methods) {
        if (fields.empty()) {
            throw ShapeError("method " + name + " has no members");
        }
        for (const auto& f : fields) {
            if (f.shape != truth.shape || !(f.time == truth.time)) {
                throw ShapeError("method " + name + " does not match the truth period and grid");
            }
        }
    }
    EvaluationResult res;
    const GridField ref = with_derived_variables(truth, elevation);
    std::vector<std::vector<GridField>> preds;
    for (const auto& [name, fields] : methods) {
        std::vector<GridField> d;
        for (const auto& f : fields) {
            d.push_back(with_derived_variables(f, elevation));
        }
        preds.push_back(std::move(d));
    }
    const std::size_t nx = ref.shape.nx;
    const std::size_t ny = ref.shape.ny;
    const std::span<const GridField> ref_span(&ref, 1);
    const std::string p_label = percentile_label(settings.percentile);

    for (std::size_t v = 0; v < ref.shape.nv; ++v) {
        const std::string& var = ref.var_names[v];
        const std::string units = units_of(var);
        const SampleSet r = samples_of(ref, v);
        const CorrelationMatrix r_corr = spatial_correlation(ref_span, v, nx / 2, ny / 2, settings.corr_half_width);
        const auto r_series = pixel_series(ref_span, v);
        for (std::size_t m = 0; m < methods.size(); ++m) {
            const std::string& method = methods[m].first;
            const SampleSet p = samples_of(preds[m], v);
            auto mab_map = mab_field(p, r);
            auto wd_map = wasserstein1_field(p, r);
            auto pct_map = percentile_error_field(p, r, settings.percentile);
            res.report.add("mab", var, method, units, mab(p, r));
            res.report.add("wd", var, method, units, wasserstein1(p, r));
            res.report.add(p_label, var, method, units, percentile_mae(p, r, settings.percentile));
            res.report.add("spatial_corr_error", var, method, "1",
                           spatial_corr_error(spatial_correlation(preds[m], v, nx / 2, ny / 2, settings.corr_half_width),
                                              r_corr));
            res.report.add("psd_log_error", var, method, "1",
                           temporal_psd_error(pixel_series(preds[m], v), r_series, kHoursPerStep));
            res.fields.push_back({"mab", var, method, std::move(mab_map)});
            res.fields.push_back({"wd", var, method, std::move(wd_map)});
            res.fields.push_back({p_label, var, method, std::move(pct_map)});
        }
    }

    // Inter-variable dependence: rank correlation of temperature and relative humidity.
    const std::size_t it = var_index(ref, "temperature");
    const std::size_t irh = var_index(ref, "relative_humidity");
    const double rho_ref = spearman(pooled(ref_span, it), pooled(ref_span, irh));
    for (std::size_t m = 0; m < methods.size(); ++m) {
        const double rho = spearman(pooled(preds[m], it), pooled(preds[m], irh));
        res.report.add("rank_corr_error", "temperature:relative_humidity", methods[m].first, "1",
                       std::abs(rho - rho_ref));
    }

    // Heat streaks of the daily maximum temperature above its training climatology.
    const GridField train_max = daily_max(truth_train);
    const Climatology clim = compute_climatology(train_max, ClimGrouping{settings.streak_doy_buckets, 1});
    const GridField ref_max = daily_max(truth);
    const auto ref_streak = heat_streak_field(std::span<const GridField>(&ref_max, 1), it, clim, settings.streak_days,
                                              settings.streak_delta);
    res.fields.push_back({"heat_streak_prob", "temperature", "truth", ref_streak});
    for (std::size_t m = 0; m < methods.size(); ++m) {
        std::vector<GridField> maxima;
        for (const auto& f : methods[m].second) {
            maxima.push_back(daily_max(f));
        }
        auto streak = heat_streak_field(maxima, it, clim, settings.streak_days, settings.streak_delta);
        res.report.add("heat_streak_msd", "temperature", methods[m].first, "1",
                       mean_squared_difference(streak, ref_streak));
        res.fields.push_back({"heat_streak_prob", "temperature", methods[m].first, std::move(streak)});
    }
    return res;
}

MetricReport stage_evaluate(const PipelineConfig& cfg, const fs::path& data,
                            const std::vector<std::pair<std::string, fs::path>>& methods, const fs::path& out) {
    const EvaluateSettings settings = cfg.evaluate();
    if (methods.empty()) {
        throw ConfigError("evaluate needs at least one method");
    }
    const std::int64_t train_end = read_train_end(data);
    const GridField fine = read_array(data / "fine_truth.npy");
    const GridField elevation = read_array(data / "elevation_fine.npy");
    std::vector<std::pair<std::string, std::vector<GridField>>> outputs;
    for (const auto& [name, dir] : methods) {
        outputs.emplace_back(name, read_members(dir));
    }
    const GridField& first = outputs.front().second.front();
    const std::int64_t offset = first.time.time0 - fine.time.time0;
    if (first.time.dt_hours != fine.time.dt_hours || offset < 0 || offset % fine.time.dt_hours != 0) {
        throw ShapeError("method outputs are not aligned with the fine truth");
    }
    const auto t0 = static_cast<std::size_t>(offset / fine.time.dt_hours);
    if (t0 + first.shape.nt > fine.shape.nt) {
        throw ShapeError("method outputs extend past the fine truth");
    }
    const GridField truth = fine.slice_time(t0, t0 + first.shape.nt);
    std::size_t n_train = 0;
    while (n_train < fine.shape.nt && fine.timestamp(n_train) < train_end) {
        ++n_train;
    }
    const GridField truth_train = fine.slice_time(0, n_train);

    RunDirectory run(out, "evaluate", cfg);
    run.add_input("data", data);
    for (const auto& [name, dir] : methods) {
        run.add_input(name, dir);
    }
    EvaluationResult res = evaluate_methods(truth, truth_train, elevation, outputs, settings);
    std::ostringstream period;
    period << truth.timestamp(0) << "-" << truth.timestamp(truth.shape.nt - 1) + truth.time.dt_hours;
    res.report.period = period.str();
    res.report.write_csv(run.path("metrics.csv"));
    std::vector<std::string> names;
    for (const auto& [name, dir] : methods) {
        names.push_back(name);
    }
    res.report.write_comparison_csv(run.path("comparison.csv"), names);
    run.add_output("metrics.csv");
    run.add_output("comparison.csv");

    fs::create_directories(run.path("fields"));
    std::map<std::pair<std::string, std::string>, std::vector<HeatmapPanel>> panels;
    for (const auto& f : res.fields) {
        GridField g = GridField::make({1, truth.shape.nx, truth.shape.ny, 1}, TimeAxis{truth.time.time0, kHoursPerDay},
                                      truth.lon, truth.lat, {f.metric});
        g.data = f.values;
        for (auto& v : g.data) {
            if (!std::isfinite(v)) {
                v = 0.0;
            }
        }
        const std::string rel = "fields/" + f.metric + "_" + f.variable + "_" + f.method + ".npy";
        write_array(g, run.path(rel));
        run.add_output(rel);
        panels[{f.metric, f.variable}].emplace_back(f.method, f.values);
    }
    if (settings.svg) {
        for (const auto& [key, list] : panels) {
            const std::string rel = "fields/" + key.first + "_" + key.second + ".svg";
            write_text_file(run.path(rel), heatmap_svg(key.first + " of " + key.second, list, truth.shape.nx,
                                                       truth.shape.ny));
            run.add_output(rel);
        }
    }
    run.set_attribute("period", res.report.period);
    run.finish();
    return res.report;
}

void stage_e2e(const PipelineConfig& cfg, const fs::path& out) {
    cfg.check();
    RunDirectory run(out, "e2e", cfg);
    const fs::path data = run.path("data");
    stage_gen_data(cfg, data);
    stage_train_debias(cfg, data, run.path("debias_model"));
    stage_debias(cfg, data, run.path("debias_model"), run.path("debiased"));
    stage_train_sr(cfg, data, run.path("sr_model"));
    stage_sample(cfg, run.path("sr_model"), run.path("debiased"), run.path("genbcsr"));
    stage_baseline_bcsd(cfg, data, run.path("bcsd"));
    stage_baseline_qm(cfg, data, run.path("qm"));
    stage_sample(cfg, run.path("sr_model"), run.path("qm"), run.path("qmsr"));
    stage_sample(cfg, run.path("sr_model"), data, run.path("sr"));
    stage_evaluate(cfg, data,
                   {{"GenBCSR", run.path("genbcsr")},
                    {"BCSD", run.path("bcsd")},
                    {"QMSR", run.path("qmsr")},
                    {"SR", run.path("sr")}},
                   run.path("evaluate"));
    for (const char* d : {"data", "debias_model", "debiased", "sr_model", "genbcsr", "bcsd", "qm", "qmsr", "sr",
                          "evaluate"}) {
        run.add_output(d);
    }
    run.set_attribute("train_end_hour", read_train_end(data));
    run.finish();
}

}  // namespace downgen
