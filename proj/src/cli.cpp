#include "downgen/cli.hpp"

#include "downgen/config.hpp"
#include "downgen/error.hpp"
#include "downgen/parallel.hpp"
#include "downgen/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

namespace downgen {

namespace fs = std::filesystem;

namespace {

// First free <root>/<command>-NNN directory.
fs::path auto_run_dir(const fs::path& root, const std::string& command) {
    for (int k = 0; k < 100000; ++k) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%03d", k);
        const fs::path p = root / (command + "-" + buf);
        if (!fs::exists(p)) {
            return p;
        }
    }
    throw ConfigError("no free run directory name under " + root.string());
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Generative downscaling pipeline on synthetic climate data", "downgen"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    std::size_t threads = 0;
    app.add_option("-c,--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "Override a config value: section.key=value (repeatable)");
    app.add_option("--threads", threads, "Worker threads (default: DOWNGEN_THREADS or all cores)");

    std::string out_dir;
    std::string data_dir;
    std::string model_dir;
    std::string input_dir;
    std::vector<std::string> method_args;
    std::size_t length_days = 0;
    std::size_t windows = 0;
    std::int64_t start_day = -1;
    bool svg = false;

    const auto add_out = [&](CLI::App* sub) {
        sub->add_option("-o,--out", out_dir, "Output run directory (default: next free name under paths.run_root)");
    };
    const auto add_data = [&](CLI::App* sub) {
        sub->add_option("-d,--data", data_dir, "Data run directory from gen-data")->required();
    };

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic truth and biased members");
    add_out(gen);
    auto* train_debias = app.add_subcommand("train-debias", "Train the rectified-flow debiasing map");
    add_data(train_debias);
    add_out(train_debias);
    auto* debias = app.add_subcommand("debias", "Debias every member with a trained map");
    add_data(debias);
    debias->add_option("-m,--model", model_dir, "train-debias run directory")->required();
    add_out(debias);
    auto* train_sr = app.add_subcommand("train-sr", "Train the super-resolution denoiser");
    add_data(train_sr);
    add_out(train_sr);
    auto* sample = app.add_subcommand("sample", "Super-resolve coarse members with overlapped windows");
    sample->add_option("-m,--model", model_dir, "train-sr run directory")->required();
    sample->add_option("-i,--input", input_dir, "Run directory holding coarse members")->required();
    sample->add_option("--length-days", length_days, "Days to generate (0: to the end of the input)");
    sample->add_option("--windows", windows, "Number of overlapped windows (0: derived from the length)");
    sample->add_option("--start-day", start_day, "First input day (-1: first day after training)");
    add_out(sample);
    auto* bcsd = app.add_subcommand("baseline-bcsd", "Run the BCSD baseline");
    add_data(bcsd);
    add_out(bcsd);
    auto* qm = app.add_subcommand("baseline-qm", "Quantile-map the coarse members");
    add_data(qm);
    add_out(qm);
    auto* evaluate = app.add_subcommand("evaluate", "Compare method outputs with the fine truth");
    add_data(evaluate);
    evaluate->add_option("--method", method_args, "NAME=DIR of a method output (repeatable)")->required();
    evaluate->add_flag("--svg", svg, "Also write SVG heatmaps");
    add_out(evaluate);
    auto* e2e = app.add_subcommand("e2e", "Run the whole pipeline on synthetic data");
    add_out(e2e);
    auto* show = app.add_subcommand("default-config", "Print the default configuration");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (show->parsed()) {
        out << PipelineConfig::default_text();
        return kExitOk;
    }

    PipelineConfig cfg;
    try {
        cfg = config_path.empty() ? PipelineConfig::defaults() : PipelineConfig::load(config_path);
        for (const auto& o : overrides) {
            cfg.apply_override(o);
        }
        if (sample->parsed()) {
            if (sample->count("--length-days")) {
                cfg.set("sample.length_days", std::to_string(length_days));
            }
            if (sample->count("--windows")) {
                cfg.set("sample.windows", std::to_string(windows));
            }
            if (sample->count("--start-day")) {
                cfg.set("sample.start_day", std::to_string(start_day));
            }
        }
        if (evaluate->parsed() && svg) {
            cfg.set("evaluate.svg", "true");
        }
        cfg.check();
        if (threads > 0) {
            set_worker_count(threads);
        }
    } catch (const ConfigError& e) {
        err << "downgen: " << e.what() << "\n";
        return kExitUsage;
    }

    const CLI::App* active = app.get_subcommands().front();
    try {
        const fs::path out_path = out_dir.empty() ? auto_run_dir(cfg.run_root(), active->get_name()) : fs::path(out_dir);
        if (gen->parsed()) {
            stage_gen_data(cfg, out_path);
        } else if (train_debias->parsed()) {
            stage_train_debias(cfg, data_dir, out_path);
        } else if (debias->parsed()) {
            stage_debias(cfg, data_dir, model_dir, out_path);
        } else if (train_sr->parsed()) {
            stage_train_sr(cfg, data_dir, out_path);
        } else if (sample->parsed()) {
            stage_sample(cfg, model_dir, input_dir, out_path);
        } else if (bcsd->parsed()) {
            stage_baseline_bcsd(cfg, data_dir, out_path);
        } else if (qm->parsed()) {
            stage_baseline_qm(cfg, data_dir, out_path);
        } else if (evaluate->parsed()) {
            std::vector<std::pair<std::string, fs::path>> methods;
            for (const auto& m : method_args) {
                const auto eq = m.find('=');
                if (eq == std::string::npos || eq == 0 || eq + 1 == m.size()) {
                    throw ConfigError("--method must look like NAME=DIR: " + m);
                }
                methods.emplace_back(m.substr(0, eq), m.substr(eq + 1));
            }
            stage_evaluate(cfg, data_dir, methods, out_path);
        } else if (e2e->parsed()) {
            stage_e2e(cfg, out_path);
        }
        out << out_path.string() << "\n";
    } catch (const ConfigError& e) {
        err << "downgen: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "downgen " << active->get_name() << " failed: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace downgen
