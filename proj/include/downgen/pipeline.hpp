#pragma once

#include "downgen/config.hpp"
#include "downgen/grid.hpp"
#include "downgen/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace downgen {

/// Write-once output directory of one pipeline command. The directory must
/// not exist or be empty; the resolved configuration is written on creation
/// and manifest.json on finish().
class RunDirectory {
public:
    RunDirectory(std::filesystem::path root, std::string command, const PipelineConfig& cfg);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path path(const std::string& relative) const { return root_ / relative; }

    void set_attribute(const std::string& key, const std::string& value);
    void set_attribute(const std::string& key, std::int64_t value);
    void add_input(const std::string& role, const std::filesystem::path& dir);
    void add_output(const std::string& relative);
    void finish() const;

private:
    std::filesystem::path root_;
    std::string command_;
    std::map<std::string, std::string> text_attrs_;
    std::map<std::string, std::int64_t> int_attrs_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::vector<std::string> outputs_;
};

/// Name of member k's array inside a run directory.
std::string member_file(std::size_t k);
/// Every member_NNN array of a directory, in order. Throws ConfigError when none exist.
std::vector<GridField> read_members(const std::filesystem::path& dir);
void write_members(RunDirectory& run, const std::vector<GridField>& members);

/// First hour after the training period recorded in a run manifest.
std::int64_t read_train_end(const std::filesystem::path& dir);

/// Window of coarse days handed to the sampler and the baselines.
struct SamplePeriod {
    std::size_t first_day = 0;  ///< index into the daily input
    std::size_t days = 0;       ///< days written to the output
    std::size_t windows = 1;    ///< overlapped windows of the sampler
    std::size_t covered_days = 0;  ///< days spanned by the windows (>= days)
};

/// Resolve the requested period of a daily input. length_days = 0 runs to the
/// end of the input; windows = 0 derives the count from the length. The
/// windows may cover a few days more than requested; the output is cropped.
SamplePeriod resolve_period(const GridField& daily_input, std::int64_t train_end_hour, const SampleSettings& s,
                            std::size_t window_days);

// ---- pipeline stages ------------------------------------------------------------------------
// Each stage reads earlier run directories and writes a fresh one.

void stage_gen_data(const PipelineConfig& cfg, const std::filesystem::path& out);
void stage_train_debias(const PipelineConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out);
void stage_debias(const PipelineConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& model,
                  const std::filesystem::path& out);
void stage_train_sr(const PipelineConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out);
/// Super-resolve every member of `input` (a data, debias or baseline-qm run).
void stage_sample(const PipelineConfig& cfg, const std::filesystem::path& model, const std::filesystem::path& input,
                  const std::filesystem::path& out);
void stage_baseline_bcsd(const PipelineConfig& cfg, const std::filesystem::path& data,
                         const std::filesystem::path& out);
/// Quantile-mapped coarse members, a valid input of stage_sample.
void stage_baseline_qm(const PipelineConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& out);

/// Compare named method outputs with the fine truth over their common period.
/// Writes metrics.csv (one row per metric, variable and method) and
/// comparison.csv (one column per method).
MetricReport stage_evaluate(const PipelineConfig& cfg, const std::filesystem::path& data,
                            const std::vector<std::pair<std::string, std::filesystem::path>>& methods,
                            const std::filesystem::path& out);

/// Full chain on synthetic data: data, debiasing, super-resolution, the three
/// alternative configurations and the evaluation, each in a subdirectory.
void stage_e2e(const PipelineConfig& cfg, const std::filesystem::path& out);

/// Per-pixel map of one metric, [nx * ny] with lat fastest.
struct FieldMetric {
    std::string metric;
    std::string variable;
    std::string method;
    std::vector<double> values;
};

struct EvaluationResult {
    MetricReport report;
    std::vector<FieldMetric> fields;
};

/// Metric computation behind stage_evaluate. Fields must share the truth layout
/// and carry the four modelled variables; truth_train supplies the heat-streak
/// climatology.
EvaluationResult evaluate_methods(const GridField& truth, const GridField& truth_train, const GridField& elevation,
                                  const std::vector<std::pair<std::string, std::vector<GridField>>>& methods,
                                  const EvaluateSettings& settings);

}  // namespace downgen
