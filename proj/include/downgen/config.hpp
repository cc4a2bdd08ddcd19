#pragma once

#include "downgen/baselines.hpp"
#include "downgen/diffusion.hpp"
#include "downgen/reflow.hpp"
#include "downgen/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace downgen {

/// Settings of the `sample` stage.
struct SampleSettings {
    double guidance = 1.0;
    std::size_t steps = 64;
    ScheduleKind schedule = ScheduleKind::kEdm;
    std::size_t length_days = 0;  ///< 0 = to the end of the input
    std::size_t windows = 0;      ///< 0 = derived from the length
    std::int64_t start_day = -1;  ///< -1 = first day after the training period
};

/// Settings of the `evaluate` stage.
struct EvaluateSettings {
    double percentile = 99.0;
    std::size_t corr_half_width = 2;
    std::size_t streak_days = 3;
    double streak_delta = 1.0;  ///< K above the training-period daily-max climatology
    int streak_doy_buckets = kDaysPerYear;
    bool svg = false;
};

/// Flat INI configuration. Keys outside a section are global. The set of
/// valid sections and keys is fixed by the defaults; anything else is an error.
class PipelineConfig {
public:
    /// Every key with its default value.
    static PipelineConfig defaults();
    /// Commented INI text of the defaults.
    static const std::string& default_text();

    /// Merge INI text into the defaults. Throws ConfigError naming the first
    /// unknown key, or the line of a syntax error.
    static PipelineConfig parse(const std::string& text);
    static PipelineConfig load(const std::filesystem::path& path);

    /// Set "key" (global) or "section.key".
    void set(const std::string& dotted_key, const std::string& value);
    /// Apply "section.key=value".
    void apply_override(const std::string& assignment);

    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;
    std::int64_t get_int(const std::string& section, const std::string& key) const;
    std::size_t get_size(const std::string& section, const std::string& key) const;
    bool get_bool(const std::string& section, const std::string& key) const;
    std::vector<std::size_t> get_size_list(const std::string& section, const std::string& key) const;

    std::uint64_t rng_seed() const;
    /// Independent seed for a named stage derived from rng_seed.
    std::uint64_t stage_seed(const std::string& stage) const;

    /// Typed views. Each one validates and throws ConfigError on bad values.
    SynthConfig synth() const;
    std::size_t train_days() const;
    ReflowConfig debias() const;
    DiffusionConfig sr() const;
    SampleSettings sample() const;
    BcsdConfig baseline() const;
    EvaluateSettings evaluate() const;
    std::filesystem::path run_root() const;

    /// Build every typed view once so errors surface before any work starts.
    void check() const;

    std::string to_ini() const;
    void write(const std::filesystem::path& path) const;

    bool operator==(const PipelineConfig&) const = default;

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace downgen
