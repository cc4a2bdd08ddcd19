#include "downgen/config.hpp"

#include "downgen/error.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace downgen {

namespace {

const char* const kDefaultText = R"(# downgen pipeline configuration
rng_seed = 1234

[paths]
# parent of automatically named run directories
run_root = runs

[synth]
nx = 16
ny = 8
lon0 = -100
lat0 = 30
grid_step = 1
n_days = 761
# the first train_days days form the training period, the rest is held out
train_days = 730
n_members = 2
spatial_factor = 4
spectral_slope = 3
noise_amp = 1
memory_days = 1
seasonal_amp = 1.5
diurnal_amp = 0.5
lat_gradient = 1
trend_per_year = 0.05
hill_height = 1200
mean_offset = 1
var_scale = 1.5
spectral_tilt = 0
season_phase_shift = 0
cross_corr_scale = 0.3

[debias]
chunk_days = 8
season_window_days = 15
chunks_per_batch = 4
train_steps = 600
rk4_steps = 50
transport_batch = 64
standardize = true
peak_lr = 1e-3
end_lr = 1e-6
warmup_steps = 50
clip_norm = 0.6
widths = 16,32
n_freqs = 8
embed_dim = 32

[sr]
window_days = 3
clim_doy_buckets = 12
p_uncond = 0.15
sigma_min = 1e-4
sigma_max = 80
train_steps = 600
batch_size = 4
peak_lr = 1e-3
end_lr = 1e-6
warmup_steps = 50
clip_norm = 0.6
widths = 8,16
n_freqs = 8
embed_dim = 16

[sample]
guidance = 1
steps = 64
# edm or tangent
schedule = edm
# 0 = to the end of the input
length_days = 0
# 0 = derived from length_days
windows = 0
# -1 = first day after the training period
start_day = -1

[baseline]
qm_doy_buckets = 12
analog_doy_window = 0

[evaluate]
percentile = 99
corr_half_width = 2
streak_days = 3
streak_delta = 1
# day-of-year buckets of the daily-maximum climatology
streak_doy_buckets = 36
svg = false
)";

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::pair<std::string, std::string> split_key(const std::string& dotted) {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos) {
        return {"", dotted};
    }
    return {dotted.substr(0, dot), dotted.substr(dot + 1)};
}

std::string key_name(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
}

using Table = std::map<std::string, std::map<std::string, std::string>>;

// Parses INI text into `out`. When `known` is given every key must already exist there.
void parse_into(const std::string& text, Table& out, const Table* known) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
            }
            if (known && !known->count(section)) {
                throw ConfigError("unknown config section: " + section);
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        }
        if (known) {
            const auto s = known->find(section);
            if (s == known->end() || !s->second.count(key)) {
                throw ConfigError("unknown config key: " + key_name(section, key));
            }
        }
        out[section][key] = value;
    }
}

const Table& default_table() {
    static const Table table = [] {
        Table t;
        parse_into(kDefaultText, t, nullptr);
        return t;
    }();
    return table;
}

ConfigError bad_value(const std::string& section, const std::string& key, const std::string& value,
                      const std::string& expected) {
    return ConfigError("config key " + key_name(section, key) + ": expected " + expected + ", got '" + value + "'");
}

// Rethrows validation failures of a typed view as configuration errors.
template <typename F>
auto as_config_error(const std::string& section, F&& f) {
    try {
        return f();
    } catch (const ValidationError& e) {
        throw ConfigError("invalid [" + section + "] settings: " + e.what());
    }
}

}  // namespace

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig c;
    c.values_ = default_table();
    return c;
}

const std::string& PipelineConfig::default_text() {
    static const std::string text(kDefaultText);
    return text;
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
    PipelineConfig c = defaults();
    parse_into(text, c.values_, &default_table());
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void PipelineConfig::set(const std::string& dotted_key, const std::string& value) {
    const auto [section, key] = split_key(dotted_key);
    if (!has(section, key)) {
        throw ConfigError("unknown config key: " + dotted_key);
    }
    values_[section][key] = trim(value);
}

void PipelineConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override must look like section.key=value: " + assignment);
    }
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

bool PipelineConfig::has(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
}

const std::string& PipelineConfig::get(const std::string& section, const std::string& key) const {
    const auto s = values_.find(section);
    if (s == values_.end() || !s->second.count(key)) {
        throw ConfigError("unknown config key: " + key_name(section, key));
    }
    return s->second.at(key);
}

double PipelineConfig::get_double(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    errno = 0;
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(d)) {
        throw bad_value(section, key, v, "a finite number");
    }
    return d;
}

std::int64_t PipelineConfig::get_int(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    errno = 0;
    char* end = nullptr;
    const long long n = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno == ERANGE) {
        throw bad_value(section, key, v, "an integer");
    }
    return n;
}

std::size_t PipelineConfig::get_size(const std::string& section, const std::string& key) const {
    const std::int64_t n = get_int(section, key);
    if (n < 0) {
        throw bad_value(section, key, get(section, key), "a non-negative integer");
    }
    return static_cast<std::size_t>(n);
}

bool PipelineConfig::get_bool(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw bad_value(section, key, v, "a boolean");
}

std::vector<std::size_t> PipelineConfig::get_size_list(const std::string& section, const std::string& key) const {
    const std::string& v = get(section, key);
    std::vector<std::size_t> out;
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        char* end = nullptr;
        errno = 0;
        const long long n = std::strtoll(item.c_str(), &end, 10);
        if (item.empty() || *end != '\0' || errno == ERANGE || n <= 0) {
            throw bad_value(section, key, v, "a comma-separated list of positive integers");
        }
        out.push_back(static_cast<std::size_t>(n));
    }
    if (out.empty()) {
        throw bad_value(section, key, v, "a comma-separated list of positive integers");
    }
    return out;
}

std::uint64_t PipelineConfig::rng_seed() const {
    const std::int64_t s = get_int("", "rng_seed");
    if (s < 0) {
        throw bad_value("", "rng_seed", get("", "rng_seed"), "a non-negative integer");
    }
    return static_cast<std::uint64_t>(s);
}

std::uint64_t PipelineConfig::stage_seed(const std::string& stage) const {
    // FNV-1a of the stage name mixed into the seed with a SplitMix64 finalizer.
    std::uint64_t h = 1469598103934665603ULL;
    for (const unsigned char c : stage) {
        h = (h ^ c) * 1099511628211ULL;
    }
    std::uint64_t z = rng_seed() + 0x9E3779B97F4A7C15ULL * (h | 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

SynthConfig PipelineConfig::synth() const {
    const std::string s = "synth";
    SynthConfig c;
    c.nx = get_size(s, "nx");
    c.ny = get_size(s, "ny");
    c.lon0 = get_double(s, "lon0");
    c.lat0 = get_double(s, "lat0");
    c.grid_step = get_double(s, "grid_step");
    c.n_days = get_size(s, "n_days");
    c.n_members = get_size(s, "n_members");
    c.downsample.spatial_factor = static_cast<int>(get_size(s, "spatial_factor"));
    c.spectral_slope = get_double(s, "spectral_slope");
    c.noise_amp = get_double(s, "noise_amp");
    c.memory_days = get_double(s, "memory_days");
    c.seasonal_amp = get_double(s, "seasonal_amp");
    c.diurnal_amp = get_double(s, "diurnal_amp");
    c.lat_gradient = get_double(s, "lat_gradient");
    c.trend_per_year = get_double(s, "trend_per_year");
    c.hill_height = get_double(s, "hill_height");
    c.bias.mean_offset = get_double(s, "mean_offset");
    c.bias.var_scale = get_double(s, "var_scale");
    c.bias.spectral_tilt = get_double(s, "spectral_tilt");
    c.bias.season_phase_shift = get_double(s, "season_phase_shift");
    c.bias.cross_corr_scale = get_double(s, "cross_corr_scale");
    c.rng_seed = stage_seed("synth");
    if (c.n_members == 0) {
        throw ConfigError("config key synth.n_members must be >= 1");
    }
    if (!(c.grid_step > 0.0)) {
        throw ConfigError("config key synth.grid_step must be > 0");
    }
    as_config_error(s, [&] {
        c.validate();
        return 0;
    });
    return c;
}

std::size_t PipelineConfig::train_days() const {
    const std::size_t n = get_size("synth", "train_days");
    const std::size_t total = get_size("synth", "n_days");
    if (n == 0 || n >= total) {
        throw ConfigError("config key synth.train_days must lie in [1, synth.n_days)");
    }
    return n;
}

ReflowConfig PipelineConfig::debias() const {
    const std::string s = "debias";
    ReflowConfig c;
    c.chunk_days = get_size(s, "chunk_days");
    c.season_window_days = static_cast<int>(get_size(s, "season_window_days"));
    c.chunks_per_batch = get_size(s, "chunks_per_batch");
    c.train_steps = get_size(s, "train_steps");
    c.rk4_steps = get_size(s, "rk4_steps");
    c.transport_batch = get_size(s, "transport_batch");
    c.standardize = get_bool(s, "standardize");
    c.adam.peak_lr = get_double(s, "peak_lr");
    c.adam.end_lr = get_double(s, "end_lr");
    c.adam.warmup_steps = get_size(s, "warmup_steps");
    c.adam.clip_norm = get_double(s, "clip_norm");
    c.net.widths = get_size_list(s, "widths");
    c.net.n_freqs = get_size(s, "n_freqs");
    c.net.embed_dim = get_size(s, "embed_dim");
    c.seed = stage_seed("debias");
    c.net.seed = stage_seed("debias.net");
    as_config_error(s, [&] {
        c.validate();
        return 0;
    });
    return c;
}

DiffusionConfig PipelineConfig::sr() const {
    const std::string s = "sr";
    DiffusionConfig c;
    c.window_days = get_size(s, "window_days");
    c.downsample.spatial_factor = static_cast<int>(get_size("synth", "spatial_factor"));
    c.residual_grouping = {static_cast<int>(get_size(s, "clim_doy_buckets")), kStepsPerDay};
    c.p_uncond = get_double(s, "p_uncond");
    c.sigma_min = get_double(s, "sigma_min");
    c.sigma_max = get_double(s, "sigma_max");
    c.train_steps = get_size(s, "train_steps");
    c.batch_size = get_size(s, "batch_size");
    c.adam.peak_lr = get_double(s, "peak_lr");
    c.adam.end_lr = get_double(s, "end_lr");
    c.adam.warmup_steps = get_size(s, "warmup_steps");
    c.adam.clip_norm = get_double(s, "clip_norm");
    c.net.widths = get_size_list(s, "widths");
    c.net.n_freqs = get_size(s, "n_freqs");
    c.net.embed_dim = get_size(s, "embed_dim");
    const SampleSettings smp = sample();
    c.guidance = smp.guidance;
    c.sample_steps = smp.steps;
    c.schedule = smp.schedule;
    c.seed = stage_seed("sr");
    c.net.seed = stage_seed("sr.net");
    as_config_error(s, [&] {
        c.validate();
        return 0;
    });
    return c;
}

SampleSettings PipelineConfig::sample() const {
    const std::string s = "sample";
    SampleSettings c;
    c.guidance = get_double(s, "guidance");
    c.steps = get_size(s, "steps");
    try {
        c.schedule = parse_schedule(get(s, "schedule"));
    } catch (const Error&) {
        throw bad_value(s, "schedule", get(s, "schedule"), "edm or tangent");
    }
    c.length_days = get_size(s, "length_days");
    c.windows = get_size(s, "windows");
    c.start_day = get_int(s, "start_day");
    if (c.steps < 2) {
        throw ConfigError("config key sample.steps must be >= 2");
    }
    if (c.start_day < -1) {
        throw ConfigError("config key sample.start_day must be >= -1");
    }
    const std::size_t window_days = get_size("sr", "window_days");
    if (c.windows > 0 && c.length_days > 0 && window_days > 1 && c.windows * (window_days - 1) + 1 != c.length_days) {
        throw ConfigError("sample.windows = " + std::to_string(c.windows) + " covers " +
                          std::to_string(c.windows * (window_days - 1) + 1) + " days, not sample.length_days = " +
                          std::to_string(c.length_days));
    }
    return c;
}

BcsdConfig PipelineConfig::baseline() const {
    const std::string s = "baseline";
    BcsdConfig c;
    c.grouping = {static_cast<int>(get_size(s, "qm_doy_buckets")), 1};
    c.downsample.spatial_factor = static_cast<int>(get_size("synth", "spatial_factor"));
    c.analog_doy_window = static_cast<int>(get_size(s, "analog_doy_window"));
    as_config_error(s, [&] {
        c.validate();
        return 0;
    });
    return c;
}

EvaluateSettings PipelineConfig::evaluate() const {
    const std::string s = "evaluate";
    EvaluateSettings c;
    c.percentile = get_double(s, "percentile");
    c.corr_half_width = get_size(s, "corr_half_width");
    c.streak_days = get_size(s, "streak_days");
    c.streak_delta = get_double(s, "streak_delta");
    c.streak_doy_buckets = static_cast<int>(get_size(s, "streak_doy_buckets"));
    c.svg = get_bool(s, "svg");
    if (c.percentile < 0.0 || c.percentile > 100.0) {
        throw ConfigError("config key evaluate.percentile must lie in [0, 100]");
    }
    if (c.streak_doy_buckets < 1 || c.streak_doy_buckets > kDaysPerYear) {
        throw ConfigError("config key evaluate.streak_doy_buckets must lie in [1, 365]");
    }
    if (c.streak_days == 0) {
        throw ConfigError("config key evaluate.streak_days must be >= 1");
    }
    return c;
}

std::filesystem::path PipelineConfig::run_root() const { return get("paths", "run_root"); }

void PipelineConfig::check() const {
    (void)rng_seed();
    (void)synth();
    (void)train_days();
    (void)debias();
    (void)sr();
    (void)sample();
    (void)baseline();
    (void)evaluate();
}

std::string PipelineConfig::to_ini() const {
    std::ostringstream out;
    for (const auto& [section, kv] : values_) {
        if (!section.empty()) {
            out << "\n[" << section << "]\n";
        }
        for (const auto& [k, v] : kv) {
            out << k << " = " << v << "\n";
        }
    }
    return out.str();
}

void PipelineConfig::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << to_ini();
}

}  // namespace downgen
