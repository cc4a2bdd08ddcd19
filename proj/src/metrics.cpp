#include "downgen/metrics.hpp"

#include "downgen/error.hpp"
#include "downgen/fft.hpp"
#include "downgen/io.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

namespace downgen {

// ---- derived physical variables ------------------------------------------------------

namespace {

constexpr double kLapseRate = 0.0065;     // K / m
constexpr double kMolarMassAir = 0.02896;  // kg / mol
constexpr double kGravity = 9.8;           // m / s^2
constexpr double kGasConstant = 8.31447;   // J / mol / K

}  // namespace

double surface_pressure(double p0, double t, double z_s) {
    if (!(t > 0.0)) {
        throw ValidationError("surface_pressure: temperature must be positive");
    }
    const double exponent = kGravity * kMolarMassAir / (kGasConstant * kLapseRate);
    return p0 * std::pow(1.0 - kLapseRate * z_s / (t + kLapseRate * z_s), exponent);
}

double saturation_vapor_pressure(double t) {
    if (!(t > 29.65)) {
        throw ValidationError("saturation vapour pressure: temperature must exceed 29.65 K");
    }
    return 6.112 * std::exp(17.67 * (t - 273.15) / (t - 29.65));
}

double relative_humidity(double q, double t, double p) {
    if (!(q >= 0.0 && q < 1.0)) {
        throw ValidationError("relative_humidity: specific humidity must lie in [0, 1)");
    }
    // Vapour pressure in hPa to match the saturation pressure.
    const double e = q * (p / 100.0) / (0.622 + 0.378 * q);
    return e / saturation_vapor_pressure(t) * 100.0;
}

double kelvin_to_fahrenheit(double t) { return (t - 273.15) * 9.0 / 5.0 + 32.0; }
double fahrenheit_to_kelvin(double f) { return (f - 32.0) * 5.0 / 9.0 + 273.15; }

double heat_index_f(double t, double rh) {
    rh = std::clamp(rh, 0.0, 100.0);
    double hi = -42.379 + 2.04901523 * t + 10.14333127 * rh - 0.22475541 * t * rh - 0.00683787 * t * t -
                0.05481717 * rh * rh + 0.00122874 * t * t * rh + 0.00085282 * t * rh * rh -
                0.00000199 * t * t * rh * rh;
    if (rh < 13.0 && t > 80.0 && t < 112.0) {
        hi -= (13.0 - rh) / 4.0 * std::sqrt((17.0 - std::abs(t - 95.0)) / 17.0);
    } else if (rh > 85.0 && t > 80.0 && t < 87.0) {
        hi += (rh - 85.0) * (87.0 - t) / 50.0;
    }
    if (hi < 80.0) {
        hi = 0.5 * (t + 61.0 + (t - 68.0) * 1.2 + 0.094 * rh);
    }
    return hi;
}

double heat_index(double t, double rh) { return fahrenheit_to_kelvin(heat_index_f(kelvin_to_fahrenheit(t), rh)); }

int heat_advisory_level(double hi) {
    int level = 0;
    for (double th : kHeatAdvisoryK) {
        if (hi > th) {
            ++level;
        }
    }
    return level;
}

GridField with_derived_variables(const GridField& field, const GridField& elevation) {
    const auto& s = field.shape;
    if (s.nv != 4) {
        throw ShapeError("derived variables need temperature, wind, humidity and sea-level pressure");
    }
    if (elevation.shape.nx != s.nx || elevation.shape.ny != s.ny || elevation.shape.nv != 1 ||
        elevation.shape.nt < 1) {
        throw ShapeError("derived variables: elevation does not match the grid");
    }
    auto names = field.var_names;
    names.push_back("relative_humidity");
    names.push_back("heat_index");
    GridField out = GridField::make({s.nt, s.nx, s.ny, 6}, field.time, field.lon, field.lat, names, field.member_id);
    for (std::size_t t = 0; t < s.nt; ++t) {
        for (std::size_t i = 0; i < s.nx; ++i) {
            for (std::size_t j = 0; j < s.ny; ++j) {
                const double temp = field.at(t, i, j, 0);
                const double q = field.at(t, i, j, 2);
                const double p = surface_pressure(field.at(t, i, j, 3), temp, elevation.at(0, i, j, 0));
                const double rh = relative_humidity(std::max(q, 0.0), temp, p);
                for (std::size_t v = 0; v < 4; ++v) {
                    out.at(t, i, j, v) = field.at(t, i, j, v);
                }
                out.at(t, i, j, 4) = rh;
                out.at(t, i, j, 5) = heat_index(temp, rh);
            }
        }
    }
    return out;
}

// ---- samples -------------------------------------------------------------------------------

std::vector<double> SampleSet::column(std::size_t dim) const {
    std::vector<double> c(n);
    for (std::size_t k = 0; k < n; ++k) {
        c[k] = values[k * d + dim];
    }
    return c;
}

SampleSet samples_of(std::span<const GridField> fields, std::size_t var) {
    if (fields.empty()) {
        throw ValidationError("samples: no fields");
    }
    const auto& s0 = fields.front().shape;
    SampleSet out;
    out.d = s0.nx * s0.ny;
    for (const auto& f : fields) {
        if (f.shape.nx != s0.nx || f.shape.ny != s0.ny || f.shape.nv != s0.nv) {
            throw ShapeError("samples: fields live on different grids");
        }
        if (var >= f.shape.nv) {
            throw ShapeError("samples: variable index out of range");
        }
        for (std::size_t t = 0; t < f.shape.nt; ++t) {
            const auto step = f.step(t);
            for (std::size_t p = 0; p < out.d; ++p) {
                out.values.push_back(step[p * f.shape.nv + var]);
            }
        }
        out.n += f.shape.nt;
    }
    return out;
}

SampleSet samples_of(const GridField& field, std::size_t var) { return samples_of(std::span(&field, 1), var); }

namespace {

void check_pair(const SampleSet& pred, const SampleSet& ref) {
    if (pred.n == 0 || ref.n == 0) {
        throw ValidationError("metric needs at least one sample in each set");
    }
    if (pred.d != ref.d) {
        throw ShapeError("metric: sample dimensions differ");
    }
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

std::vector<double> mab_field(const SampleSet& pred, const SampleSet& ref) {
    check_pair(pred, ref);
    std::vector<double> out(pred.d);
    for (std::size_t k = 0; k < pred.d; ++k) {
        out[k] = std::abs(mean_of(pred.column(k)) - mean_of(ref.column(k)));
    }
    return out;
}

double mab(const SampleSet& pred, const SampleSet& ref) { return mean_of(mab_field(pred, ref)); }

double wasserstein1(std::span<const double> pred, std::span<const double> ref) {
    if (pred.empty() || ref.empty()) {
        throw ValidationError("wasserstein1: empty sample set");
    }
    std::vector<double> a(pred.begin(), pred.end());
    std::vector<double> b(ref.begin(), ref.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t ia = 0;
    std::size_t ib = 0;
    double total = 0.0;
    double x = std::min(a.front(), b.front());
    // Walk the merged support; between consecutive points both CDFs are constant.
    while (ia < a.size() || ib < b.size()) {
        const double next_a = ia < a.size() ? a[ia] : std::numeric_limits<double>::infinity();
        const double next_b = ib < b.size() ? b[ib] : std::numeric_limits<double>::infinity();
        const double next = std::min(next_a, next_b);
        total += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * (next - x);
        x = next;
        while (ia < a.size() && a[ia] == x) {
            ++ia;
        }
        while (ib < b.size() && b[ib] == x) {
            ++ib;
        }
    }
    return total;
}

std::vector<double> wasserstein1_field(const SampleSet& pred, const SampleSet& ref) {
    check_pair(pred, ref);
    std::vector<double> out(pred.d);
    for (std::size_t k = 0; k < pred.d; ++k) {
        out[k] = wasserstein1(pred.column(k), ref.column(k));
    }
    return out;
}

double wasserstein1(const SampleSet& pred, const SampleSet& ref) { return mean_of(wasserstein1_field(pred, ref)); }

double percentile(std::span<const double> x, double p) {
    if (x.empty()) {
        throw ValidationError("percentile of an empty set");
    }
    if (!(p >= 0.0 && p <= 100.0)) {
        throw ValidationError("percentile must lie in [0, 100]");
    }
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double h = (static_cast<double>(s.size()) - 1.0) * p / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= s.size()) {
        return s.back();
    }
    return s[lo] + (h - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
}

std::vector<double> percentile_error_field(const SampleSet& pred, const SampleSet& ref, double p) {
    check_pair(pred, ref);
    std::vector<double> out(pred.d);
    for (std::size_t k = 0; k < pred.d; ++k) {
        out[k] = std::abs(percentile(pred.column(k), p) - percentile(ref.column(k), p));
    }
    return out;
}

double percentile_mae(const SampleSet& pred, const SampleSet& ref, double p) {
    return mean_of(percentile_error_field(pred, ref, p));
}

// ---- correlations ---------------------------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw ShapeError("pearson: series must be equally long and nonempty");
    }
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        sab += (a[k] - ma) * (b[k] - mb);
        saa += (a[k] - ma) * (a[k] - ma);
        sbb += (b[k] - mb) * (b[k] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return sab / (std::sqrt(saa) * std::sqrt(sbb));
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t k = 0; k < idx.size();) {
        std::size_t m = k;
        while (m + 1 < idx.size() && x[idx[m + 1]] == x[idx[k]]) {
            ++m;
        }
        const double rank = 0.5 * static_cast<double>(k + m);
        for (std::size_t q = k; q <= m; ++q) {
            r[idx[q]] = rank;
        }
        k = m + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("spearman: series must be equally long");
    }
    return pearson(average_ranks(a), average_ranks(b));
}

CorrelationMatrix spatial_correlation(std::span<const GridField> fields, std::size_t var, std::size_t ci,
                                      std::size_t cj, std::size_t half) {
    const SampleSet s = samples_of(fields, var);
    const auto& g = fields.front().shape;
    if (ci >= g.nx || cj >= g.ny) {
        throw ShapeError("spatial correlation: centre outside the grid");
    }
    if (s.n < 3) {
        throw ValidationError("spatial correlation needs at least three time samples");
    }
    const std::size_t i0 = ci >= half ? ci - half : 0;
    const std::size_t i1 = std::min(g.nx - 1, ci + half);
    const std::size_t j0 = cj >= half ? cj - half : 0;
    const std::size_t j1 = std::min(g.ny - 1, cj + half);
    CorrelationMatrix out;
    out.rows = i1 - i0 + 1;
    out.cols = j1 - j0 + 1;
    const auto centre = s.column(ci * g.ny + cj);
    for (std::size_t i = i0; i <= i1; ++i) {
        for (std::size_t j = j0; j <= j1; ++j) {
            const double r = pearson(centre, s.column(i * g.ny + j));
            if (std::isnan(r)) {
                ++out.excluded;
            }
            out.rho.push_back(r);
        }
    }
    return out;
}

double spatial_corr_error(const CorrelationMatrix& pred, const CorrelationMatrix& ref) {
    if (pred.rows != ref.rows || pred.cols != ref.cols) {
        throw ShapeError("spatial correlation matrices differ in shape");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < pred.rho.size(); ++k) {
        if (!std::isnan(pred.rho[k]) && !std::isnan(ref.rho[k])) {
            acc += (pred.rho[k] - ref.rho[k]) * (pred.rho[k] - ref.rho[k]);
        }
    }
    return std::sqrt(acc);
}

// ---- temporal spectra -------------------------------------------------------------------------

namespace {

class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard lock(fftw_plan_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        {
            std::lock_guard lock(fftw_plan_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    // Accumulate the mean-removed periodogram of x into psd (size n/2).
    void add_periodogram(std::span<const double> x, double dt, std::vector<double>& psd) {
        const double m = mean_of(x);
        for (std::size_t k = 0; k < n_; ++k) {
            in_[k] = x[k] - m;
        }
        fftw_execute(plan_);
        const double length = static_cast<double>(n_) * dt;
        for (std::size_t k = 1; k <= n_ / 2; ++k) {
            psd[k - 1] += (out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]) / length;
        }
    }

private:
    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

}  // namespace

std::vector<double> periodogram(std::span<const double> x, double dt) {
    if (x.size() < 2) {
        throw ValidationError("periodogram needs at least two samples");
    }
    std::vector<double> psd(x.size() / 2, 0.0);
    RealFft fft(x.size());
    fft.add_periodogram(x, dt, psd);
    return psd;
}

std::vector<double> ensemble_psd(const std::vector<std::vector<double>>& series, double dt) {
    if (series.empty() || series.front().size() < 2) {
        throw ValidationError("ensemble spectrum needs nonempty series of length >= 2");
    }
    const std::size_t n = series.front().size();
    std::vector<double> psd(n / 2, 0.0);
    RealFft fft(n);
    for (const auto& s : series) {
        if (s.size() != n) {
            throw ShapeError("ensemble spectrum: series lengths differ");
        }
        fft.add_periodogram(s, dt, psd);
    }
    for (auto& v : psd) {
        v /= static_cast<double>(series.size());
    }
    return psd;
}

double psd_log_error(std::span<const double> psd_pred, std::span<const double> psd_ref, double floor) {
    if (psd_pred.size() != psd_ref.size() || psd_pred.empty()) {
        throw ShapeError("spectra differ in length");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < psd_pred.size(); ++k) {
        acc += std::abs(std::log(std::max(psd_pred[k], floor)) - std::log(std::max(psd_ref[k], floor)));
    }
    return acc / static_cast<double>(psd_pred.size());
}

double temporal_psd_error(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& ref,
                          double dt) {
    return psd_log_error(ensemble_psd(pred, dt), ensemble_psd(ref, dt));
}

std::vector<std::vector<double>> pixel_series(std::span<const GridField> fields, std::size_t var) {
    std::vector<std::vector<double>> out;
    for (const auto& f : fields) {
        if (var >= f.shape.nv) {
            throw ShapeError("pixel series: variable index out of range");
        }
        for (std::size_t i = 0; i < f.shape.nx; ++i) {
            for (std::size_t j = 0; j < f.shape.ny; ++j) {
                std::vector<double> s(f.shape.nt);
                for (std::size_t t = 0; t < f.shape.nt; ++t) {
                    s[t] = f.at(t, i, j, var);
                }
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

// ---- compound events ----------------------------------------------------------------------

double heat_streak_prob(std::span<const double> tmax, std::span<const double> threshold, std::size_t h, double delta) {
    if (tmax.size() != threshold.size()) {
        throw ShapeError("heat streak: series and threshold lengths differ");
    }
    if (h == 0 || tmax.size() < h) {
        throw ValidationError("heat streak: series shorter than the streak length");
    }
    std::size_t counted = 0;
    std::size_t run = 0;
    for (std::size_t k = 0; k <= tmax.size(); ++k) {
        if (k < tmax.size() && tmax[k] > threshold[k] + delta) {
            ++run;
            continue;
        }
        if (run >= h) {
            counted += run;
        }
        run = 0;
    }
    return static_cast<double>(counted) / static_cast<double>(tmax.size());
}

GridField daily_max(const GridField& field) {
    if (field.time.dt_hours <= 0 || kHoursPerDay % field.time.dt_hours != 0) {
        throw ShapeError("daily max: time step must divide a day");
    }
    const auto spd = static_cast<std::size_t>(kHoursPerDay / field.time.dt_hours);
    const std::size_t days = field.shape.nt / spd;
    if (days == 0) {
        throw ShapeError("daily max: field holds no whole day");
    }
    GridField out = GridField::like(field, days);
    out.time.dt_hours = kHoursPerDay;
    for (std::size_t d = 0; d < days; ++d) {
        auto dst = out.step(d);
        const auto first = field.step(d * spd);
        std::copy(first.begin(), first.end(), dst.begin());
        for (std::size_t s = 1; s < spd; ++s) {
            const auto src = field.step(d * spd + s);
            for (std::size_t k = 0; k < dst.size(); ++k) {
                dst[k] = std::max(dst[k], src[k]);
            }
        }
    }
    return out;
}

std::vector<double> heat_streak_field(std::span<const GridField> daily, std::size_t var, const Climatology& clim,
                                      std::size_t h, double delta) {
    if (daily.empty()) {
        throw ValidationError("heat streak: no fields");
    }
    const auto& g = daily.front().shape;
    if (clim.nx != g.nx || clim.ny != g.ny || clim.nv != g.nv || var >= g.nv) {
        throw ShapeError("heat streak: climatology does not match the fields");
    }
    std::vector<double> out(g.nx * g.ny, 0.0);
    std::size_t total_days = 0;
    std::vector<double> series;
    std::vector<double> threshold;
    for (const auto& f : daily) {
        if (f.time.dt_hours != kHoursPerDay || f.shape.nx != g.nx || f.shape.ny != g.ny) {
            throw ShapeError("heat streak: fields must be daily on a common grid");
        }
        total_days += f.shape.nt;
        for (std::size_t i = 0; i < g.nx; ++i) {
            for (std::size_t j = 0; j < g.ny; ++j) {
                series.resize(f.shape.nt);
                threshold.resize(f.shape.nt);
                for (std::size_t t = 0; t < f.shape.nt; ++t) {
                    series[t] = f.at(t, i, j, var);
                    const int grp = clim.grouping.group_of(f.timestamp(t));
                    threshold[t] = clim.mean_of(grp)[(i * g.ny + j) * g.nv + var];
                }
                out[i * g.ny + j] +=
                    heat_streak_prob(series, threshold, h, delta) * static_cast<double>(f.shape.nt);
            }
        }
    }
    for (auto& v : out) {
        v /= static_cast<double>(total_days);
    }
    return out;
}

double mean_squared_difference(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) {
        throw ShapeError("mean squared difference: maps differ in size");
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        acc += (a[k] - b[k]) * (a[k] - b[k]);
    }
    return acc / static_cast<double>(a.size());
}

// ---- geometry ---------------------------------------------------------------------------------------

double great_circle_distance(double lon1, double lat1, double lon2, double lat2) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double p1 = lat1 * rad;
    const double p2 = lat2 * rad;
    const double dl = (lon2 - lon1) * rad;
    const double sp = std::sin(0.5 * (p2 - p1));
    const double sl = std::sin(0.5 * dl);
    const double h = std::clamp(sp * sp + std::cos(p1) * std::cos(p2) * sl * sl, 0.0, 1.0);
    return 2.0 * std::atan2(std::sqrt(h), std::sqrt(1.0 - h)) / rad;
}

// ---- reports ------------------------------------------------------------------------------------------

void MetricReport::add(std::string metric, std::string variable, std::string method, std::string units, double value) {
    entries.push_back({std::move(metric), std::move(variable), std::move(method), std::move(units), value});
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
    CsvTable t({"metric", "variable", "method", "units", "period", "value"});
    for (const auto& e : entries) {
        t.add_row({e.metric, e.variable, e.method, e.units, period, format_double(e.value)});
    }
    t.write(path);
}

void MetricReport::write_comparison_csv(const std::filesystem::path& path, const std::vector<std::string>& methods) const {
    std::vector<std::string> header{"metric", "variable", "units"};
    header.insert(header.end(), methods.begin(), methods.end());
    CsvTable t(header);
    // Rows in first-appearance order of (metric, variable).
    std::vector<std::pair<std::string, std::string>> keys;
    std::map<std::pair<std::string, std::string>, std::pair<std::string, std::map<std::string, double>>> cells;
    for (const auto& e : entries) {
        const auto key = std::make_pair(e.metric, e.variable);
        if (!cells.count(key)) {
            keys.push_back(key);
            cells[key].first = e.units;
        }
        cells[key].second[e.method] = e.value;
    }
    for (const auto& key : keys) {
        const auto& [units, values] = cells.at(key);
        std::vector<std::string> row{key.first, key.second, units};
        for (const auto& m : methods) {
            const auto it = values.find(m);
            row.push_back(it == values.end() ? "" : format_double(it->second));
        }
        t.add_row(std::move(row));
    }
    t.write(path);
}

}  // namespace downgen
