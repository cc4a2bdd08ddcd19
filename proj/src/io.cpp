#include "downgen/io.hpp"

#include "downgen/error.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace downgen {

namespace {

static_assert(std::endian::native == std::endian::little, "NPY writer assumes a little-endian host");

constexpr char kMagic[] = "\x93NUMPY";

std::string shape_tuple(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t k = 0; k < shape.size(); ++k) {
        s += std::to_string(shape[k]);
        if (shape.size() == 1 || k + 1 < shape.size()) {
            s += ",";
            if (k + 1 < shape.size()) {
                s += " ";
            }
        }
    }
    return s + ")";
}

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

// Value of `key` in a python-literal header dict, up to the next top-level comma.
std::string header_value(const std::string& header, const std::string& key) {
    const auto pos = header.find("'" + key + "'");
    if (pos == std::string::npos) {
        throw FormatError("npy header missing key '" + key + "'");
    }
    auto colon = header.find(':', pos);
    if (colon == std::string::npos) {
        throw FormatError("npy header malformed near '" + key + "'");
    }
    std::size_t start = colon + 1;
    while (start < header.size() && header[start] == ' ') {
        ++start;
    }
    if (start < header.size() && header[start] == '(') {
        const auto close = header.find(')', start);
        if (close == std::string::npos) {
            throw FormatError("npy header: unterminated shape tuple");
        }
        return header.substr(start, close - start + 1);
    }
    const auto end = header.find_first_of(",}", start);
    return header.substr(start, end - start);
}

std::vector<std::size_t> parse_shape(const std::string& tuple) {
    std::vector<std::size_t> shape;
    std::string body = tuple.substr(1, tuple.size() - 2);
    std::stringstream ss(body);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto b = tok.find_first_not_of(' ');
        if (b == std::string::npos) {
            continue;
        }
        const auto e = tok.find_last_not_of(' ');
        tok = tok.substr(b, e - b + 1);
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) {
            throw FormatError("npy header: bad shape entry '" + tok + "'");
        }
        shape.push_back(v);
    }
    return shape;
}

}  // namespace

void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<double>& data) {
    if (product(shape) != data.size()) {
        throw ShapeError("write_npy: shape does not match data size");
    }
    std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': " + shape_tuple(shape) + ", }";
    // Pad with spaces so magic + version + length + header + '\n' is a multiple of 64.
    const std::size_t prefix = 6 + 2 + 2;
    std::size_t total = prefix + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header += '\n';
    if (header.size() > 0xFFFF) {
        throw FormatError("write_npy: header too long for format v1.0");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out.write(kMagic, 6);
    const char version[2] = {1, 0};
    out.write(version, 2);
    const auto hlen = static_cast<std::uint16_t>(header.size());
    const char len_bytes[2] = {static_cast<char>(hlen & 0xFF), static_cast<char>(hlen >> 8)};
    out.write(len_bytes, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!out) {
        throw Error("write failed for '" + path.string() + "'");
    }
}

NpyArray read_npy(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open '" + path.string() + "'");
    }
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0) {
        throw FormatError("'" + path.string() + "' is not an NPY file (bad magic)");
    }
    unsigned char version[2];
    in.read(reinterpret_cast<char*>(version), 2);
    if (!in || version[0] != 1 || version[1] != 0) {
        throw FormatError("unsupported NPY version in '" + path.string() + "'");
    }
    unsigned char len_bytes[2];
    in.read(reinterpret_cast<char*>(len_bytes), 2);
    const std::size_t hlen = static_cast<std::size_t>(len_bytes[0]) | (static_cast<std::size_t>(len_bytes[1]) << 8);
    std::string header(hlen, '\0');
    in.read(header.data(), static_cast<std::streamsize>(hlen));
    if (!in) {
        throw FormatError("truncated NPY header in '" + path.string() + "'");
    }
    const auto descr = header_value(header, "descr");
    if (descr != "'<f8'") {
        throw FormatError("unsupported NPY dtype " + descr + " (expected '<f8')");
    }
    if (header_value(header, "fortran_order") != "False") {
        throw FormatError("Fortran-ordered NPY arrays are not supported");
    }
    NpyArray arr;
    arr.shape = parse_shape(header_value(header, "shape"));
    arr.data.resize(product(arr.shape));
    in.read(reinterpret_cast<char*>(arr.data.data()), static_cast<std::streamsize>(arr.data.size() * sizeof(double)));
    if (!in) {
        throw FormatError("truncated NPY payload in '" + path.string() + "'");
    }
    in.peek();
    if (!in.eof()) {
        throw FormatError("trailing bytes after NPY payload in '" + path.string() + "'");
    }
    return arr;
}

std::filesystem::path sidecar_path(const std::filesystem::path& array_path) {
    auto p = array_path;
    p.replace_extension(".json");
    return p;
}

void write_array(const GridField& field, const std::filesystem::path& path) {
    field.validate();
    nlohmann::json meta;
    meta["time0"] = field.time.time0;
    meta["dt_hours"] = field.time.dt_hours;
    meta["lon"] = field.lon;
    meta["lat"] = field.lat;
    meta["var_names"] = field.var_names;
    meta["member_id"] = field.member_id ? nlohmann::json(*field.member_id) : nlohmann::json(nullptr);
    write_npy(path, {field.shape.nt, field.shape.nx, field.shape.ny, field.shape.nv}, field.data);
    std::ofstream out(sidecar_path(path), std::ios::trunc);
    if (!out) {
        throw Error("cannot write sidecar for '" + path.string() + "'");
    }
    // Doubles are dumped with shortest round-trip precision, so coordinates survive exactly.
    out << meta.dump(1) << '\n';
}

GridField read_array(const std::filesystem::path& path) {
    NpyArray arr = read_npy(path);
    if (arr.shape.size() != 4) {
        throw ShapeError("'" + path.string() + "' is not a 4-axis array");
    }
    std::ifstream in(sidecar_path(path));
    if (!in) {
        throw FormatError("missing sidecar manifest for '" + path.string() + "'");
    }
    nlohmann::json meta;
    try {
        in >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed sidecar for '" + path.string() + "': " + e.what());
    }
    GridField f;
    try {
        f.shape = GridShape{arr.shape[0], arr.shape[1], arr.shape[2], arr.shape[3]};
        f.time.time0 = meta.at("time0").get<std::int64_t>();
        f.time.dt_hours = meta.at("dt_hours").get<std::int64_t>();
        f.lon = meta.at("lon").get<std::vector<double>>();
        f.lat = meta.at("lat").get<std::vector<double>>();
        f.var_names = meta.at("var_names").get<std::vector<std::string>>();
        if (!meta.at("member_id").is_null()) {
            f.member_id = meta.at("member_id").get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("sidecar for '" + path.string() + "' is missing fields: " + e.what());
    }
    f.data = std::move(arr.data);
    if (f.lon.size() != f.shape.nx || f.lat.size() != f.shape.ny || f.var_names.size() != f.shape.nv) {
        throw ShapeError("sidecar coordinates do not match array shape in '" + path.string() + "'");
    }
    f.validate();
    return f;
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw Error("format_double failed");
    }
    return std::string(buf, ptr);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(std::vector<std::string> row) {
    if (row.size() != header_.size()) {
        throw ShapeError("csv row has " + std::to_string(row.size()) + " fields, header has " +
                         std::to_string(header_.size()));
    }
    rows_.push_back(std::move(row));
}

std::string CsvTable::to_string() const {
    std::string out;
    auto emit = [&](const std::vector<std::string>& r) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            if (k > 0) {
                out += ',';
            }
            out += csv_quote(r[k]);
        }
        out += "\r\n";
    };
    emit(header_);
    for (const auto& r : rows_) {
        emit(r);
    }
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path.string() + "' for writing");
    }
    out << to_string();
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (std::size_t k = 0; k < text.size(); ++k) {
        const char c = text[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < text.size() && text[k + 1] == '"') {
                    field += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && k + 1 < text.size() && text[k + 1] == '\n') {
                ++k;
            }
            if (any || !field.empty()) {
                row.push_back(std::move(field));
                rows.push_back(std::move(row));
            }
            row.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) {
        throw FormatError("unterminated quoted CSV field");
    }
    if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_stats(const std::filesystem::path& dir, const std::string& stem, const EnsembleStats& s) {
    write_npy(dir / (stem + "_mean.npy"), {s.nx, s.ny, s.nv}, s.mean);
    write_npy(dir / (stem + "_std.npy"), {s.nx, s.ny, s.nv}, s.std);
}

EnsembleStats read_stats(const std::filesystem::path& dir, const std::string& stem) {
    auto m = read_npy(dir / (stem + "_mean.npy"));
    auto s = read_npy(dir / (stem + "_std.npy"));
    if (m.shape.size() != 3 || m.shape != s.shape) {
        throw FormatError("bad statistics files for '" + stem + "'");
    }
    EnsembleStats e;
    e.nx = m.shape[0];
    e.ny = m.shape[1];
    e.nv = m.shape[2];
    e.mean = std::move(m.data);
    e.std = std::move(s.data);
    return e;
}

}  // namespace downgen
