#pragma once

#include <openssl/evp.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "continuation.hpp"
#include "json.hpp"

namespace wlab {

using Json = nlohmann::ordered_json;

struct FormatError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ResolutionError : FormatError { using FormatError::FormatError; };

// ---------- numbers ----------

inline std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// JSON text with every floating value printed to 17 significant digits; NaN and inf become null.
inline void write_json(std::ostream& os, const Json& j, int indent = 2, int level = 0) {
    auto pad = [&](int l) { os << std::string(std::size_t(indent * l), ' '); };
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) { os << "{}"; return; }
            os << "{\n";
            std::size_t k = 0;
            for (auto it = j.begin(); it != j.end(); ++it, ++k) {
                pad(level + 1);
                os << Json(it.key()).dump() << ": ";
                write_json(os, it.value(), indent, level + 1);
                os << (k + 1 < j.size() ? ",\n" : "\n");
            }
            pad(level);
            os << "}";
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) { os << "[]"; return; }
            bool flat = std::all_of(j.begin(), j.end(), [](const Json& x) { return x.is_primitive(); });
            os << "[";
            if (!flat) os << "\n";
            for (std::size_t k = 0; k < j.size(); ++k) {
                if (!flat) pad(level + 1);
                write_json(os, j[k], indent, level + 1);
                if (k + 1 < j.size()) os << (flat ? ", " : ",\n");
            }
            if (!flat) { os << "\n"; pad(level); }
            os << "]";
            return;
        }
        case Json::value_t::number_float: {
            double x = j.get<double>();
            os << (std::isfinite(x) ? num(x) : "null");
            return;
        }
        default:
            os << j.dump();
    }
}

inline std::string json_text(const Json& j) {
    std::ostringstream os;
    write_json(os, j);
    os << "\n";
    return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
}

// ---------- CSV ----------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<std::string> r) {
        if (r.size() != header.size()) throw ShapeError("CSV row width does not match header");
        rows.push_back(std::move(r));
    }
    std::string text() const {
        std::ostringstream os;
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t k = 0; k < r.size(); ++k) {
                bool quote = r[k].find_first_of(",\"\n") != std::string::npos;
                if (k) os << ',';
                if (quote) {
                    os << '"';
                    for (char c : r[k]) os << (c == '"' ? "\"\"" : std::string(1, c));
                    os << '"';
                } else {
                    os << r[k];
                }
            }
            os << '\n';
        };
        line(header);
        for (auto& r : rows) line(r);
        return os.str();
    }
};

inline const std::vector<std::string> kTraceColumns = {"sigma", "W", "F", "O", "W_sigma", "grad_norm",
                                                        "entropy_residual", "index", "nullity"};
inline const std::vector<std::string> kVariationColumns = {"surface", "probe", "formula_value", "fd_value", "rel_error",
                                                            "observed_order"};

inline CsvTable trace_table(const std::vector<ViscousState>& states) {
    CsvTable t;
    t.header = kTraceColumns;
    for (auto& s : states)
        t.add({num(s.sigma), num(s.W), num(s.F), num(s.O), num(s.Wsigma), num(s.grad_norm), num(s.entropy_residual),
               std::to_string(s.index), std::to_string(s.nullity)});
    return t;
}

// ---------- run configuration ----------

struct RunConfig {
    std::string surface = "round:1";
    int N = 32;                 // grid resolution
    int L = 16;                 // band limit of conformal factors
    int Lidx = 4;               // index band
    int surface_band = 4;       // band of optimizer surfaces
    std::string energy = "W";
    double sigma = 0.0;
    std::vector<double> schedule = {0.05, 0.02, 0.01};
    double tol = 1e-6;
    int max_iter = 200;
    std::uint64_t seed = 1;
    int probes = 12;
    int probe_lmax = 3;
    std::string out = "out";
    std::vector<double> alphas = {0.4, 0.2, 0.1, 0.05, 0.025};
    double f_power = 2.0;        // f(alpha) = alpha^f_power
    int sweeps = 3;
    std::string path_end = "ellipsoid:1,1,1.5";

    void validate() const {
        if (N < 8) throw ConfigError("N must be at least 8");
        if (L < 0 || L > N - 2) throw ConfigError("band limit must satisfy 0 <= L <= N-2");
        if (Lidx < 0 || Lidx > L) throw ConfigError("index band must satisfy 0 <= Lidx <= L");
        if (surface_band < 1 || surface_band > N - 2) throw ConfigError("surface band must satisfy 1 <= band <= N-2");
        if (!(tol > 0)) throw ConfigError("tolerances must be positive");
        if (max_iter < 0) throw ConfigError("max_iter must be nonnegative");
        if (probes < 1 || probe_lmax < 0) throw ConfigError("probe settings must be positive");
        if (!(f_power > 1)) throw ConfigError("f_power must exceed 1 so that alpha/f(alpha) diverges");
        if (sweeps < 0) throw ConfigError("sweeps must be nonnegative");
        parse_energy(energy);
        if (sigma != 0.0) check_sigma(sigma);
        SigmaSchedule::uniform(schedule, tol, max_iter).validate();
        for (double a : alphas)
            if (!(a > 0 && a < 1)) throw ConfigError("alpha values must lie in (0, 1)");
    }

    Json to_json() const {
        Json j;
        j["surface"] = surface;
        j["N"] = N;
        j["L"] = L;
        j["Lidx"] = Lidx;
        j["surface_band"] = surface_band;
        j["energy"] = energy;
        j["sigma"] = sigma;
        j["schedule"] = schedule;
        j["tol"] = tol;
        j["max_iter"] = max_iter;
        j["seed"] = seed;
        j["probes"] = probes;
        j["probe_lmax"] = probe_lmax;
        j["out"] = out;
        j["alphas"] = alphas;
        j["f_power"] = f_power;
        j["sweeps"] = sweeps;
        j["path_end"] = path_end;
        return j;
    }

    // Keys absent from the document keep their defaults; unknown keys are rejected.
    void merge_json(const Json& j) {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            const auto& v = it.value();
            try {
                if (k == "surface") surface = v.get<std::string>();
                else if (k == "N") N = v.get<int>();
                else if (k == "L") L = v.get<int>();
                else if (k == "Lidx") Lidx = v.get<int>();
                else if (k == "surface_band") surface_band = v.get<int>();
                else if (k == "energy") energy = v.get<std::string>();
                else if (k == "sigma") sigma = v.get<double>();
                else if (k == "schedule") schedule = v.get<std::vector<double>>();
                else if (k == "tol") tol = v.get<double>();
                else if (k == "max_iter") max_iter = v.get<int>();
                else if (k == "seed") seed = v.get<std::uint64_t>();
                else if (k == "probes") probes = v.get<int>();
                else if (k == "probe_lmax") probe_lmax = v.get<int>();
                else if (k == "out") out = v.get<std::string>();
                else if (k == "alphas") alphas = v.get<std::vector<double>>();
                else if (k == "f_power") f_power = v.get<double>();
                else if (k == "sweeps") sweeps = v.get<int>();
                else if (k == "path_end") path_end = v.get<std::string>();
                else throw ConfigError("unknown config key '" + k + "'");
            } catch (const nlohmann::json::exception&) {
                throw ConfigError("config key '" + k + "' has the wrong type");
            }
        }
    }
};

inline Json read_json_file(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw ConfigError("cannot open " + p.string());
    try {
        return Json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("malformed JSON in " + p.string() + ": " + e.what());
    }
}

inline constexpr const char* kOutDirEnv = "WLAB_OUT_DIR";

// ---------- seeded probes ----------

// Portable draws: raw mt19937_64 output reduced by modulo (the bias is irrelevant here).
struct ProbeChoice {
    int l, m, k;
};

inline std::vector<ProbeChoice> draw_probes(std::uint64_t seed, int count, int lmax, int ncomp) {
    std::mt19937_64 rng(seed);
    std::vector<ProbeChoice> all;
    for (int l = 0; l <= lmax; ++l)
        for (int m = -l; m <= l; ++m)
            for (int k = 0; k < ncomp; ++k) all.push_back({l, m, k});
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng() % i]);
    if (count < int(all.size())) all.resize(std::size_t(count));
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return std::tie(a.l, a.m, a.k) < std::tie(b.l, b.m, b.k); });
    return all;
}

// ---------- snapshots ----------

inline constexpr char kSnapshotMagic[5] = {'W', 'L', 'A', 'B', '1'};
inline constexpr std::uint32_t kSnapshotVersion = 1;

struct Snapshot {
    std::string kind;             // "surface" (node values), "coefficients" (harmonic rows) or "field"
    int resolution = 0;
    int band_limit = -1;
    int components = 0;
    Eigen::MatrixXd data;         // rows x components, written row-major (node-major)
    Json params = Json::object();
    std::vector<BranchPoint> branches;
};

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &n, EVP_sha256(), nullptr) != 1) throw std::runtime_error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned k = 0; k < n; ++k) {
        s += hex[md[k] >> 4];
        s += hex[md[k] & 15];
    }
    return s;
}

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U u = std::bit_cast<U>(v);
    for (std::size_t k = 0; k < sizeof(U); ++k) out.push_back(char((u >> (8 * k)) & 0xff));
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    if (pos + sizeof(U) > in.size()) throw FormatError("snapshot truncated");
    U u = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) u |= U(static_cast<unsigned char>(in[pos + k])) << (8 * k);
    pos += sizeof(U);
    return std::bit_cast<T>(u);
}

}  // namespace detail

inline std::string snapshot_bytes(const Snapshot& s) {
    if (s.data.cols() != s.components) throw ShapeError("snapshot component count mismatch");
    std::string b(kSnapshotMagic, 5);
    detail::put_le<std::uint32_t>(b, kSnapshotVersion);
    detail::put_le<std::int32_t>(b, s.resolution);
    detail::put_le<std::int32_t>(b, s.band_limit);
    detail::put_le<std::uint32_t>(b, std::uint32_t(s.components));
    detail::put_le<std::uint64_t>(b, std::uint64_t(s.data.rows()));
    for (Eigen::Index i = 0; i < s.data.rows(); ++i)
        for (Eigen::Index k = 0; k < s.data.cols(); ++k) detail::put_le<double>(b, s.data(i, k));
    return b;
}

inline Json branches_json(const std::vector<BranchPoint>& br) {
    Json a = Json::array();
    for (auto& b : br)
        a.push_back({{"chart", chart_name(b.chart)}, {"z", {b.z.real(), b.z.imag()}}, {"multiplicity", b.multiplicity},
                     {"X", {b.X[0], b.X[1], b.X[2]}}});
    return a;
}

inline std::vector<BranchPoint> branches_from_json(const Json& a) {
    std::vector<BranchPoint> out;
    for (auto& b : a) {
        BranchPoint p;
        p.chart = b.at("chart").get<std::string>() == "north" ? Chart::North : Chart::South;
        p.z = cplx(b.at("z")[0].get<double>(), b.at("z")[1].get<double>());
        p.multiplicity = b.at("multiplicity").get<int>();
        p.X = Eigen::Vector3d(b.at("X")[0].get<double>(), b.at("X")[1].get<double>(), b.at("X")[2].get<double>());
        out.push_back(p);
    }
    return out;
}

inline Json snapshot_sidecar(const Snapshot& s, const std::string& hash) {
    Json j;
    j["format"] = "WLAB1";
    j["version"] = kSnapshotVersion;
    j["kind"] = s.kind;
    j["resolution"] = s.resolution;
    j["band_limit"] = s.band_limit;
    j["components"] = s.components;
    j["rows"] = s.data.rows();
    j["params"] = s.params;
    j["branches"] = branches_json(s.branches);
    j["sha256"] = hash;
    return j;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& p) { return p.string() + ".json"; }

// Writes <path> and <path>.json; returns the content hash.
inline std::string save_snapshot(const std::filesystem::path& p, const Snapshot& s) {
    std::string b = snapshot_bytes(s);
    std::string h = sha256_hex(b);
    write_text(p, b);
    write_text(sidecar_path(p), json_text(snapshot_sidecar(s, h)));
    return h;
}

struct LoadOptions {
    int expect_resolution = -1;   // refuse other resolutions when set
};

inline Snapshot load_snapshot(const std::filesystem::path& p, const LoadOptions& opt = {}) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open snapshot " + p.string());
    std::string b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (b.size() < 5 || b.compare(0, 5, std::string(kSnapshotMagic, 5)) != 0) throw FormatError("bad snapshot magic");
    std::size_t pos = 5;
    auto version = detail::get_le<std::uint32_t>(b, pos);
    if (version != kSnapshotVersion) throw FormatError("unsupported snapshot version " + std::to_string(version));
    Snapshot s;
    s.resolution = detail::get_le<std::int32_t>(b, pos);
    s.band_limit = detail::get_le<std::int32_t>(b, pos);
    s.components = int(detail::get_le<std::uint32_t>(b, pos));
    auto rows = detail::get_le<std::uint64_t>(b, pos);
    if (s.components < 0 || s.components > 64) throw FormatError("implausible component count");
    if (b.size() - pos != rows * std::uint64_t(s.components) * 8) throw FormatError("snapshot truncated or padded");
    s.data.resize(Eigen::Index(rows), s.components);
    for (std::uint64_t i = 0; i < rows; ++i)
        for (int k = 0; k < s.components; ++k) s.data(Eigen::Index(i), k) = detail::get_le<double>(b, pos);
    Json side;
    try {
        side = read_json_file(sidecar_path(p));
    } catch (const ConfigError& e) {
        throw FormatError(std::string("snapshot sidecar: ") + e.what());
    }
    if (side.value("format", "") != "WLAB1" || side.value("version", 0u) != kSnapshotVersion)
        throw FormatError("sidecar format or version mismatch");
    if (side.value("sha256", "") != sha256_hex(b)) throw FormatError("snapshot content hash mismatch");
    if (side.value("resolution", -1) != s.resolution || side.value("components", -1) != s.components)
        throw FormatError("sidecar disagrees with snapshot header");
    s.kind = side.value("kind", "");
    s.params = side.value("params", Json::object());
    s.branches = branches_from_json(side.value("branches", Json::array()));
    if (opt.expect_resolution >= 0 && s.kind != "coefficients" && s.resolution != opt.expect_resolution)
        throw ResolutionError("snapshot resolution " + std::to_string(s.resolution) + " differs from " +
                              std::to_string(opt.expect_resolution) + "; resample explicitly");
    return s;
}

inline std::string snapshot_hash(const Snapshot& s) { return sha256_hex(snapshot_bytes(s)); }

// Node positions of an immersion.
inline Snapshot surface_snapshot(const Immersion& im) {
    Snapshot s;
    s.kind = "surface";
    s.resolution = im.grid->resolution;
    s.band_limit = im.surface->band_limit;
    s.components = im.dim;
    s.data.resize(im.size(), im.dim);
    for (int i = 0; i < im.size(); ++i)
        for (int k = 0; k < im.dim; ++k) s.data(i, k) = im.jets[i].c[k].value();
    s.params = {{"spec", im.surface->spec}, {"surface_kind", im.surface->kind}, {"surface_params", im.surface->params}};
    s.branches = im.surface->branches;
    return s;
}

inline Snapshot coefficient_snapshot(const Eigen::MatrixXd& coef, int band, int resolution, Json params = Json::object()) {
    Snapshot s;
    s.kind = "coefficients";
    s.resolution = resolution;
    s.band_limit = band;
    s.components = int(coef.cols());
    s.data = coef;
    s.params = std::move(params);
    return s;
}

// Spectral resampling of a node-valued snapshot onto another grid.
inline Snapshot resample(const Snapshot& s, const QuadratureGrid& from, const QuadratureGrid& to, int band) {
    if (s.kind == "coefficients") throw FormatError("coefficient snapshots do not need resampling");
    if (from.resolution != s.resolution) throw ResolutionError("source grid does not match snapshot");
    check_band(from, band);
    check_band(to, band);
    Snapshot r = s;
    r.resolution = to.resolution;
    r.band_limit = band;
    r.data = sh_synthesis(to, sh_analysis(from, s.data, band), band);
    return r;
}

}  // namespace wlab
