#include "cpi/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>

namespace cpi {

using json = nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for hashing: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        h = fnv1a64(buf, static_cast<std::size_t>(f.gcount()), h);
    }
    return h;
}

namespace {

constexpr std::uint16_t kCpifVersion = 1;

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class T>
T get(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
    return v;
}

constexpr std::size_t kCpifHeader = 4 + 2 + 2 + 2 + 1 + 8 + 2;

} // namespace

void write_cpif(const FrameStack& stack, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    std::vector<std::uint8_t> header;
    header.insert(header.end(), {'C', 'P', 'I', 'F'});
    put<std::uint16_t>(header, kCpifVersion);
    put<std::uint16_t>(header, static_cast<std::uint16_t>(stack.width));
    put<std::uint16_t>(header, static_cast<std::uint16_t>(stack.height));
    put<std::uint8_t>(header, 2);
    put<std::uint64_t>(header, stack.n_frames);
    put<std::uint16_t>(header, 0); // flags
    f.write(reinterpret_cast<const char*>(header.data()),
            static_cast<std::streamsize>(header.size()));

    std::uint64_t checksum = 0xcbf29ce484222325ULL;
    const std::size_t fb = stack.frame_bytes();
    for (std::uint64_t i = 0; i < stack.n_frames; ++i) {
        const auto* a = stack.arm_a.data() + i * fb;
        const auto* b = stack.arm_b.data() + i * fb;
        f.write(reinterpret_cast<const char*>(a), static_cast<std::streamsize>(fb));
        f.write(reinterpret_cast<const char*>(b), static_cast<std::streamsize>(fb));
        checksum = fnv1a64(a, fb, checksum);
        checksum = fnv1a64(b, fb, checksum);
    }
    std::vector<std::uint8_t> footer;
    put<std::uint64_t>(footer, checksum);
    f.write(reinterpret_cast<const char*>(footer.data()), 8);
    if (!f) throw IoError("write failed: " + path);
}

CpifReader::CpifReader(const std::string& path) {
    f_ = std::fopen(path.c_str(), "rb");
    if (!f_) throw IoError("cannot open " + path);
    std::uint8_t h[kCpifHeader];
    if (std::fread(h, 1, sizeof(h), f_) != sizeof(h)) {
        std::fclose(f_);
        f_ = nullptr;
        throw IoError("CPIF header truncated: " + path);
    }
    if (std::memcmp(h, "CPIF", 4) != 0) {
        std::fclose(f_);
        f_ = nullptr;
        throw IoError("bad CPIF magic: " + path);
    }
    const auto version = get<std::uint16_t>(h + 4);
    if (version != kCpifVersion) {
        std::fclose(f_);
        f_ = nullptr;
        throw IoError("unsupported CPIF version " + std::to_string(version));
    }
    width_ = get<std::uint16_t>(h + 6);
    height_ = get<std::uint16_t>(h + 8);
    const auto arms = get<std::uint8_t>(h + 10);
    n_frames_ = get<std::uint64_t>(h + 11);
    if (arms != 2) {
        std::fclose(f_);
        f_ = nullptr;
        throw IoError("unsupported CPIF arm count");
    }
    const std::size_t bpr = (static_cast<std::size_t>(width_) + 7) / 8;
    frame_bytes_ = 2 * bpr * static_cast<std::size_t>(height_);
    payload_offset_ = kCpifHeader;

    std::fseek(f_, 0, SEEK_END);
    const auto size = static_cast<std::uint64_t>(std::ftell(f_));
    const std::uint64_t expected = kCpifHeader + n_frames_ * frame_bytes_ + 8;
    if (size != expected) {
        std::fclose(f_);
        f_ = nullptr;
        throw IoError("CPIF payload truncated or oversized (expected " +
                      std::to_string(expected) + " bytes, got " + std::to_string(size) + ")");
    }
}

CpifReader::~CpifReader() {
    if (f_) std::fclose(f_);
}

FrameStack CpifReader::read_frames(std::uint64_t first, std::uint64_t count) {
    if (first + count > n_frames_) throw IoError("CPIF frame range out of bounds");
    FrameStack s;
    s.width = width_;
    s.height = height_;
    s.n_frames = count;
    s.allocate();
    const std::size_t fb = s.frame_bytes();
    std::fseek(f_, static_cast<long>(payload_offset_ + first * frame_bytes_), SEEK_SET);
    for (std::uint64_t i = 0; i < count; ++i) {
        if (std::fread(s.arm_a.data() + i * fb, 1, fb, f_) != fb ||
            std::fread(s.arm_b.data() + i * fb, 1, fb, f_) != fb)
            throw IoError("CPIF read failed");
    }
    return s;
}

void CpifReader::verify_checksum() {
    std::fseek(f_, static_cast<long>(payload_offset_), SEEK_SET);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::vector<std::uint8_t> buf(1 << 20);
    std::uint64_t remaining = n_frames_ * frame_bytes_;
    while (remaining > 0) {
        const std::size_t n = static_cast<std::size_t>(
            std::min<std::uint64_t>(remaining, buf.size()));
        if (std::fread(buf.data(), 1, n, f_) != n) throw IoError("CPIF read failed");
        h = fnv1a64(buf.data(), n, h);
        remaining -= n;
    }
    std::uint8_t tail[8];
    if (std::fread(tail, 1, 8, f_) != 8) throw IoError("CPIF footer truncated");
    if (get<std::uint64_t>(tail) != h) throw IoError("CPIF checksum mismatch");
}

FrameStack read_cpif(const std::string& path) {
    CpifReader r(path);
    r.verify_checksum();
    return r.read_frames(0, r.n_frames());
}

// ---- array container ----------------------------------------------------

void write_ndarray(const NdArray& a, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    std::vector<std::uint8_t> h;
    h.insert(h.end(), {'C', 'P', 'B', 'A'});
    put<std::uint16_t>(h, 1);
    put<std::uint16_t>(h, static_cast<std::uint16_t>(a.rank()));
    put<std::uint8_t>(h, 0); // f64
    for (auto d : a.dims()) put<std::uint64_t>(h, d);
    for (const auto& ax : a.axes()) {
        put<std::uint16_t>(h, static_cast<std::uint16_t>(ax.name.size()));
        for (char c : ax.name) h.push_back(static_cast<std::uint8_t>(c));
        std::uint64_t bits;
        std::memcpy(&bits, &ax.origin, 8);
        put<std::uint64_t>(h, bits);
        std::memcpy(&bits, &ax.pitch, 8);
        put<std::uint64_t>(h, bits);
    }
    f.write(reinterpret_cast<const char*>(h.data()), static_cast<std::streamsize>(h.size()));
    f.write(reinterpret_cast<const char*>(a.data()),
            static_cast<std::streamsize>(a.size() * 8));
    const std::uint64_t checksum = fnv1a64(a.data(), a.size() * 8);
    std::vector<std::uint8_t> footer;
    put<std::uint64_t>(footer, checksum);
    f.write(reinterpret_cast<const char*>(footer.data()), 8);
    if (!f) throw IoError("write failed: " + path);
}

NdArray read_ndarray(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    std::size_t off = 0;
    auto need = [&](std::size_t n) {
        if (off + n > bytes.size()) throw IoError("array file truncated: " + path);
    };
    need(9);
    if (std::memcmp(bytes.data(), "CPBA", 4) != 0) throw IoError("bad array magic: " + path);
    const auto version = get<std::uint16_t>(bytes.data() + 4);
    if (version != 1) throw IoError("unsupported array version");
    const auto rank = get<std::uint16_t>(bytes.data() + 6);
    const auto dtype = get<std::uint8_t>(bytes.data() + 8);
    if (dtype != 0) throw IoError("unsupported array dtype");
    off = 9;
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) {
        need(8);
        d = static_cast<std::size_t>(get<std::uint64_t>(bytes.data() + off));
        off += 8;
    }
    std::vector<Axis> axes(rank);
    for (auto& ax : axes) {
        need(2);
        const auto len = get<std::uint16_t>(bytes.data() + off);
        off += 2;
        need(len + 16u);
        ax.name.assign(reinterpret_cast<const char*>(bytes.data() + off), len);
        off += len;
        std::uint64_t bits = get<std::uint64_t>(bytes.data() + off);
        std::memcpy(&ax.origin, &bits, 8);
        off += 8;
        bits = get<std::uint64_t>(bytes.data() + off);
        std::memcpy(&ax.pitch, &bits, 8);
        off += 8;
    }
    NdArray a(dims, axes);
    need(a.size() * 8 + 8);
    std::memcpy(a.data(), bytes.data() + off, a.size() * 8);
    off += a.size() * 8;
    const std::uint64_t stored = get<std::uint64_t>(bytes.data() + off);
    if (stored != fnv1a64(a.data(), a.size() * 8))
        throw IoError("array checksum mismatch: " + path);
    return a;
}

void write_csv(const NdArray& a, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f.precision(12);
    if (a.rank() == 1) {
        f << a.axis(0).name << ",value\n";
        for (std::size_t i = 0; i < a.dim(0); ++i)
            f << a.axis(0).coord(static_cast<std::ptrdiff_t>(i)) << "," << a[i] << "\n";
    } else if (a.rank() == 2) {
        f << a.axis(0).name << "," << a.axis(1).name << ",value\n";
        for (std::size_t i = 0; i < a.dim(0); ++i)
            for (std::size_t j = 0; j < a.dim(1); ++j)
                f << a.axis(0).coord(static_cast<std::ptrdiff_t>(i)) << ","
                  << a.axis(1).coord(static_cast<std::ptrdiff_t>(j)) << "," << a.at2(i, j)
                  << "\n";
    } else {
        throw IoError("write_csv: only rank 1 or 2 arrays");
    }
    if (!f) throw IoError("write failed: " + path);
}

void write_pgm(const NdArray& a, const std::string& path) {
    std::size_t h = 1, w = 0;
    if (a.rank() == 1) {
        w = a.dim(0);
    } else if (a.rank() == 2) {
        h = a.dim(0);
        w = a.dim(1);
    } else {
        throw IoError("write_pgm: only rank 1 or 2 arrays");
    }
    double lo = a[0], hi = a[0];
    for (double v : a.raw()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    for (double v : a.raw())
        f.put(static_cast<char>(static_cast<int>((v - lo) * scale + 0.5)));
    if (!f) throw IoError("write failed: " + path);
}

// ---- configuration -------------------------------------------------------

namespace {

void reject_unknown(const json& obj, const std::vector<std::string>& known,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

double num_or(const json& o, const char* key, double dflt) {
    return o.contains(key) ? o.at(key).get<double>() : dflt;
}

} // namespace

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    reject_unknown(j, {"optics", "source", "mask", "acquisition", "spad", "grid"}, "config root");

    PipelineConfig c;
    if (!j.contains("optics") || !j.contains("source") || !j.contains("acquisition"))
        throw ConfigError("config requires 'optics', 'source' and 'acquisition' sections");

    const json& o = j["optics"];
    reject_unknown(o, {"f_mm", "z_i_mm", "z_a_mm", "z_b_mm", "z_sigma_mm", "na_o", "lambda_nm",
                       "pixel_pitch_um"},
                   "optics");
    c.optics.f = num_or(o, "f_mm", 0);
    c.optics.z_i = num_or(o, "z_i_mm", 0);
    c.optics.z_a = num_or(o, "z_a_mm", 0);
    c.optics.z_b = num_or(o, "z_b_mm", 0);
    c.optics.z_sigma = num_or(o, "z_sigma_mm", 0);
    c.optics.na_o = num_or(o, "na_o", 0);
    c.optics.lambda_nm = num_or(o, "lambda_nm", 0);
    c.optics.pixel_pitch_um = num_or(o, "pixel_pitch_um", 0);

    const json& s = j["source"];
    reject_unknown(s, {"sigma_mm", "c", "t_ch_us"}, "source");
    c.source.sigma = num_or(s, "sigma_mm", 0);
    c.source.c = num_or(s, "c", 0);
    c.source.t_ch = num_or(s, "t_ch_us", 0);

    const json& a = j["acquisition"];
    reject_unknown(a, {"n_frames", "frame_rate_hz", "gate_time_us", "width", "height", "binning",
                       "roi", "seed"},
                   "acquisition");
    c.acq.n_frames = a.contains("n_frames") ? a.at("n_frames").get<std::uint64_t>() : 0;
    c.acq.frame_rate = num_or(a, "frame_rate_hz", 0);
    c.acq.gate_time = num_or(a, "gate_time_us", 0);
    c.acq.width = static_cast<int>(num_or(a, "width", 0));
    c.acq.height = static_cast<int>(num_or(a, "height", 0));
    c.acq.binning = static_cast<int>(num_or(a, "binning", 1));
    c.acq.seed = a.contains("seed") ? a.at("seed").get<std::uint64_t>() : 0;
    if (a.contains("roi")) {
        const json& r = a["roi"];
        reject_unknown(r, {"x", "y", "w", "h"}, "acquisition.roi");
        c.acq.roi = {static_cast<int>(num_or(r, "x", 0)), static_cast<int>(num_or(r, "y", 0)),
                     static_cast<int>(num_or(r, "w", 0)), static_cast<int>(num_or(r, "h", 0))};
    }

    if (j.contains("spad")) {
        const json& sp = j["spad"];
        reject_unknown(sp, {"pde", "dark_rate_cps", "mean_photons_per_cell"}, "spad");
        c.spad.pde = num_or(sp, "pde", 0.5);
        c.spad.dark_rate = num_or(sp, "dark_rate_cps", 10.0);
        c.spad.mean_photons_per_cell = num_or(sp, "mean_photons_per_cell", 0.1);
    }
    c.spad.gate_time = c.acq.gate_time;

    if (j.contains("mask")) {
        const json& m = j["mask"];
        reject_unknown(m, {"kind", "z_mm", "slit_count", "slit_width_um", "slit_distance_um",
                           "raster", "raster_pitch_um"},
                       "mask");
        const std::string kind = m.contains("kind") ? m.at("kind").get<std::string>() : "slits";
        if (kind == "slits")
            c.mask.kind = MaskKind::SlitGroup;
        else if (kind == "raster")
            c.mask.kind = MaskKind::CustomRaster;
        else
            throw ConfigError("mask.kind must be 'slits' or 'raster'");
        c.mask.z = num_or(m, "z_mm", 0);
        c.mask.slit_count = static_cast<int>(num_or(m, "slit_count", 2));
        c.mask.slit_width_um = num_or(m, "slit_width_um", 0);
        c.mask.slit_distance_um = num_or(m, "slit_distance_um", 0);
        if (m.contains("raster")) c.mask.raster = m.at("raster").get<std::vector<double>>();
        c.mask.raster_pitch_um = num_or(m, "raster_pitch_um", 0);
        if (c.mask.z <= 0.0) throw ConfigError("mask.z_mm must be > 0");
        for (double v : c.mask.raster)
            if (v < 0.0 || v > 1.0)
                throw ConfigError("mask raster transmission values must lie in [0,1]");
    }

    if (j.contains("grid")) {
        const json& g = j["grid"];
        reject_unknown(g, {"dims", "source_n", "source_extent_mm", "object_n", "object_extent_mm",
                           "lens_n", "lens_extent_mm", "det_n", "det_extent_mm", "convention"},
                       "grid");
        c.has_grid = g.contains("source_n");
        c.object_extent_mm = num_or(g, "object_extent_mm", c.object_extent_mm);
        if (c.has_grid) {
            c.grid.dims = static_cast<int>(num_or(g, "dims", 1));
            c.grid.source = {num_or(g, "source_extent_mm", 6.0),
                             static_cast<int>(num_or(g, "source_n", 256))};
            c.grid.object = {c.object_extent_mm, static_cast<int>(num_or(g, "object_n", 256))};
            c.grid.lens = {num_or(g, "lens_extent_mm", 0),
                           static_cast<int>(num_or(g, "lens_n", 1024))};
            const int det_n = static_cast<int>(num_or(g, "det_n", c.acq.height));
            const double det_ext = num_or(g, "det_extent_mm",
                                          det_n * c.optics.pixel_pitch_um * 1e-3);
            c.grid.det_a = {det_ext, det_n};
            c.grid.det_b = {det_ext, det_n};
        }
        if (g.contains("convention")) {
            const std::string conv = g.at("convention").get<std::string>();
            if (conv == "bare_zsigma")
                c.grid.convention = SourcePhaseConvention::BareZSigma;
            else if (conv == "source_to_object")
                c.grid.convention = SourcePhaseConvention::SourceToObject;
            else
                throw ConfigError("grid.convention must be 'bare_zsigma' or 'source_to_object'");
        }
    }

    auto diags = validate_config(c.optics, c.source, c.acq);
    if (!diags.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& d : diags) msg += "\n  [" + d.code + "] " + d.message;
        throw ConfigError(msg);
    }

    const std::string canon = j.dump();
    c.config_hash = fnv1a64(canon.data(), canon.size());
    return c;
}

GridSpec config_grid(const PipelineConfig& cfg) {
    if (cfg.has_grid) return cfg.grid;
    GridSpec g = auto_grid(cfg.optics, cfg.source, cfg.mask.z, cfg.object_extent_mm,
                           cfg.acq.height, cfg.acq.height * cfg.optics.pixel_pitch_um * 1e-3,
                           cfg.grid.convention);
    return g;
}

void write_manifest(const RunManifest& m, const std::string& path) {
    json j;
    j["tool_version"] = m.tool_version;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    json t = json::object();
    for (const auto& [k, v] : m.timings_s) t[k] = v;
    j["timings_s"] = t;
    json outs = json::array();
    for (const auto& [p, h] : m.outputs) outs.push_back({{"path", p}, {"fnv1a64", h}});
    j["outputs"] = outs;
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    f << j.dump(2) << "\n";
}

} // namespace cpi
