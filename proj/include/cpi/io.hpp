#pragma once

#include "cpi/core.hpp"
#include "cpi/ndarray.hpp"
#include "cpi/spad_sim.hpp"
#include "cpi/wave_optics.hpp"

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

namespace cpi {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolVersion = "cpi 1.0.0";

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::string& path);

// ---- CPIF binary frame container -------------------------------------
// header (little endian): magic "CPIF", version u16, width u16, height u16,
// arms u8, frame count u64, flags u16; payload: frames in index order, per
// frame arm-A bitplane then arm-B, row-major, MSB-first, rows byte-padded;
// footer: FNV-1a 64 checksum of the payload.

void write_cpif(const FrameStack& stack, const std::string& path);
FrameStack read_cpif(const std::string& path);

// Streaming reader: frames on demand, no full materialization. Truncation
// is detected on open; the payload checksum can be verified separately.
class CpifReader {
public:
    explicit CpifReader(const std::string& path);
    ~CpifReader();
    CpifReader(const CpifReader&) = delete;
    CpifReader& operator=(const CpifReader&) = delete;

    int width() const { return width_; }
    int height() const { return height_; }
    std::uint64_t n_frames() const { return n_frames_; }

    // frames [first, first+count) as a FrameStack segment
    FrameStack read_frames(std::uint64_t first, std::uint64_t count);
    void verify_checksum();

private:
    std::FILE* f_ = nullptr;
    int width_ = 0, height_ = 0;
    std::uint64_t n_frames_ = 0;
    std::uint64_t payload_offset_ = 0;
    std::size_t frame_bytes_ = 0; // both arms
};

// ---- self-describing binary array container ---------------------------
// magic "CPBA", version u16, rank u16, dtype u8 (0 = f64), dims u64[rank],
// per axis: name (u16 length + bytes), origin f64, pitch f64; payload f64
// little endian; footer FNV-1a 64 checksum of the payload.

void write_ndarray(const NdArray& a, const std::string& path);
NdArray read_ndarray(const std::string& path);

// CSV export: coordinate columns followed by the value (rank 1 or 2).
void write_csv(const NdArray& a, const std::string& path);

// 8-bit PGM render of a rank-2 array (or a rank-1 array as a single row),
// min-max normalized.
void write_pgm(const NdArray& a, const std::string& path);

// ---- configuration ----------------------------------------------------

struct PipelineConfig {
    OpticalConfig optics;
    SourceProfile source;
    AcquisitionConfig acq;
    SpadConfig spad;
    ObjectMask mask;
    bool has_grid = false;
    GridSpec grid; // derived via auto_grid when not given explicitly
    double object_extent_mm = 1.6;
    std::uint64_t config_hash = 0;
};

// Strict parse: unknown keys are errors. Derived fields are populated and
// all invariants validated; violations raise ConfigError listing every one.
PipelineConfig load_config(const std::string& path);

GridSpec config_grid(const PipelineConfig& cfg);

// ---- run manifest -----------------------------------------------------

struct RunManifest {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    std::map<std::string, double> timings_s;
    std::vector<std::pair<std::string, std::uint64_t>> outputs; // path, content hash
};

void write_manifest(const RunManifest& m, const std::string& path);

} // namespace cpi
