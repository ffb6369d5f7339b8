#pragma once

#include "cpi/core.hpp"
#include "cpi/ndarray.hpp"
#include "cpi/spad_sim.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace cpi {

enum class CorrMode { Full4D, Reduced1D };

struct CorrGeometry {
    CorrMode mode = CorrMode::Full4D;
    int width = 0, height = 0; // expected frame dims per arm
    Roi roi_a, roi_b;          // w/h of 0 means full frame
    int binning = 1;           // Full4D only

    int bins_x(const Roi& r) const { return r.w / binning; }
    int bins_y(const Roi& r) const { return r.h / binning; }
    std::size_t cells(const Roi& r) const {
        if (mode == CorrMode::Reduced1D) return static_cast<std::size_t>(r.h);
        return static_cast<std::size_t>(bins_x(r)) * static_cast<std::size_t>(bins_y(r));
    }
    std::size_t a_cells() const { return cells(roi_a); }
    std::size_t b_cells() const { return cells(roi_b); }
    // max count a single cell can reach in one frame
    std::int64_t cell_bound(const Roi& r) const {
        if (mode == CorrMode::Reduced1D) return r.w;
        return static_cast<std::int64_t>(binning) * binning;
    }

    // fills default ROIs, validates divisibility and overflow bounds
    void validate(std::uint64_t max_frames);
};

// Streaming raw-moment accumulator: exact integers, mergeable.
struct CorrelationAccumulator {
    CorrGeometry geom;
    std::uint64_t n_t = 0;
    std::vector<std::int64_t> sum_ab; // a_cells x b_cells, row-major
    std::vector<std::int64_t> sum_a, sum_b;

    explicit CorrelationAccumulator(const CorrGeometry& g)
        : geom(g), sum_ab(g.a_cells() * g.b_cells(), 0), sum_a(g.a_cells(), 0),
          sum_b(g.b_cells(), 0) {}
};

// Per-frame binned counts for one arm (Full4D) or per-row counts (Reduced1D).
std::vector<std::int32_t> frame_counts(const FrameStack& stack, Arm arm, std::uint64_t f,
                                       const CorrGeometry& geom);

// Naive reference: one frame, direct loops. This is the oracle the fast
// path is checked against; keep it dumb.
void accumulate(CorrelationAccumulator& acc, const FrameStack& stack, std::uint64_t f);

void merge(CorrelationAccumulator& into, const CorrelationAccumulator& other);

// Gamma[i,j] = sum_ab/n - (sum_a/n)(sum_b/n). Repeatable; throws on n_t < 2.
// pixel_pitch_mm scales the physical detector axes; detector coordinates
// are centered on the frame.
NdArray finalize(const CorrelationAccumulator& acc, double pixel_pitch_mm);

// Fast path: OpenMP over frame chunks with private accumulators merged in
// frame order; bit-identical to the naive loop.
CorrelationAccumulator correlate_fast(const FrameStack& stack, const CorrGeometry& geom);

// Serial naive loop over all frames (reference implementation).
CorrelationAccumulator correlate_naive(const FrameStack& stack, const CorrGeometry& geom);

// Per-frame, per-row counts after integration along x within the ROI.
// Rows of the result are detector rows, columns are frames.
Eigen::MatrixXd reduce_1d(const FrameStack& stack, Arm arm, Roi roi);

} // namespace cpi
