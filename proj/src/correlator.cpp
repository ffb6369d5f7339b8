#include "cpi/correlator.hpp"

#include <bit>
#include <cmath>

namespace cpi {

namespace {

void check_dims(const FrameStack& stack, const CorrGeometry& geom) {
    if (stack.width != geom.width || stack.height != geom.height)
        throw NumericError("correlator: frame dimension mismatch");
}

// popcount of row bits in [x0, x1), MSB-first packing
inline int popcount_range(const std::uint8_t* row, int x0, int x1) {
    if (x1 <= x0) return 0;
    const int b0 = x0 >> 3, b1 = (x1 - 1) >> 3;
    int c = 0;
    for (int bi = b0; bi <= b1; ++bi) {
        std::uint8_t b = row[bi];
        if (bi == b0) b &= static_cast<std::uint8_t>(0xFFu >> (x0 & 7));
        if (bi == b1) b &= static_cast<std::uint8_t>(0xFFu << (7 - ((x1 - 1) & 7)));
        c += std::popcount(b);
    }
    return c;
}

} // namespace

void CorrGeometry::validate(std::uint64_t max_frames) {
    if (width <= 0 || height <= 0) throw ConfigError("correlator geometry: bad frame dims");
    for (Roi* r : {&roi_a, &roi_b}) {
        if (r->w == 0 || r->h == 0) *r = {0, 0, width, height};
        if (r->x < 0 || r->y < 0 || r->x + r->w > width || r->y + r->h > height)
            throw ConfigError("correlator geometry: ROI out of bounds");
    }
    if (binning < 1) throw ConfigError("correlator geometry: binning must be >= 1");
    if (mode == CorrMode::Full4D) {
        if (roi_a.w % binning || roi_a.h % binning || roi_b.w % binning || roi_b.h % binning)
            throw ConfigError("correlator geometry: binning must divide ROI dimensions");
    }
    // exactness bound for the accumulation (also covers the double GEMM path)
    const double bound = static_cast<double>(max_frames) *
                         static_cast<double>(cell_bound(roi_a)) *
                         static_cast<double>(cell_bound(roi_b));
    if (bound >= 9007199254740992.0) // 2^53
        throw ConfigError("correlator geometry: accumulator could overflow exact range");
}

std::vector<std::int32_t> frame_counts(const FrameStack& stack, Arm arm, std::uint64_t f,
                                       const CorrGeometry& geom) {
    const Roi& roi = arm == Arm::A ? geom.roi_a : geom.roi_b;
    const std::size_t bpr = stack.bytes_per_row();
    const std::uint8_t* fr = stack.frame(arm, f);

    if (geom.mode == CorrMode::Reduced1D) {
        std::vector<std::int32_t> counts(static_cast<std::size_t>(roi.h), 0);
        for (int ry = 0; ry < roi.h; ++ry) {
            const std::uint8_t* row = fr + static_cast<std::size_t>(roi.y + ry) * bpr;
            counts[static_cast<std::size_t>(ry)] = popcount_range(row, roi.x, roi.x + roi.w);
        }
        return counts;
    }

    const int nbx = geom.bins_x(roi);
    const int nby = geom.bins_y(roi);
    std::vector<std::int32_t> counts(static_cast<std::size_t>(nbx) * nby, 0);
    const bool nibble4 = geom.binning == 4 && (roi.x & 7) == 0 && (roi.w & 7) == 0;
    for (int ry = 0; ry < roi.h; ++ry) {
        const std::uint8_t* row = fr + static_cast<std::size_t>(roi.y + ry) * bpr;
        std::int32_t* crow = counts.data() + static_cast<std::size_t>(ry / geom.binning) * nbx;
        if (nibble4) {
            const int byte0 = roi.x >> 3;
            for (int bi = 0; bi < roi.w / 8; ++bi) {
                const std::uint8_t b = row[byte0 + bi];
                crow[2 * bi] += std::popcount(static_cast<std::uint8_t>(b >> 4));
                crow[2 * bi + 1] += std::popcount(static_cast<std::uint8_t>(b & 0x0F));
            }
        } else if (geom.binning == 1) {
            for (int rx = 0; rx < roi.w; ++rx) {
                const int x = roi.x + rx;
                if ((row[x >> 3] >> (7 - (x & 7))) & 1) ++crow[rx];
            }
        } else {
            for (int bx = 0; bx < nbx; ++bx)
                crow[bx] += popcount_range(row, roi.x + bx * geom.binning,
                                           roi.x + (bx + 1) * geom.binning);
        }
    }
    return counts;
}

void accumulate(CorrelationAccumulator& acc, const FrameStack& stack, std::uint64_t f) {
    check_dims(stack, acc.geom);
    const CorrGeometry& g = acc.geom;

    // counts via direct per-pixel bit access (reference path)
    auto naive_counts = [&](Arm arm) {
        const Roi& roi = arm == Arm::A ? g.roi_a : g.roi_b;
        std::vector<std::int64_t> counts(g.cells(roi), 0);
        for (int ry = 0; ry < roi.h; ++ry)
            for (int rx = 0; rx < roi.w; ++rx)
                if (stack.get(arm, f, roi.x + rx, roi.y + ry)) {
                    std::size_t cell;
                    if (g.mode == CorrMode::Reduced1D)
                        cell = static_cast<std::size_t>(ry);
                    else
                        cell = static_cast<std::size_t>(ry / g.binning) * g.bins_x(roi) +
                               static_cast<std::size_t>(rx / g.binning);
                    ++counts[cell];
                }
        return counts;
    };

    const auto ca = naive_counts(Arm::A);
    const auto cb = naive_counts(Arm::B);
    const std::size_t nb = acc.geom.b_cells();
    for (std::size_t i = 0; i < ca.size(); ++i) {
        acc.sum_a[i] += ca[i];
        if (ca[i] == 0) continue;
        std::int64_t* row = acc.sum_ab.data() + i * nb;
        for (std::size_t j = 0; j < nb; ++j) row[j] += ca[i] * cb[j];
    }
    for (std::size_t j = 0; j < nb; ++j) acc.sum_b[j] += cb[j];
    ++acc.n_t;
}

void merge(CorrelationAccumulator& into, const CorrelationAccumulator& other) {
    if (into.sum_ab.size() != other.sum_ab.size())
        throw NumericError("merge: accumulator geometry mismatch");
    for (std::size_t i = 0; i < into.sum_ab.size(); ++i) into.sum_ab[i] += other.sum_ab[i];
    for (std::size_t i = 0; i < into.sum_a.size(); ++i) into.sum_a[i] += other.sum_a[i];
    for (std::size_t i = 0; i < into.sum_b.size(); ++i) into.sum_b[i] += other.sum_b[i];
    into.n_t += other.n_t;
}

NdArray finalize(const CorrelationAccumulator& acc, double pixel_pitch_mm) {
    if (acc.n_t < 2) throw NumericError("finalize: insufficient statistics (n_t < 2)");
    const CorrGeometry& g = acc.geom;
    const double n = static_cast<double>(acc.n_t);

    auto cell_axis = [&](const char* name, const Roi& roi, bool x_axis) {
        // physical coordinate of cell centers, frame-centered
        const double center = 0.5 * static_cast<double>((x_axis ? g.width : g.height) - 1);
        double first, pitch;
        if (g.mode == CorrMode::Reduced1D) {
            first = (static_cast<double>(roi.y) - center) * pixel_pitch_mm;
            pitch = pixel_pitch_mm;
        } else {
            const int off = x_axis ? roi.x : roi.y;
            first = (static_cast<double>(off) + 0.5 * (g.binning - 1) - center) * pixel_pitch_mm;
            pitch = pixel_pitch_mm * g.binning;
        }
        return Axis{name, first, pitch};
    };

    NdArray out;
    if (g.mode == CorrMode::Reduced1D) {
        out = NdArray({g.a_cells(), g.b_cells()},
                      {cell_axis("rho_a", g.roi_a, false), cell_axis("rho_b", g.roi_b, false)});
    } else {
        out = NdArray({static_cast<std::size_t>(g.bins_y(g.roi_a)),
                       static_cast<std::size_t>(g.bins_x(g.roi_a)),
                       static_cast<std::size_t>(g.bins_y(g.roi_b)),
                       static_cast<std::size_t>(g.bins_x(g.roi_b))},
                      {cell_axis("rho_a_y", g.roi_a, false), cell_axis("rho_a_x", g.roi_a, true),
                       cell_axis("rho_b_y", g.roi_b, false), cell_axis("rho_b_x", g.roi_b, true)});
    }

    const std::size_t nb = g.b_cells();
    for (std::size_t i = 0; i < g.a_cells(); ++i) {
        const double ma = static_cast<double>(acc.sum_a[i]) / n;
        for (std::size_t j = 0; j < nb; ++j)
            out[i * nb + j] = static_cast<double>(acc.sum_ab[i * nb + j]) / n -
                              ma * static_cast<double>(acc.sum_b[j]) / n;
    }
    return out;
}

namespace {

// bit mode: time-series transpose + word-wise AND/popcount
void correlate_bits(const FrameStack& stack, CorrelationAccumulator& acc) {
    const CorrGeometry& g = acc.geom;
    const std::size_t pa = g.a_cells(), pb = g.b_cells();
    const std::size_t words = (stack.n_frames + 63) / 64;
    std::vector<std::uint64_t> ser_a(pa * words, 0), ser_b(pb * words, 0);

    auto fill = [&](Arm arm, std::vector<std::uint64_t>& ser) {
        const Roi& roi = arm == Arm::A ? g.roi_a : g.roi_b;
        for (std::uint64_t f = 0; f < stack.n_frames; ++f) {
            const std::uint64_t w = f >> 6;
            const std::uint64_t bit = 1ULL << (f & 63);
            for (int ry = 0; ry < roi.h; ++ry)
                for (int rx = 0; rx < roi.w; ++rx)
                    if (stack.get(arm, f, roi.x + rx, roi.y + ry))
                        ser[(static_cast<std::size_t>(ry) * roi.w + rx) * words + w] |= bit;
        }
    };
    fill(Arm::A, ser_a);
    fill(Arm::B, ser_b);

#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < pa; ++i) {
        const std::uint64_t* sa = ser_a.data() + i * words;
        std::int64_t ca = 0;
        for (std::size_t w = 0; w < words; ++w) ca += std::popcount(sa[w]);
        acc.sum_a[i] = ca;
        std::int64_t* row = acc.sum_ab.data() + i * pb;
        for (std::size_t j = 0; j < pb; ++j) {
            const std::uint64_t* sb = ser_b.data() + j * words;
            std::int64_t c = 0;
            for (std::size_t w = 0; w < words; ++w) c += std::popcount(sa[w] & sb[w]);
            row[j] = c;
        }
    }
    for (std::size_t j = 0; j < pb; ++j) {
        const std::uint64_t* sb = ser_b.data() + j * words;
        std::int64_t cb = 0;
        for (std::size_t w = 0; w < words; ++w) cb += std::popcount(sb[w]);
        acc.sum_b[j] = cb;
    }
    acc.n_t = stack.n_frames;
}

// count mode: chunked exact-integer GEMM over per-frame counts
void correlate_counts(const FrameStack& stack, CorrelationAccumulator& acc) {
    const CorrGeometry& g = acc.geom;
    const auto pa = static_cast<Eigen::Index>(g.a_cells());
    const auto pb = static_cast<Eigen::Index>(g.b_cells());
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(pa, pb);

    const int chunk = 256;
    Eigen::MatrixXd ad(pa, chunk), bd(pb, chunk);
    for (std::uint64_t f0 = 0; f0 < stack.n_frames; f0 += chunk) {
        const int nf = static_cast<int>(std::min<std::uint64_t>(chunk, stack.n_frames - f0));
#pragma omp parallel for schedule(static)
        for (int f = 0; f < nf; ++f) {
            const auto ca = frame_counts(stack, Arm::A, f0 + f, g);
            const auto cb = frame_counts(stack, Arm::B, f0 + f, g);
            for (Eigen::Index i = 0; i < pa; ++i)
                ad(i, f) = static_cast<double>(ca[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < pb; ++j)
                bd(j, f) = static_cast<double>(cb[static_cast<std::size_t>(j)]);
        }
        c.noalias() += ad.leftCols(nf) * bd.leftCols(nf).transpose();
        for (int f = 0; f < nf; ++f) {
            for (Eigen::Index i = 0; i < pa; ++i)
                acc.sum_a[static_cast<std::size_t>(i)] += static_cast<std::int64_t>(ad(i, f));
            for (Eigen::Index j = 0; j < pb; ++j)
                acc.sum_b[static_cast<std::size_t>(j)] += static_cast<std::int64_t>(bd(j, f));
        }
    }
    for (Eigen::Index i = 0; i < pa; ++i)
        for (Eigen::Index j = 0; j < pb; ++j)
            acc.sum_ab[static_cast<std::size_t>(i) * static_cast<std::size_t>(pb) +
                       static_cast<std::size_t>(j)] = std::llround(c(i, j));
    acc.n_t = stack.n_frames;
}

} // namespace

CorrelationAccumulator correlate_fast(const FrameStack& stack, const CorrGeometry& geom) {
    CorrGeometry g = geom;
    g.validate(stack.n_frames);
    check_dims(stack, g);
    CorrelationAccumulator acc(g);
    if (g.mode == CorrMode::Full4D && g.binning == 1)
        correlate_bits(stack, acc);
    else
        correlate_counts(stack, acc);
    return acc;
}

CorrelationAccumulator correlate_naive(const FrameStack& stack, const CorrGeometry& geom) {
    CorrGeometry g = geom;
    g.validate(stack.n_frames);
    CorrelationAccumulator acc(g);
    for (std::uint64_t f = 0; f < stack.n_frames; ++f) accumulate(acc, stack, f);
    return acc;
}

Eigen::MatrixXd reduce_1d(const FrameStack& stack, Arm arm, Roi roi) {
    if (roi.w == 0 || roi.h == 0) roi = {0, 0, stack.width, stack.height};
    if (roi.x < 0 || roi.y < 0 || roi.x + roi.w > stack.width || roi.y + roi.h > stack.height)
        throw NumericError("reduce_1d: ROI out of bounds");
    Eigen::MatrixXd counts(roi.h, static_cast<Eigen::Index>(stack.n_frames));
    const std::size_t bpr = stack.bytes_per_row();
#pragma omp parallel for schedule(static)
    for (std::int64_t f = 0; f < static_cast<std::int64_t>(stack.n_frames); ++f) {
        const std::uint8_t* fr = stack.frame(arm, static_cast<std::uint64_t>(f));
        for (int ry = 0; ry < roi.h; ++ry) {
            const std::uint8_t* row = fr + static_cast<std::size_t>(roi.y + ry) * bpr;
            counts(ry, f) = popcount_range(row, roi.x, roi.x + roi.w);
        }
    }
    return counts;
}

} // namespace cpi
