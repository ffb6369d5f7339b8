// End-to-end acceptance checks. Each criterion prints exactly one
// PASS/FAIL line; the process exits nonzero if any criterion fails.
// Tolerances are pinned here, next to each check.

#include "cpi/analysis.hpp"
#include "cpi/correlator.hpp"
#include "cpi/core.hpp"
#include "cpi/io.hpp"
#include "cpi/ray_model.hpp"
#include "cpi/refocus.hpp"
#include "cpi/spad_sim.hpp"
#include "cpi/wave_optics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace cpi;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%2d/10] %s  %s  (%s)\n", index, pass ? "PASS" : "FAIL", name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

void run(int index, const std::string& name, const std::function<std::pair<bool, std::string>()>& fn) {
    try {
        auto [ok, detail] = fn();
        report(index, name, ok, detail);
    } catch (const std::exception& e) {
        report(index, name, false, std::string("exception: ") + e.what());
    }
}

double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

FrameStack random_stack(int w, int h, std::uint64_t n, std::mt19937_64& rng, double p) {
    FrameStack st;
    st.width = w;
    st.height = h;
    st.n_frames = n;
    st.allocate();
    std::bernoulli_distribution fire(p);
    for (std::uint64_t f = 0; f < n; ++f)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (fire(rng)) st.set(Arm::A, f, x, y, true);
                if (fire(rng)) st.set(Arm::B, f, x, y, true);
            }
    return st;
}

bool acc_equal(const CorrelationAccumulator& a, const CorrelationAccumulator& b) {
    return a.n_t == b.n_t && a.sum_ab == b.sum_ab && a.sum_a == b.sum_a && a.sum_b == b.sum_b;
}

struct Scene {
    Preset p;
    ObjectMask mask;
    GridSpec grid;
    TransferKernel ka, kb;
};

Scene build_scene(double z, double slit_distance_um, double slit_width_um, int det_n,
                  double object_extent = 1.6) {
    Scene s;
    s.p = paper_like_preset();
    s.mask.kind = MaskKind::SlitGroup;
    s.mask.z = z;
    s.mask.slit_count = 2;
    s.mask.slit_distance_um = slit_distance_um;
    s.mask.slit_width_um = slit_width_um;
    s.grid = auto_grid(s.p.optics, s.p.source, z, object_extent, det_n,
                       det_n * s.p.optics.pixel_pitch_mm());
    PupilFunction pupil{s.p.optics.lens_radius()};
    auto [ka, kb] = build_kernels(s.mask, s.p.optics, pupil, s.p.source, s.grid);
    s.ka = ka;
    s.kb = kb;
    return s;
}

// ---------------------------------------------------------------------------

std::pair<bool, std::string> criterion_1_exactness() {
    std::mt19937_64 rng(101);
    int checked = 0;
    for (int t = 0; t < 100; ++t) {
        const int w = 4 + static_cast<int>(rng() % 29);
        const int h = 4 + static_cast<int>(rng() % 29);
        const std::uint64_t n = 2 + rng() % 511;
        const double dens = 0.02 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
        FrameStack st = random_stack(w, h, n, rng, dens);

        CorrGeometry geom;
        geom.width = w;
        geom.height = h;
        geom.mode = t % 2 ? CorrMode::Reduced1D : CorrMode::Full4D;
        if (geom.mode == CorrMode::Full4D) {
            const int choices[3] = {1, 2, 4};
            geom.binning = choices[rng() % 3];
            int bw = (w / geom.binning) * geom.binning;
            int bh = (h / geom.binning) * geom.binning;
            if (geom.binning == 1) { // keep the naive oracle cheap
                bw = std::min(bw, 12);
                bh = std::min(bh, 12);
            }
            if (bw < geom.binning || bh < geom.binning) geom.binning = 1;
            geom.roi_a = {0, 0, std::max(bw, 1), std::max(bh, 1)};
            geom.roi_b = {w - geom.roi_a.w, h - geom.roi_a.h, geom.roi_a.w, geom.roi_a.h};
        } else if (t % 3 == 0) {
            geom.roi_a = {1, 1, w - 2, h - 2};
        }
        if (!acc_equal(correlate_fast(st, geom), correlate_naive(st, geom)))
            return {false, fmt("mismatch on stack %d (%dx%d, %llu frames)", t, w, h,
                               static_cast<unsigned long long>(n))};
        ++checked;
    }
    return {true, fmt("fast path exactly matches the naive loop on %d random stacks", checked)};
}

std::pair<bool, std::string> criterion_2_statistics() {
    Scene sc = build_scene(319.0, 250.0, 125.0, 8, 0.8);
    FieldSampler sampler(sc.ka, sc.kb, sc.p.source, 2024);

    // g2(0) - 1 at a single detector point over 1e5 realizations
    const int n = 100000;
    const int chunk = 1000;
    double s1 = 0.0, s2 = 0.0;
    Eigen::MatrixXcd ea, eb;
    for (int f0 = 0; f0 < n; f0 += chunk) {
        sampler.sample(static_cast<std::uint64_t>(f0), chunk, ea, eb);
        for (int c = 0; c < chunk; ++c) {
            const double i0 = std::norm(ea(4, c));
            s1 += i0;
            s2 += i0 * i0;
        }
    }
    const double g2m1 = s2 / n / ((s1 / n) * (s1 / n)) - 1.0;
    if (std::abs(g2m1 - 1.0) > 0.05)
        return {false, fmt("g2(0)-1 = %.4f, outside 1.00 +- 0.05", g2m1)};

    // speckle contrast of the m-cell gate integral: std/mean = 1/sqrt(m)
    std::string detail = fmt("g2(0)-1 = %.3f", g2m1);
    for (int m : {1, 4, 16}) {
        const int frames = 10000;
        IntensityFrames fr = integrate_gate(sampler, 0, frames, m);
        double mu = 0.0, var = 0.0;
        for (int f = 0; f < frames; ++f) mu += fr.arm_a(4, f);
        mu /= frames;
        for (int f = 0; f < frames; ++f) {
            const double d = fr.arm_a(4, f) - mu;
            var += d * d;
        }
        var /= frames;
        const double contrast = std::sqrt(var) / mu;
        const double expect = 1.0 / std::sqrt(static_cast<double>(m));
        if (std::abs(contrast - expect) > 0.10 * expect)
            return {false, fmt("contrast at m=%d is %.4f, expected %.4f +- 10%%", m, contrast,
                               expect)};
        detail += fmt(", contrast(m=%d) = %.3f", m, contrast);
    }
    return {true, detail};
}

std::pair<bool, std::string> criterion_3_oracle() {
    Scene sc = build_scene(319.0, 250.0, 125.0, 128);
    NdArray ana = gamma_analytic(sc.ka, sc.kb, sc.p.source);
    const Eigen::Index nd = sc.ka.k.cols();

    FieldSampler sampler(sc.ka, sc.kb, sc.p.source, 7);
    const int n = 100000, chunk = 500;
    Eigen::MatrixXd sab = Eigen::MatrixXd::Zero(nd, nd);
    Eigen::VectorXd sa = Eigen::VectorXd::Zero(nd), sb = Eigen::VectorXd::Zero(nd);
    Eigen::MatrixXcd ea, eb;
    for (int f0 = 0; f0 < n; f0 += chunk) {
        sampler.sample(static_cast<std::uint64_t>(f0), chunk, ea, eb);
        const Eigen::MatrixXd ia = ea.cwiseAbs2();
        const Eigen::MatrixXd ib = eb.cwiseAbs2();
        sab.noalias() += ia * ib.transpose();
        sa += ia.rowwise().sum();
        sb += ib.rowwise().sum();
    }
    sab /= n;
    sa /= n;
    sb /= n;

    double max_ana = 0.0;
    for (std::size_t i = 0; i < ana.size(); ++i) max_ana = std::max(max_ana, ana[i]);
    double num = 0.0, den = 0.0;
    std::size_t support = 0;
    for (Eigen::Index i = 0; i < nd; ++i)
        for (Eigen::Index j = 0; j < nd; ++j) {
            const double a = ana.at2(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            if (a < 0.01 * max_ana) continue;
            const double e = sab(i, j) - sa(i) * sb(j);
            num += (e - a) * (e - a);
            den += a * a;
            ++support;
        }
    const double rms = std::sqrt(num / den);
    return {rms <= 0.05,
            fmt("Monte-Carlo vs analytic correlation: %.2f%% RMS over %zu support points "
                "(bound 5%%)",
                100.0 * rms, support)};
}

std::pair<bool, std::string> criterion_4_refocusing() {
    Scene sc = build_scene(319.0, 250.0, 125.0, 128);
    AcquisitionConfig acq = sc.p.acq; // 32 x 128, 1e4 frames, seed 1
    FrameStack st = simulate_stack(sc.ka, sc.kb, sc.p.source, SpadConfig{}, acq);

    // direct (conventional) images: time-averaged row sums
    auto direct_vis = [&](Arm arm) {
        Eigen::MatrixXd counts = reduce_1d(st, arm, Roi{});
        std::vector<double> mean(static_cast<std::size_t>(st.height));
        for (int r = 0; r < st.height; ++r) mean[static_cast<std::size_t>(r)] = counts.row(r).mean();
        return visibility(mean);
    };
    const double va = direct_vis(Arm::A);
    const double vb = direct_vis(Arm::B);

    CorrGeometry geom;
    geom.mode = CorrMode::Reduced1D;
    geom.width = st.width;
    geom.height = st.height;
    NdArray gamma = finalize(correlate_fast(st, geom), sc.p.optics.pixel_pitch_mm());
    RefocusOptions opts = default_refocus_options(sc.p.optics, sc.p.source);

    std::vector<double> zs;
    for (double z = 311.0; z <= 327.01; z += 1.0) zs.push_back(z);
    auto results = refocus_stack(gamma, zs, sc.p.optics, opts);
    double best_vis = -1.0, best_z = 0.0, vis_at_true = 0.0;
    for (const auto& r : results) {
        if (!r.image) return {false, "refocus failed at z=" + std::to_string(r.z) + ": " + r.error};
        const double v = visibility(r.image->values);
        if (v > best_vis) {
            best_vis = v;
            best_z = r.z;
        }
        if (r.z == 319.0) vis_at_true = v;
    }

    const bool ok = va < 0.10 && vb < 0.10 && vis_at_true > 0.60 && std::abs(best_z - 319.0) <= 2.0;
    return {ok, fmt("direct visibility %.3f/%.3f (< 0.10), refocused %.3f (> 0.60), "
                    "peak at z = %.0f mm (true 319 +- 2)",
                    va, vb, vis_at_true, best_z)};
}

std::pair<bool, std::string> criterion_5_alpha_algebra() {
    Preset p = paper_like_preset();
    const double m2dz = p.optics.magnification * p.optics.magnification * p.optics.delta_z;

    // focused-plane identity: rho_r = -rho_a / M at z = z_a
    RefocusMatrix at_a = alpha_matrix(p.optics.z_a, p.optics.z_sigma, p.optics);
    if (std::abs(at_a.m00 + 1.0 / p.optics.magnification) > 1e-12 || std::abs(at_a.m01) > 1e-12)
        return {false, "focused-plane identity violated at z_a"};

    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> dz(150.0, 590.0);
    std::uniform_real_distribution<double> dr(-3.0, 3.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double z = dz(rng);
        RefocusMatrix a = alpha_matrix(z, p.optics.z_sigma, p.optics);
        const double det_err = std::abs(a.det() + (p.optics.z_sigma - z) / m2dz);
        const double ra = dr(rng), rb = dr(rng);
        const auto [r, s] = a.apply(ra, rb);
        const auto [ba, bb] = a.inverse(r, s);
        worst = std::max({worst, det_err, std::abs(ba - ra), std::abs(bb - rb)});
    }
    return {worst < 1e-10,
            fmt("focused identity, det formula and inverse on 1000 cases, worst error %.2e "
                "(bound 1e-10)",
                worst)};
}

std::pair<bool, std::string> criterion_6_apertures() {
    Preset p = paper_like_preset();
    ApertureRadii r = compute_apertures(p.optics, p.source);
    const bool ok = std::abs(r.ca_lens_a - 0.63) <= 0.01 && std::abs(r.ca_source - 0.07) <= 0.005 &&
                    r.limiting == LimitingAperture::Source;
    return {ok, fmt("ca_lens_a = %.4f mm (0.63 +- 0.01), ca_source = %.4f mm (0.07 +- 0.005), "
                    "limiting = %s",
                    r.ca_lens_a, r.ca_source, to_string(r.limiting))};
}

std::pair<bool, std::string> criterion_7_snr() {
    // published points
    SnrModel pm = fit_snr({{9.8e3, 3.9}, {9.8e4, 5.1}, {4.0e5, 5.3}});
    if (std::abs(pm.a - 3.60e-2) > 0.15 * 3.60e-2 || std::abs(pm.b - 3.18e2) > 0.15 * 3.18e2)
        return {false, fmt("published-point fit a=%.3e b=%.3e outside +-15%%", pm.a, pm.b)};
    for (auto [n, snr] : {std::pair{9.8e3, 3.9}, {9.8e4, 5.1}, {4.0e5, 5.3}})
        if (std::abs(pm.predict(n) - snr) > 0.05 * snr)
            return {false, fmt("model prediction at N=%.0f off by > 5%%", n)};

    // fully simulated SNR(N) curve. A single acquisition carries only a
    // handful of independent speckle cells across the slit region, so one
    // spatial SNR estimate is extremely noisy; each N therefore gets the
    // median estimate over many independent frame blocks.
    Scene sc = build_scene(319.0, 250.0, 125.0, 64, 0.8);
    AcquisitionConfig acq = sc.p.acq;
    acq.height = 64;
    RefocusOptions opts = default_refocus_options(sc.p.optics, sc.p.source);

    // flatten by the noiseless refocused reference so the transmissive
    // region really has identical statistics, as the estimator assumes
    NdArray ana = gamma_analytic(sc.ka, sc.kb, sc.p.source);
    auto ref = refocus_stack(ana, {319.0}, sc.p.optics, opts);
    if (!ref[0].image) return {false, "analytic reference refocus failed"};
    const NdArray& rimg = ref[0].image->values;
    double rmax = 0.0;
    for (std::size_t i = 0; i < rimg.size(); ++i) rmax = std::max(rmax, rimg[i]);
    std::vector<std::size_t> region;
    for (std::size_t i = 0; i < rimg.size(); ++i)
        if (rimg[i] >= 0.5 * rmax) region.push_back(i);
    if (region.size() < 4) return {false, "flat reference region too small"};

    CorrGeometry geom;
    geom.mode = CorrMode::Reduced1D;
    geom.width = acq.width;
    geom.height = acq.height;

    const std::uint64_t batch = 100000;
    const int n_batches = 32;
    const std::vector<std::uint64_t> levels{1000, 2500, 10000, 20000, 50000, 100000};
    const std::size_t cap = 64; // blocks per level
    std::vector<std::vector<double>> snrs(levels.size());

    const std::size_t fb = (static_cast<std::size_t>(acq.width) + 7) / 8 * acq.height;
    for (int b = 0; b < n_batches; ++b) {
        bool needed = false;
        for (std::size_t l = 0; l < levels.size(); ++l)
            if (snrs[l].size() < cap && snrs[l].size() < batch / levels[l] * (b + 1))
                needed = true;
        if (!needed) break;
        acq.n_frames = batch;
        acq.seed = 7000 + static_cast<std::uint64_t>(b);
        FrameStack st = simulate_stack(sc.ka, sc.kb, sc.p.source, SpadConfig{}, acq);

        for (std::size_t l = 0; l < levels.size(); ++l) {
            const std::uint64_t n = levels[l];
            for (std::uint64_t off = 0; off + n <= batch && snrs[l].size() < cap; off += n) {
                FrameStack seg;
                seg.width = st.width;
                seg.height = st.height;
                seg.n_frames = n;
                seg.allocate();
                std::memcpy(seg.arm_a.data(), st.arm_a.data() + off * fb, n * fb);
                std::memcpy(seg.arm_b.data(), st.arm_b.data() + off * fb, n * fb);
                NdArray gamma = finalize(correlate_fast(seg, geom), sc.p.optics.pixel_pitch_mm());
                auto res = refocus_stack(gamma, {319.0}, sc.p.optics, opts);
                if (!res[0].image) return {false, "refocus failed in the SNR sweep"};
                NdArray flat = res[0].image->values;
                for (std::size_t i : region) flat[i] /= rimg[i];
                SnrEstimate e = estimate_snr(flat, region);
                if (!e.unbounded) snrs[l].push_back(e.value);
            }
        }
    }

    std::vector<std::pair<double, double>> points;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (snrs[l].size() < 4) return {false, "too few SNR blocks at one level"};
        std::vector<double> v = snrs[l];
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        const double med = v[v.size() / 2];
        points.emplace_back(static_cast<double>(levels[l]), med);
    }

    SnrModel sm = fit_snr(points);
    double ss_res = 0.0, ss_tot = 0.0, mean = 0.0;
    for (const auto& [n, snr] : points) mean += snr;
    mean /= static_cast<double>(points.size());
    for (const auto& [n, snr] : points) {
        ss_res += (snr - sm.predict(n)) * (snr - sm.predict(n));
        ss_tot += (snr - mean) * (snr - mean);
    }
    const double r2 = 1.0 - ss_res / ss_tot;
    const bool ok = r2 > 0.95;
    return {ok, fmt("published fit a=%.3e b=%.1f within +-15%%; simulated curve "
                    "SNR %.2f..%.2f over N=1e3..1e5, saturating fit R^2 = %.3f (> 0.95)",
                    pm.a, pm.b, points.front().second, points.back().second, r2)};
}

std::pair<bool, std::string> criterion_8_dof() {
    Preset p = paper_like_preset();
    PupilFunction pupil{p.optics.lens_radius()};
    GridSpec grid = auto_grid(p.optics, p.source, 319.0, 1.6, 128,
                              128 * p.optics.pixel_pitch_mm());
    SweepSettings sw;
    for (double z = 265.0; z <= 375.01; z += 10.0) sw.z_values.push_back(z);
    ResolutionCurve c = resolution_sweep(p.optics, pupil, p.source, grid, sw);

    // one bisection step of slack when comparing the curves
    const double step =
        (sw.feature_max_um - sw.feature_min_um) / std::pow(2.0, sw.bisect_iters);
    double worst_excess = 0.0;
    for (std::size_t i = 0; i < c.z.size(); ++i) {
        if (!std::isfinite(c.cpi_um[i]))
            return {false, fmt("CPI curve unresolved at z = %.0f", c.z[i])};
        for (double conv : {c.conv_a_um[i], c.conv_b_um[i]})
            if (std::isfinite(conv))
                worst_excess = std::max(worst_excess, c.cpi_um[i] - conv);
    }
    if (worst_excess > 1.5 * step)
        return {false, fmt("CPI curve exceeds a conventional curve by %.0f um", worst_excess)};

    // axial band where the refocused image resolves a 250 um-class feature,
    // read from the sweep curve with linear interpolation
    auto band_width = [&](const std::vector<double>& curve) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < c.z.size(); ++i) {
            if (!std::isfinite(curve[i]) || curve[i] > 250.0) continue;
            double zlo = c.z[i], zhi = c.z[i];
            if (i > 0 && std::isfinite(curve[i - 1]) && curve[i - 1] > 250.0)
                zlo = c.z[i] - 10.0 * (curve[i - 1] - 250.0) / (curve[i - 1] - curve[i]);
            if (i + 1 < c.z.size() && std::isfinite(curve[i + 1]) && curve[i + 1] > 250.0)
                zhi = c.z[i] + 10.0 * (curve[i + 1] - 250.0) / (curve[i + 1] - curve[i]);
            lo = std::min(lo, zlo);
            hi = std::max(hi, zhi);
        }
        return hi > lo ? hi - lo : 0.0;
    };
    const double cpi_band = band_width(c.cpi_um);
    const double conv_sweep_band = std::max(band_width(c.conv_a_um), band_width(c.conv_b_um));

    // conventional depth of field for one arm from the geometric
    // circle-of-confusion model
    auto [clo, chi] = coc_band(p.optics, 250.0, p.optics.z_a);
    const double coc_width = chi - clo;

    const bool ok = cpi_band >= 5.0 * coc_width;
    return {ok, fmt("CPI at or below both conventional sweep curves (worst excess %.0f um); "
                    "250 um band: CPI %.0f mm vs conventional CoC %.0f mm (ratio %.1fx, "
                    "bound 5x; sweep-based conventional band %.0f mm)",
                    worst_excess, cpi_band, coc_width, cpi_band / coc_width, conv_sweep_band)};
}

std::pair<bool, std::string> criterion_9_performance() {
    // two 256x256 detector halves, 1e4 frames, binned to 64x64 per arm
    FrameStack st;
    st.width = 256;
    st.height = 256;
    st.n_frames = 10000;
    st.allocate();
    std::mt19937_64 rng(9);
    auto fill = [&](std::vector<std::uint8_t>& v) {
        for (auto& b : v) {
            const std::uint64_t r = rng();
            b = static_cast<std::uint8_t>(r & (r >> 8) & (r >> 16) & (r >> 24)); // ~6% fire rate
        }
    };
    fill(st.arm_a);
    fill(st.arm_b);

    CorrGeometry geom;
    geom.width = 256;
    geom.height = 256;
    geom.binning = 4;

    double t0 = now_s();
    CorrelationAccumulator acc = correlate_fast(st, geom);
    const double t_corr = now_s() - t0;

    // exactness spot check against the serial reference on a subset
    FrameStack sub = st;
    sub.n_frames = 32;
    sub.arm_a.resize(sub.n_frames * sub.frame_bytes());
    sub.arm_b.resize(sub.n_frames * sub.frame_bytes());
    if (!acc_equal(correlate_fast(sub, geom), correlate_naive(sub, geom)))
        return {false, "fast path disagrees with the reference on the benchmark geometry"};

    Preset p = paper_like_preset();
    NdArray gamma = finalize(acc, p.optics.pixel_pitch_mm());
    RefocusOptions opts = default_refocus_options(p.optics, p.source);
    t0 = now_s();
    auto res = refocus_stack(gamma, {300.0, 319.0, 340.0}, p.optics, opts);
    const double t_ref = (now_s() - t0) / 3.0;
    for (const auto& r : res)
        if (!r.image) return {false, "refocus failed during the benchmark: " + r.error};

    int threads = 1;
#ifdef _OPENMP
    threads = omp_get_max_threads();
#endif
    const bool ok = t_corr <= 60.0 && t_ref <= 14.0;
    return {ok, fmt("correlate 1e4 x (2 x 256x256) binned 64x64 in %.1f s (bound 60 s), "
                    "refocus %.2f s per plane (bound 14 s), %d thread(s)",
                    t_corr, t_ref, threads)};
}

std::pair<bool, std::string> criterion_10_determinism() {
    Scene sc = build_scene(319.0, 250.0, 125.0, 32, 0.8);
    AcquisitionConfig acq = sc.p.acq;
    acq.height = 32;
    acq.n_frames = 500;
    acq.seed = 33;

    FrameStack s1 = simulate_stack(sc.ka, sc.kb, sc.p.source, SpadConfig{}, acq);
    FrameStack s2 = simulate_stack(sc.ka, sc.kb, sc.p.source, SpadConfig{}, acq);
    if (s1.arm_a != s2.arm_a || s1.arm_b != s2.arm_b)
        return {false, "repeated simulation with a fixed seed differs"};

    CorrGeometry geom;
    geom.mode = CorrMode::Reduced1D;
    geom.width = s1.width;
    geom.height = s1.height;
#ifdef _OPENMP
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    CorrelationAccumulator a1 = correlate_fast(s1, geom);
    omp_set_num_threads(4);
    CorrelationAccumulator a4 = correlate_fast(s1, geom);
    omp_set_num_threads(saved);
    if (!acc_equal(a1, a4)) return {false, "correlation differs across worker counts"};
#endif

    const fs::path dir = fs::temp_directory_path() / "cpi_acceptance_fmt";
    fs::create_directories(dir);
    const std::string path = (dir / "frames.cpif").string();
    write_cpif(s1, path);
    FrameStack back = read_cpif(path);
    bool round_trip = back.arm_a == s1.arm_a && back.arm_b == s1.arm_b &&
                      back.n_frames == s1.n_frames;

    // truncation and corruption must fail closed
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bool trunc_caught = false, corrupt_caught = false;
    {
        std::ofstream out((dir / "trunc.cpif").string(), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
    }
    try {
        CpifReader r((dir / "trunc.cpif").string());
    } catch (const IoError&) {
        trunc_caught = true;
    }
    {
        auto bad = bytes;
        bad[64] = static_cast<char>(~bad[64]);
        std::ofstream out((dir / "bad.cpif").string(), std::ios::binary);
        out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    try {
        CpifReader r((dir / "bad.cpif").string());
        r.verify_checksum();
    } catch (const IoError&) {
        corrupt_caught = true;
    }
    fs::remove_all(dir);

    const bool ok = round_trip && trunc_caught && corrupt_caught;
    return {ok, fmt("seeded runs byte-identical, worker-count invariant, container round-trip "
                    "%s, truncation %s, corruption %s",
                    round_trip ? "exact" : "BROKEN", trunc_caught ? "caught" : "MISSED",
                    corrupt_caught ? "caught" : "MISSED")};
}

} // namespace

int main() {
    run(1, "bit-exact fast/naive correlator equivalence", criterion_1_exactness);
    run(2, "chaotic-light statistics (g2, speckle contrast)", criterion_2_statistics);
    run(3, "Monte-Carlo vs analytic correlation oracle", criterion_3_oracle);
    run(4, "refocusing efficacy on binary frames", criterion_4_refocusing);
    run(5, "refocusing transform algebra", criterion_5_alpha_algebra);
    run(6, "correlation aperture radii", criterion_6_apertures);
    run(7, "saturating SNR model", criterion_7_snr);
    run(8, "resolution / depth-of-field enhancement", criterion_8_dof);
    run(9, "correlation and refocus throughput", criterion_9_performance);
    run(10, "determinism and container format", criterion_10_determinism);

    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
