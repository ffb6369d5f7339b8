#include "cpi/analysis.hpp"

#include "cpi/ray_model.hpp"
#include "cpi/refocus.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

namespace cpi {

NdArray slit_profile(const NdArray& image, Roi rect, int slit_axis) {
    if (image.rank() == 1) {
        if (rect.w == 0) rect = {0, 0, static_cast<int>(image.dim(0)), 1};
        if (rect.x < 0 || rect.x + rect.w > static_cast<int>(image.dim(0)) || rect.w <= 0)
            throw NumericError("slit_profile: empty or out-of-range rect");
        NdArray out({static_cast<std::size_t>(rect.w)},
                    {Axis{image.axis(0).name, image.axis(0).coord(rect.x), image.axis(0).pitch}});
        for (int i = 0; i < rect.w; ++i)
            out[static_cast<std::size_t>(i)] = image[static_cast<std::size_t>(rect.x + i)];
        return out;
    }
    if (image.rank() != 2) throw NumericError("slit_profile: image must be rank 1 or 2");
    const int h = static_cast<int>(image.dim(0));
    const int w = static_cast<int>(image.dim(1));
    if (rect.w == 0 || rect.h == 0) rect = {0, 0, w, h};
    if (rect.x < 0 || rect.y < 0 || rect.x + rect.w > w || rect.y + rect.h > h ||
        rect.w <= 0 || rect.h <= 0)
        throw NumericError("slit_profile: empty or out-of-range rect");

    // slit_axis is the axis summed over (1 = x, slits along x)
    const int out_axis = slit_axis == 1 ? 0 : 1;
    const int n = out_axis == 0 ? rect.h : rect.w;
    const int start = out_axis == 0 ? rect.y : rect.x;
    NdArray out({static_cast<std::size_t>(n)},
                {Axis{image.axis(static_cast<std::size_t>(out_axis)).name,
                      image.axis(static_cast<std::size_t>(out_axis)).coord(start),
                      image.axis(static_cast<std::size_t>(out_axis)).pitch}});
    for (int ry = 0; ry < rect.h; ++ry)
        for (int rx = 0; rx < rect.w; ++rx) {
            const double v = image.at2(static_cast<std::size_t>(rect.y + ry),
                                       static_cast<std::size_t>(rect.x + rx));
            out[static_cast<std::size_t>(out_axis == 0 ? ry : rx)] += v;
        }
    return out;
}

double visibility(const std::vector<double>& profile) {
    if (profile.size() < 3) throw NumericError("visibility: profile needs >= 3 samples");
    const double vmax = *std::max_element(profile.begin(), profile.end());
    // dip at the center of the structure: the outermost samples reaching 90%
    // of the peak bracket the slit group, and the modulation is read midway
    // between them. A single blurred bump scores ~0 because its midpoint sits
    // on the bump top.
    std::size_t lo = 0, hi = profile.size() - 1;
    while (lo < hi && profile[lo] < 0.9 * vmax) ++lo;
    while (hi > lo && profile[hi] < 0.9 * vmax) --hi;
    const double vmin = std::min(profile[(lo + hi) / 2], profile[(lo + hi + 1) / 2]);
    if (vmax + vmin <= 0.0) throw NumericError("visibility: nonpositive denominator");
    return (vmax - vmin) / (vmax + vmin);
}

double visibility(const NdArray& profile) { return visibility(profile.raw()); }

SnrEstimate estimate_snr(const NdArray& image, const std::vector<std::size_t>& region) {
    if (region.size() < 2) throw NumericError("estimate_snr: region needs >= 2 pixels");
    double mean = 0.0;
    for (std::size_t i : region) mean += image[i];
    mean /= static_cast<double>(region.size());
    double var = 0.0;
    for (std::size_t i : region) {
        const double d = image[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(region.size()); // population std
    if (var == 0.0) return {0.0, true};
    return {mean / std::sqrt(var), false};
}

SnrModel fit_snr(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw NumericError("fit_snr: needs >= 2 points");
    // linear least squares on y = SNR^-2 against x = 1/N
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(points.size());
    double first_n = points.front().first;
    bool distinct = false;
    for (const auto& [nt, snr] : points) {
        if (nt <= 0.0 || snr <= 0.0) throw NumericError("fit_snr: nonpositive point");
        if (nt != first_n) distinct = true;
        const double x = 1.0 / nt;
        const double y = 1.0 / (snr * snr);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    if (!distinct) throw NumericError("fit_snr: degenerate points (no distinct N_t)");
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw NumericError("fit_snr: degenerate points");
    SnrModel m;
    m.b = (n * sxy - sx * sy) / denom;
    m.a = (sy - m.b * sx) / n;
    m.a = std::max(m.a, 1e-12);
    m.b = std::max(m.b, 1e-12);
    double res = 0.0;
    for (const auto& [nt, snr] : points) {
        const double d = m.predict(nt) - snr;
        res += d * d;
    }
    m.residual = std::sqrt(res / n);
    return m;
}

namespace {

ObjectMask sweep_mask(double z, double feature_um) {
    ObjectMask m;
    m.kind = MaskKind::SlitGroup;
    m.z = z;
    m.slit_count = 2;
    m.slit_distance_um = feature_um;
    m.slit_width_um = feature_um / 2.0;
    return m;
}

struct VisTriple {
    double cpi = 0.0, conv_a = 0.0, conv_b = 0.0;
};

VisTriple evaluate(double z, double feature_um, const OpticalConfig& cfg,
                   const PupilFunction& pupil, const SourceProfile& source, const GridSpec& grid,
                   int n_s) {
    const ObjectMask mask = sweep_mask(z, feature_um);
    // the template grid fixes extents and detector sampling; the Nyquist-safe
    // sample counts are re-solved for each mask plane
    const GridSpec zgrid = auto_grid(cfg, source, z, grid.object.extent, grid.det_a.n,
                                     grid.det_a.extent, grid.convention);
    auto [ka, kb] = build_kernels(mask, cfg, pupil, source, zgrid);
    VisTriple v;
    v.conv_a = visibility(mean_intensity(ka, source));
    v.conv_b = visibility(mean_intensity(kb, source));

    NdArray gamma = gamma_analytic(ka, kb, source);
    RefocusOptions opts = default_refocus_options(cfg, source);
    opts.n_s = n_s;
    const RefocusMatrix alpha = alpha_matrix(z, opts.z_s, cfg);
    const RemapGrid rg = default_remap_grid(gamma, cfg, opts.radius, opts.n_s);
    const RefocusedImage img = integrate(remap(gamma, alpha, rg), opts.radius);
    v.cpi = visibility(img.values);
    return v;
}

// smallest feature with vis >= threshold; NaN when the bracket fails high
double bisect_feature(const std::function<double(double)>& vis_of, double lo, double hi,
                      double threshold, int iters) {
    if (vis_of(hi) < threshold) return std::numeric_limits<double>::quiet_NaN();
    if (vis_of(lo) >= threshold) return lo;
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (vis_of(mid) >= threshold)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

} // namespace

ResolutionCurve resolution_sweep(const OpticalConfig& cfg, const PupilFunction& pupil,
                                 const SourceProfile& source, const GridSpec& grid,
                                 const SweepSettings& sweep) {
    if (sweep.feature_min_um >= sweep.feature_max_um || sweep.bisect_iters < 4)
        throw ConfigError("resolution_sweep: bad feature range or too few iterations");
    ResolutionCurve curve;
    for (double z : sweep.z_values) {
        // one triple evaluation serves all three bisection runs
        std::map<double, VisTriple> cache;
        auto triple = [&](double feature) -> const VisTriple& {
            auto it = cache.find(feature);
            if (it == cache.end())
                it = cache.emplace(feature, evaluate(z, feature, cfg, pupil, source, grid,
                                                     sweep.n_s))
                         .first;
            return it->second;
        };
        auto run = [&](auto pick) {
            return bisect_feature([&](double f) { return pick(triple(f)); },
                                  sweep.feature_min_um, sweep.feature_max_um,
                                  sweep.vis_threshold, sweep.bisect_iters);
        };
        curve.z.push_back(z);
        curve.cpi_um.push_back(run([](const VisTriple& v) { return v.cpi; }));
        curve.conv_a_um.push_back(run([](const VisTriple& v) { return v.conv_a; }));
        curve.conv_b_um.push_back(run([](const VisTriple& v) { return v.conv_b; }));
    }
    return curve;
}

std::pair<double, double> coc_band(const OpticalConfig& cfg, double feature_um, double z_focus,
                                   double projection) {
    const double half = feature_um * 1e-3 / (2.0 * cfg.na_o * projection);
    return {z_focus - half, z_focus + half};
}

} // namespace cpi
