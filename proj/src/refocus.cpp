#include "cpi/refocus.hpp"

#include <cmath>

namespace cpi {

RefocusMatrix alpha_matrix(double z, double z_s, const OpticalConfig& cfg) {
    const double mdz = cfg.magnification * cfg.delta_z;
    if (mdz == 0.0) throw NumericError("alpha_matrix: delta_z or M is zero");
    if (z_s == z) throw NumericError("singular refocus transform (z_s == z)");
    RefocusMatrix m;
    m.z = z;
    m.z_s = z_s;
    m.m00 = (cfg.z_b - z) / mdz;
    m.m01 = (z - cfg.z_a) / mdz;
    m.m10 = (cfg.z_b - z_s) / mdz;
    m.m11 = (z_s - cfg.z_a) / mdz;
    return m;
}

RemapGrid default_remap_grid(const NdArray& gamma, const OpticalConfig& cfg, double radius,
                             int n_s) {
    if (gamma.rank() != 2 && gamma.rank() != 4)
        throw NumericError("remap: gamma must be rank 2 (1D) or rank 4 (2D)");
    RemapGrid g;
    g.n_r = static_cast<int>(gamma.dim(0));
    g.r_pitch = gamma.axis(0).pitch / std::abs(cfg.magnification);
    g.r_origin = -0.5 * (g.n_r - 1) * g.r_pitch;
    g.n_s = n_s;
    g.s_pitch = 2.0 * radius / static_cast<double>(n_s);
    g.s_origin = -0.5 * (g.n_s - 1) * g.s_pitch;
    return g;
}

namespace {

struct AxisLookup {
    bool inside = false;
    std::size_t i0 = 0, i1 = 0;
    double w1 = 0.0; // weight of i1
};

AxisLookup lookup(const Axis& ax, std::size_t n, double x, Interpolation interp) {
    AxisLookup r;
    double f = ax.index_of(x);
    // tolerate round-off at the domain edges so lattice-aligned points
    // are not dropped
    const double edge = 1e-9;
    if (f >= -edge && f < 0.0) f = 0.0;
    const double last = static_cast<double>(n - 1);
    if (f > last && f <= last + edge) f = last;
    if (interp == Interpolation::Nearest) {
        const double rounded = std::round(f);
        if (rounded < 0.0 || rounded > static_cast<double>(n - 1)) return r;
        r.inside = true;
        r.i0 = r.i1 = static_cast<std::size_t>(rounded);
        r.w1 = 0.0;
        return r;
    }
    if (f < 0.0 || f > static_cast<double>(n - 1)) return r;
    r.inside = true;
    if (n == 1) return r;
    std::size_t i0 = static_cast<std::size_t>(f);
    if (i0 > n - 2) i0 = n - 2;
    r.i0 = i0;
    r.i1 = i0 + 1;
    r.w1 = f - static_cast<double>(i0);
    return r;
}

} // namespace

RemappedGamma remap(const NdArray& gamma, const RefocusMatrix& alpha, const RemapGrid& out_grid,
                    Interpolation interp) {
    if (alpha.det() == 0.0) throw NumericError("singular refocus transform");
    const auto nr = static_cast<std::size_t>(out_grid.n_r);
    const auto ns = static_cast<std::size_t>(out_grid.n_s);
    const Axis axis_r{"rho_r", out_grid.r_origin, out_grid.r_pitch};
    const Axis axis_s{"rho_s", out_grid.s_origin, out_grid.s_pitch};

    RemappedGamma out;
    out.grid = out_grid;
    out.alpha = alpha;

    if (gamma.rank() == 2) {
        out.values = NdArray({nr, ns}, {axis_r, axis_s});
        out.inside = NdArray({nr, ns}, {axis_r, axis_s});
        const std::size_t na = gamma.dim(0), nb = gamma.dim(1);
#pragma omp parallel for schedule(static)
        for (std::size_t ir = 0; ir < nr; ++ir) {
            const double r = axis_r.coord(static_cast<std::ptrdiff_t>(ir));
            for (std::size_t is = 0; is < ns; ++is) {
                const double s = axis_s.coord(static_cast<std::ptrdiff_t>(is));
                const auto [a, b] = alpha.inverse(r, s);
                const AxisLookup la = lookup(gamma.axis(0), na, a, interp);
                const AxisLookup lb = lookup(gamma.axis(1), nb, b, interp);
                if (!la.inside || !lb.inside) continue;
                const double v =
                    (1.0 - la.w1) * ((1.0 - lb.w1) * gamma.at2(la.i0, lb.i0) +
                                     lb.w1 * gamma.at2(la.i0, lb.i1)) +
                    la.w1 * ((1.0 - lb.w1) * gamma.at2(la.i1, lb.i0) +
                             lb.w1 * gamma.at2(la.i1, lb.i1));
                out.values.at2(ir, is) = v;
                out.inside.at2(ir, is) = 1.0;
            }
        }
        return out;
    }

    if (gamma.rank() != 4) throw NumericError("remap: gamma must be rank 2 or rank 4");
    // rank 4: axes [ay, ax, by, bx]; alpha acts on (y_a, y_b) and (x_a, x_b)
    const Axis ax_r{"rho_r_x", out_grid.r_origin, out_grid.r_pitch};
    const Axis ax_s{"rho_s_x", out_grid.s_origin, out_grid.s_pitch};
    out.values = NdArray({nr, nr, ns, ns}, {axis_r, ax_r, axis_s, ax_s});
    out.inside = NdArray({nr, nr, ns, ns}, {axis_r, ax_r, axis_s, ax_s});
    const auto day = gamma.dim(0), dax = gamma.dim(1), dby = gamma.dim(2), dbx = gamma.dim(3);
#pragma omp parallel for schedule(static)
    for (std::size_t iry = 0; iry < nr; ++iry) {
        const double ry = axis_r.coord(static_cast<std::ptrdiff_t>(iry));
        for (std::size_t irx = 0; irx < nr; ++irx) {
            const double rx = axis_r.coord(static_cast<std::ptrdiff_t>(irx));
            for (std::size_t isy = 0; isy < ns; ++isy) {
                const double sy = axis_s.coord(static_cast<std::ptrdiff_t>(isy));
                const auto [ay, by] = alpha.inverse(ry, sy);
                const AxisLookup ly_a = lookup(gamma.axis(0), day, ay, interp);
                const AxisLookup ly_b = lookup(gamma.axis(2), dby, by, interp);
                if (!ly_a.inside || !ly_b.inside) continue;
                for (std::size_t isx = 0; isx < ns; ++isx) {
                    const double sx = axis_s.coord(static_cast<std::ptrdiff_t>(isx));
                    const auto [ax, bx] = alpha.inverse(rx, sx);
                    const AxisLookup lx_a = lookup(gamma.axis(1), dax, ax, interp);
                    const AxisLookup lx_b = lookup(gamma.axis(3), dbx, bx, interp);
                    if (!lx_a.inside || !lx_b.inside) continue;
                    double v = 0.0;
                    for (int c = 0; c < 16; ++c) {
                        const bool u0 = c & 1, u1 = c & 2, u2 = c & 4, u3 = c & 8;
                        const double w = (u0 ? ly_a.w1 : 1.0 - ly_a.w1) *
                                         (u1 ? lx_a.w1 : 1.0 - lx_a.w1) *
                                         (u2 ? ly_b.w1 : 1.0 - ly_b.w1) *
                                         (u3 ? lx_b.w1 : 1.0 - lx_b.w1);
                        if (w == 0.0) continue;
                        v += w * gamma[gamma.flat4(u0 ? ly_a.i1 : ly_a.i0, u1 ? lx_a.i1 : lx_a.i0,
                                                   u2 ? ly_b.i1 : ly_b.i0,
                                                   u3 ? lx_b.i1 : lx_b.i0)];
                    }
                    const std::size_t flat = out.values.flat4(iry, irx, isy, isx);
                    out.values[flat] = v;
                    out.inside[flat] = 1.0;
                }
            }
        }
    }
    return out;
}

RefocusedImage integrate(const RemappedGamma& gr, double radius) {
    const auto ns = static_cast<std::size_t>(gr.grid.n_s);
    const Axis axis_s{"rho_s", gr.grid.s_origin, gr.grid.s_pitch};

    RefocusedImage img;
    img.z = gr.alpha.z;
    img.pitch = gr.grid.r_pitch;

    if (gr.values.rank() == 2) {
        std::vector<std::size_t> s_in;
        for (std::size_t is = 0; is < ns; ++is)
            if (std::abs(axis_s.coord(static_cast<std::ptrdiff_t>(is))) <= radius)
                s_in.push_back(is);
        if (s_in.empty())
            throw NumericError("integrate: aperture smaller than one rho_s sample");
        img.s_samples = s_in.size();
        const std::size_t nr = gr.values.dim(0);
        img.values = NdArray({nr}, {gr.values.axis(0)});
        for (std::size_t ir = 0; ir < nr; ++ir) {
            double sum = 0.0;
            std::size_t used = 0;
            for (std::size_t is : s_in)
                if (gr.inside.at2(ir, is) > 0.0) {
                    sum += gr.values.at2(ir, is);
                    ++used;
                }
            img.values[ir] = used ? sum / static_cast<double>(used) : 0.0;
        }
        return img;
    }

    // rank 4: disc |rho_s| <= radius
    std::vector<std::pair<std::size_t, std::size_t>> s_in;
    for (std::size_t isy = 0; isy < ns; ++isy)
        for (std::size_t isx = 0; isx < ns; ++isx) {
            const double sy = axis_s.coord(static_cast<std::ptrdiff_t>(isy));
            const double sx = axis_s.coord(static_cast<std::ptrdiff_t>(isx));
            if (std::hypot(sx, sy) <= radius) s_in.emplace_back(isy, isx);
        }
    if (s_in.empty()) throw NumericError("integrate: aperture smaller than one rho_s sample");
    img.s_samples = s_in.size();
    const std::size_t nr = gr.values.dim(0);
    img.values = NdArray({nr, nr}, {gr.values.axis(0), gr.values.axis(1)});
#pragma omp parallel for schedule(static)
    for (std::size_t iry = 0; iry < nr; ++iry)
        for (std::size_t irx = 0; irx < nr; ++irx) {
            double sum = 0.0;
            std::size_t used = 0;
            for (const auto& [isy, isx] : s_in) {
                const std::size_t flat = gr.values.flat4(iry, irx, isy, isx);
                if (gr.inside[flat] > 0.0) {
                    sum += gr.values[flat];
                    ++used;
                }
            }
            img.values.at2(iry, irx) = used ? sum / static_cast<double>(used) : 0.0;
        }
    return img;
}

double integration_radius(const ApertureRadii& radii, const OpticalConfig& cfg,
                          const SourceProfile& source) {
    switch (radii.limiting) {
        case LimitingAperture::Source: return source.r_sigma;
        case LimitingAperture::LensA:
        case LimitingAperture::LensB: return cfg.lens_radius();
    }
    return source.r_sigma;
}

RefocusOptions default_refocus_options(const OpticalConfig& cfg, const SourceProfile& source) {
    RefocusOptions o{cfg.z_sigma, 0.0, 21, Interpolation::Multilinear};
    o.radius = integration_radius(compute_apertures(cfg, source), cfg, source);
    return o;
}

std::vector<RefocusResult> refocus_stack(const NdArray& gamma, const std::vector<double>& z_list,
                                         const OpticalConfig& cfg, const RefocusOptions& opts) {
    std::vector<RefocusResult> out;
    out.reserve(z_list.size());
    for (double z : z_list) {
        RefocusResult r;
        r.z = z;
        try {
            const RefocusMatrix alpha = alpha_matrix(z, opts.z_s, cfg);
            const RemapGrid grid = default_remap_grid(gamma, cfg, opts.radius, opts.n_s);
            const RemappedGamma gr = remap(gamma, alpha, grid, opts.interp);
            r.image = integrate(gr, opts.radius);
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace cpi
