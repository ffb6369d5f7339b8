#include "cpi/wave_optics.hpp"

#include "cpi/rng.hpp"

#include <cmath>
#include <sstream>

namespace cpi {

namespace {

struct Pt {
    double x = 0.0, y = 0.0;
};

std::vector<Pt> plane_points(const PlaneGrid& g, int dims) {
    std::vector<Pt> pts;
    if (dims == 1) {
        pts.resize(static_cast<std::size_t>(g.n));
        for (int i = 0; i < g.n; ++i) pts[static_cast<std::size_t>(i)] = {g.coord(i), 0.0};
    } else {
        pts.resize(static_cast<std::size_t>(g.n) * static_cast<std::size_t>(g.n));
        for (int iy = 0; iy < g.n; ++iy)
            for (int ix = 0; ix < g.n; ++ix)
                pts[static_cast<std::size_t>(iy * g.n + ix)] = {g.coord(ix), g.coord(iy)};
    }
    return pts;
}

double plane_weight(const PlaneGrid& g, int dims) {
    double p = g.pitch();
    return dims == 1 ? p : p * p;
}

double arm_z(Arm arm, const OpticalConfig& cfg) { return arm == Arm::A ? cfg.z_a : cfg.z_b; }

double source_distance(const GridSpec& grid, const OpticalConfig& cfg, double mask_z) {
    return grid.convention == SourcePhaseConvention::SourceToObject ? cfg.z_sigma - mask_z
                                                                    : cfg.z_sigma;
}

[[noreturn]] void nyquist_fail(const std::string& leg, double step_phase) {
    std::ostringstream os;
    os << "Nyquist violation on leg '" << leg << "': phase step " << step_phase
       << " rad >= pi; refine the grid";
    throw NumericError(os.str());
}

} // namespace

void check_nyquist(const GridSpec& grid, const OpticalConfig& cfg, double mask_z) {
    if (grid.source.n < 2 || grid.object.n < 2 || grid.lens.n < 2 || grid.det_a.n < 2 ||
        grid.det_b.n < 2)
        throw ConfigError("grid sample counts must be >= 2");
    const double k = cfg.wavenumber();

    // source -> object Fresnel leg
    const double d_so = source_distance(grid, cfg, mask_z);
    if (d_so <= 0.0) throw NumericError("object behind source");
    const double slope_so = k * (grid.object.half() + grid.source.half()) / d_so;
    if (slope_so * grid.source.pitch() >= M_PI)
        nyquist_fail("source->object (source grid)", slope_so * grid.source.pitch());
    if (slope_so * grid.object.pitch() >= M_PI)
        nyquist_fail("source->object (object grid)", slope_so * grid.object.pitch());

    // lens integral, per arm
    for (Arm arm : {Arm::A, Arm::B}) {
        const double zj = arm_z(arm, cfg);
        const double denom = mask_z - zj + cfg.z_o;
        if (std::abs(denom) < 1e-9) throw NumericError("object at arm conjugate singularity");
        const double q = 1.0 / denom - 1.0 / cfg.z_o;
        const PlaneGrid& det = (arm == Arm::A) ? grid.det_a : grid.det_b;
        const double l_max = grid.object.half() / std::abs(denom) +
                             det.half() / std::abs(cfg.magnification * cfg.z_o);
        const double slope_l = k * (std::abs(q) * grid.lens.half() + l_max);
        const std::string tag = arm == Arm::A ? "a" : "b";
        if (slope_l * grid.lens.pitch() >= M_PI)
            nyquist_fail("lens->detector arm " + tag + " (lens grid)",
                         slope_l * grid.lens.pitch());
        // object-grid sampling of the lens propagator phase
        const double slope_o = k * grid.lens.half() / std::abs(denom);
        if (slope_o * grid.object.pitch() >= M_PI)
            nyquist_fail("lens->detector arm " + tag + " (object grid)",
                         slope_o * grid.object.pitch());
    }
}

GridSpec auto_grid(const OpticalConfig& cfg, const SourceProfile& source, double mask_z,
                   double object_extent_mm, int det_n, double det_extent_mm,
                   SourcePhaseConvention convention) {
    GridSpec g;
    g.dims = 1;
    g.convention = convention;
    g.det_a = {det_extent_mm, det_n};
    g.det_b = {det_extent_mm, det_n};
    g.object.extent = object_extent_mm;
    g.source.extent = 6.0 * source.sigma;
    g.lens.extent = 2.0 * cfg.lens_radius();

    const double k = cfg.wavenumber();
    const double margin = 1.3;
    const double d_so = convention == SourcePhaseConvention::SourceToObject
                            ? cfg.z_sigma - mask_z
                            : cfg.z_sigma;
    if (d_so <= 0.0) throw NumericError("auto_grid: object behind source");
    const double slope_so = k * (g.object.extent / 2.0 + g.source.extent / 2.0) / d_so;
    g.source.n = std::max(2, static_cast<int>(std::ceil(margin * slope_so * g.source.extent / M_PI)));

    double slope_lens = 0.0, slope_obj = slope_so;
    for (double zj : {cfg.z_a, cfg.z_b}) {
        const double denom = mask_z - zj + cfg.z_o;
        if (std::abs(denom) < 1e-9) throw NumericError("object at arm conjugate singularity");
        const double q = std::abs(1.0 / denom - 1.0 / cfg.z_o);
        const double l_max = g.object.extent / 2.0 / std::abs(denom) +
                             det_extent_mm / 2.0 / std::abs(cfg.magnification * cfg.z_o);
        slope_lens = std::max(slope_lens, k * (q * g.lens.extent / 2.0 + l_max));
        slope_obj = std::max(slope_obj, k * g.lens.extent / 2.0 / std::abs(denom));
    }
    g.lens.n = std::max(2, static_cast<int>(std::ceil(margin * slope_lens * g.lens.extent / M_PI)));
    g.object.n =
        std::max(2, static_cast<int>(std::ceil(margin * slope_obj * g.object.extent / M_PI)));
    return g;
}

double propagator_phase(double rho_o, double rho_l, double rho_j, Arm arm, double mask_z,
                        const OpticalConfig& cfg) {
    const double zj = arm_z(arm, cfg);
    const double denom = mask_z - zj + cfg.z_o;
    if (std::abs(denom) < 1e-12 || cfg.z_o == 0.0)
        throw NumericError("object at arm conjugate singularity");
    return (1.0 / denom - 1.0 / cfg.z_o) * rho_l * rho_l / 2.0 -
           (rho_o / denom - rho_j / (cfg.magnification * cfg.z_o)) * rho_l;
}

std::complex<double> propagator_p(double rho_o, double rho_j, Arm arm, double mask_z,
                                  const OpticalConfig& cfg, const PupilFunction& pupil,
                                  const GridSpec& grid) {
    check_nyquist(grid, cfg, mask_z);
    const double k = cfg.wavenumber();
    std::complex<double> acc(0.0, 0.0);
    const double w = grid.lens.pitch();
    for (int l = 0; l < grid.lens.n; ++l) {
        const double rl = grid.lens.coord(l);
        const double p = pupil.value(rl);
        if (p == 0.0) continue;
        const double phi = propagator_phase(rho_o, rl, rho_j, arm, mask_z, cfg);
        acc += p * std::polar(1.0, k * phi);
    }
    return acc * w;
}

namespace {

// Lens quadrature for every (object, detector) pair of one arm. The phase
// is a chirp in the lens index, evaluated with a complex rotation
// recurrence instead of per-sample sincos.
Eigen::MatrixXcd propagator_matrix(Arm arm, double mask_z, const OpticalConfig& cfg,
                                   const PupilFunction& pupil, const GridSpec& grid,
                                   const std::vector<Pt>& obj_pts, const std::vector<Pt>& det_pts) {
    const double k = cfg.wavenumber();
    const double zj = arm_z(arm, cfg);
    const double denom = mask_z - zj + cfg.z_o;
    const double q = 1.0 / denom - 1.0 / cfg.z_o;
    const double mzo = cfg.magnification * cfg.z_o;
    const double h = grid.lens.pitch();
    const double w = plane_weight(grid.lens, grid.dims);

    const auto n_o = static_cast<Eigen::Index>(obj_pts.size());
    const auto n_d = static_cast<Eigen::Index>(det_pts.size());
    Eigen::MatrixXcd p(n_o, n_d);

    if (grid.dims == 1) {
        std::vector<double> rl(static_cast<std::size_t>(grid.lens.n));
        std::vector<double> pv(static_cast<std::size_t>(grid.lens.n));
        for (int l = 0; l < grid.lens.n; ++l) {
            rl[static_cast<std::size_t>(l)] = grid.lens.coord(l);
            pv[static_cast<std::size_t>(l)] = pupil.value(grid.lens.coord(l));
        }
        const std::complex<double> dd = std::polar(1.0, k * q * h * h);
#pragma omp parallel for schedule(static)
        for (Eigen::Index oi = 0; oi < n_o; ++oi) {
            const double ao = obj_pts[static_cast<std::size_t>(oi)].x / denom;
            for (Eigen::Index di = 0; di < n_d; ++di) {
                const double lcoef = ao - det_pts[static_cast<std::size_t>(di)].x / mzo;
                // phi(l) = q/2 * rl^2 - lcoef * rl, times k
                const double phi0 = k * (0.5 * q * rl[0] * rl[0] - lcoef * rl[0]);
                const double phi1 = k * (0.5 * q * rl[1] * rl[1] - lcoef * rl[1]);
                std::complex<double> z = std::polar(1.0, phi0);
                std::complex<double> d = std::polar(1.0, phi1 - phi0);
                std::complex<double> acc(0.0, 0.0);
                for (int l = 0; l < grid.lens.n; ++l) {
                    if (pv[static_cast<std::size_t>(l)] != 0.0)
                        acc += pv[static_cast<std::size_t>(l)] * z;
                    z *= d;
                    d *= dd;
                }
                p(oi, di) = acc * w;
            }
        }
    } else {
        const auto lens_pts = plane_points(grid.lens, grid.dims);
#pragma omp parallel for schedule(static)
        for (Eigen::Index oi = 0; oi < n_o; ++oi) {
            const Pt& o = obj_pts[static_cast<std::size_t>(oi)];
            for (Eigen::Index di = 0; di < n_d; ++di) {
                const Pt& dpt = det_pts[static_cast<std::size_t>(di)];
                const double lx = o.x / denom - dpt.x / mzo;
                const double ly = o.y / denom - dpt.y / mzo;
                std::complex<double> acc(0.0, 0.0);
                for (const Pt& l : lens_pts) {
                    const double r2 = l.x * l.x + l.y * l.y;
                    const double pval = pupil.value(std::sqrt(r2));
                    if (pval == 0.0) continue;
                    const double phi = 0.5 * q * r2 - (lx * l.x + ly * l.y);
                    acc += pval * std::polar(1.0, k * phi);
                }
                p(oi, di) = acc * w;
            }
        }
    }
    return p;
}

TransferKernel compose_kernel(Arm arm, const ObjectMask& mask, const OpticalConfig& cfg,
                              const PupilFunction& pupil, const GridSpec& grid) {
    const auto src_pts = plane_points(grid.source, grid.dims);
    const auto obj_pts = plane_points(grid.object, grid.dims);
    const PlaneGrid& det = (arm == Arm::A) ? grid.det_a : grid.det_b;
    const auto det_pts = plane_points(det, grid.dims);

    const double k = cfg.wavenumber();
    const double d_so = source_distance(grid, cfg, mask.z);
    const double w_o = plane_weight(grid.object, grid.dims);

    // source -> object Fresnel factor times transmission and object weight
    const auto n_s = static_cast<Eigen::Index>(src_pts.size());
    const auto n_o = static_cast<Eigen::Index>(obj_pts.size());
    Eigen::MatrixXcd f(n_s, n_o);
#pragma omp parallel for schedule(static)
    for (Eigen::Index si = 0; si < n_s; ++si) {
        const Pt& s = src_pts[static_cast<std::size_t>(si)];
        for (Eigen::Index oi = 0; oi < n_o; ++oi) {
            const Pt& o = obj_pts[static_cast<std::size_t>(oi)];
            // slit masks run along x; in 2D the structure is along y only
            const double a = grid.dims == 1 ? mask.transmission(o.x) : mask.transmission(o.y);
            if (a == 0.0) {
                f(si, oi) = 0.0;
                continue;
            }
            const double dx = o.x - s.x, dy = o.y - s.y;
            const double phi = k * (dx * dx + dy * dy) / (2.0 * d_so);
            f(si, oi) = a * w_o * std::polar(1.0, phi);
        }
    }

    TransferKernel out;
    out.arm = arm;
    out.grid = grid;
    out.mask_z = mask.z;
    out.k = f * propagator_matrix(arm, mask.z, cfg, pupil, grid, obj_pts, det_pts);
    if (!out.k.allFinite()) throw NumericError("transfer kernel contains non-finite entries");
    return out;
}

} // namespace

std::pair<TransferKernel, TransferKernel> build_kernels(const ObjectMask& mask,
                                                        const OpticalConfig& cfg,
                                                        const PupilFunction& pupil,
                                                        const SourceProfile& /*source*/,
                                                        const GridSpec& grid) {
    if (mask.z >= cfg.z_sigma) throw NumericError("object behind source");
    check_nyquist(grid, cfg, mask.z);
    return {compose_kernel(Arm::A, mask, cfg, pupil, grid),
            compose_kernel(Arm::B, mask, cfg, pupil, grid)};
}

Eigen::VectorXd source_weights(const SourceProfile& source, const GridSpec& grid) {
    const auto pts = plane_points(grid.source, grid.dims);
    const double w = plane_weight(grid.source, grid.dims);
    Eigen::VectorXd s(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double r = std::sqrt(pts[i].x * pts[i].x + pts[i].y * pts[i].y);
        s[static_cast<Eigen::Index>(i)] = source.intensity(r) * w;
    }
    return s;
}

namespace {

std::vector<Axis> det_axes(const GridSpec& grid) {
    auto ax = [](const char* name, const PlaneGrid& g) {
        return Axis{name, g.coord(0), g.pitch()};
    };
    if (grid.dims == 1) return {ax("rho_a", grid.det_a), ax("rho_b", grid.det_b)};
    return {ax("rho_a_y", grid.det_a), ax("rho_a_x", grid.det_a), ax("rho_b_y", grid.det_b),
            ax("rho_b_x", grid.det_b)};
}

std::vector<std::size_t> det_dims(const GridSpec& grid) {
    if (grid.dims == 1)
        return {static_cast<std::size_t>(grid.det_a.n), static_cast<std::size_t>(grid.det_b.n)};
    auto na = static_cast<std::size_t>(grid.det_a.n);
    auto nb = static_cast<std::size_t>(grid.det_b.n);
    return {na, na, nb, nb};
}

} // namespace

NdArray gamma_analytic(const TransferKernel& ka, const TransferKernel& kb,
                       const SourceProfile& source) {
    if (ka.k.rows() != kb.k.rows()) throw NumericError("gamma_analytic: source grid mismatch");
    const Eigen::VectorXd s = source_weights(source, ka.grid);
    if (s.size() != ka.k.rows()) throw NumericError("gamma_analytic: source grid mismatch");

    Eigen::MatrixXcd c = ka.k.transpose() * (s.asDiagonal() * kb.k.conjugate());
    NdArray g(det_dims(ka.grid), det_axes(ka.grid));
    for (Eigen::Index i = 0; i < c.rows(); ++i)
        for (Eigen::Index j = 0; j < c.cols(); ++j)
            g[static_cast<std::size_t>(i) * static_cast<std::size_t>(c.cols()) +
              static_cast<std::size_t>(j)] = std::norm(c(i, j));
    return g;
}

NdArray mean_intensity(const TransferKernel& k, const SourceProfile& source) {
    const Eigen::VectorXd s = source_weights(source, k.grid);
    Eigen::VectorXd intensity = k.k.cwiseAbs2().transpose() * s;
    const PlaneGrid& det = (k.arm == Arm::A) ? k.grid.det_a : k.grid.det_b;
    const char* name = k.arm == Arm::A ? "rho_a" : "rho_b";
    if (k.grid.dims == 1) {
        NdArray out({static_cast<std::size_t>(det.n)}, {Axis{name, det.coord(0), det.pitch()}});
        for (Eigen::Index i = 0; i < intensity.size(); ++i)
            out[static_cast<std::size_t>(i)] = intensity[i];
        return out;
    }
    auto n = static_cast<std::size_t>(det.n);
    NdArray out({n, n}, {Axis{std::string(name) + "_y", det.coord(0), det.pitch()},
                         Axis{std::string(name) + "_x", det.coord(0), det.pitch()}});
    for (Eigen::Index i = 0; i < intensity.size(); ++i)
        out[static_cast<std::size_t>(i)] = intensity[i];
    return out;
}

FieldSampler::FieldSampler(const TransferKernel& ka, const TransferKernel& kb,
                           const SourceProfile& source, std::uint64_t seed)
    : ka_(&ka), kb_(&kb), seed_(seed) {
    if (ka.k.rows() != kb.k.rows()) throw NumericError("FieldSampler: source grid mismatch");
    sqrt_weights_ = source_weights(source, ka.grid).cwiseSqrt();
}

void FieldSampler::sample(std::uint64_t first, int count, Eigen::MatrixXcd& e_a,
                          Eigen::MatrixXcd& e_b) const {
    const Eigen::Index n_s = ka_->k.rows();
    Eigen::MatrixXcd g(n_s, count);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < count; ++c) {
        auto rng = make_rng(seed_, first + static_cast<std::uint64_t>(c));
        std::normal_distribution<double> gauss(0.0, M_SQRT1_2);
        for (Eigen::Index i = 0; i < n_s; ++i) {
            const double re = gauss(rng);
            const double im = gauss(rng);
            g(i, c) = sqrt_weights_[i] * std::complex<double>(re, im);
        }
    }
    e_a = ka_->k.transpose() * g;
    e_b = kb_->k.transpose() * g;
}

FieldRealization FieldSampler::sample_one(std::uint64_t index) const {
    Eigen::MatrixXcd ea, eb;
    sample(index, 1, ea, eb);
    return {index, ea.col(0), eb.col(0)};
}

FieldRealization FieldSampler::sample_deterministic() const {
    Eigen::VectorXcd g = sqrt_weights_.cast<std::complex<double>>();
    return {0, ka_->k.transpose() * g, kb_->k.transpose() * g};
}

} // namespace cpi
