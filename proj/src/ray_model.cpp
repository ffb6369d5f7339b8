#include "cpi/ray_model.hpp"

#include <cmath>

namespace cpi {

double gamma_ray(double rho_a, double rho_b, const ObjectMask& mask, const OpticalConfig& cfg,
                 const PupilFunction& pupil, const SourceProfile& source) {
    const double mdz = cfg.magnification * cfg.delta_z;
    if (mdz == 0.0) throw NumericError("gamma_ray: delta_z or M is zero");
    const double z = mask.z;

    const double arg_obj = ((cfg.z_b - z) * rho_a - (cfg.z_a - z) * rho_b) / mdz;
    const double arg_p1 = ((cfg.z_o + cfg.delta_z) * rho_a - cfg.z_o * rho_b) / mdz;
    const double arg_p2 = (cfg.z_o * rho_a - (cfg.z_o - cfg.delta_z) * rho_b) / mdz;
    const double arg_src = ((cfg.z_b - cfg.z_sigma) * rho_a - (cfg.z_a - cfg.z_sigma) * rho_b) / mdz;

    const double a = mask.transmission(arg_obj);
    const double p1 = pupil.value(arg_p1);
    const double p2 = pupil.value(arg_p2);
    const double s = source.intensity(arg_src);

    return (a * a) * (a * a) * (p1 * p1) * (p2 * p2) * (s * s);
}

std::pair<double, double> ca_lens(const OpticalConfig& cfg) {
    const double mdz = std::abs(cfg.magnification * cfg.delta_z);
    const double r = cfg.delta_z / cfg.z_o;
    double ca_a = cfg.na_o * mdz / std::sqrt((1.0 + r) * (1.0 + r) + 1.0);
    double ca_b = cfg.na_o * mdz / std::sqrt((1.0 - r) * (1.0 - r) + 1.0);
    return {ca_a, ca_b};
}

double ca_source(const OpticalConfig& cfg, const SourceProfile& source) {
    const double ta = cfg.z_a / cfg.z_sigma - 1.0;
    const double tb = cfg.z_b / cfg.z_sigma - 1.0;
    const double den = std::sqrt(tb * tb + ta * ta);
    if (den == 0.0) throw NumericError("ca_source: source conjugate to both planes");
    const double mdz = std::abs(cfg.magnification * cfg.delta_z);
    return source.r_sigma / cfg.z_sigma * mdz / den;
}

ApertureRadii limiting_aperture(double lens_a, double lens_b, double source) {
    ApertureRadii r;
    r.ca_lens_a = lens_a;
    r.ca_lens_b = lens_b;
    r.ca_source = source;
    // tie-break priority: source > lens_b > lens_a
    r.limiting = LimitingAperture::Source;
    double best = source;
    if (lens_b < best) {
        best = lens_b;
        r.limiting = LimitingAperture::LensB;
    }
    if (lens_a < best) {
        best = lens_a;
        r.limiting = LimitingAperture::LensA;
    }
    return r;
}

ApertureRadii compute_apertures(const OpticalConfig& cfg, const SourceProfile& source) {
    auto [la, lb] = ca_lens(cfg);
    return limiting_aperture(la, lb, ca_source(cfg, source));
}

const char* to_string(LimitingAperture a) {
    switch (a) {
        case LimitingAperture::LensA: return "lens_a";
        case LimitingAperture::LensB: return "lens_b";
        case LimitingAperture::Source: return "source";
    }
    return "?";
}

std::array<double, 2> image_locus(double z, const OpticalConfig& cfg) {
    const double mdz = cfg.magnification * cfg.delta_z;
    if (mdz == 0.0) throw NumericError("image_locus: delta_z or M is zero");
    return {(cfg.z_b - z) / mdz, -(cfg.z_a - z) / mdz};
}

} // namespace cpi
