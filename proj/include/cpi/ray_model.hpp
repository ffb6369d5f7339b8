#pragma once

#include "cpi/core.hpp"

#include <array>
#include <string>

namespace cpi {

enum class LimitingAperture { LensA, LensB, Source };

struct ApertureRadii {
    double ca_lens_a = 0.0;  // mm, correlation space
    double ca_lens_b = 0.0;
    double ca_source = 0.0;
    LimitingAperture limiting = LimitingAperture::Source;
};

// Closed-form ray-optics correlation function: the product of the object,
// two pupil and one source factor evaluated at their geometric arguments.
double gamma_ray(double rho_a, double rho_b, const ObjectMask& mask, const OpticalConfig& cfg,
                 const PupilFunction& pupil, const SourceProfile& source);

// Correlation-aperture radii defined by the lens pupil, one per arm.
std::pair<double, double> ca_lens(const OpticalConfig& cfg);

// Correlation-aperture radius defined by the source profile.
// Throws NumericError when the source is conjugate to both planes.
double ca_source(const OpticalConfig& cfg, const SourceProfile& source);

// Smallest of the three radii. Ties broken with priority
// source > lens_b > lens_a.
ApertureRadii limiting_aperture(double lens_a, double lens_b, double source);

ApertureRadii compute_apertures(const OpticalConfig& cfg, const SourceProfile& source);

const char* to_string(LimitingAperture a);

// Coefficients (c_a, c_b) such that the object coordinate rendered at
// detector pair (rho_a, rho_b) is c_a*rho_a + c_b*rho_b for an object at z.
// Equals the first row of the refocusing matrix.
std::array<double, 2> image_locus(double z, const OpticalConfig& cfg);

} // namespace cpi
