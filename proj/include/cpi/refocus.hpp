#pragma once

#include "cpi/core.hpp"
#include "cpi/ndarray.hpp"
#include "cpi/ray_model.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace cpi {

// The 2x2 block operator alpha(z): (rho_a, rho_b) -> (rho_r, rho_s),
// applied componentwise to each transverse axis.
struct RefocusMatrix {
    double m00 = 0, m01 = 0, m10 = 0, m11 = 0;
    double z = 0.0;   // target plane, mm
    double z_s = 0.0; // auxiliary plane, mm

    double det() const { return m00 * m11 - m01 * m10; }
    std::array<double, 2> apply(double a, double b) const {
        return {m00 * a + m01 * b, m10 * a + m11 * b};
    }
    // (rho_r, rho_s) -> (rho_a, rho_b)
    std::array<double, 2> inverse(double r, double s) const {
        const double d = det();
        if (d == 0.0) throw NumericError("singular refocus transform");
        return {(m11 * r - m01 * s) / d, (-m10 * r + m00 * s) / d};
    }
};

RefocusMatrix alpha_matrix(double z, double z_s, const OpticalConfig& cfg);

enum class Interpolation { Multilinear, Nearest };

// Output lattice of the remap: rho_r carries the refocused image, rho_s the
// integration variable in the limiting-aperture plane.
struct RemapGrid {
    int n_r = 0;
    double r_origin = 0.0, r_pitch = 0.0;
    int n_s = 0;
    double s_origin = 0.0, s_pitch = 0.0;
};

// Natural output grid for a measured gamma: rho_r spans the detector-a
// extent demagnified by 1/|M|, rho_s spans +-radius with n_s samples.
RemapGrid default_remap_grid(const NdArray& gamma, const OpticalConfig& cfg, double radius,
                             int n_s = 21);

struct RemappedGamma {
    NdArray values; // rank 2 [r, s] or rank 4 [ry, rx, sy, sx]
    NdArray inside; // 1 where alpha^-1 landed inside the measured domain
    RemapGrid grid;
    RefocusMatrix alpha;
};

RemappedGamma remap(const NdArray& gamma, const RefocusMatrix& alpha, const RemapGrid& out_grid,
                    Interpolation interp = Interpolation::Multilinear);

struct RefocusedImage {
    NdArray values; // rank 1 [rho_r] or rank 2 [y, x]
    double z = 0.0;
    double pitch = 0.0;          // mm per output pixel
    std::size_t s_samples = 0;   // rho_s samples inside the aperture
};

// Sum over rho_s samples with |rho_s| <= radius, normalized per output
// pixel by the number of in-domain samples actually used.
RefocusedImage integrate(const RemappedGamma& gr, double radius);

// Physical radius, in rho_s units, of the limiting aperture plane.
double integration_radius(const ApertureRadii& radii, const OpticalConfig& cfg,
                          const SourceProfile& source);

struct RefocusResult {
    double z = 0.0;
    std::optional<RefocusedImage> image;
    std::string error; // set when this z failed; the stack continues
};

struct RefocusOptions {
    double z_s;                 // auxiliary plane; source plane by default
    double radius;              // integration radius in rho_s units
    int n_s = 21;
    Interpolation interp = Interpolation::Multilinear;
};

RefocusOptions default_refocus_options(const OpticalConfig& cfg, const SourceProfile& source);

std::vector<RefocusResult> refocus_stack(const NdArray& gamma, const std::vector<double>& z_list,
                                         const OpticalConfig& cfg, const RefocusOptions& opts);

} // namespace cpi
