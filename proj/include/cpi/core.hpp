#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpi {

// Units are fixed across the codebase: mm for axial/transverse geometry,
// um for pixel pitch and slit features, us for times, nm for wavelength.
// Conversion happens only at type boundaries.

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Full imaging geometry. delta_z is defined as z_a - z_b everywhere;
// every sign-sensitive formula reads this single field.
struct OpticalConfig {
    double f = 0.0;        // focal length, mm
    double z_i = 0.0;      // lens-to-sensor distance, mm
    double z_o = 0.0;      // conjugate object distance, mm (derived from f, z_i)
    double magnification = 0.0; // M = -z_i/z_o, negative for inverted image
    double na_o = 0.0;     // object-side numerical aperture
    double z_a = 0.0;      // plane O_a distance from lens, mm
    double z_b = 0.0;      // plane O_b distance from lens, mm
    double z_sigma = 0.0;  // source plane distance from lens, mm
    double lambda_nm = 0.0;
    double pixel_pitch_um = 0.0;
    double delta_z = 0.0;  // z_a - z_b, mm (derived)

    double wavenumber() const { return 2.0 * M_PI / (lambda_nm * 1e-6); } // rad/mm
    double lens_radius() const { return na_o * z_o; }                     // effective r_l, mm
    double pixel_pitch_mm() const { return pixel_pitch_um * 1e-3; }
};

struct SourceProfile {
    double sigma = 0.0;   // Gaussian intensity std, mm
    double c = 0.0;       // aperture optimization factor
    double r_sigma = 0.0; // effective radius = c*sigma, mm (derived)
    double t_ch = 0.0;    // coherence time, us

    // mean intensity profile S(rho_s), peak-normalized
    double intensity(double rho) const { return std::exp(-rho * rho / (2.0 * sigma * sigma)); }
};

enum class MaskKind { SlitGroup, CustomRaster };

struct ObjectMask {
    MaskKind kind = MaskKind::SlitGroup;
    double z = 0.0; // axial position from lens, mm

    // slit-group geometry (orientation: slits run along x, structure along y)
    int slit_count = 2;
    double slit_width_um = 0.0;
    double slit_distance_um = 0.0; // center-to-center

    // custom 1D raster: transmission in [0,1] on a uniform grid
    std::vector<double> raster;
    double raster_pitch_um = 0.0;

    // amplitude transmission A(rho_o) at transverse coordinate rho (mm),
    // centered on the optical axis
    double transmission(double rho) const;
};

enum class PupilShape { CircularBinary, CustomRadial };

struct PupilFunction {
    double radius = 0.0; // effective lens radius r_l, mm
    PupilShape shape = PupilShape::CircularBinary;
    std::vector<double> radial_profile; // for CustomRadial, samples on [0, radius]

    double value(double rho) const {
        double r = std::abs(rho);
        if (shape == PupilShape::CircularBinary) return r <= radius ? 1.0 : 0.0;
        if (r > radius || radial_profile.empty()) return 0.0;
        double t = r / radius * static_cast<double>(radial_profile.size() - 1);
        auto i = static_cast<std::size_t>(t);
        if (i + 1 >= radial_profile.size()) return radial_profile.back();
        double f = t - static_cast<double>(i);
        return radial_profile[i] * (1.0 - f) + radial_profile[i + 1] * f;
    }
};

struct Roi {
    int x = 0, y = 0, w = 0, h = 0;
};

struct AcquisitionConfig {
    std::uint64_t n_frames = 0;
    double frame_rate = 0.0; // frames/s
    double gate_time = 0.0;  // us
    int width = 0, height = 0; // pixels per arm
    int binning = 1;
    Roi roi; // per arm; w/h of 0 means full frame
    std::uint64_t seed = 0;

    double t_image() const { return frame_rate > 0 ? static_cast<double>(n_frames) / frame_rate : 0.0; }
};

// One violated invariant, machine readable.
struct Diagnostic {
    std::string code;    // e.g. "delta_z_zero"
    std::string message;
};

// Thin-lens conjugate: given f and one conjugate distance, return the other.
// Throws NumericError when z_i <= f (no real conjugate plane).
double thin_lens_solve(double f, double z_i);

// Checks every invariant and populates derived fields (z_o, M, delta_z,
// r_sigma). Returns every violation, not just the first; empty result
// means the configuration is valid. Idempotent.
std::vector<Diagnostic> validate_config(OpticalConfig& optics, SourceProfile& source,
                                        AcquisitionConfig& acq);

// "Paper-like" desk-scale preset. f, z_a, z_b, lambda, sigma, r_sigma and
// t_ch follow the published setup; z_i (hence z_o, M), na_o, z_sigma and
// the pixel pitch are assumptions chosen for internal consistency.
struct Preset {
    OpticalConfig optics;
    SourceProfile source;
    AcquisitionConfig acq;
};
Preset paper_like_preset();

} // namespace cpi
