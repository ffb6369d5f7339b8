#pragma once

#include "cpi/core.hpp"
#include "cpi/ndarray.hpp"
#include "cpi/wave_optics.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace cpi {

// Saturating SNR model SNR(N) = (a + b/N)^(-1/2).
struct SnrModel {
    double a = 0.0;
    double b = 0.0;
    double residual = 0.0; // RMS of SNR prediction error over the fit points

    double predict(double n_frames) const { return 1.0 / std::sqrt(a + b / n_frames); }
    double asymptote() const { return 1.0 / std::sqrt(a); }
};

// Sum along the slit axis within rect; returns a 1D profile with physical
// coordinates along the structured axis. For a 1D image this is a window.
NdArray slit_profile(const NdArray& image, Roi rect, int slit_axis = 1);

// (max - min)/(max + min) with min read at the midpoint between the
// outermost samples reaching 90% of the peak. For a slit group that is the
// central dip; for an unresolved single bump the midpoint lands on the top
// and the visibility collapses to ~0.
double visibility(const NdArray& profile);
double visibility(const std::vector<double>& profile);

struct SnrEstimate {
    double value = 0.0;
    bool unbounded = false; // zero spread in the region
};

// mean/population-std of the image over the transmissive-region pixels.
SnrEstimate estimate_snr(const NdArray& image, const std::vector<std::size_t>& region);

// Least squares on SNR^-2 = a + b/N (exact for points generated from the
// model); a and b are clamped to a tiny positive floor.
SnrModel fit_snr(const std::vector<std::pair<double, double>>& points);

struct ResolutionCurve {
    std::vector<double> z;                        // mm
    std::vector<double> cpi_um, conv_a_um, conv_b_um; // NaN when non-bracketing
};

struct SweepSettings {
    std::vector<double> z_values;
    double feature_min_um = 100.0;
    double feature_max_um = 1500.0;
    int bisect_iters = 6;
    double vis_threshold = 0.10;
    int n_s = 21; // refocus integration samples
};

// For each z, the smallest slit center distance (width = distance/2) whose
// visibility reaches the threshold, for the refocused image and for the two
// conventional mean-intensity images.
ResolutionCurve resolution_sweep(const OpticalConfig& cfg, const PupilFunction& pupil,
                                 const SourceProfile& source, const GridSpec& grid,
                                 const SweepSettings& sweep);

// Geometric circle-of-confusion band: axial range around the focus plane
// where the blur diameter 2*NA*|z - z_f|*projection stays below the feature.
std::pair<double, double> coc_band(const OpticalConfig& cfg, double feature_um, double z_focus,
                                   double projection = 1.0);

} // namespace cpi
