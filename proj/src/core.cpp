#include "cpi/core.hpp"

#include <sstream>

namespace cpi {

double ObjectMask::transmission(double rho) const {
    if (kind == MaskKind::CustomRaster) {
        if (raster.empty() || raster_pitch_um <= 0.0) return 0.0;
        double pitch_mm = raster_pitch_um * 1e-3;
        double extent = pitch_mm * static_cast<double>(raster.size());
        double t = (rho + extent / 2.0) / pitch_mm;
        if (t < 0.0 || t >= static_cast<double>(raster.size())) return 0.0;
        return raster[static_cast<std::size_t>(t)];
    }
    // slit group centered on the axis, structure along the transverse axis
    double w = slit_width_um * 1e-3;
    double d = slit_distance_um * 1e-3;
    double first = -0.5 * d * static_cast<double>(slit_count - 1);
    for (int s = 0; s < slit_count; ++s) {
        double center = first + d * static_cast<double>(s);
        if (std::abs(rho - center) <= w / 2.0) return 1.0;
    }
    return 0.0;
}

double thin_lens_solve(double f, double z_i) {
    if (f <= 0.0) throw NumericError("thin_lens_solve: f must be positive");
    if (z_i <= f) throw NumericError("thin_lens_solve: no real conjugate plane (z_i <= f)");
    return 1.0 / (1.0 / f - 1.0 / z_i);
}

namespace {
void fail(std::vector<Diagnostic>& out, const std::string& code, const std::string& msg) {
    out.push_back({code, msg});
}
std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}
} // namespace

std::vector<Diagnostic> validate_config(OpticalConfig& o, SourceProfile& s, AcquisitionConfig& a) {
    std::vector<Diagnostic> d;

    if (o.f <= 0.0) fail(d, "f_nonpositive", "focal length must be > 0, got " + num(o.f));
    if (o.z_i <= o.f)
        fail(d, "no_real_conjugate", "z_i must exceed f, got z_i=" + num(o.z_i) + " f=" + num(o.f));

    if (o.f > 0.0 && o.z_i > o.f) {
        o.z_o = thin_lens_solve(o.f, o.z_i);
        double lhs = 1.0 / o.z_o + 1.0 / o.z_i;
        if (std::abs(lhs - 1.0 / o.f) > 1e-9 / o.f)
            fail(d, "thin_lens_violation", "1/z_o + 1/z_i != 1/f beyond tolerance");
        o.magnification = -o.z_i / o.z_o;
    }

    o.delta_z = o.z_a - o.z_b;
    if (o.delta_z == 0.0)
        fail(d, "delta_z_zero", "z_a == z_b (" + num(o.z_a) + "): no plenoptic baseline");
    if (o.z_sigma <= std::max(o.z_a, o.z_b))
        fail(d, "source_inside_scene",
             "z_sigma=" + num(o.z_sigma) + " must exceed max(z_a, z_b)");
    if (o.lambda_nm <= 0.0) fail(d, "lambda_nonpositive", "wavelength must be > 0");
    if (o.na_o <= 0.0) fail(d, "na_nonpositive", "numerical aperture must be > 0");
    if (o.pixel_pitch_um <= 0.0) fail(d, "pixel_pitch_nonpositive", "pixel pitch must be > 0");

    if (s.sigma <= 0.0) fail(d, "sigma_nonpositive", "source sigma must be > 0");
    if (s.c <= 0.0) fail(d, "c_nonpositive", "source factor c must be > 0");
    if (s.t_ch <= 0.0) fail(d, "t_ch_nonpositive", "coherence time must be > 0");
    s.r_sigma = s.c * s.sigma;

    if (a.n_frames < 2) fail(d, "n_frames_too_small", "n_frames must be >= 2");
    if (a.binning < 1) fail(d, "binning_nonpositive", "binning must be >= 1");
    if (a.width <= 0 || a.height <= 0) fail(d, "frame_dims_nonpositive", "width/height must be > 0");
    Roi roi = a.roi;
    if (roi.w == 0 || roi.h == 0) roi = {0, 0, a.width, a.height};
    if (roi.x < 0 || roi.y < 0 || roi.x + roi.w > a.width || roi.y + roi.h > a.height)
        fail(d, "roi_out_of_bounds", "ROI exceeds frame dimensions");
    else if (a.binning >= 1 && (roi.w % a.binning != 0 || roi.h % a.binning != 0))
        fail(d, "binning_roi_mismatch", "binning must divide ROI dimensions");
    a.roi = roi;

    return d;
}

Preset paper_like_preset() {
    Preset p;
    p.optics.f = 75.0;
    p.optics.z_i = 103.125; // gives z_o = 275 mm, M = -0.375 (assumed)
    p.optics.na_o = 0.05;   // assumed
    p.optics.z_a = 345.0;
    p.optics.z_b = 293.0;
    p.optics.z_sigma = 600.0; // assumed
    p.optics.lambda_nm = 532.0;
    p.optics.pixel_pitch_um = 10.0;

    p.source.sigma = 1.02;
    p.source.c = 1.44 / 1.02; // r_sigma = 1.44 mm
    p.source.t_ch = 15.0;

    p.acq.n_frames = 10000;
    p.acq.frame_rate = 97700.0;
    p.acq.gate_time = 10.0;
    p.acq.width = 32;
    p.acq.height = 128;
    p.acq.binning = 1;
    p.acq.seed = 1;

    auto diags = validate_config(p.optics, p.source, p.acq);
    if (!diags.empty()) throw ConfigError("paper_like_preset failed validation: " + diags[0].message);
    return p;
}

} // namespace cpi
