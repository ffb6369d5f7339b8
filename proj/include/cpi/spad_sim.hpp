#pragma once

#include "cpi/core.hpp"
#include "cpi/wave_optics.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace cpi {

struct SpadConfig {
    double pde = 0.5;              // photon detection efficiency (incl. fill factor)
    double dark_rate = 10.0;       // dark counts per pixel per second
    double gate_time = 10.0;       // us
    double mean_photons_per_cell = 0.1; // expected signal photons per coherence cell
                                        // per pixel at unit normalized intensity

    double dark_term() const { return dark_rate * gate_time * 1e-6; }
};

// Bit-packed binary frames, rows padded to byte boundaries, MSB-first.
struct FrameStack {
    int width = 0, height = 0;
    std::uint64_t n_frames = 0;
    std::vector<std::uint8_t> arm_a, arm_b;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;

    std::size_t bytes_per_row() const { return (static_cast<std::size_t>(width) + 7) / 8; }
    std::size_t frame_bytes() const { return bytes_per_row() * static_cast<std::size_t>(height); }

    void allocate() {
        arm_a.assign(n_frames * frame_bytes(), 0);
        arm_b.assign(n_frames * frame_bytes(), 0);
    }

    const std::uint8_t* frame(Arm arm, std::uint64_t f) const {
        const auto& v = arm == Arm::A ? arm_a : arm_b;
        return v.data() + f * frame_bytes();
    }
    std::uint8_t* frame(Arm arm, std::uint64_t f) {
        auto& v = arm == Arm::A ? arm_a : arm_b;
        return v.data() + f * frame_bytes();
    }

    bool get(Arm arm, std::uint64_t f, int x, int y) const {
        const std::uint8_t* row = frame(arm, f) + static_cast<std::size_t>(y) * bytes_per_row();
        return (row[x >> 3] >> (7 - (x & 7))) & 1;
    }
    void set(Arm arm, std::uint64_t f, int x, int y, bool v) {
        std::uint8_t* row = frame(arm, f) + static_cast<std::size_t>(y) * bytes_per_row();
        std::uint8_t mask = static_cast<std::uint8_t>(1u << (7 - (x & 7)));
        if (v)
            row[x >> 3] |= mask;
        else
            row[x >> 3] &= static_cast<std::uint8_t>(~mask);
    }
};

// Number of coherence cells integrated per gate.
int cells_per_gate(double gate_time_us, double t_ch_us);

// Per-frame integrated intensities: frame f averages the m_cells field
// realizations [f*m, (f+1)*m). Columns are frames, rows detector points.
struct IntensityFrames {
    Eigen::MatrixXd arm_a, arm_b;
};
IntensityFrames integrate_gate(const FieldSampler& sampler, std::uint64_t first_frame,
                               int n_frames, int m_cells);

// Fire probability for one pixel and one gate.
inline double fire_probability(double mu_signal, const SpadConfig& spad) {
    return 1.0 - std::exp(-(spad.pde * mu_signal + spad.dark_term()));
}

// Bernoulli detection of one frame of one arm. `mu` holds the expected
// signal photon count per gate for each detector row; every pixel of a row
// draws independently (the 1D scene is uniform along x).
void detect_frame(const Eigen::VectorXd& mu, const SpadConfig& spad, FrameStack& stack, Arm arm,
                  std::uint64_t frame_index);

// Full 1D simulation: chaotic fields -> gate integration -> binary frames.
// Frame height must match the detector grid sample count.
FrameStack simulate_stack(const TransferKernel& ka, const TransferKernel& kb,
                          const SourceProfile& source, const SpadConfig& spad,
                          const AcquisitionConfig& acq);

struct LinearityReport {
    double rate_a = 0.0, rate_b = 0.0; // ROI-average fire rate per arm
    double max_pixel_rate_a = 0.0, max_pixel_rate_b = 0.0;
    double threshold = 0.2;
    bool warn_a = false, warn_b = false;
    std::vector<double> pixel_rates_a, pixel_rates_b; // row-major per pixel
};

LinearityReport linearity_report(const FrameStack& stack, double threshold = 0.2);

} // namespace cpi
