#include "cpi/spad_sim.hpp"

#include "cpi/rng.hpp"

#include <cmath>

namespace cpi {

namespace {
// detection RNG streams live in a disjoint index space from field realizations
constexpr std::uint64_t kDetectStream = 1ULL << 63;

std::mt19937_64 detect_rng(std::uint64_t seed, std::uint64_t frame, Arm arm) {
    return make_rng(seed, kDetectStream | (frame * 2 + (arm == Arm::A ? 0 : 1)));
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}
} // namespace

int cells_per_gate(double gate_time_us, double t_ch_us) {
    if (gate_time_us <= 0.0 || t_ch_us <= 0.0)
        throw ConfigError("cells_per_gate: gate time and coherence time must be > 0");
    return std::max(1, static_cast<int>(std::lround(gate_time_us / t_ch_us)));
}

IntensityFrames integrate_gate(const FieldSampler& sampler, std::uint64_t first_frame,
                               int n_frames, int m_cells) {
    Eigen::MatrixXcd ea, eb;
    sampler.sample(first_frame * static_cast<std::uint64_t>(m_cells),
                   n_frames * m_cells, ea, eb);
    IntensityFrames out;
    out.arm_a.resize(ea.rows(), n_frames);
    out.arm_b.resize(eb.rows(), n_frames);
    for (int f = 0; f < n_frames; ++f) {
        Eigen::VectorXd ia = Eigen::VectorXd::Zero(ea.rows());
        Eigen::VectorXd ib = Eigen::VectorXd::Zero(eb.rows());
        for (int c = 0; c < m_cells; ++c) {
            ia += ea.col(f * m_cells + c).cwiseAbs2();
            ib += eb.col(f * m_cells + c).cwiseAbs2();
        }
        out.arm_a.col(f) = ia / m_cells;
        out.arm_b.col(f) = ib / m_cells;
    }
    return out;
}

void detect_frame(const Eigen::VectorXd& mu, const SpadConfig& spad, FrameStack& stack, Arm arm,
                  std::uint64_t frame_index) {
    if (mu.size() != stack.height) throw NumericError("detect_frame: row count mismatch");
    auto rng = detect_rng(stack.seed, frame_index, arm);
    for (int y = 0; y < stack.height; ++y) {
        const double p = fire_probability(std::max(0.0, mu[y]), spad);
        for (int x = 0; x < stack.width; ++x)
            if (uniform01(rng) < p) stack.set(arm, frame_index, x, y, true);
    }
}

FrameStack simulate_stack(const TransferKernel& ka, const TransferKernel& kb,
                          const SourceProfile& source, const SpadConfig& spad,
                          const AcquisitionConfig& acq) {
    if (ka.grid.dims != 1) throw ConfigError("simulate_stack: only 1D scenes are supported");
    if (acq.height != ka.grid.det_a.n || acq.height != kb.grid.det_b.n)
        throw ConfigError("simulate_stack: frame height must equal the detector grid size");

    FrameStack stack;
    stack.width = acq.width;
    stack.height = acq.height;
    stack.n_frames = acq.n_frames;
    stack.seed = acq.seed;
    stack.allocate();

    const int m = cells_per_gate(acq.gate_time, source.t_ch);
    FieldSampler sampler(ka, kb, source, acq.seed);

    // normalize so that mean_photons_per_cell is the spatial-average photon
    // number on each arm at unit gain
    auto spatial_mean = [&](const TransferKernel& k) {
        auto mi = mean_intensity(k, source);
        double s = 0.0;
        for (double v : mi.raw()) s += v;
        return s / static_cast<double>(mi.size());
    };
    const double norm_a = spatial_mean(ka);
    const double norm_b = spatial_mean(kb);

    const int chunk = 512;
    for (std::uint64_t f0 = 0; f0 < acq.n_frames; f0 += chunk) {
        const int nf = static_cast<int>(std::min<std::uint64_t>(chunk, acq.n_frames - f0));
        IntensityFrames frames = integrate_gate(sampler, f0, nf, m);
#pragma omp parallel for schedule(static)
        for (int f = 0; f < nf; ++f) {
            const double gain = spad.mean_photons_per_cell * static_cast<double>(m);
            Eigen::VectorXd mu_a = frames.arm_a.col(f) * (norm_a > 0.0 ? gain / norm_a : 0.0);
            Eigen::VectorXd mu_b = frames.arm_b.col(f) * (norm_b > 0.0 ? gain / norm_b : 0.0);
            detect_frame(mu_a, spad, stack, Arm::A, f0 + static_cast<std::uint64_t>(f));
            detect_frame(mu_b, spad, stack, Arm::B, f0 + static_cast<std::uint64_t>(f));
        }
    }
    return stack;
}

LinearityReport linearity_report(const FrameStack& stack, double threshold) {
    if (stack.n_frames < 100)
        throw NumericError("linearity_report: needs at least 100 frames");
    LinearityReport r;
    r.threshold = threshold;
    const auto npix = static_cast<std::size_t>(stack.width) * static_cast<std::size_t>(stack.height);
    r.pixel_rates_a.assign(npix, 0.0);
    r.pixel_rates_b.assign(npix, 0.0);
    for (std::uint64_t f = 0; f < stack.n_frames; ++f)
        for (int y = 0; y < stack.height; ++y)
            for (int x = 0; x < stack.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * stack.width + x;
                r.pixel_rates_a[i] += stack.get(Arm::A, f, x, y);
                r.pixel_rates_b[i] += stack.get(Arm::B, f, x, y);
            }
    const double inv = 1.0 / static_cast<double>(stack.n_frames);
    for (std::size_t i = 0; i < npix; ++i) {
        r.pixel_rates_a[i] *= inv;
        r.pixel_rates_b[i] *= inv;
        r.rate_a += r.pixel_rates_a[i];
        r.rate_b += r.pixel_rates_b[i];
        r.max_pixel_rate_a = std::max(r.max_pixel_rate_a, r.pixel_rates_a[i]);
        r.max_pixel_rate_b = std::max(r.max_pixel_rate_b, r.pixel_rates_b[i]);
    }
    r.rate_a /= static_cast<double>(npix);
    r.rate_b /= static_cast<double>(npix);
    r.warn_a = r.rate_a > threshold;
    r.warn_b = r.rate_b > threshold;
    return r;
}

} // namespace cpi
