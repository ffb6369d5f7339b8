#pragma once

#include "cpi/core.hpp"
#include "cpi/ndarray.hpp"

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <vector>

namespace cpi {

enum class Arm { A, B };

// Uniform midpoint grid on [-extent/2, extent/2], samples at cell centers.
struct PlaneGrid {
    double extent = 0.0; // mm
    int n = 0;

    double pitch() const { return extent / static_cast<double>(n); }
    double coord(int i) const { return (static_cast<double>(i) - 0.5 * (n - 1)) * pitch(); }
    double half() const { return extent / 2.0; }
};

// The paper leaves the source->object Fresnel distance ambiguous between
// the bare source distance and the source-to-object separation; both are
// implemented, tests pin only convention-independent properties.
enum class SourcePhaseConvention { BareZSigma, SourceToObject };

struct GridSpec {
    PlaneGrid source, object, lens, det_a, det_b;
    int dims = 1; // 1 or 2
    SourcePhaseConvention convention = SourcePhaseConvention::SourceToObject;

    int source_points() const { return dims == 1 ? source.n : source.n * source.n; }
    int det_points(Arm arm) const {
        const PlaneGrid& g = (arm == Arm::A) ? det_a : det_b;
        return dims == 1 ? g.n : g.n * g.n;
    }
};

// Throws NumericError naming the offending propagation leg when the
// Fresnel phase change between adjacent samples reaches pi.
void check_nyquist(const GridSpec& grid, const OpticalConfig& cfg, double mask_z);

// Builds a 1D grid that satisfies the Nyquist guard with margin: source
// spans +-3 sigma, the lens its full aperture, and the sample counts are
// solved from the phase-slope bounds.
GridSpec auto_grid(const OpticalConfig& cfg, const SourceProfile& source, double mask_z,
                   double object_extent_mm, int det_n, double det_extent_mm,
                   SourcePhaseConvention convention = SourcePhaseConvention::SourceToObject);

// Complex kernel mapping source samples to detector-j samples; includes the
// source->object Fresnel phase, the object transmission and the lens
// propagator. Quadrature weights are folded in, so
// gamma = |sum_s S(s) K_a[s,da] conj(K_b[s,db])|^2.
struct TransferKernel {
    Arm arm = Arm::A;
    Eigen::MatrixXcd k; // source_points x det_points
    GridSpec grid;
    double mask_z = 0.0;
};

// Eq.-level propagator phase (before multiplication by the wavenumber).
double propagator_phase(double rho_o, double rho_l, double rho_j, Arm arm, double mask_z,
                        const OpticalConfig& cfg);

// Midpoint quadrature of the lens integral for a single (rho_o, rho_j) pair.
std::complex<double> propagator_p(double rho_o, double rho_j, Arm arm, double mask_z,
                                  const OpticalConfig& cfg, const PupilFunction& pupil,
                                  const GridSpec& grid);

std::pair<TransferKernel, TransferKernel> build_kernels(const ObjectMask& mask,
                                                        const OpticalConfig& cfg,
                                                        const PupilFunction& pupil,
                                                        const SourceProfile& source,
                                                        const GridSpec& grid);

// Source intensity weights (including quadrature weight) on the source grid.
Eigen::VectorXd source_weights(const SourceProfile& source, const GridSpec& grid);

// Analytic correlation function for a delta-correlated chaotic source.
// Result axes carry the detector grid scales.
NdArray gamma_analytic(const TransferKernel& ka, const TransferKernel& kb,
                       const SourceProfile& source);

// Mean intensity image <I_j(rho_j)> on detector j (the conventional image).
NdArray mean_intensity(const TransferKernel& k, const SourceProfile& source);

struct FieldRealization {
    std::uint64_t index = 0;
    Eigen::VectorXcd e_a, e_b;
};

// Deterministic chaotic-field sampler: realization r depends only on
// (seed, r), independent of chunking or scheduling.
class FieldSampler {
public:
    FieldSampler(const TransferKernel& ka, const TransferKernel& kb, const SourceProfile& source,
                 std::uint64_t seed);

    // Fields for realizations [first, first+count) as columns.
    void sample(std::uint64_t first, int count, Eigen::MatrixXcd& e_a, Eigen::MatrixXcd& e_b) const;

    FieldRealization sample_one(std::uint64_t index) const;

    // Test hook: deterministic all-ones source amplitudes.
    FieldRealization sample_deterministic() const;

private:
    const TransferKernel* ka_;
    const TransferKernel* kb_;
    Eigen::VectorXd sqrt_weights_;
    std::uint64_t seed_;
};

} // namespace cpi
