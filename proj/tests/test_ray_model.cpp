#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cpi/ray_model.hpp"
#include "cpi/refocus.hpp"

#include <random>

using namespace cpi;

namespace {
Preset preset() { return paper_like_preset(); }
} // namespace

TEST_CASE("lens correlation apertures") {
    Preset p = preset();
    auto [ca_a, ca_b] = ca_lens(p.optics);
    // |M dz| = 19.5 mm, r = dz/z_o = 52/275
    CHECK(ca_a == doctest::Approx(0.6275).epsilon(1e-3));
    CHECK(ca_a == doctest::Approx(0.63).epsilon(0.02)); // published value
    CHECK(ca_b == doctest::Approx(0.7573).epsilon(1e-3));

    SUBCASE("vanishes with the baseline") {
        p.optics.z_b = p.optics.z_a - 1e-9;
        p.optics.delta_z = 1e-9;
        auto [a2, b2] = ca_lens(p.optics);
        CHECK(a2 < 1e-9);
        CHECK(b2 < 1e-9);
    }
    SUBCASE("swapping the planes swaps the radii") {
        std::swap(p.optics.z_a, p.optics.z_b);
        p.optics.delta_z = p.optics.z_a - p.optics.z_b;
        auto [a2, b2] = ca_lens(p.optics);
        CHECK(a2 == doctest::Approx(ca_b).epsilon(1e-12));
        CHECK(b2 == doctest::Approx(ca_a).epsilon(1e-12));
    }
    SUBCASE("independent of the sign of M") {
        p.optics.magnification = -p.optics.magnification;
        auto [a2, b2] = ca_lens(p.optics);
        CHECK(a2 == doctest::Approx(ca_a).epsilon(1e-12));
        CHECK(b2 == doctest::Approx(ca_b).epsilon(1e-12));
    }
}

TEST_CASE("source correlation aperture") {
    Preset p = preset();
    const double cs = ca_source(p.optics, p.source);
    CHECK(cs == doctest::Approx(0.07036).epsilon(1e-3));
    CHECK(cs == doctest::Approx(0.07).epsilon(0.08)); // published value

    SUBCASE("linear in the source radius") {
        SourceProfile s2 = p.source;
        s2.r_sigma *= 3.0;
        CHECK(ca_source(p.optics, s2) == doctest::Approx(3.0 * cs).epsilon(1e-12));
    }
    SUBCASE("source conjugate to both planes throws") {
        OpticalConfig o = p.optics;
        o.z_a = o.z_b = o.z_sigma; // pathological, bypasses validation on purpose
        CHECK_THROWS_AS(ca_source(o, p.source), NumericError);
    }
    SUBCASE("distant source closes the aperture") {
        OpticalConfig o = p.optics;
        o.z_sigma = 1e9;
        CHECK(ca_source(o, p.source) < 1e-6);
    }
}

TEST_CASE("limiting aperture selection") {
    Preset p = preset();
    ApertureRadii r = compute_apertures(p.optics, p.source);
    CHECK(r.limiting == LimitingAperture::Source);
    CHECK(std::string(to_string(r.limiting)) == "source");
    CHECK(r.ca_source < r.ca_lens_a);
    CHECK(r.ca_source < r.ca_lens_b);

    CHECK(limiting_aperture(0.1, 0.2, 0.3).limiting == LimitingAperture::LensA);
    CHECK(limiting_aperture(0.3, 0.2, 0.25).limiting == LimitingAperture::LensB);
    // tie-break priority: source > lens_b > lens_a
    CHECK(limiting_aperture(0.2, 0.2, 0.2).limiting == LimitingAperture::Source);
    CHECK(limiting_aperture(0.2, 0.2, 0.3).limiting == LimitingAperture::LensB);
    CHECK(std::string(to_string(LimitingAperture::LensA)) == "lens_a");
    CHECK(std::string(to_string(LimitingAperture::LensB)) == "lens_b");
}

TEST_CASE("ray-model correlation") {
    Preset p = preset();
    PupilFunction pupil{p.optics.lens_radius()};

    ObjectMask slit;
    slit.kind = MaskKind::SlitGroup;
    slit.z = 319.0;
    slit.slit_count = 1;
    slit.slit_width_um = 100.0;

    SUBCASE("on-axis value is the product of factors") {
        CHECK(gamma_ray(0.0, 0.0, slit, p.optics, pupil, p.source) == doctest::Approx(1.0));
        ObjectMask gap = slit;
        gap.slit_count = 2;
        gap.slit_distance_um = 400.0;
        // object factor vanishes on axis between the slits
        CHECK(gamma_ray(0.0, 0.0, gap, p.optics, pupil, p.source) == 0.0);
    }

    SUBCASE("degenerate baseline throws") {
        OpticalConfig o = p.optics;
        o.delta_z = 0.0;
        CHECK_THROWS_AS(gamma_ray(0.0, 0.0, slit, o, pupil, p.source), NumericError);
    }

    SUBCASE("object factor at z_a depends on rho_a only") {
        ObjectMask m = slit;
        m.z = p.optics.z_a;
        // open up pupil and source so the object term dominates
        PupilFunction wide{1e9};
        SourceProfile src = p.source;
        src.sigma = 1e9;
        const double g1 = gamma_ray(0.01, -0.3, m, p.optics, wide, src);
        const double g2 = gamma_ray(0.01, 0.25, m, p.optics, wide, src);
        CHECK(g1 == doctest::Approx(g2).epsilon(1e-9));
        CHECK(g1 > 0.0);
        // and it cuts off with rho_a at the magnified slit edge
        CHECK(gamma_ray(1.0, 0.0, m, p.optics, wide, src) == 0.0);
    }

    SUBCASE("correlation band runs along rho_b = -rho_a at the midpoint plane") {
        // z = (z_a + z_b)/2 = 319: the object argument vanishes identically
        // on the anti-diagonal
        ObjectMask m = slit;
        m.slit_width_um = 20.0;
        for (double r = -0.05; r <= 0.05; r += 0.01)
            CHECK(gamma_ray(r, -r, m, p.optics, pupil, p.source) > 0.0);
        // off the band the narrow slit kills the product
        CHECK(gamma_ray(0.3, 0.3, m, p.optics, pupil, p.source) == 0.0);
    }
}

TEST_CASE("image locus") {
    Preset p = preset();
    const double inv_m = -1.0 / p.optics.magnification; // 8/3

    auto la = image_locus(p.optics.z_a, p.optics);
    CHECK(la[0] == doctest::Approx(inv_m).epsilon(1e-12));
    CHECK(la[1] == doctest::Approx(0.0));

    auto lb = image_locus(p.optics.z_b, p.optics);
    CHECK(lb[0] == doctest::Approx(0.0));
    CHECK(lb[1] == doctest::Approx(inv_m).epsilon(1e-12));

    auto lm = image_locus(319.0, p.optics);
    CHECK(lm[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(lm[1] == doctest::Approx(4.0 / 3.0).epsilon(1e-12));

    SUBCASE("matches the first row of the refocusing transform") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> dz(250.0, 420.0);
        for (int i = 0; i < 50; ++i) {
            const double z = dz(rng);
            auto loc = image_locus(z, p.optics);
            RefocusMatrix a = alpha_matrix(z, p.optics.z_sigma, p.optics);
            CHECK(loc[0] == doctest::Approx(a.m00).epsilon(1e-12));
            CHECK(loc[1] == doctest::Approx(a.m01).epsilon(1e-12));
        }
    }

    SUBCASE("degenerate baseline throws") {
        OpticalConfig o = p.optics;
        o.delta_z = 0.0;
        CHECK_THROWS_AS(image_locus(319.0, o), NumericError);
    }
}
