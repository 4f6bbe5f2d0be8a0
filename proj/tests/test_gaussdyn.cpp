#include <doctest.h>

#include <cmath>

#include "omsim/gaussdyn.hpp"
#include "test_helpers.hpp"

using namespace omsim;
using omsim_test::lossless_params;
using omsim_test::table_params;

namespace {

// Simpson quadrature oracle for the pulse area.
double numeric_area(const PulseEnvelope& e, int n = 40001) {
    const double t0 = e.t_start, t1 = e.t_end();
    const double h = (t1 - t0) / (n - 1);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * e.value(t0 + i * h);
    }
    return s * h / 3.0;
}

PumpSchedule single_pump(InteractionKind kind, double theta, double g_peak, double sigma) {
    PumpSchedule s;
    const PulseEnvelope env = envelope_for_theta(theta, g_peak, sigma);
    if (kind == InteractionKind::beam_splitter)
        s.minus_pump = env;
    else
        s.plus_pump = env;
    return s;
}

}  // namespace

TEST_CASE("pulse area closed form matches quadrature") {
    PulseEnvelope e;
    e.g_peak = two_pi * 198e3;
    e.sigma = 200e-9;
    e.flat = 750e-9;
    CHECK(e.area() == doctest::Approx(numeric_area(e)).epsilon(1e-9));

    PulseEnvelope edge_only = e;
    edge_only.flat = 0.0;
    CHECK(edge_only.area() == doctest::Approx(numeric_area(edge_only)).epsilon(1e-9));
}

TEST_CASE("envelope_for_theta round-trips through interaction_phase") {
    for (double theta : {0.1, 1.0, pi, 5.0, two_pi}) {
        PumpSchedule s = single_pump(InteractionKind::beam_splitter, theta, two_pi * 198e3, 200e-9);
        CHECK(interaction_phase(s) == doctest::Approx(theta).epsilon(1e-12));
    }
    // below the edge-only area the peak is reduced instead
    const PulseEnvelope tiny = envelope_for_theta(0.01, two_pi * 198e3, 200e-9);
    CHECK(tiny.flat == 0.0);
    CHECK(tiny.g_peak < two_pi * 198e3);
    CHECK(2.0 * tiny.area() == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("interaction_phase rejects simultaneous pumps") {
    PumpSchedule s;
    s.minus_pump = envelope_for_theta(1.0, 1e6, 100e-9);
    s.plus_pump = envelope_for_theta(1.0, 1e6, 100e-9);
    CHECK_THROWS_AS(interaction_phase(s), std::invalid_argument);
}

TEST_CASE("beam splitter swaps occupancies at theta = pi, lossless") {
    const DeviceParams p = lossless_params();
    const BathSpec baths{};
    const GaussianState s0 = GaussianState::displaced_thermal(0.1, {}, 5.0, {});
    const PumpSchedule sched = single_pump(InteractionKind::beam_splitter, pi, two_pi * 198e3, 200e-9);
    const auto traj = propagate_moments(s0, sched, baths, p);
    CHECK(traj.back().state.n_aa == doctest::Approx(5.0).epsilon(1e-8));
    CHECK(traj.back().state.n_bb == doctest::Approx(0.1).epsilon(1e-7));
    CHECK(traj.back().theta == doctest::Approx(pi).epsilon(1e-9));
}

TEST_CASE("squeezer from double vacuum gives sinh^2(theta/2) in both modes") {
    const DeviceParams p = lossless_params();
    const GaussianState vac{};
    for (double theta : {0.5, pi, 4.0}) {
        const PumpSchedule sched = single_pump(InteractionKind::squeezer, theta, two_pi * 198e3, 200e-9);
        PropagateOptions opt;
        opt.dt = auto_dt(sched, p, 1600.0);
        const auto traj = propagate_moments(vac, sched, BathSpec{}, p, opt);
        const double expect = std::pow(std::sinh(theta / 2.0), 2);
        CHECK(traj.back().state.n_aa == doctest::Approx(expect).epsilon(1e-8));
        CHECK(traj.back().state.n_bb == doctest::Approx(expect).epsilon(1e-8));
    }
}

TEST_CASE("lossless conservation laws of the two interactions") {
    const DeviceParams p = lossless_params();
    const GaussianState s0 = GaussianState::displaced_thermal(0.3, {1.0, 0.5}, 2.0, {-0.5, 2.0});

    const PumpSchedule bs = single_pump(InteractionKind::beam_splitter, 1.7, two_pi * 198e3, 200e-9);
    const auto tb = propagate_moments(s0, bs, BathSpec{}, p);
    CHECK(tb.back().state.n_aa + tb.back().state.n_bb ==
          doctest::Approx(s0.n_aa + s0.n_bb).epsilon(1e-9));

    const PumpSchedule sq = single_pump(InteractionKind::squeezer, 1.7, two_pi * 198e3, 200e-9);
    const auto ts = propagate_moments(s0, sq, BathSpec{}, p);
    CHECK(ts.back().state.n_aa - ts.back().state.n_bb ==
          doctest::Approx(s0.n_aa - s0.n_bb).epsilon(1e-9));
}

TEST_CASE("moments match the analytic map for displaced inputs") {
    const DeviceParams p = lossless_params();
    const cplx alpha_m{4.0, -1.5};
    const GaussianState s0 = GaussianState::displaced_thermal(0.0, {}, 0.25, alpha_m);
    for (InteractionKind kind : {InteractionKind::beam_splitter, InteractionKind::squeezer}) {
        for (double theta : {0.8, pi, 2.5}) {
            const PumpSchedule sched = single_pump(kind, theta, two_pi * 198e3, 200e-9);
            PropagateOptions opt;
            opt.dt = auto_dt(sched, p, 1600.0);
            const auto traj = propagate_moments(s0, sched, BathSpec{}, p, opt);
            const LosslessResult ref =
                analytic_lossless(theta, kind, s0.n_aa, s0.n_bb, s0.mean_a, s0.mean_b);
            CHECK(std::abs(traj.back().state.n_aa - ref.n_aa) < 1e-7 * (1.0 + ref.n_aa));
            CHECK(std::abs(traj.back().state.n_bb - ref.n_bb) < 1e-7 * (1.0 + ref.n_bb));
            CHECK(std::abs(traj.back().state.mean_a - ref.alpha_c) < 1e-7 * (1.0 + std::abs(ref.alpha_c)));
            CHECK(std::abs(traj.back().state.mean_b - ref.alpha_m) < 1e-7 * (1.0 + std::abs(ref.alpha_m)));
        }
    }
}

TEST_CASE("sideband cooling drives the mechanics below its bath") {
    const DeviceParams p = table_params();
    BathSpec baths;
    baths.n_mech_eq = 32.0;
    baths.n_int_eq = 0.1;
    PumpSchedule cool;
    cool.minus_pump.g_peak = two_pi * 198e3;
    cool.minus_pump.sigma = 200e-9;
    cool.minus_pump.flat = 20e-6;
    const GaussianState s0 = GaussianState::displaced_thermal(0.0, {}, 32.0, {});
    const auto traj = propagate_moments(s0, cool, baths, p);
    CHECK(traj.back().state.thermal_b() < 1.0);
    CHECK(traj.back().state.thermal_b() > 0.0);
}

TEST_CASE("cavity relaxes to the weighted bath occupancy with no pump") {
    const DeviceParams p = table_params();
    BathSpec baths;
    baths.n_int_eq = 0.3;
    baths.n_ext_eq = 0.0;
    PumpSchedule idle;
    idle.handover_delay = 60e-6;  // many cavity lifetimes
    const GaussianState s0 = GaussianState::displaced_thermal(2.0, {}, 0.0, {});
    PropagateOptions opt;
    opt.dt = 2e-9;
    const auto traj = propagate_moments(s0, idle, baths, p, opt);
    const double n_eq = (p.kappa_int * 0.3) / p.kappa_total;
    CHECK(traj.back().state.n_aa == doctest::Approx(n_eq).epsilon(1e-4));
}

TEST_CASE("unphysical correlations are rejected at readout") {
    const DeviceParams p = table_params();
    GaussianState bad{};
    bad.x_ab = {5.0, 0.0};  // correlation with no occupancy to support it
    PumpSchedule idle;
    idle.handover_delay = 1e-9;
    CHECK_THROWS_AS(propagate_moments(bad, idle, BathSpec{}, p), std::runtime_error);
}

TEST_CASE("Monte Carlo agrees with the moment engine") {
    const DeviceParams p = table_params();
    BathSpec baths;
    baths.n_mech_eq = 2.0;
    baths.n_int_eq = 0.15;
    const GaussianState s0 = GaussianState::displaced_thermal(0.0, {}, 0.5, {2.0, 0.0});
    const PumpSchedule sched = single_pump(InteractionKind::beam_splitter, pi, two_pi * 198e3, 200e-9);
    const auto traj = propagate_moments(s0, sched, baths, p);
    const GaussianState ref = traj.back().state;
    const MonteCarloResult mc = monte_carlo_propagate(s0, sched, baths, p, 4000, 12345);
    const auto within = [](double est, double ref_v, double se, double nsig) {
        return std::abs(est - ref_v) <= nsig * std::max(se, 1e-12);
    };
    CHECK(within(mc.estimate.n_aa, ref.n_aa, mc.std_error.n_aa, 6.0));
    CHECK(within(mc.estimate.n_bb, ref.n_bb, mc.std_error.n_bb, 6.0));
    CHECK(within(mc.estimate.mean_a.real(), ref.mean_a.real(), mc.std_error.mean_a.real(), 6.0));
    CHECK(within(mc.estimate.mean_a.imag(), ref.mean_a.imag(), mc.std_error.mean_a.imag(), 6.0));
    CHECK(within(mc.estimate.mean_b.real(), ref.mean_b.real(), mc.std_error.mean_b.real(), 6.0));
    CHECK(within(mc.estimate.x_ab.real(), ref.x_ab.real(), mc.std_error.x_ab.real(), 6.0));
    CHECK(within(mc.estimate.x_ab.imag(), ref.x_ab.imag(), mc.std_error.x_ab.imag(), 6.0));
}

TEST_CASE("Monte Carlo determinism and sample-count guard") {
    const DeviceParams p = table_params();
    const PumpSchedule sched = single_pump(InteractionKind::beam_splitter, 1.0, two_pi * 198e3, 200e-9);
    CHECK_THROWS_AS(monte_carlo_propagate(GaussianState{}, sched, BathSpec{}, p, 50, 1),
                    std::invalid_argument);
    const MonteCarloResult a = monte_carlo_propagate(GaussianState{}, sched, BathSpec{}, p, 200, 7);
    const MonteCarloResult b = monte_carlo_propagate(GaussianState{}, sched, BathSpec{}, p, 200, 7);
    CHECK(a.estimate.n_aa == b.estimate.n_aa);
    CHECK(a.estimate.mean_a == b.estimate.mean_a);
}

TEST_CASE("drift matrix sign pattern") {
    const Eigen::Matrix4cd m = drift_matrix(2.0, 3.0, 0.4, 0.02);
    CHECK(m(0, 0) == cplx(-0.2, 0.0));
    CHECK(m(1, 1) == cplx(-0.01, 0.0));
    CHECK(m(0, 1) == im * 2.0);
    CHECK(m(0, 3) == im * 3.0);
    CHECK(m(2, 3) == -im * 2.0);
    CHECK(m(3, 0) == -im * 3.0);
    // lower block is the conjugate of the upper block
    CHECK(m(2, 2) == std::conj(m(0, 0)));
    CHECK(m(3, 2) == std::conj(m(1, 0)));
}
