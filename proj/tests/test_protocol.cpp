#include <doctest.h>

#include <cmath>

#include "omsim/protocol.hpp"
#include "test_helpers.hpp"

using namespace omsim;
using omsim_test::lossless_params;
using omsim_test::table_params;

namespace {

ExperimentPlan lossless_plan() {
    ExperimentPlan plan;
    plan.lossless = true;
    plan.g_peak = two_pi * 198e3;
    plan.theta = pi;
    plan.precool_g = 0.0;
    return plan;
}

}  // namespace

TEST_CASE("heating correction formula and clipping") {
    const HeatingCorrection h = heating_correction(0.5, 0.2, 1e6, 2e-6);
    CHECK(h.value == doctest::Approx(0.5 - 0.2 * (1.0 - std::exp(-2.0))));
    CHECK(!h.clipped);

    const HeatingCorrection c = heating_correction(0.05, 0.5, 1e6, 10e-6);
    CHECK(c.value == 0.0);
    CHECK(c.clipped);

    const DeviceParams p = table_params();
    CHECK(kappa_opt_for(InteractionKind::beam_splitter, p) ==
          doctest::Approx(p.kappa_total / 2.0));
    CHECK(kappa_opt_for(InteractionKind::squeezer, p) == doctest::Approx(p.kappa_total));
}

TEST_CASE("detector comparison truth table") {
    for (double theta : {1.2, pi / 2.0, 2.7}) {
        for (int dc : {0, 1}) {
            for (int dm : {0, 1}) {
                const DetectorComparison r = detector_comparison(theta, 2.0, dc, dm);
                CHECK(r.number_asymmetry == doctest::Approx(double(dm)).epsilon(1e-12));
                CHECK(r.linear_asymmetry == doctest::Approx(double(dc)).epsilon(1e-12));
            }
        }
    }
    CHECK_THROWS_AS(detector_comparison(0.0, 1.0, 1, 1), std::invalid_argument);
}

TEST_CASE("preparation without precooling takes the bath occupancy") {
    const DeviceParams p = table_params();
    BathSpec baths;
    baths.n_mech_eq = 0.25;
    ExperimentPlan plan = lossless_plan();
    plan.target_alpha_m2 = 9.0;
    const PreparedState prep = prepare_mechanics(plan, p, baths);
    CHECK(prep.nbar_m_i == doctest::Approx(0.25));
    CHECK(!prep.cooling_insufficient);
    CHECK(std::norm(prep.state.mean_b) == doctest::Approx(9.0));
    CHECK(prep.state.n_bb == doctest::Approx(9.25));

    baths.n_mech_eq = 32.0;
    const PreparedState hot = prepare_mechanics(plan, p, baths);
    CHECK(hot.cooling_insufficient);
}

TEST_CASE("precooling reaches a cold mechanical state") {
    const DeviceParams p = table_params();
    BathSpec baths;
    baths.n_mech_eq = 32.0;
    baths.n_int_eq = 0.15;
    ExperimentPlan plan;
    plan.precool_g = two_pi * 198e3;
    plan.precool_duration = 20e-6;
    plan.g_peak = two_pi * 198e3;
    const PreparedState prep = prepare_mechanics(plan, p, baths);
    CHECK(prep.nbar_m_i < 1.0);
    CHECK(!prep.cooling_insufficient);
}

TEST_CASE("schedule_for achieves the requested phase on the right pump") {
    const DeviceParams p = table_params();
    ExperimentPlan plan;
    plan.g_peak = two_pi * 198e3;
    plan.handover_delay = 100e-9;

    plan.interaction = InteractionKind::beam_splitter;
    PumpSchedule bs = schedule_for(plan, p, 2.0);
    CHECK(bs.minus_pump.active());
    CHECK(!bs.plus_pump.active());
    CHECK(interaction_phase(bs) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(bs.handover_delay == doctest::Approx(100e-9));

    plan.interaction = InteractionKind::squeezer;
    PumpSchedule sq = schedule_for(plan, p, 1.0);
    CHECK(sq.plus_pump.active());
    CHECK(!sq.minus_pump.active());

    ExperimentPlan unset;
    CHECK_THROWS_AS(schedule_for(unset, p, 1.0), std::invalid_argument);
}

TEST_CASE("coupling from pump photon number") {
    const DeviceParams p = table_params();
    ExperimentPlan plan;
    plan.n_p = 3.8e5;
    CHECK(plan.coupling(p) == doctest::Approx(p.g0 * std::sqrt(3.8e5)));
    plan.g_peak = two_pi * 198e3;
    CHECK(plan.coupling(p) == doctest::Approx(two_pi * 198e3));
}

TEST_CASE("lossless gain calibration gives the trigonometric slopes") {
    const DeviceParams p = lossless_params();
    BathSpec baths;
    baths.n_mech_eq = 0.25;
    ExperimentPlan plan = lossless_plan();
    plan.alpha_m2_grid = {0.0, 5.0, 10.0, 15.0, 20.0, 25.0};
    const GainCalibration cal = calibrate_gains(plan, p, baths);
    CHECK(cal.G_minus == doctest::Approx(std::pow(std::sin(pi / 2.0), 2)).epsilon(1e-9));
    CHECK(cal.G_plus == doctest::Approx(std::pow(std::sinh(pi / 2.0), 2)).epsilon(1e-9));
    CHECK(cal.r2_minus == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cal.r2_plus == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(!cal.poor_linearity);
}

TEST_CASE("gain calibration rejects degenerate sweeps") {
    const DeviceParams p = table_params();
    BathSpec baths;
    ExperimentPlan plan = lossless_plan();
    plan.alpha_m2_grid = {1.0};
    CHECK_THROWS_AS(calibrate_gains(plan, p, baths), std::invalid_argument);
    plan.alpha_m2_grid = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(calibrate_gains(plan, p, baths), std::invalid_argument);
}

TEST_CASE("lossless vacuum extraction recovers exactly one quantum") {
    const DeviceParams p = lossless_params();
    BathSpec baths;
    baths.n_mech_eq = 0.25;
    ExperimentPlan plan = lossless_plan();
    plan.alpha_m2_grid = {0.0, 5.0, 12.0, 25.0};
    const GainCalibration cal = calibrate_gains(plan, p, baths);
    const auto pts = extract_vacuum(plan, p, baths, cal);
    REQUIRE(pts.size() == 4);
    for (const auto& pt : pts) {
        CHECK(pt.difference == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(!pt.heating_clipped);
    }
}

TEST_CASE("lossless theta sweep matches the analytic interaction map") {
    const DeviceParams p = lossless_params();
    BathSpec baths;
    baths.n_mech_eq = 0.25;
    ExperimentPlan plan = lossless_plan();
    plan.target_alpha_m2 = 23.0;
    plan.theta_grid = {0.5, pi, 2.0, 5.0};
    const auto pts = run_interaction_sweep(plan, p, baths);
    REQUIRE(pts.size() == 4);
    for (const auto& pt : pts) {
        const double c2 = std::pow(std::cos(pt.theta / 2.0), 2);
        const double s2 = std::pow(std::sin(pt.theta / 2.0), 2);
        CHECK(pt.n_aa() == doctest::Approx(23.25 * s2).epsilon(1e-9));
        CHECK(pt.n_bb() == doctest::Approx(23.25 * c2).epsilon(1e-9));
        CHECK(pt.alpha_c2() == doctest::Approx(23.0 * s2).epsilon(1e-9));
    }
}

TEST_CASE("lossy interaction sweep stays physical and dissipates") {
    const DeviceParams p = table_params();
    BathSpec baths;
    baths.n_mech_eq = 0.25;
    baths.n_int_eq = 0.15;
    ExperimentPlan plan;
    plan.g_peak = two_pi * 198e3;
    plan.theta = pi;
    plan.target_alpha_m2 = 10.0;
    plan.interaction = InteractionKind::beam_splitter;
    const PreparedState prep = prepare_mechanics(plan, p, baths);
    const SweepPoint pt = run_single(plan, p, baths, prep.state, pi, pi);
    // losses keep the transferred displacement below the lossless value
    CHECK(pt.alpha_c2() < 10.0);
    CHECK(pt.alpha_c2() > 0.0);
    CHECK(pt.final_state.physical(1e-6));
    CHECK(pt.duration > 0.0);
}
