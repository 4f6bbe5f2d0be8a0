#pragma once

// Full-experiment orchestration: mechanical pre-cool and displacement,
// pulsed beam-splitter / squeezer interactions, gain calibration against a
// displacement sweep, heating correction, and the vacuum-quantum extraction.

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "omsim/constants.hpp"
#include "omsim/gaussdyn.hpp"
#include "omsim/params.hpp"

namespace omsim {

struct ExperimentPlan {
    // preparation
    double precool_g = 0.0;          // rad/s peak coupling of the cooling pump
    double precool_duration = 20e-6; // s
    double target_alpha_m2 = 0.0;    // displacement drive target |alpha_m^i|^2
    double initial_cavity_nbar = 0.0;

    // interaction
    InteractionKind interaction = InteractionKind::beam_splitter;
    double n_p = 0.0;                // pump photons (sets g_peak = g0 sqrt(n_p))
    double g_peak = 0.0;             // rad/s; overrides n_p when > 0
    double pulse_sigma = 200e-9;     // s, Gaussian edge time
    double handover_delay = 100e-9;  // s, qubit brought to resonance
    double theta = pi;               // interaction phase target

    // sweeps
    std::vector<double> theta_grid;
    std::vector<double> alpha_m2_grid;

    bool lossless = false;

    double coupling(const DeviceParams& p) const {
        if (g_peak > 0.0) return g_peak;
        return p.g0 * std::sqrt(n_p);
    }
};

struct PreparedState {
    GaussianState state;      // mechanics prepared, cavity near ground state
    double nbar_m_i = 0.0;
    double alpha_m2_i = 0.0;
    bool cooling_insufficient = false;  // n_bar_m_i >= 1, reported not fatal
};

// Steady-state sideband cooling computed with the same moment engine used
// everywhere else, then the displacement drive sets the coherent component.
inline PreparedState prepare_mechanics(const ExperimentPlan& plan, const DeviceParams& params,
                                       const BathSpec& baths) {
    PreparedState out;
    double nbar_m = baths.n_mech_eq;
    if (plan.precool_g > 0.0 && plan.precool_duration > 0.0) {
        PumpSchedule cool;
        cool.minus_pump.g_peak = plan.precool_g;
        cool.minus_pump.sigma = plan.pulse_sigma;
        cool.minus_pump.flat = plan.precool_duration;
        GaussianState start = GaussianState::displaced_thermal(0.0, {}, baths.n_mech_eq, {});
        PropagateOptions opt;
        opt.dt = auto_dt(cool, params, 200.0);
        const auto traj = propagate_moments(start, cool, baths, params, opt);
        nbar_m = std::max(0.0, traj.back().state.thermal_b());
    }
    out.nbar_m_i = nbar_m;
    out.alpha_m2_i = plan.target_alpha_m2;
    out.cooling_insufficient = nbar_m >= 1.0;
    const cplx alpha_m = std::sqrt(plan.target_alpha_m2);
    out.state =
        GaussianState::displaced_thermal(plan.initial_cavity_nbar, {}, nbar_m, alpha_m);
    return out;
}

inline PumpSchedule schedule_for(const ExperimentPlan& plan, const DeviceParams& params,
                                 double theta) {
    PumpSchedule s;
    const double g = plan.coupling(params);
    if (g <= 0.0) throw std::invalid_argument("schedule_for: pump coupling not set");
    const PulseEnvelope env = envelope_for_theta(theta, g, plan.pulse_sigma);
    if (plan.interaction == InteractionKind::beam_splitter)
        s.minus_pump = env;
    else
        s.plus_pump = env;
    s.handover_delay = plan.handover_delay;
    return s;
}

struct SweepPoint {
    double x = 0.0;      // sweep coordinate (theta or |alpha_m^i|^2)
    double theta = 0.0;  // achieved interaction phase
    double duration = 0.0;
    GaussianState final_state;

    double n_aa() const { return final_state.n_aa; }
    double n_bb() const { return final_state.n_bb; }
    double alpha_c2() const { return std::norm(final_state.mean_a); }
    double alpha_m2() const { return std::norm(final_state.mean_b); }
};

inline SweepPoint run_single(const ExperimentPlan& plan, const DeviceParams& params,
                             const BathSpec& baths, const GaussianState& initial, double theta,
                             double x) {
    SweepPoint pt;
    pt.x = x;
    if (plan.lossless) {
        const LosslessResult r =
            analytic_lossless(theta, plan.interaction, initial.n_aa, initial.n_bb,
                              initial.mean_a, initial.mean_b);
        pt.theta = theta;
        pt.final_state = GaussianState::displaced_thermal(
            r.n_aa - std::norm(r.alpha_c), r.alpha_c, r.n_bb - std::norm(r.alpha_m), r.alpha_m);
        return pt;
    }
    const PumpSchedule sched = schedule_for(plan, params, theta);
    const auto traj = propagate_moments(initial, sched, baths, params);
    pt.theta = traj.back().theta;
    pt.duration = traj.back().t;
    pt.final_state = traj.back().state;
    return pt;
}

inline std::vector<SweepPoint> run_interaction_sweep(const ExperimentPlan& plan,
                                                     const DeviceParams& params,
                                                     const BathSpec& baths) {
    const PreparedState prep = prepare_mechanics(plan, params, baths);
    std::vector<SweepPoint> out;
    out.reserve(plan.theta_grid.size());
    for (double theta : plan.theta_grid)
        out.push_back(run_single(plan, params, baths, prep.state, theta, theta));
    return out;
}

struct HeatingCorrection {
    double value = 0.0;
    bool clipped = false;  // over-correction warning
};

// n_c^pm = n_c - n_int_eq (1 - e^{-kappa_opt t}); kappa_opt is kappa/2 for
// the beam splitter and kappa for the squeezer.
inline HeatingCorrection heating_correction(double n_c_total, double n_int_eq, double kappa_opt,
                                            double t) {
    HeatingCorrection h;
    h.value = n_c_total - n_int_eq * (1.0 - std::exp(-kappa_opt * t));
    if (h.value < 0.0) {
        h.value = 0.0;
        h.clipped = true;
    }
    return h;
}

inline double kappa_opt_for(InteractionKind kind, const DeviceParams& params) {
    return kind == InteractionKind::beam_splitter ? params.kappa_total / 2.0 : params.kappa_total;
}

struct GainCalibration {
    double G_minus = 0.0;
    double G_plus = 0.0;
    double theta = pi;
    double r2_minus = 0.0;
    double r2_plus = 0.0;
    bool poor_linearity = false;  // R^2 < 0.99 on either branch
};

namespace detail {

// slope of y vs x through the origin, with R^2 relative to that model
inline std::pair<double, double> origin_slope(const std::vector<double>& x,
                                              const std::vector<double>& y) {
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
    }
    const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - slope * x[i];
        ss_res += r * r;
    }
    const double r2 = syy > 0.0 ? 1.0 - ss_res / syy : 0.0;
    return {slope, r2};
}

}  // namespace detail

// G_pm = slope of |alpha_c^pm|^2 vs |alpha_m^i|^2 at fixed theta, fitted
// through the origin over a displacement sweep dominated by the coherent part.
inline GainCalibration calibrate_gains(const ExperimentPlan& plan, const DeviceParams& params,
                                       const BathSpec& baths) {
    if (plan.alpha_m2_grid.size() < 2)
        throw std::invalid_argument("calibrate_gains: degenerate calibration sweep");
    double span = 0.0;
    for (double a2 : plan.alpha_m2_grid) span = std::max(span, a2);
    if (span <= 0.0)
        throw std::invalid_argument("calibrate_gains: zero-displacement-only sweep is degenerate");

    GainCalibration cal;
    cal.theta = plan.theta;
    for (InteractionKind kind :
         {InteractionKind::beam_splitter, InteractionKind::squeezer}) {
        ExperimentPlan p = plan;
        p.interaction = kind;
        std::vector<double> xs, ys;
        for (double a2 : plan.alpha_m2_grid) {
            p.target_alpha_m2 = a2;
            const PreparedState prep = prepare_mechanics(p, params, baths);
            const SweepPoint pt = run_single(p, params, baths, prep.state, p.theta, a2);
            xs.push_back(a2);
            ys.push_back(pt.alpha_c2());
        }
        const auto [slope, r2] = detail::origin_slope(xs, ys);
        if (kind == InteractionKind::beam_splitter) {
            cal.G_minus = slope;
            cal.r2_minus = r2;
        } else {
            cal.G_plus = slope;
            cal.r2_plus = r2;
        }
    }
    cal.poor_linearity = cal.r2_minus < 0.99 || cal.r2_plus < 0.99;
    if (!(cal.G_minus > 0.0 && cal.G_plus > 0.0))
        throw std::runtime_error("calibrate_gains: non-positive gain");
    return cal;
}

struct VacuumExtractionPoint {
    double alpha_m2_i = 0.0;
    double n_minus_referred = 0.0;  // <a^dag a>_- / G-
    double n_plus_referred = 0.0;   // <a^dag a>_+ / G+
    double difference = 0.0;        // estimates the commutator contribution
    bool heating_clipped = false;
};

// Runs both interactions at theta over the displacement grid, removes the
// pump-induced cavity heating, and refers occupancies back to the input.
inline std::vector<VacuumExtractionPoint> extract_vacuum(const ExperimentPlan& plan,
                                                         const DeviceParams& params,
                                                         const BathSpec& baths,
                                                         const GainCalibration& gains) {
    if (plan.alpha_m2_grid.empty())
        throw std::invalid_argument("extract_vacuum: empty displacement grid");
    std::vector<VacuumExtractionPoint> out;
    for (double a2 : plan.alpha_m2_grid) {
        VacuumExtractionPoint pt;
        pt.alpha_m2_i = a2;
        double referred[2] = {0.0, 0.0};
        int idx = 0;
        for (InteractionKind kind :
             {InteractionKind::beam_splitter, InteractionKind::squeezer}) {
            ExperimentPlan p = plan;
            p.interaction = kind;
            p.target_alpha_m2 = a2;
            const PreparedState prep = prepare_mechanics(p, params, baths);
            const SweepPoint r = run_single(p, params, baths, prep.state, p.theta, a2);
            double n_total = r.n_aa();
            if (!plan.lossless) {
                const HeatingCorrection h = heating_correction(
                    n_total, baths.n_int_eq, kappa_opt_for(kind, params), r.duration);
                n_total = h.value;
                pt.heating_clipped = pt.heating_clipped || h.clipped;
            }
            const double G = kind == InteractionKind::beam_splitter ? gains.G_minus : gains.G_plus;
            referred[idx++] = n_total / G;
        }
        pt.n_minus_referred = referred[0];
        pt.n_plus_referred = referred[1];
        pt.difference = referred[1] - referred[0];
        out.push_back(pt);
    }
    return out;
}

struct DetectorComparison {
    double number_asymmetry = 0.0;  // sensitive to the mechanical commutator
    double linear_asymmetry = 0.0;  // sensitive to the cavity commutator
};

// Lossless bookkeeping with the commutators as switches: [a,a^dag] = delta_c,
// [b,b^dag] = delta_m. The cavity starts in the ground state.
inline DetectorComparison detector_comparison(double theta, double n_bb_i, int delta_c,
                                              int delta_m) {
    const double s2 = std::pow(std::sin(theta / 2.0), 2);
    const double c2 = std::pow(std::cos(theta / 2.0), 2);
    const double sh2 = std::pow(std::sinh(theta / 2.0), 2);
    const double ch2 = std::pow(std::cosh(theta / 2.0), 2);
    if (s2 == 0.0 || sh2 == 0.0)
        throw std::invalid_argument("detector_comparison: theta must not be a multiple of 2 pi");

    DetectorComparison r;
    // number detector: the squeezer amplifies <b b^dag> = <b^dag b> + delta_m
    const double n_minus = n_bb_i * s2;
    const double n_plus = (n_bb_i + delta_m) * sh2;
    r.number_asymmetry = n_plus / sh2 - n_minus / s2;

    // linear detector: symmetrized moments, then commutators subtracted back
    const double sym_a_i = delta_c;                   // <a^dag a + a a^dag>_i, ground state
    const double sym_b_i = 2.0 * n_bb_i + delta_m;    // <b^dag b + b b^dag>_i
    const double sym_minus = sym_a_i * c2 + sym_b_i * s2;
    const double sym_plus = sym_a_i * ch2 + sym_b_i * sh2;
    const double lin_minus = (sym_minus - delta_c) / 2.0;
    const double lin_plus = (sym_plus - delta_c) / 2.0;
    r.linear_asymmetry = lin_plus / sh2 - lin_minus / s2;
    return r;
}

}  // namespace omsim
