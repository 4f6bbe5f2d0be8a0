#pragma once

// Linearized optomechanical dynamics of the cavity/mechanics pair in the
// frame rotating at (omega_c, Omega_m). Only the pump envelopes g-(t), g+(t)
// appear. Two engines share one drift matrix: deterministic propagation of
// the first and normally-ordered second moments, and a Wigner-sampled Monte
// Carlo over classical amplitudes (half-quantum vacuum noise in the initial
// conditions and the input noise, symmetric-to-normal conversion at readout).

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "omsim/constants.hpp"
#include "omsim/params.hpp"

namespace omsim {

// Flat-top pulse with Gaussian rise/fall of characteristic time sigma,
// truncated 6 sigma out. g(t) in rad/s.
struct PulseEnvelope {
    double g_peak = 0.0;  // rad/s
    double sigma = 0.0;   // s
    double flat = 0.0;    // s
    double t_start = 0.0; // s

    bool active() const { return g_peak > 0.0; }
    double edge_cut() const { return 6.0 * sigma; }
    double t_end() const { return t_start + 2.0 * edge_cut() + flat; }

    double value(double t) const {
        if (!active()) return 0.0;
        const double ec = edge_cut();
        const double u = t - t_start;
        if (u <= 0.0 || u >= 2.0 * ec + flat) return 0.0;
        if (u < ec) {
            const double d = u - ec;
            return g_peak * std::exp(-d * d / (2.0 * sigma * sigma));
        }
        if (u <= ec + flat) return g_peak;
        const double d = u - ec - flat;
        return g_peak * std::exp(-d * d / (2.0 * sigma * sigma));
    }

    // Closed-form pulse area: flat top plus both (truncated) Gaussian edges.
    double area() const {
        if (!active()) return 0.0;
        double edges = 0.0;
        if (sigma > 0.0)
            edges = sigma * std::sqrt(two_pi) * std::erf(edge_cut() / (sigma * std::sqrt(2.0)));
        return g_peak * (flat + edges);
    }
};

struct PumpSchedule {
    PulseEnvelope minus_pump;  // Delta_p = -Omega_m, beam splitter
    PulseEnvelope plus_pump;   // Delta_p = +Omega_m, two-mode squeezer
    double handover_delay = 0.0;  // pump off, qubit being brought to resonance

    double duration() const {
        double t = 0.0;
        if (minus_pump.active()) t = std::max(t, minus_pump.t_end());
        if (plus_pump.active()) t = std::max(t, plus_pump.t_end());
        return t + handover_delay;
    }

    double g_minus(double t) const { return minus_pump.value(t); }
    double g_plus(double t) const { return plus_pump.value(t); }
};

// theta = integral of 2 g(t) dt for the single active pump.
inline double interaction_phase(const PumpSchedule& s) {
    if (s.minus_pump.active() && s.plus_pump.active())
        throw std::invalid_argument("interaction_phase: both pumps active, scalar theta undefined");
    return 2.0 * (s.minus_pump.area() + s.plus_pump.area());
}

// Builds a pulse achieving a given theta at a given peak coupling. If the
// requested area is below what the Gaussian edges alone provide, the peak is
// reduced and the flat top dropped.
inline PulseEnvelope envelope_for_theta(double theta, double g_peak, double sigma,
                                        double t_start = 0.0) {
    if (theta < 0.0) throw std::invalid_argument("envelope_for_theta: theta must be >= 0");
    PulseEnvelope e;
    e.sigma = sigma;
    e.t_start = t_start;
    if (theta == 0.0) return e;
    const double edge_area =
        sigma > 0.0 ? sigma * std::sqrt(two_pi) * std::erf(6.0 / std::sqrt(2.0)) : 0.0;
    const double target_area = theta / 2.0;
    if (g_peak * edge_area >= target_area) {
        e.g_peak = target_area / std::max(edge_area, 1e-300);
        e.flat = 0.0;
    } else {
        e.g_peak = g_peak;
        e.flat = (target_area - g_peak * edge_area) / g_peak;
    }
    return e;
}

struct GaussianState {
    cplx mean_a{0.0, 0.0};  // <a>
    cplx mean_b{0.0, 0.0};  // <b>
    double n_aa = 0.0;      // <a^dag a>
    double n_bb = 0.0;      // <b^dag b>
    cplx x_ab{0.0, 0.0};    // <a b>
    cplx y_ab{0.0, 0.0};    // <a^dag b>
    cplx u_aa{0.0, 0.0};    // <a a>
    cplx v_bb{0.0, 0.0};    // <b b>

    double thermal_a() const { return n_aa - std::norm(mean_a); }
    double thermal_b() const { return n_bb - std::norm(mean_b); }

    static GaussianState displaced_thermal(double nbar_c, cplx alpha_c, double nbar_m,
                                           cplx alpha_m) {
        GaussianState s;
        s.mean_a = alpha_c;
        s.mean_b = alpha_m;
        s.n_aa = nbar_c + std::norm(alpha_c);
        s.n_bb = nbar_m + std::norm(alpha_m);
        s.x_ab = alpha_c * alpha_m;
        s.y_ab = std::conj(alpha_c) * alpha_m;
        s.u_aa = alpha_c * alpha_c;
        s.v_bb = alpha_m * alpha_m;
        return s;
    }

    // Physicality of the thermal components and the two-mode correlation.
    bool physical(double tol = 1e-9) const {
        if (thermal_a() < -tol || thermal_b() < -tol) return false;
        const double corr = std::norm(x_ab - mean_a * mean_b);
        return corr <= (thermal_a() + 1.0) * (thermal_b() + 1.0) + tol;
    }
};

// 4x4 drift over (a, b, a^dag, b^dag), sign pattern of the damped EoM.
inline Eigen::Matrix4cd drift_matrix(double g_minus, double g_plus, double kappa,
                                     double gamma_m) {
    Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
    m(0, 0) = -kappa / 2.0;
    m(0, 1) = im * g_minus;
    m(0, 3) = im * g_plus;
    m(1, 0) = im * g_minus;
    m(1, 1) = -gamma_m / 2.0;
    m(1, 2) = im * g_plus;
    m(2, 1) = -im * g_plus;
    m(2, 2) = -kappa / 2.0;
    m(2, 3) = -im * g_minus;
    m(3, 0) = -im * g_plus;
    m(3, 2) = -im * g_minus;
    m(3, 3) = -gamma_m / 2.0;
    return m;
}

namespace detail {

// Closed set of moment equations for quadratic dynamics with thermal inputs.
// The squeezer's spontaneous "+1" enters through d<ab>/dt.
struct MomentVector {
    std::array<double, 14> v{};  // re/im of means, n_aa, n_bb, re/im of X,Y,U,V

    static MomentVector from_state(const GaussianState& s) {
        MomentVector m;
        m.v = {s.mean_a.real(), s.mean_a.imag(), s.mean_b.real(), s.mean_b.imag(),
               s.n_aa,          s.n_bb,          s.x_ab.real(),   s.x_ab.imag(),
               s.y_ab.real(),   s.y_ab.imag(),   s.u_aa.real(),   s.u_aa.imag(),
               s.v_bb.real(),   s.v_bb.imag()};
        return m;
    }

    GaussianState to_state() const {
        GaussianState s;
        s.mean_a = {v[0], v[1]};
        s.mean_b = {v[2], v[3]};
        s.n_aa = v[4];
        s.n_bb = v[5];
        s.x_ab = {v[6], v[7]};
        s.y_ab = {v[8], v[9]};
        s.u_aa = {v[10], v[11]};
        s.v_bb = {v[12], v[13]};
        return s;
    }

    MomentVector& axpy(double c, const MomentVector& o) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += c * o.v[i];
        return *this;
    }
};

inline MomentVector moment_rhs(const MomentVector& mv, double gm, double gp, double kappa,
                               double kappa_int, double kappa_ext, double gamma_m,
                               const BathSpec& baths, cplx drive_b) {
    const GaussianState s = mv.to_state();
    GaussianState d;
    d.mean_a = -0.5 * kappa * s.mean_a + im * gm * s.mean_b + im * gp * std::conj(s.mean_b);
    d.mean_b = im * gm * s.mean_a - 0.5 * gamma_m * s.mean_b + im * gp * std::conj(s.mean_a) +
               drive_b;
    const double imX = s.x_ab.imag();
    const double imY = s.y_ab.imag();
    d.n_aa = -kappa * s.n_aa - 2.0 * gm * imY + 2.0 * gp * imX + kappa_int * baths.n_int_eq +
             kappa_ext * baths.n_ext_eq;
    d.n_bb = -gamma_m * s.n_bb + 2.0 * gm * imY + 2.0 * gp * imX + gamma_m * baths.n_mech_eq;
    d.x_ab = -0.5 * (kappa + gamma_m) * s.x_ab + im * gm * (s.u_aa + s.v_bb) +
             im * gp * (s.n_aa + s.n_bb + 1.0);
    d.y_ab = -0.5 * (kappa + gamma_m) * s.y_ab + im * gm * (s.n_aa - s.n_bb) +
             im * gp * (std::conj(s.u_aa) - s.v_bb);
    d.u_aa = -kappa * s.u_aa + 2.0 * im * gm * s.x_ab + 2.0 * im * gp * std::conj(s.y_ab);
    d.v_bb = -gamma_m * s.v_bb + 2.0 * im * gm * s.x_ab + 2.0 * im * gp * s.y_ab;
    return MomentVector::from_state(d);
}

}  // namespace detail

struct PropagateOptions {
    double dt = 0.0;              // 0 -> auto
    double record_stride = 0.0;   // 0 -> final state only
    std::function<cplx(double)> drive_b;  // classical force on <b>, optional
};

struct TrajectoryPoint {
    double t = 0.0;
    double theta = 0.0;  // accumulated phase of whichever pump is active
    GaussianState state;
};

inline double auto_dt(const PumpSchedule& schedule, const DeviceParams& p, double factor) {
    const double scale = std::max({schedule.minus_pump.g_peak, schedule.plus_pump.g_peak,
                                   p.kappa_total, p.Gamma_m, 1.0});
    return 1.0 / (factor * scale);
}

inline std::vector<TrajectoryPoint> propagate_moments(const GaussianState& initial,
                                                      const PumpSchedule& schedule,
                                                      const BathSpec& baths,
                                                      const DeviceParams& p,
                                                      const PropagateOptions& opt = {}) {
    using detail::MomentVector;
    const double t_final = schedule.duration();
    double dt = opt.dt > 0.0 ? opt.dt : auto_dt(schedule, p, 400.0);
    const double g_scale =
        std::max({schedule.minus_pump.g_peak, schedule.plus_pump.g_peak, p.kappa_total});
    if (g_scale > 0.0 && dt > 1.0 / (20.0 * g_scale))
        throw std::invalid_argument("propagate_moments: dt too coarse");
    const int n_steps = std::max(1, static_cast<int>(std::ceil(t_final / std::max(dt, 1e-15))));
    dt = t_final / n_steps;

    const double kappa = p.kappa_total;
    auto rhs = [&](const MomentVector& m, double t) {
        const cplx drv = opt.drive_b ? opt.drive_b(t) : cplx{0.0, 0.0};
        return detail::moment_rhs(m, schedule.g_minus(t), schedule.g_plus(t), kappa,
                                  p.kappa_int, p.kappa_ext, p.Gamma_m, baths, drv);
    };

    std::vector<TrajectoryPoint> out;
    MomentVector m = MomentVector::from_state(initial);
    double theta = 0.0;
    double next_record = 0.0;
    auto record = [&](double t) { out.push_back({t, theta, m.to_state()}); };
    if (opt.record_stride > 0.0) {
        record(0.0);
        next_record = opt.record_stride;
    }

    for (int step = 0; step < n_steps; ++step) {
        const double t = step * dt;
        const MomentVector k1 = rhs(m, t);
        MomentVector m2 = m;
        m2.axpy(0.5 * dt, k1);
        const MomentVector k2 = rhs(m2, t + 0.5 * dt);
        MomentVector m3 = m;
        m3.axpy(0.5 * dt, k2);
        const MomentVector k3 = rhs(m3, t + 0.5 * dt);
        MomentVector m4 = m;
        m4.axpy(dt, k3);
        const MomentVector k4 = rhs(m4, t + dt);
        m.axpy(dt / 6.0, k1);
        m.axpy(dt / 3.0, k2);
        m.axpy(dt / 3.0, k3);
        m.axpy(dt / 6.0, k4);

        // Simpson accumulation of theta(t) alongside the state
        const double g0t = schedule.g_minus(t) + schedule.g_plus(t);
        const double g1t = schedule.g_minus(t + 0.5 * dt) + schedule.g_plus(t + 0.5 * dt);
        const double g2t = schedule.g_minus(t + dt) + schedule.g_plus(t + dt);
        theta += 2.0 * dt * (g0t + 4.0 * g1t + g2t) / 6.0;

        const double tnow = (step + 1) * dt;
        if (opt.record_stride > 0.0 && (tnow + 1e-15 >= next_record || step == n_steps - 1)) {
            record(tnow);
            next_record += opt.record_stride;
        }
    }
    if (out.empty() || out.back().t < t_final) record(t_final);
    if (!out.back().state.physical(1e-6 * std::max(1.0, out.back().state.n_aa)))
        throw std::runtime_error("propagate_moments: physicality invariant breached");
    return out;
}

// Lossless closed-form solutions as a function of the accumulated phase.
enum class InteractionKind { beam_splitter, squeezer };

struct LosslessResult {
    double n_aa = 0.0;
    double n_bb = 0.0;
    cplx alpha_c{0.0, 0.0};
    cplx alpha_m{0.0, 0.0};
};

inline LosslessResult analytic_lossless(double theta, InteractionKind kind, double n_aa_i,
                                        double n_bb_i, cplx alpha_c_i = {}, cplx alpha_m_i = {}) {
    LosslessResult r;
    if (kind == InteractionKind::beam_splitter) {
        const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
        r.n_aa = n_aa_i * c * c + n_bb_i * s * s;
        r.n_bb = n_bb_i * c * c + n_aa_i * s * s;
        r.alpha_c = alpha_c_i * c + im * alpha_m_i * s;
        r.alpha_m = alpha_m_i * c + im * alpha_c_i * s;
    } else {
        const double ch = std::cosh(theta / 2.0), sh = std::sinh(theta / 2.0);
        r.n_aa = n_aa_i * ch * ch + (n_bb_i + 1.0) * sh * sh;
        r.n_bb = n_bb_i * ch * ch + (n_aa_i + 1.0) * sh * sh;
        r.alpha_c = alpha_c_i * ch + im * std::conj(alpha_m_i) * sh;
        r.alpha_m = alpha_m_i * ch + im * std::conj(alpha_c_i) * sh;
    }
    return r;
}

// --- Monte Carlo oracle ---------------------------------------------------

struct MonteCarloResult {
    GaussianState estimate;
    GaussianState std_error;  // per-moment standard errors (means: per quadrature)
    int n_samples = 0;
};

// Classical-amplitude sampler in the Wigner picture. Initial product
// displaced-thermal state; each mode carries symmetric variance nbar + 1/2.
inline MonteCarloResult monte_carlo_propagate(const GaussianState& initial,
                                              const PumpSchedule& schedule,
                                              const BathSpec& baths, const DeviceParams& p,
                                              int n_samples, std::uint64_t seed,
                                              double dt_in = 0.0) {
    if (n_samples < 100)
        throw std::invalid_argument("monte_carlo_propagate: n_samples must be >= 100");
    const double t_final = schedule.duration();
    double dt = dt_in > 0.0 ? dt_in : auto_dt(schedule, p, 200.0);
    const int n_steps = std::max(1, static_cast<int>(std::ceil(t_final / std::max(dt, 1e-15))));
    dt = t_final / n_steps;

    const double nth_a = std::max(0.0, initial.thermal_a());
    const double nth_b = std::max(0.0, initial.thermal_b());
    const double kappa = p.kappa_total;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto cgauss = [&](double var_total) {
        const double s = std::sqrt(var_total / 2.0);
        return cplx{s * gauss(rng), s * gauss(rng)};
    };

    // accumulators for the symmetric moments
    cplx sum_a{}, sum_b{}, sum_ab{}, sum_cab{}, sum_aa{}, sum_bb{};
    double sum_na = 0.0, sum_nb = 0.0, sum_na2 = 0.0, sum_nb2 = 0.0;
    double sum_ab_re2 = 0.0, sum_ab_im2 = 0.0, sum_cab_re2 = 0.0, sum_cab_im2 = 0.0;
    double sum_a_re2 = 0.0, sum_a_im2 = 0.0, sum_b_re2 = 0.0, sum_b_im2 = 0.0;

    const double var_in_a = (baths.n_int_eq + 0.5) * p.kappa_int + (baths.n_ext_eq + 0.5) * p.kappa_ext;
    const double var_in_b = (baths.n_mech_eq + 0.5) * p.Gamma_m;

    for (int k = 0; k < n_samples; ++k) {
        cplx a = initial.mean_a + cgauss(nth_a + 0.5);
        cplx b = initial.mean_b + cgauss(nth_b + 0.5);
        for (int step = 0; step < n_steps; ++step) {
            const double t = step * dt;
            auto rhs = [&](cplx av, cplx bv, double tt) {
                const double gm = schedule.g_minus(tt), gp = schedule.g_plus(tt);
                const cplx da = -0.5 * kappa * av + im * gm * bv + im * gp * std::conj(bv);
                const cplx db = im * gm * av - 0.5 * p.Gamma_m * bv + im * gp * std::conj(av);
                return std::pair<cplx, cplx>{da, db};
            };
            auto [k1a, k1b] = rhs(a, b, t);
            auto [k2a, k2b] = rhs(a + 0.5 * dt * k1a, b + 0.5 * dt * k1b, t + 0.5 * dt);
            auto [k3a, k3b] = rhs(a + 0.5 * dt * k2a, b + 0.5 * dt * k2b, t + 0.5 * dt);
            auto [k4a, k4b] = rhs(a + dt * k3a, b + dt * k3b, t + dt);
            a += (dt / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
            b += (dt / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
            // additive thermal + vacuum input noise, Ito increment
            a += cgauss(var_in_a * dt);
            b += cgauss(var_in_b * dt);
        }
        const double na = std::norm(a), nb = std::norm(b);
        sum_a += a;
        sum_b += b;
        sum_na += na;
        sum_nb += nb;
        sum_na2 += na * na;
        sum_nb2 += nb * nb;
        const cplx ab = a * b, cab = std::conj(a) * b;
        sum_ab += ab;
        sum_cab += cab;
        sum_aa += a * a;
        sum_bb += b * b;
        sum_ab_re2 += ab.real() * ab.real();
        sum_ab_im2 += ab.imag() * ab.imag();
        sum_cab_re2 += cab.real() * cab.real();
        sum_cab_im2 += cab.imag() * cab.imag();
        sum_a_re2 += a.real() * a.real();
        sum_a_im2 += a.imag() * a.imag();
        sum_b_re2 += b.real() * b.real();
        sum_b_im2 += b.imag() * b.imag();
    }

    const double N = static_cast<double>(n_samples);
    MonteCarloResult res;
    res.n_samples = n_samples;
    GaussianState& e = res.estimate;
    e.mean_a = sum_a / N;
    e.mean_b = sum_b / N;
    e.n_aa = sum_na / N - 0.5;  // symmetric -> normal ordering
    e.n_bb = sum_nb / N - 0.5;
    e.x_ab = sum_ab / N;
    e.y_ab = sum_cab / N;
    e.u_aa = sum_aa / N;
    e.v_bb = sum_bb / N;

    auto se = [&](double sum2, double mean) {
        const double var = std::max(0.0, sum2 / N - mean * mean);
        return std::sqrt(var / N);
    };
    GaussianState& s = res.std_error;
    s.mean_a = {se(sum_a_re2, e.mean_a.real()), se(sum_a_im2, e.mean_a.imag())};
    s.mean_b = {se(sum_b_re2, e.mean_b.real()), se(sum_b_im2, e.mean_b.imag())};
    s.n_aa = se(sum_na2, sum_na / N);
    s.n_bb = se(sum_nb2, sum_nb / N);
    s.x_ab = {se(sum_ab_re2, e.x_ab.real()), se(sum_ab_im2, e.x_ab.imag())};
    s.y_ab = {se(sum_cab_re2, e.y_ab.real()), se(sum_cab_im2, e.y_ab.imag())};
    return res;
}

}  // namespace omsim
