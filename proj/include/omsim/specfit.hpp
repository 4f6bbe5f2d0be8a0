#pragma once

// Frequency-domain cavity reflection with optomechanical dressing, the pump
// photon-number law, and damped least-squares parameter extraction. The model
// is closed-form differentiable; the analytic Jacobian feeds the fitter and
// finite differences stay in the tests as an oracle.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "omsim/constants.hpp"
#include "omsim/levmar.hpp"
#include "omsim/params.hpp"

namespace omsim {

struct ReflectionParams {
    double omega_c = 0.0;     // rad/s
    double Omega_m = 0.0;     // rad/s
    double kappa_int = 0.0;   // rad/s
    double kappa_ext = 0.0;   // rad/s
    double Gamma_m = 0.0;     // rad/s
    double alpha_fano = 0.0;
    double g = 0.0;           // rad/s, enhanced coupling

    double kappa() const { return kappa_int + kappa_ext; }
    double eta() const { return kappa_ext / kappa(); }
};

enum class ReflectionParam : int {
    omega_c = 0,
    Omega_m,
    kappa_int,
    kappa_ext,
    Gamma_m,
    alpha_fano,
    g,
    count
};

inline constexpr int n_reflection_params = static_cast<int>(ReflectionParam::count);

struct ReflectionModel {
    ReflectionParams params;
    double omega_p = 0.0;  // rad/s
    double n_p = 0.0;      // pump photons, informational

    static ReflectionModel from_pump(const ReflectionParams& rp, double omega_p, double g0,
                                     double n_p) {
        ReflectionModel m;
        m.params = rp;
        m.params.g = g0 * std::sqrt(n_p);
        m.omega_p = omega_p;
        m.n_p = n_p;
        return m;
    }
};

// n_p = 4 P_in kappa_ext / (hbar omega_p (kappa^2 + 4 (omega_p - omega_c)^2))
inline double pump_photon_number(double P_in, double omega_p, const ReflectionParams& p) {
    if (P_in < 0.0) throw std::invalid_argument("pump_photon_number: P_in must be >= 0");
    const double dp = omega_p - p.omega_c;
    return 4.0 * P_in * p.kappa_ext / (hbar * omega_p * (p.kappa() * p.kappa() + 4.0 * dp * dp));
}

inline double enhanced_coupling(double g0, double n_p) {
    if (n_p < 0.0) throw std::invalid_argument("enhanced_coupling: n_p must be >= 0");
    return g0 * std::sqrt(n_p);
}

// Complex reflection coefficient and its parameter gradient.
struct ReflectionEval {
    cplx R;
    std::array<cplx, n_reflection_params> dR;  // indexed by ReflectionParam
};

inline cplx reflection(double omega, const ReflectionModel& m) {
    const ReflectionParams& p = m.params;
    const double kappa = p.kappa();
    const cplx A = kappa + 2.0 * im * (omega - 2.0 * m.omega_p + p.omega_c);
    const double dwp = omega - m.omega_p;
    const cplx B = p.Omega_m * p.Omega_m - dwp * dwp + im * dwp * p.Gamma_m;
    const cplx chi = 4.0 * p.g * p.g * p.Omega_m / (A * B);
    const cplx D = kappa + 2.0 * im * (omega - p.omega_c) + 4.0 * chi * (m.omega_p - p.omega_c);
    return 1.0 / (1.0 + im * p.alpha_fano) - 2.0 * p.kappa_ext * (1.0 - im * chi) / D;
}

inline ReflectionEval reflection_with_gradient(double omega, const ReflectionModel& m) {
    const ReflectionParams& p = m.params;
    const double kappa = p.kappa();
    const double dp = m.omega_p - p.omega_c;
    const double dwp = omega - m.omega_p;

    const cplx A = kappa + 2.0 * im * (omega - 2.0 * m.omega_p + p.omega_c);
    const cplx B = p.Omega_m * p.Omega_m - dwp * dwp + im * dwp * p.Gamma_m;
    const cplx chi = 4.0 * p.g * p.g * p.Omega_m / (A * B);
    const cplx D = kappa + 2.0 * im * (omega - p.omega_c) + 4.0 * chi * dp;
    const cplx one_michi = 1.0 - im * chi;
    const cplx F = 2.0 * p.kappa_ext * one_michi / D;

    // chi partials
    const cplx dchi_dg = 8.0 * p.g * p.Omega_m / (A * B);
    const cplx dchi_dkappa = -chi / A;
    const cplx dchi_dGamma = -chi * im * dwp / B;
    const cplx dchi_dOmega = chi * (1.0 / p.Omega_m - 2.0 * p.Omega_m / B);
    const cplx dchi_domega_c = -chi * 2.0 * im / A;

    // D partials
    const cplx dD_dkappa = 1.0 + 4.0 * dp * dchi_dkappa;
    const cplx dD_dg = 4.0 * dp * dchi_dg;
    const cplx dD_dGamma = 4.0 * dp * dchi_dGamma;
    const cplx dD_dOmega = 4.0 * dp * dchi_dOmega;
    const cplx dD_domega_c = -2.0 * im + 4.0 * (dp * dchi_domega_c - chi);

    auto dF = [&](cplx dchi, cplx dD) {
        return 2.0 * p.kappa_ext * ((-im * dchi) * D - one_michi * dD) / (D * D);
    };

    ReflectionEval e;
    e.R = 1.0 / (1.0 + im * p.alpha_fano) - F;
    e.dR[static_cast<int>(ReflectionParam::omega_c)] = -dF(dchi_domega_c, dD_domega_c);
    e.dR[static_cast<int>(ReflectionParam::Omega_m)] = -dF(dchi_dOmega, dD_dOmega);
    e.dR[static_cast<int>(ReflectionParam::kappa_int)] = -dF(dchi_dkappa, dD_dkappa);
    e.dR[static_cast<int>(ReflectionParam::kappa_ext)] =
        -(F / p.kappa_ext + dF(dchi_dkappa, dD_dkappa));
    e.dR[static_cast<int>(ReflectionParam::Gamma_m)] = -dF(dchi_dGamma, dD_dGamma);
    e.dR[static_cast<int>(ReflectionParam::alpha_fano)] =
        -im / ((1.0 + im * p.alpha_fano) * (1.0 + im * p.alpha_fano));
    e.dR[static_cast<int>(ReflectionParam::g)] = -dF(dchi_dg, dD_dg);
    return e;
}

struct Spectrum {
    std::vector<double> freq;   // rad/s, strictly increasing
    std::vector<cplx> value;    // complex reflection samples
    std::vector<double> weights;  // optional, per point
    double omega_p = 0.0;       // pump frequency for this spectrum
    double n_p = 0.0;

    void validate() const {
        if (freq.size() != value.size()) throw std::invalid_argument("Spectrum: length mismatch");
        for (std::size_t i = 1; i < freq.size(); ++i)
            if (freq[i] <= freq[i - 1])
                throw std::invalid_argument("Spectrum: freq must be strictly increasing");
    }
};

enum class FitSpace { complex_iq, power_db };

inline double power_db(cplx R) { return 10.0 * std::log10(std::norm(R)); }

struct SpectrumFitResult {
    ReflectionParams params;
    Eigen::MatrixXd covariance;  // over the free parameters, physical units
    std::vector<ReflectionParam> free_params;
    double residual_norm = 0.0;
    bool converged = false;
    std::string message;
};

// Joint damped least-squares fit of one set of model parameters to one or
// more spectra taken at known pump frequencies.
inline SpectrumFitResult fit_reflection(const std::vector<Spectrum>& spectra,
                                        const ReflectionParams& initial_guess,
                                        const std::array<bool, n_reflection_params>& free_mask,
                                        FitSpace space = FitSpace::complex_iq,
                                        const LevMarOptions& lm_opt = {}) {
    if (spectra.empty()) throw std::invalid_argument("fit_reflection: no spectra");
    std::size_t n_points = 0;
    for (const auto& s : spectra) {
        s.validate();
        n_points += s.freq.size();
    }
    std::vector<int> free_idx;
    for (int i = 0; i < n_reflection_params; ++i)
        if (free_mask[i]) free_idx.push_back(i);
    const int n_free = static_cast<int>(free_idx.size());
    if (n_free == 0) throw std::invalid_argument("fit_reflection: no free parameters");
    const std::size_t rows_per_point = space == FitSpace::complex_iq ? 2 : 1;
    if (n_points * rows_per_point < static_cast<std::size_t>(n_free))
        throw std::invalid_argument("fit_reflection: fewer data points than free parameters");

    auto get = [](const ReflectionParams& p, int i) -> double {
        switch (static_cast<ReflectionParam>(i)) {
            case ReflectionParam::omega_c: return p.omega_c;
            case ReflectionParam::Omega_m: return p.Omega_m;
            case ReflectionParam::kappa_int: return p.kappa_int;
            case ReflectionParam::kappa_ext: return p.kappa_ext;
            case ReflectionParam::Gamma_m: return p.Gamma_m;
            case ReflectionParam::alpha_fano: return p.alpha_fano;
            case ReflectionParam::g: return p.g;
            default: return 0.0;
        }
    };
    auto set = [](ReflectionParams& p, int i, double v) {
        switch (static_cast<ReflectionParam>(i)) {
            case ReflectionParam::omega_c: p.omega_c = v; break;
            case ReflectionParam::Omega_m: p.Omega_m = v; break;
            case ReflectionParam::kappa_int: p.kappa_int = v; break;
            case ReflectionParam::kappa_ext: p.kappa_ext = v; break;
            case ReflectionParam::Gamma_m: p.Gamma_m = v; break;
            case ReflectionParam::alpha_fano: p.alpha_fano = v; break;
            case ReflectionParam::g: p.g = v; break;
            default: break;
        }
    };

    // internal scaling by the initial guess keeps the normal equations sane
    std::vector<double> scale(free_idx.size());
    for (std::size_t k = 0; k < free_idx.size(); ++k) {
        const double v = get(initial_guess, free_idx[k]);
        scale[k] = std::abs(v) > 1e-30 ? std::abs(v) : 1.0;
    }

    auto to_params = [&](const Eigen::VectorXd& x) {
        ReflectionParams p = initial_guess;
        for (std::size_t k = 0; k < free_idx.size(); ++k) set(p, free_idx[k], x(k) * scale[k]);
        return p;
    };

    auto residuals = [&](const Eigen::VectorXd& x) {
        const ReflectionParams p = to_params(x);
        Eigen::VectorXd r(n_points * rows_per_point);
        std::size_t row = 0;
        for (const auto& s : spectra) {
            ReflectionModel m{p, s.omega_p, s.n_p};
            for (std::size_t i = 0; i < s.freq.size(); ++i) {
                const cplx R = reflection(s.freq[i], m);
                const double w = s.weights.empty() ? 1.0 : s.weights[i];
                if (space == FitSpace::complex_iq) {
                    r(row++) = w * (R.real() - s.value[i].real());
                    r(row++) = w * (R.imag() - s.value[i].imag());
                } else {
                    r(row++) = w * (power_db(R) - power_db(s.value[i]));
                }
            }
        }
        return r;
    };

    auto jacobian = [&](const Eigen::VectorXd& x) {
        const ReflectionParams p = to_params(x);
        Eigen::MatrixXd J(n_points * rows_per_point, n_free);
        std::size_t row = 0;
        for (const auto& s : spectra) {
            ReflectionModel m{p, s.omega_p, s.n_p};
            for (std::size_t i = 0; i < s.freq.size(); ++i) {
                const ReflectionEval e = reflection_with_gradient(s.freq[i], m);
                const double w = s.weights.empty() ? 1.0 : s.weights[i];
                for (int k = 0; k < n_free; ++k) {
                    const cplx d = e.dR[free_idx[k]] * scale[k];
                    if (space == FitSpace::complex_iq) {
                        J(row, k) = w * d.real();
                        J(row + 1, k) = w * d.imag();
                    } else {
                        const double dpw = (20.0 / std::log(10.0)) *
                                           (std::conj(e.R) * d).real() /
                                           std::max(std::norm(e.R), 1e-300);
                        J(row, k) = w * dpw;
                    }
                }
                row += rows_per_point;
            }
        }
        return J;
    };

    LevMarSolver solver(residuals, jacobian, lm_opt);
    const LevMarResult lr = solver.solve(Eigen::VectorXd::Ones(n_free));

    SpectrumFitResult out;
    out.params = to_params(lr.x);
    out.residual_norm = lr.residual_norm;
    out.converged = lr.converged;
    out.message = lr.message;
    for (int i : free_idx) out.free_params.push_back(static_cast<ReflectionParam>(i));
    out.covariance = lr.covariance;
    for (int a = 0; a < n_free; ++a)
        for (int b = 0; b < n_free; ++b) out.covariance(a, b) *= scale[a] * scale[b];
    return out;
}

// Documented initial-guess heuristic: omega_c from the global minimum of |R|,
// kappa from its full width at half depth.
inline ReflectionParams initial_guess_from_spectrum(const Spectrum& s) {
    s.validate();
    std::size_t i_min = 0;
    double r_min = 1e300, r_max = -1e300;
    for (std::size_t i = 0; i < s.freq.size(); ++i) {
        const double a = std::abs(s.value[i]);
        if (a < r_min) {
            r_min = a;
            i_min = i;
        }
        r_max = std::max(r_max, a);
    }
    const double half = 0.5 * (r_min + r_max);
    std::size_t lo = i_min, hi = i_min;
    while (lo > 0 && std::abs(s.value[lo]) < half) --lo;
    while (hi + 1 < s.freq.size() && std::abs(s.value[hi]) < half) ++hi;
    ReflectionParams p;
    p.omega_c = s.freq[i_min];
    p.kappa_int = 0.9 * (s.freq[hi] - s.freq[lo]);
    p.kappa_ext = 0.1 * (s.freq[hi] - s.freq[lo]);
    return p;
}

}  // namespace omsim
