#pragma once

// Photon-number distribution forward model and inference. The detector
// protocol (qubit starting in |g>) only sees the number populations p_n, so
// the forward model evolves the Fock basis states once and caches the per-n
// qubit traces; a candidate distribution is then a linear blend.

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "omsim/constants.hpp"
#include "omsim/jcsim.hpp"
#include "omsim/levmar.hpp"
#include "omsim/params.hpp"

namespace omsim {

enum class DistributionFamily { explicit_pn, thermal, coherent, displaced_thermal };

struct PhotonDistribution {
    DistributionFamily family = DistributionFamily::explicit_pn;
    double nbar = 0.0;       // thermal component
    double alpha2 = 0.0;     // coherent component |alpha|^2
    std::vector<double> pn;  // explicit populations (materialized or given)

    double mean_occupancy() const {
        if (family == DistributionFamily::explicit_pn) {
            double m = 0.0;
            for (std::size_t n = 0; n < pn.size(); ++n) m += static_cast<double>(n) * pn[n];
            return m;
        }
        return nbar + alpha2;
    }

    static PhotonDistribution thermal_state(double nbar) {
        return {DistributionFamily::thermal, nbar, 0.0, {}};
    }
    static PhotonDistribution coherent_state(double alpha2) {
        return {DistributionFamily::coherent, 0.0, alpha2, {}};
    }
    static PhotonDistribution displaced_thermal_state(double nbar, double alpha2) {
        return {DistributionFamily::displaced_thermal, nbar, alpha2, {}};
    }
    static PhotonDistribution vacuum() { return thermal_state(0.0); }
};

// Poisson tail rule for the truncation level.
inline int recommended_n_max(double mean_occupancy, int support_cap = 40) {
    const int n = static_cast<int>(std::ceil(mean_occupancy + 6.0 * std::sqrt(mean_occupancy) + 10.0));
    return std::min(n, support_cap);
}

// Explicit populations for the chosen family at truncation n_max.
// Displaced thermal uses the Laguerre closed form evaluated through a scaled
// recurrence T_n = nbar^n L_n(x); the density-matrix displacement oracle that
// validates it lives in the tests.
inline std::vector<double> materialize_pn(const PhotonDistribution& d, int n_max,
                                          double tail_bound = 1e-4) {
    if (n_max < 0) throw std::invalid_argument("materialize_pn: n_max must be >= 0");
    std::vector<double> p(n_max + 1, 0.0);
    switch (d.family) {
        case DistributionFamily::explicit_pn: {
            for (int n = 0; n <= n_max && n < static_cast<int>(d.pn.size()); ++n) p[n] = d.pn[n];
            break;
        }
        case DistributionFamily::thermal: {
            const double nb = d.nbar;
            for (int n = 0; n <= n_max; ++n)
                p[n] = std::pow(nb / (1.0 + nb), n) / (1.0 + nb);
            break;
        }
        case DistributionFamily::coherent: {
            const double mu = d.alpha2;
            double term = std::exp(-mu);
            for (int n = 0; n <= n_max; ++n) {
                p[n] = term;
                term *= mu / (n + 1.0);
            }
            break;
        }
        case DistributionFamily::displaced_thermal: {
            const double nb = d.nbar, mu = d.alpha2;
            if (nb < 1e-12) {
                return materialize_pn(PhotonDistribution::coherent_state(mu), n_max, tail_bound);
            }
            if (mu < 1e-300) {
                return materialize_pn(PhotonDistribution::thermal_state(nb), n_max, tail_bound);
            }
            // p_n = nb^n/(1+nb)^{n+1} exp(-mu/(1+nb)) L_n(-mu/(nb(1+nb)))
            const double x = -mu / (nb * (1.0 + nb));
            const double pref = std::exp(-mu / (1.0 + nb)) / (1.0 + nb);
            const double r = nb / (1.0 + nb);
            // T_n = r^n L_n(x):  (n+1) T_{n+1} = r (2n+1-x) T_n - n r^2 T_{n-1}
            double Tm1 = 0.0, T = 1.0;
            for (int n = 0; n <= n_max; ++n) {
                p[n] = pref * T;
                const double Tp1 = (r * (2.0 * n + 1.0 - x) * T - n * r * r * Tm1) / (n + 1.0);
                Tm1 = T;
                T = Tp1;
            }
            break;
        }
    }
    double total = 0.0;
    for (double v : p) total += v;
    if (d.family != DistributionFamily::explicit_pn && total < 1.0 - tail_bound)
        throw std::invalid_argument("materialize_pn: tail bound violated, larger n_max required");
    return p;
}

struct RabiTrace {
    std::vector<double> tau;   // s, increasing
    std::vector<double> p_e;   // reported values in [0,1]
    ReadoutModel readout;
    std::vector<double> sigma;  // optional per-point uncertainty

    void validate() const {
        if (tau.size() != p_e.size()) throw std::invalid_argument("RabiTrace: length mismatch");
        for (std::size_t i = 1; i < tau.size(); ++i)
            if (tau[i] <= tau[i - 1]) throw std::invalid_argument("RabiTrace: tau must increase");
    }
};

// Detector-protocol forward model with per-Fock-state trace caching.
class RabiForwardModel {
public:
    RabiForwardModel(const DeviceParams& params, int n_max, std::vector<double> tau_grid,
                     QubitControl control = {}, ReadoutModel readout = {},
                     bool lossless = false)
        : sim_(params, n_max, lossless), control_(control), readout_(readout),
          tau_grid_(std::move(tau_grid)) {}

    const std::vector<double>& tau_grid() const { return tau_grid_; }
    const JcSimulator& simulator() const { return sim_; }
    const ReadoutModel& readout() const { return readout_; }

    // Ideal P_e(tau) for the cavity in Fock |n>, qubit |g>.
    const std::vector<double>& fock_trace(int n) const {
        auto it = cache_.find(n);
        if (it != cache_.end()) return it->second;
        const QubitCavityState s0 = sim_.fock_state(0, n);
        auto [pos, inserted] = cache_.emplace(n, sim_.rabi_trace(s0, control_, tau_grid_));
        return pos->second;
    }

    // Reported trace for a distribution: linear blend of cached Fock traces
    // (licensed by linearity of the Lindblad map in the initial state).
    RabiTrace forward(const PhotonDistribution& d) const {
        const std::vector<double> pn = materialize_pn(d, sim_.n_max());
        RabiTrace t;
        t.tau = tau_grid_;
        t.readout = readout_;
        t.p_e.assign(tau_grid_.size(), 0.0);
        for (int n = 0; n <= sim_.n_max(); ++n) {
            if (pn[n] == 0.0) continue;
            const std::vector<double>& f = fock_trace(n);
            for (std::size_t i = 0; i < t.p_e.size(); ++i) t.p_e[i] += pn[n] * f[i];
        }
        // a flux offset also degrades the measurement contrast
        for (double& v : t.p_e) v = readout_.contrast * contrast_scale_ * v + readout_.offset;
        return t;
    }

    void set_flux_offset(double delta_offset, double contrast_scale = 1.0) {
        if (delta_offset != control_.delta_resonant) {
            cache_.clear();  // ideal traces depend on the detuning
            control_.delta_resonant = delta_offset;
        }
        contrast_scale_ = contrast_scale;
    }

private:
    JcSimulator sim_;
    QubitControl control_;
    ReadoutModel readout_;
    std::vector<double> tau_grid_;
    double contrast_scale_ = 1.0;
    mutable std::map<int, std::vector<double>> cache_;
};

inline RabiTrace rabi_forward(const PhotonDistribution& d, const DeviceParams& params,
                              const QubitControl& control, const std::vector<double>& tau_grid,
                              const ReadoutModel& readout, int n_max = 0, bool lossless = false) {
    const int nm = n_max > 0 ? n_max : recommended_n_max(d.mean_occupancy());
    RabiForwardModel model(params, nm, tau_grid, control, readout, lossless);
    return model.forward(d);
}

struct InferenceResult {
    DistributionFamily family = DistributionFamily::thermal;
    double nbar = 0.0;
    double alpha2 = 0.0;
    double flux_offset = 0.0;  // rad/s shift of the resonant detuning
    Eigen::MatrixXd covariance;
    double residual_norm = 0.0;
    bool converged = false;
    bool flat_likelihood = false;  // occupancy too low to pick a family shape
    int n_max_used = 0;
    std::string message;
};

struct InferenceMask {
    bool fit_nbar = true;
    bool fit_alpha2 = true;
    bool fit_flux_offset = false;
};

// Fits (nbar, |alpha|^2, flux offset) to a measured trace by damped least
// squares over the forward model. Amplitude parameters are optimized in
// sqrt-space to stay nonnegative.
inline InferenceResult infer_distribution(const RabiTrace& trace, DistributionFamily family,
                                          const DeviceParams& params, const InferenceMask& mask,
                                          double nbar_init = 0.5, double alpha2_init = 0.5,
                                          int n_max = 0, bool lossless = false) {
    trace.validate();
    if (trace.tau.size() < 4) throw std::invalid_argument("infer_distribution: trace too short");
    const double period = pi / params.J;
    if (trace.tau.back() - trace.tau.front() < 2.0 * period)
        throw std::invalid_argument("infer_distribution: trace must span at least two Rabi periods");

    const bool has_nbar =
        family == DistributionFamily::thermal || family == DistributionFamily::displaced_thermal;
    const bool has_alpha =
        family == DistributionFamily::coherent || family == DistributionFamily::displaced_thermal;

    const double occ_guess = (has_nbar ? nbar_init : 0.0) + (has_alpha ? alpha2_init : 0.0);
    const int nm = n_max > 0 ? n_max : recommended_n_max(std::max(occ_guess, 1.0));
    RabiForwardModel model(params, nm, trace.tau, QubitControl{}, trace.readout, lossless);

    std::vector<int> free;  // 0 = nbar, 1 = alpha2, 2 = flux offset
    if (has_nbar && mask.fit_nbar) free.push_back(0);
    if (has_alpha && mask.fit_alpha2) free.push_back(1);
    if (mask.fit_flux_offset) free.push_back(2);
    if (free.empty()) throw std::invalid_argument("infer_distribution: nothing to fit");

    auto unpack = [&](const Eigen::VectorXd& x, double& nb, double& a2, double& off) {
        nb = has_nbar ? nbar_init : 0.0;
        a2 = has_alpha ? alpha2_init : 0.0;
        off = 0.0;
        for (std::size_t k = 0; k < free.size(); ++k) {
            if (free[k] == 0) nb = x(k) * x(k);
            if (free[k] == 1) a2 = x(k) * x(k);
            if (free[k] == 2) off = x(k);
        }
    };

    auto residuals = [&](const Eigen::VectorXd& x) {
        double nb, a2, off;
        unpack(x, nb, a2, off);
        model.set_flux_offset(off, 1.0);
        PhotonDistribution d;
        d.family = family;
        d.nbar = nb;
        d.alpha2 = a2;
        const RabiTrace pred = model.forward(d);
        Eigen::VectorXd r(trace.p_e.size());
        for (std::size_t i = 0; i < trace.p_e.size(); ++i) {
            const double w = trace.sigma.empty() ? 1.0 : 1.0 / trace.sigma[i];
            r(i) = w * (pred.p_e[i] - trace.p_e[i]);
        }
        return r;
    };

    Eigen::VectorXd x0(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) {
        if (free[k] == 0) x0(k) = std::sqrt(std::max(nbar_init, 1e-4));
        if (free[k] == 1) x0(k) = std::sqrt(std::max(alpha2_init, 1e-4));
        if (free[k] == 2) x0(k) = 0.0;
    }

    LevMarOptions opt;
    opt.max_iterations = 100;
    LevMarSolver solver(residuals, opt);
    const LevMarResult lr = solver.solve(x0);

    InferenceResult out;
    out.family = family;
    unpack(lr.x, out.nbar, out.alpha2, out.flux_offset);
    out.residual_norm = lr.residual_norm;
    out.converged = lr.converged;
    out.message = lr.message;
    out.n_max_used = nm;
    // covariance in (nbar, alpha2) units via the sqrt-space chain rule
    out.covariance = lr.covariance;
    for (std::size_t a = 0; a < free.size(); ++a)
        for (std::size_t b = 0; b < free.size(); ++b) {
            const double ja = free[a] == 2 ? 1.0 : 2.0 * lr.x(a);
            const double jb = free[b] == 2 ? 1.0 : 2.0 * lr.x(b);
            out.covariance(a, b) *= ja * jb;
        }
    if (out.nbar + out.alpha2 < 0.1 &&
        (family == DistributionFamily::thermal || family == DistributionFamily::coherent))
        out.flat_likelihood = true;
    return out;
}

}  // namespace omsim
