#pragma once

// Truncated-Fock-space qubit/cavity simulator. Everything runs in the frame
// rotating at the cavity frequency, so the only Hamiltonian terms are the
// qubit detuning Delta_qb(t) and the exchange coupling J. The 10 GHz carrier
// never appears and the step size is set by J and the detuning ramp alone.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "omsim/constants.hpp"
#include "omsim/params.hpp"

namespace omsim {

using Eigen::MatrixXcd;
using Eigen::VectorXd;

// Piecewise-linear qubit detuning: parked at delta_park, ramped linearly to
// delta_resonant over ramp_time starting at t = 0, then drifting at
// drift_rate. delta_resonant absorbs any flux offset.
struct QubitControl {
    double delta_park = 0.0;      // rad/s, before the ramp
    double delta_resonant = 0.0;  // rad/s, nominally 0 on resonance
    double ramp_time = 4e-9;      // s
    double drift_rate = 0.0;      // rad/s per s

    double detuning(double t) const {
        if (t <= 0.0) return delta_park;
        if (t < ramp_time) {
            const double w = t / ramp_time;
            return delta_park * (1.0 - w) + delta_resonant * w;
        }
        return delta_resonant + drift_rate * (t - ramp_time);
    }
};

struct ReadoutModel {
    double contrast = 1.0;
    double offset = 0.0;
    double prep_efficiency = 1.0;  // applied to the initial state, not the readout

    double apply(double pe_ideal) const { return contrast * pe_ideal + offset; }
};

struct QubitCavityState {
    MatrixXcd rho;  // basis {|g>,|e>} (x) {|0>..|n_max>}, index q*(n_max+1)+n
    int n_max = 0;

    int dim() const { return 2 * (n_max + 1); }
};

struct EvolveOptions {
    double dt = 0.0;                 // 0 -> auto from fastest scale
    double record_stride = 1e-9;     // s between recorded samples
    double leakage_threshold = 1e-6;
    double trace_tolerance = 1e-8;   // allowed trace drift per second of evolution * T
};

struct EvolveResult {
    std::vector<double> times;
    std::vector<double> pe_ideal;
    std::vector<QubitCavityState> states;  // filled only if keep_states
    bool leakage_flag = false;
    double max_trace_drift = 0.0;
};

class JcSimulator {
public:
    JcSimulator(const DeviceParams& params, int n_max, bool lossless = false)
        : n_max_(n_max), J_(params.J), lossless_(lossless),
          T1_(params.T1_qubit), T1cav_(params.T1_cavity), Tphi_(params.Tphi_qubit) {
        if (n_max < 1) throw std::invalid_argument("JcSimulator: n_max must be >= 1");
        build_operators();
    }

    int n_max() const { return n_max_; }
    int dim() const { return 2 * (n_max_ + 1); }

    // Hamiltonian at a given detuning (rotating frame at omega_c):
    // H/hbar = (Delta/2) sigma_z + J (a sigma_+ + a^dag sigma_-)
    MatrixXcd hamiltonian(double delta) const { return 0.5 * delta * Sz_ + Hjc_; }

    const MatrixXcd& sigma_z() const { return Sz_; }
    const MatrixXcd& sigma_minus() const { return Sm_; }
    const MatrixXcd& annihilator() const { return A_; }

    const std::vector<MatrixXcd>& collapse_ops() const { return collapse_; }

    QubitCavityState make_state(const Eigen::VectorXcd& psi) const {
        QubitCavityState s;
        s.n_max = n_max_;
        s.rho = psi * psi.adjoint();
        return s;
    }

    // |q> (x) |n>
    QubitCavityState fock_state(int qubit_excited, int n) const {
        Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(dim());
        psi(index(qubit_excited, n)) = 1.0;
        return make_state(psi);
    }

    // Number-diagonal cavity mixture (populations p_n), qubit in |g> or |e>
    // with the stated preparation efficiency: rho_qb = eff|q><q| + (1-eff)|g><g|.
    QubitCavityState mixed_state(const std::vector<double>& pn, int qubit_excited,
                                 double prep_efficiency = 1.0) const {
        QubitCavityState s;
        s.n_max = n_max_;
        s.rho = MatrixXcd::Zero(dim(), dim());
        for (int n = 0; n <= n_max_ && n < static_cast<int>(pn.size()); ++n) {
            if (qubit_excited) {
                s.rho(index(1, n), index(1, n)) += prep_efficiency * pn[n];
                s.rho(index(0, n), index(0, n)) += (1.0 - prep_efficiency) * pn[n];
            } else {
                s.rho(index(0, n), index(0, n)) += pn[n];
            }
        }
        return s;
    }

    int index(int qubit_excited, int n) const { return qubit_excited * (n_max_ + 1) + n; }

    double qubit_population(const QubitCavityState& s) const {
        double pe = 0.0;
        for (int n = 0; n <= n_max_; ++n) pe += s.rho(index(1, n), index(1, n)).real();
        return pe;
    }

    // Lindblad right-hand side.
    MatrixXcd liouvillian(const MatrixXcd& rho, double delta) const {
        const MatrixXcd H = hamiltonian(delta);
        MatrixXcd drho = -im * (H * rho - rho * H);
        for (std::size_t k = 0; k < collapse_.size(); ++k) {
            const MatrixXcd& C = collapse_[k];
            const MatrixXcd Crho = C * rho;
            drho += Crho * C.adjoint() - 0.5 * (CdC_[k] * rho + rho * CdC_[k]);
        }
        return drho;
    }

    EvolveResult evolve(const QubitCavityState& initial, const QubitControl& control,
                        double t_final, const EvolveOptions& opt = {},
                        bool keep_states = false) const {
        const double delta_scale =
            std::max({std::abs(control.delta_park), std::abs(control.delta_resonant), J_});
        double dt = opt.dt > 0.0 ? opt.dt : 1.0 / (40.0 * delta_scale);
        if (dt > 1.0 / (20.0 * delta_scale))
            throw std::invalid_argument("evolve: dt too coarse for the fastest scale");
        const int n_steps = std::max(1, static_cast<int>(std::ceil(t_final / dt)));
        dt = t_final / n_steps;

        EvolveResult res;
        MatrixXcd rho = initial.rho;
        double next_record = 0.0;
        auto record = [&](double t) {
            res.times.push_back(t);
            double pe = 0.0;
            for (int n = 0; n <= n_max_; ++n) pe += rho(index(1, n), index(1, n)).real();
            res.pe_ideal.push_back(pe);
            if (keep_states) res.states.push_back({rho, n_max_});
        };
        record(0.0);
        next_record = opt.record_stride;

        for (int step = 0; step < n_steps; ++step) {
            const double t = step * dt;
            // classical RK4 on the vectorized density matrix
            const MatrixXcd k1 = liouvillian(rho, control.detuning(t));
            const MatrixXcd k2 = liouvillian(rho + 0.5 * dt * k1, control.detuning(t + 0.5 * dt));
            const MatrixXcd k3 = liouvillian(rho + 0.5 * dt * k2, control.detuning(t + 0.5 * dt));
            const MatrixXcd k4 = liouvillian(rho + dt * k3, control.detuning(t + dt));
            rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

            const double tnow = (step + 1) * dt;
            if (tnow + 1e-15 >= next_record || step == n_steps - 1) {
                record(tnow);
                next_record += opt.record_stride;
            }
            res.max_trace_drift =
                std::max(res.max_trace_drift, std::abs(rho.trace().real() - 1.0));
            const double leak = rho(index(0, n_max_), index(0, n_max_)).real() +
                                rho(index(1, n_max_), index(1, n_max_)).real();
            if (leak > opt.leakage_threshold) res.leakage_flag = true;
        }
        if (res.max_trace_drift > opt.trace_tolerance * std::max(1.0, t_final * 1e6))
            throw std::runtime_error("evolve: trace drift exceeds tolerance (step too coarse?)");
        return res;
    }

    // P_e(tau) with the qubit tuned into resonance for a duration tau.
    // One evolution covers the whole grid; samples are read off along the way.
    std::vector<double> rabi_trace(const QubitCavityState& initial, const QubitControl& control,
                                   const std::vector<double>& tau_grid,
                                   const EvolveOptions& opt = {}) const {
        if (tau_grid.empty()) return {};
        EvolveOptions o = opt;
        o.record_stride = 0.0;  // record every integrator step
        const double t_final = tau_grid.back();
        EvolveResult r = evolve(initial, control, t_final, o, false);
        std::vector<double> pe(tau_grid.size());
        std::size_t j = 0;
        const std::size_t m = r.times.size();
        for (std::size_t i = 0; i < tau_grid.size(); ++i) {
            while (j + 1 < m && r.times[j + 1] <= tau_grid[i] + 1e-15) ++j;
            if (m < 3) {
                pe[i] = r.pe_ideal[j];
                continue;
            }
            // quadratic interpolation through three recorded samples; linear
            // interpolation is too coarse for the curvature of cos^2(J tau)
            std::size_t k = j == 0 ? 0 : std::min(j - 1, m - 3);
            const double t0 = r.times[k], t1 = r.times[k + 1], t2 = r.times[k + 2];
            const double y0 = r.pe_ideal[k], y1 = r.pe_ideal[k + 1], y2 = r.pe_ideal[k + 2];
            const double t = std::clamp(tau_grid[i], r.times.front(), r.times.back());
            pe[i] = y0 * (t - t1) * (t - t2) / ((t0 - t1) * (t0 - t2)) +
                    y1 * (t - t0) * (t - t2) / ((t1 - t0) * (t1 - t2)) +
                    y2 * (t - t0) * (t - t1) / ((t2 - t0) * (t2 - t1));
        }
        return pe;
    }

private:
    void build_operators() {
        const int nc = n_max_ + 1;
        const int d = 2 * nc;
        MatrixXcd a_cav = MatrixXcd::Zero(nc, nc);
        for (int n = 1; n < nc; ++n) a_cav(n - 1, n) = std::sqrt(static_cast<double>(n));
        MatrixXcd id_c = MatrixXcd::Identity(nc, nc);

        MatrixXcd sz_q = MatrixXcd::Zero(2, 2);
        sz_q(0, 0) = -1.0;
        sz_q(1, 1) = 1.0;
        MatrixXcd sm_q = MatrixXcd::Zero(2, 2);
        sm_q(0, 1) = 1.0;  // |g><e|

        auto kron = [](const MatrixXcd& x, const MatrixXcd& y) {
            MatrixXcd r(x.rows() * y.rows(), x.cols() * y.cols());
            for (int i = 0; i < x.rows(); ++i)
                for (int j = 0; j < x.cols(); ++j)
                    r.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
            return r;
        };

        Sz_ = kron(sz_q, id_c);
        Sm_ = kron(sm_q, id_c);
        A_ = kron(MatrixXcd::Identity(2, 2), a_cav);
        Hjc_ = J_ * (A_ * Sm_.adjoint() + A_.adjoint() * Sm_);
        (void)d;

        collapse_.clear();
        if (!lossless_) {
            collapse_.push_back(std::sqrt(1.0 / T1_) * Sm_);
            collapse_.push_back(std::sqrt(1.0 / T1cav_) * A_);
            collapse_.push_back(std::sqrt(2.0 / Tphi_) * Sz_);
        }
        CdC_.clear();
        for (const auto& C : collapse_) CdC_.push_back(C.adjoint() * C);
    }

    int n_max_;
    double J_;
    bool lossless_;
    double T1_, T1cav_, Tphi_;
    MatrixXcd Sz_, Sm_, A_, Hjc_;
    std::vector<MatrixXcd> collapse_;
    std::vector<MatrixXcd> CdC_;
};

}  // namespace omsim
