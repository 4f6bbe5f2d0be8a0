#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "omsim/tomo.hpp"
#include "test_helpers.hpp"

using namespace omsim;
using omsim_test::table_params;

namespace {

// Density-matrix oracle: displace a truncated thermal state with the matrix
// exponential of (alpha a^dag - alpha^* a) and read the number populations.
std::vector<double> displaced_thermal_oracle(double nbar, double mu, int n_out, int dim) {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim, dim);
    for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(dim, dim);
    for (int n = 0; n < dim; ++n)
        rho(n, n) = std::pow(nbar / (1.0 + nbar), n) / (1.0 + nbar);
    const double alpha = std::sqrt(mu);
    const Eigen::MatrixXcd D = (alpha * a.adjoint() - alpha * a).exp();
    const Eigen::MatrixXcd disp = D * rho * D.adjoint();
    std::vector<double> p(n_out);
    for (int n = 0; n < n_out; ++n) p[n] = disp(n, n).real();
    return p;
}

std::vector<double> tau_grid(double t_max, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = t_max * i / (n - 1);
    return v;
}

}  // namespace

TEST_CASE("displaced-thermal populations match the displacement oracle") {
    for (auto [nbar, mu] : {std::pair{0.8, 2.0}, {0.25, 5.0}, {2.0, 0.5}, {0.05, 1.0}}) {
        const auto oracle = displaced_thermal_oracle(nbar, mu, 15, 70);
        const auto pn =
            materialize_pn(PhotonDistribution::displaced_thermal_state(nbar, mu), 30);
        for (int n = 0; n < 15; ++n) CHECK(pn[n] == doctest::Approx(oracle[n]).epsilon(1e-7));
    }
}

TEST_CASE("displaced-thermal limits: geometric and Poisson") {
    const auto th = materialize_pn(PhotonDistribution::displaced_thermal_state(1.5, 0.0), 25);
    for (int n = 0; n <= 25; ++n)
        CHECK(th[n] == doctest::Approx(std::pow(1.5 / 2.5, n) / 2.5).epsilon(1e-12));

    const auto coh = materialize_pn(PhotonDistribution::displaced_thermal_state(0.0, 2.0), 25);
    double term = std::exp(-2.0);
    for (int n = 0; n <= 25; ++n) {
        CHECK(coh[n] == doctest::Approx(term).epsilon(1e-10));
        term *= 2.0 / (n + 1.0);
    }
}

TEST_CASE("distribution normalization and mean") {
    const PhotonDistribution d = PhotonDistribution::displaced_thermal_state(0.7, 3.0);
    const auto pn = materialize_pn(d, recommended_n_max(d.mean_occupancy()));
    double total = 0.0, mean = 0.0;
    for (std::size_t n = 0; n < pn.size(); ++n) {
        total += pn[n];
        mean += n * pn[n];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(mean == doctest::Approx(3.7).epsilon(1e-4));
    CHECK(d.mean_occupancy() == doctest::Approx(3.7));
}

TEST_CASE("truncation rules") {
    CHECK(recommended_n_max(0.0) == 10);
    CHECK(recommended_n_max(4.0) == 26);
    CHECK(recommended_n_max(100.0) == 40);  // support cap
    CHECK_THROWS_AS(materialize_pn(PhotonDistribution::thermal_state(5.0), 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(materialize_pn(PhotonDistribution::vacuum(), -1), std::invalid_argument);
}

TEST_CASE("forward model is linear in the distribution") {
    const DeviceParams p = table_params();
    const auto tau = tau_grid(120e-9, 61);
    RabiForwardModel model(p, 4, tau, QubitControl{}, ReadoutModel{});

    PhotonDistribution d0;
    d0.family = DistributionFamily::explicit_pn;
    d0.pn = {1.0, 0.0, 0.0};
    PhotonDistribution d1;
    d1.family = DistributionFamily::explicit_pn;
    d1.pn = {0.0, 1.0, 0.0};
    PhotonDistribution mix;
    mix.family = DistributionFamily::explicit_pn;
    mix.pn = {0.3, 0.7, 0.0};

    const RabiTrace t0 = model.forward(d0);
    const RabiTrace t1 = model.forward(d1);
    const RabiTrace tm = model.forward(mix);
    for (std::size_t i = 0; i < tau.size(); ++i)
        CHECK(tm.p_e[i] == doctest::Approx(0.3 * t0.p_e[i] + 0.7 * t1.p_e[i]).epsilon(1e-12));
}

TEST_CASE("vacuum distribution leaves the detector at the offset") {
    const DeviceParams p = table_params();
    ReadoutModel r;
    r.contrast = 0.51;
    r.offset = 0.03;
    RabiForwardModel model(p, 3, tau_grid(100e-9, 41), QubitControl{}, r);
    const RabiTrace t = model.forward(PhotonDistribution::vacuum());
    for (double v : t.p_e) CHECK(v == doctest::Approx(0.03).epsilon(1e-9));
}

TEST_CASE("inference round-trips a thermal occupancy") {
    const DeviceParams p = table_params();
    const auto tau = tau_grid(90e-9, 46);
    ReadoutModel readout;
    readout.contrast = 0.51;
    RabiForwardModel model(p, 12, tau, QubitControl{}, readout);
    const RabiTrace trace = model.forward(PhotonDistribution::thermal_state(0.6));

    InferenceMask mask;
    const InferenceResult res =
        infer_distribution(trace, DistributionFamily::thermal, p, mask, 0.3, 0.3, 12);
    REQUIRE(res.converged);
    CHECK(res.nbar == doctest::Approx(0.6).epsilon(0.02));
    CHECK(!res.flat_likelihood);
    CHECK(res.covariance(0, 0) >= 0.0);
}

TEST_CASE("inference round-trips a displaced thermal pair") {
    const DeviceParams p = table_params();
    const auto tau = tau_grid(90e-9, 46);
    RabiForwardModel model(p, 12, tau, QubitControl{}, ReadoutModel{});
    const RabiTrace trace = model.forward(PhotonDistribution::displaced_thermal_state(0.3, 0.8));

    InferenceMask mask;
    const InferenceResult res = infer_distribution(trace, DistributionFamily::displaced_thermal,
                                                   p, mask, 0.15, 0.5, 12);
    REQUIRE(res.converged);
    CHECK(res.nbar == doctest::Approx(0.3).epsilon(0.05));
    CHECK(res.alpha2 == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("low occupancy flags a flat family likelihood") {
    const DeviceParams p = table_params();
    const auto tau = tau_grid(120e-9, 61);
    RabiForwardModel model(p, 5, tau, QubitControl{}, ReadoutModel{});
    const RabiTrace trace = model.forward(PhotonDistribution::thermal_state(0.03));
    InferenceMask mask;
    const InferenceResult res =
        infer_distribution(trace, DistributionFamily::thermal, p, mask, 0.05, 0.05, 5);
    REQUIRE(res.converged);
    CHECK(res.flat_likelihood);
}

TEST_CASE("trace validation errors") {
    const DeviceParams p = table_params();
    InferenceMask mask;
    RabiTrace short_trace;
    short_trace.tau = tau_grid(40e-9, 21);  // under two Rabi periods
    short_trace.p_e.assign(21, 0.1);
    CHECK_THROWS_AS(
        infer_distribution(short_trace, DistributionFamily::thermal, p, mask, 0.5, 0.5, 4),
        std::invalid_argument);

    RabiTrace bad;
    bad.tau = {0.0, 1e-9};
    bad.p_e = {0.1};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
