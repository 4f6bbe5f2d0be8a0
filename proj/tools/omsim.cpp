// Command-line front end: loads configuration documents, runs the simulation
// or fitting engines, and writes plot-ready columnar datasets.
//
// Exit codes: 0 ok, 2 config error, 3 numerical invariant breach,
// 4 fit non-convergence.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "omsim/constants.hpp"
#include "omsim/gaussdyn.hpp"
#include "omsim/io.hpp"
#include "omsim/jcsim.hpp"
#include "omsim/params.hpp"
#include "omsim/protocol.hpp"
#include "omsim/specfit.hpp"
#include "omsim/tomo.hpp"

namespace {

using nlohmann::json;
using namespace omsim;

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_invariant = 3;
constexpr int exit_fit = 4;

struct RunManifest {
    std::string subcommand;
    std::string config_content;
    std::uint64_t seed = 0;
    std::string mode = "fast";

    std::uint64_t hash() const {
        return manifest_hash(subcommand + "\n" + config_content + "\n" + std::to_string(seed) +
                             "\n" + mode);
    }
    std::vector<std::string> header(const std::string& extra = "") const {
        std::vector<std::string> h;
        h.push_back("subcommand: " + subcommand);
        h.push_back("manifest_hash: " + std::to_string(hash()));
        h.push_back("seed: " + std::to_string(seed));
        h.push_back("mode: " + mode);
        if (!extra.empty()) h.push_back(extra);
        return h;
    }
};

json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path, "cannot open file");
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw ConfigError(path, std::string("parse error: ") + e.what());
    }
    return j;
}

PhotonDistribution parse_distribution(const json& j) {
    const std::string fam = j.value("family", "vacuum");
    if (fam == "vacuum") return PhotonDistribution::vacuum();
    if (fam == "thermal") return PhotonDistribution::thermal_state(j.at("nbar").get<double>());
    if (fam == "coherent") return PhotonDistribution::coherent_state(j.at("alpha2").get<double>());
    if (fam == "displaced_thermal")
        return PhotonDistribution::displaced_thermal_state(j.at("nbar").get<double>(),
                                                           j.at("alpha2").get<double>());
    if (fam == "fock") {
        PhotonDistribution d;
        d.family = DistributionFamily::explicit_pn;
        const int n = j.at("n").get<int>();
        d.pn.assign(n + 1, 0.0);
        d.pn[n] = 1.0;
        return d;
    }
    throw ConfigError("distribution.family", "unknown family '" + fam + "'");
}

ReadoutModel parse_readout(const json& j) {
    ReadoutModel r;
    if (j.contains("readout")) {
        const auto& rj = j["readout"];
        r.contrast = rj.value("contrast", 1.0);
        r.offset = rj.value("offset", 0.0);
        r.prep_efficiency = rj.value("prep_efficiency", 1.0);
    }
    return r;
}

int cmd_rabi(const std::string& config_path, const std::string& out_path, std::uint64_t seed,
             const std::string& mode) {
    const json cfg = load_json(config_path);
    json device_doc = cfg;
    if (cfg.contains("device_config")) {
        const std::filesystem::path base = std::filesystem::path(config_path).parent_path();
        device_doc = load_json((base / cfg["device_config"].get<std::string>()).string());
    }
    const DeviceParams params = load_device_params(device_doc);
    const json rj = cfg.value("rabi", json::object());

    const std::string protocol = rj.value("protocol", "detector");
    const bool lossless = rj.value("lossless", false);
    const double tau_max = rj.value("tau_max_ns", 400.0) * 1e-9;
    const int n_tau = rj.value("n_tau", 201);
    const ReadoutModel readout = parse_readout(rj);

    std::vector<double> tau(n_tau);
    for (int i = 0; i < n_tau; ++i) tau[i] = tau_max * i / (n_tau - 1);

    PhotonDistribution dist = PhotonDistribution::vacuum();
    if (rj.contains("distribution")) dist = parse_distribution(rj["distribution"]);

    const int n_max = rj.value("n_max", recommended_n_max(std::max(dist.mean_occupancy(), 1.0)));
    JcSimulator sim(params, n_max, lossless);
    const std::vector<double> pn = materialize_pn(dist, n_max);

    QubitControl control;
    control.ramp_time = rj.value("ramp_time_ns", 4.0) * 1e-9;
    control.drift_rate = two_pi * rj.value("drift_rate_hz_per_us", 0.0) * 1e6;

    QubitCavityState initial =
        protocol == "single_photon"
            ? sim.mixed_state(pn, 1, readout.prep_efficiency)  // qubit |e>, Fig.-2b style
            : sim.mixed_state(pn, 0);                          // detector protocol, qubit |g>

    const std::vector<double> pe = sim.rabi_trace(initial, control, tau);

    RunManifest man{"rabi", read_file(config_path), seed, mode};
    ColumnarWriter w;
    w.header_lines = man.header("protocol: " + protocol + ", n_max: " + std::to_string(n_max));
    w.columns = {"tau_ns", "pe_ideal", "pe_reported"};
    for (std::size_t i = 0; i < tau.size(); ++i)
        w.add_row({tau[i] * 1e9, pe[i], readout.apply(pe[i])});
    write_atomic(out_path, w.render());
    std::cout << "wrote " << out_path << "\n";
    return exit_ok;
}

Spectrum read_spectrum_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path, "cannot open spectrum file");
    Spectrum s;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string key, eq;
            double v;
            if (hs >> key >> eq >> v && eq == "=") {
                if (key == "pump_freq_hz") s.omega_p = two_pi * v;
                if (key == "n_p") s.n_p = v;
            }
            continue;
        }
        for (char& c : line)
            if (c == ',') c = ' ';
        std::istringstream ls(line);
        double freq_hz, a, b;
        if (!(ls >> freq_hz >> a)) continue;
        if (ls >> b) {
            s.freq.push_back(two_pi * freq_hz);
            s.value.push_back({a, b});
        } else {
            // power in dB: stored as a real reflection of matching magnitude
            s.freq.push_back(two_pi * freq_hz);
            s.value.push_back({std::pow(10.0, a / 20.0), 0.0});
        }
    }
    s.validate();
    return s;
}

int cmd_fit_spectrum(const std::vector<std::string>& data_paths, const std::string& config_path,
                     const std::string& out_path, std::uint64_t seed, const std::string& mode) {
    const json cfg = load_json(config_path);
    const json fj = cfg.value("fit", json::object());

    std::vector<Spectrum> spectra;
    for (const auto& p : data_paths) spectra.push_back(read_spectrum_file(p));
    if (spectra.empty()) throw ConfigError("data", "no spectrum files given");

    ReflectionParams guess = initial_guess_from_spectrum(spectra.front());
    auto maybe = [&](const char* key, double& field) {
        if (fj.contains(key)) field = two_pi * fj[key].get<double>();
    };
    maybe("omega_c_hz", guess.omega_c);
    maybe("Omega_m_hz", guess.Omega_m);
    maybe("kappa_int_hz", guess.kappa_int);
    maybe("kappa_ext_hz", guess.kappa_ext);
    maybe("Gamma_m_hz", guess.Gamma_m);
    maybe("g_hz", guess.g);
    if (fj.contains("alpha_fano")) guess.alpha_fano = fj["alpha_fano"].get<double>();
    if (guess.Omega_m == 0.0) guess.Omega_m = two_pi * 15.9e6;
    if (guess.Gamma_m == 0.0) guess.Gamma_m = two_pi * 150.0;

    std::array<bool, n_reflection_params> free_mask{};
    const std::vector<std::string> default_free = {"omega_c", "kappa_int", "kappa_ext", "g",
                                                   "Gamma_m"};
    const auto names = fj.value("free", default_free);
    for (const auto& n : names) {
        if (n == "omega_c") free_mask[static_cast<int>(ReflectionParam::omega_c)] = true;
        else if (n == "Omega_m") free_mask[static_cast<int>(ReflectionParam::Omega_m)] = true;
        else if (n == "kappa_int") free_mask[static_cast<int>(ReflectionParam::kappa_int)] = true;
        else if (n == "kappa_ext") free_mask[static_cast<int>(ReflectionParam::kappa_ext)] = true;
        else if (n == "Gamma_m") free_mask[static_cast<int>(ReflectionParam::Gamma_m)] = true;
        else if (n == "alpha_fano") free_mask[static_cast<int>(ReflectionParam::alpha_fano)] = true;
        else if (n == "g") free_mask[static_cast<int>(ReflectionParam::g)] = true;
        else throw ConfigError("fit.free", "unknown parameter '" + n + "'");
    }
    const FitSpace space =
        fj.value("space", std::string("complex_iq")) == "power_db" ? FitSpace::power_db
                                                                   : FitSpace::complex_iq;

    const SpectrumFitResult fit = fit_reflection(spectra, guess, free_mask, space);
    if (!fit.converged) {
        std::cerr << "fit did not converge: " << fit.message << "\n";
        return exit_fit;
    }

    RunManifest man{"fit-spectrum", read_file(config_path), seed, mode};
    json report;
    report["manifest_hash"] = std::to_string(man.hash());
    report["converged"] = fit.converged;
    report["residual_norm"] = fit.residual_norm;
    report["params"]["omega_c_hz"] = fit.params.omega_c / two_pi;
    report["params"]["Omega_m_hz"] = fit.params.Omega_m / two_pi;
    report["params"]["kappa_int_hz"] = fit.params.kappa_int / two_pi;
    report["params"]["kappa_ext_hz"] = fit.params.kappa_ext / two_pi;
    report["params"]["Gamma_m_hz"] = fit.params.Gamma_m / two_pi;
    report["params"]["alpha_fano"] = fit.params.alpha_fano;
    report["params"]["g_hz"] = fit.params.g / two_pi;
    for (std::size_t k = 0; k < fit.free_params.size(); ++k) {
        static const char* pnames[] = {"omega_c_hz", "Omega_m_hz", "kappa_int_hz",
                                       "kappa_ext_hz", "Gamma_m_hz", "alpha_fano", "g_hz"};
        const int i = static_cast<int>(fit.free_params[k]);
        double sigma = std::sqrt(std::max(0.0, fit.covariance(k, k)));
        if (i != static_cast<int>(ReflectionParam::alpha_fano)) sigma /= two_pi;
        report["uncertainties"][pnames[i]] = sigma;
    }
    write_atomic(out_path, report.dump(2) + "\n");
    std::cout << "wrote " << out_path << "\n";
    return exit_ok;
}

ExperimentPlan parse_plan(const json& pj, const DeviceParams& params) {
    ExperimentPlan plan;
    const std::string kind = pj.value("interaction", "beam_splitter");
    if (kind == "beam_splitter") plan.interaction = InteractionKind::beam_splitter;
    else if (kind == "squeezer") plan.interaction = InteractionKind::squeezer;
    else throw ConfigError("plan.interaction", "unknown interaction '" + kind + "'");

    plan.n_p = pj.value("n_p", 0.0);
    if (pj.contains("g_peak_hz")) plan.g_peak = two_pi * pj["g_peak_hz"].get<double>();
    plan.pulse_sigma = pj.value("sigma_ns", 200.0) * 1e-9;
    plan.handover_delay = pj.value("handover_delay_ns", 100.0) * 1e-9;
    plan.theta = pj.value("theta", pi);
    plan.target_alpha_m2 = pj.value("target_alpha_m2", 0.0);
    plan.initial_cavity_nbar = pj.value("initial_cavity_nbar", 0.0);
    plan.lossless = pj.value("lossless", false);

    if (pj.contains("precool")) {
        const auto& pc = pj["precool"];
        plan.precool_g = two_pi * pc.value("g_hz", 0.0);
        plan.precool_duration = pc.value("duration_us", 20.0) * 1e-6;
    }
    if (pj.contains("theta_grid")) {
        if (pj["theta_grid"].is_array()) {
            plan.theta_grid = pj["theta_grid"].get<std::vector<double>>();
        } else {
            const auto& tg = pj["theta_grid"];
            const double lo = tg.value("min", 0.0), hi = tg.value("max", two_pi);
            const int n = tg.value("points", 21);
            for (int i = 0; i < n; ++i)
                plan.theta_grid.push_back(lo + (hi - lo) * i / std::max(1, n - 1));
        }
    }
    if (pj.contains("alpha_m2_grid")) {
        if (pj["alpha_m2_grid"].is_array()) {
            plan.alpha_m2_grid = pj["alpha_m2_grid"].get<std::vector<double>>();
        } else {
            const auto& ag = pj["alpha_m2_grid"];
            const double lo = ag.value("min", 0.0), hi = ag.value("max", 25.0);
            const int n = ag.value("points", 11);
            for (int i = 0; i < n; ++i)
                plan.alpha_m2_grid.push_back(lo + (hi - lo) * i / std::max(1, n - 1));
        }
    }
    if (plan.coupling(params) <= 0.0 && !plan.lossless)
        throw ConfigError("plan", "neither n_p nor g_peak_hz sets the pump coupling");
    return plan;
}

// Faithful mode: push the final Gaussian state through the qubit detection
// chain (noisy trace, then inference) instead of reading the moments off.
struct FaithfulReadout {
    const DeviceParams& params;
    ReadoutModel readout;
    double noise_sigma = 0.01;
    std::mt19937_64 rng;

    std::pair<double, double> measure(const GaussianState& g) {
        const double nbar = std::max(0.0, g.thermal_a());
        const double alpha2 = std::norm(g.mean_a);
        const double occ = nbar + alpha2;
        if (occ > 10.0)
            throw std::runtime_error("faithful readout: occupancy above the supported range");
        const int n_max = recommended_n_max(std::max(occ, 1.0));
        std::vector<double> tau(161);
        for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = 200e-9 * i / (tau.size() - 1);
        RabiForwardModel model(params, n_max, tau, QubitControl{}, readout);
        RabiTrace trace =
            model.forward(PhotonDistribution::displaced_thermal_state(nbar, alpha2));
        std::normal_distribution<double> noise(0.0, noise_sigma);
        for (double& v : trace.p_e) v += noise(rng);
        trace.sigma.assign(trace.p_e.size(), noise_sigma);
        InferenceMask mask;
        const InferenceResult inf =
            infer_distribution(trace, DistributionFamily::displaced_thermal, params, mask,
                               std::max(nbar, 0.05), std::max(alpha2, 0.05), n_max);
        if (!inf.converged) throw std::runtime_error("faithful readout: inference not converged");
        return {inf.nbar, inf.alpha2};
    }
};

int cmd_protocol(const std::string& plan_path, const std::string& out_path, std::uint64_t seed,
                 const std::string& mode) {
    const json cfg = load_json(plan_path);
    json device_doc = cfg;
    if (cfg.contains("device_config")) {
        const std::filesystem::path base = std::filesystem::path(plan_path).parent_path();
        device_doc = load_json((base / cfg["device_config"].get<std::string>()).string());
    }
    const DeviceParams params = load_device_params(device_doc);
    if (!cfg.contains("plan")) throw ConfigError("plan", "missing field");
    const json pj = cfg["plan"];
    const ExperimentPlan plan = parse_plan(pj, params);
    const BathSpec baths = load_bath_spec(cfg, params, plan.n_p > 0 ? plan.n_p : 0.0);

    const std::string task = pj.value("task", "theta_sweep");
    RunManifest man{"protocol", read_file(plan_path), seed, mode};
    ColumnarWriter w;

    const bool faithful = mode == "faithful";
    FaithfulReadout faith{params, ReadoutModel{}, 0.01, std::mt19937_64(seed)};
    if (pj.contains("readout")) faith.readout = parse_readout(pj);

    if (task == "theta_sweep") {
        const auto pts = run_interaction_sweep(plan, params, baths);
        w.header_lines = man.header("task: theta_sweep");
        w.columns = {"theta", "n_aa", "n_bb", "alpha_c2", "alpha_m2"};
        for (const auto& p : pts) {
            double naa = p.n_aa(), ac2 = p.alpha_c2();
            if (faithful) {
                auto [nb, a2] = faith.measure(p.final_state);
                naa = nb + a2;
                ac2 = a2;
            }
            w.add_row({p.theta, naa, p.n_bb(), ac2, p.alpha_m2()});
        }
    } else if (task == "gain_calibration") {
        const GainCalibration cal = calibrate_gains(plan, params, baths);
        w.header_lines = man.header("task: gain_calibration, theta: " + std::to_string(cal.theta));
        w.columns = {"G_minus", "G_plus", "r2_minus", "r2_plus"};
        w.add_row({cal.G_minus, cal.G_plus, cal.r2_minus, cal.r2_plus});
        if (cal.poor_linearity) std::cerr << "warning: poor gain-calibration linearity\n";
    } else if (task == "vacuum_extraction") {
        const GainCalibration cal = calibrate_gains(plan, params, baths);
        const auto pts = extract_vacuum(plan, params, baths, cal);
        w.header_lines = man.header("task: vacuum_extraction, G-: " +
                                    std::to_string(cal.G_minus) +
                                    ", G+: " + std::to_string(cal.G_plus));
        w.columns = {"alpha_m2_i", "n_minus_referred", "n_plus_referred", "difference"};
        for (const auto& p : pts)
            w.add_row({p.alpha_m2_i, p.n_minus_referred, p.n_plus_referred, p.difference});
    } else if (task == "detector_comparison") {
        w.header_lines = man.header("task: detector_comparison");
        w.columns = {"delta_c", "delta_m", "number_asymmetry", "linear_asymmetry"};
        const double nb = pj.value("n_bb_i", 1.0);
        for (int dc : {0, 1})
            for (int dm : {0, 1}) {
                const DetectorComparison r = detector_comparison(plan.theta, nb, dc, dm);
                w.add_row({double(dc), double(dm), r.number_asymmetry, r.linear_asymmetry});
            }
    } else {
        throw ConfigError("plan.task", "unknown task '" + task + "'");
    }
    write_atomic(out_path, w.render());
    std::cout << "wrote " << out_path << "\n";
    return exit_ok;
}

int cmd_params_check(const std::string& config_path) {
    const json cfg = load_json(config_path);
    const DeviceParams p = load_device_params(cfg);
    const BathSpec b = load_bath_spec(cfg, p);
    std::cout << "device parameters OK\n";
    std::cout << "  kappa_total/2pi = " << p.kappa_total / two_pi << " Hz\n";
    std::cout << "  eta             = " << p.eta << "\n";
    std::cout << "  n_mech_eq       = " << b.n_mech_eq << " (T = " << p.temperature << " K)\n";
    std::cout << "  n_cav_eq        = " << thermal_occupancy(p.omega_c, p.temperature) << "\n";
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qubit-resolved optomechanics simulation toolkit"};
    app.require_subcommand(1);

    std::string config, plan, out = "out.csv";
    std::vector<std::string> data;
    std::uint64_t seed = 0;
    std::string mode = "fast";

    auto* rabi = app.add_subcommand("rabi", "qubit Rabi traces for a cavity distribution");
    rabi->add_option("--config", config)->required();
    rabi->add_option("--out", out);
    rabi->add_option("--seed", seed);
    rabi->add_option("--mode", mode)->check(CLI::IsMember({"fast", "faithful"}));

    auto* fitspec = app.add_subcommand("fit-spectrum", "fit the cavity reflection model");
    fitspec->add_option("--config", config)->required();
    fitspec->add_option("--data", data)->required();
    fitspec->add_option("--out", out);
    fitspec->add_option("--seed", seed);
    fitspec->add_option("--mode", mode);

    auto* proto = app.add_subcommand("protocol", "run an experiment plan");
    proto->add_option("--plan", plan)->required();
    proto->add_option("--out", out);
    proto->add_option("--seed", seed);
    proto->add_option("--mode", mode)->check(CLI::IsMember({"fast", "faithful"}));

    auto* check = app.add_subcommand("params-check", "validate a device configuration");
    check->add_option("--config", config)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (rabi->parsed()) return cmd_rabi(config, out, seed, mode);
        if (fitspec->parsed()) return cmd_fit_spectrum(data, config, out, seed, mode);
        if (proto->parsed()) return cmd_protocol(plan, out, seed, mode);
        if (check->parsed()) return cmd_params_check(config);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_invariant;
    }
    return exit_ok;
}
