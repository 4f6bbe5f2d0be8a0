#pragma once

// Device parameter registry. All frequencies and rates are stored as angular
// quantities (rad/s); configuration files use ordinary-frequency keys with an
// explicit unit suffix ("*_hz" means the value is f = omega/2pi in Hz).

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "omsim/constants.hpp"

namespace omsim {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error("config error at '" + key + "': " + what), key_(key) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

struct DeviceParams {
    // angular frequencies and rates, rad/s
    double omega_c = 0.0;
    double Omega_m = 0.0;
    double J = 0.0;
    double g0 = 0.0;
    double kappa_int = 0.0;
    double kappa_ext = 0.0;
    double Gamma_m = 0.0;

    // lifetimes, s
    double T1_qubit = 0.0;
    double T1_cavity = 0.0;
    double Tphi_qubit = 0.0;

    double alpha_fano = 0.0;
    double temperature = 0.0;                  // K
    std::optional<double> x_zpf;               // m
    std::optional<double> G_cavity_pull;       // rad/s per m

    // derived
    double kappa_total = 0.0;
    double eta = 0.0;

    void finalize() {
        kappa_total = kappa_int + kappa_ext;
        eta = kappa_ext / kappa_total;
    }
};

// Bose-Einstein occupancy; exactly 0 at T = 0 (limiting value, not an error).
inline double thermal_occupancy(double omega, double temperature) {
    if (omega <= 0.0) throw std::invalid_argument("thermal_occupancy: omega must be > 0");
    if (temperature < 0.0) throw std::invalid_argument("thermal_occupancy: T must be >= 0");
    if (temperature == 0.0) return 0.0;
    const double x = hbar * omega / (k_B * temperature);
    if (x > 700.0) return 0.0;  // underflows anyway
    return 1.0 / std::expm1(x);
}

struct BathSpec {
    double n_mech_eq = 0.0;
    double n_int_eq = 0.0;
    double n_ext_eq = 0.0;
};

// Pump-power dependence of the internal cavity bath. The dependence
// n_int_eq(n_p) is device-specific calibration data, so the model is supplied
// in config: a constant, a power law, or a table interpolated in log(n_p).
struct HeatingModel {
    enum class Kind { constant, power_law, table };
    Kind kind = Kind::constant;
    double value = 0.0;                    // constant
    double prefactor = 0.0, exponent = 0.0, ref_np = 1.0;  // power law: prefactor*(n_p/ref_np)^exponent
    std::vector<double> np_table, n_table;

    double n_int_eq(double n_p) const {
        switch (kind) {
            case Kind::constant: return value;
            case Kind::power_law: return prefactor * std::pow(n_p / ref_np, exponent);
            case Kind::table: {
                if (np_table.empty()) return 0.0;
                if (n_p <= np_table.front()) return n_table.front();
                if (n_p >= np_table.back()) return n_table.back();
                const double lx = std::log(n_p);
                for (std::size_t i = 1; i < np_table.size(); ++i) {
                    if (n_p <= np_table[i]) {
                        const double x0 = std::log(np_table[i - 1]), x1 = std::log(np_table[i]);
                        const double w = (lx - x0) / (x1 - x0);
                        return n_table[i - 1] * (1.0 - w) + n_table[i] * w;
                    }
                }
                return n_table.back();
            }
        }
        return 0.0;
    }
};

namespace detail {

// Recognized unit suffixes for scalar config entries. Frequencies are
// f = omega/2pi, converted to rad/s on load.
inline double convert_unit(const std::string& key, const std::string& suffix, double v) {
    if (suffix == "hz") return two_pi * v;
    if (suffix == "khz") return two_pi * v * 1e3;
    if (suffix == "mhz") return two_pi * v * 1e6;
    if (suffix == "ghz") return two_pi * v * 1e9;
    if (suffix == "rad_per_s") return v;
    if (suffix == "s") return v;
    if (suffix == "ns") return v * 1e-9;
    if (suffix == "us") return v * 1e-6;
    if (suffix == "k") return v;
    if (suffix == "mk") return v * 1e-3;
    if (suffix == "m") return v;
    if (suffix == "fm") return v * 1e-15;
    throw ConfigError(key, "unit tag '" + suffix + "' unrecognized");
}

// Finds "<name>_<unit>" in obj among the allowed unit tags for that quantity.
inline std::optional<double> find_with_unit(const nlohmann::json& obj, const std::string& name,
                                            const std::vector<std::string>& units) {
    for (const auto& u : units) {
        const std::string key = name + "_" + u;
        if (obj.contains(key)) {
            if (!obj[key].is_number())
                throw ConfigError(key, "expected a number");
            return convert_unit(key, u, obj[key].get<double>());
        }
    }
    // catch a bare or wrongly-suffixed key so the error names the culprit
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string& k = it.key();
        if (k.rfind(name + "_", 0) == 0)
            throw ConfigError(k, "unit tag '" + k.substr(name.size() + 1) + "' unrecognized");
        if (k == name)
            throw ConfigError(k, "missing unit suffix");
    }
    return std::nullopt;
}

inline double require_with_unit(const nlohmann::json& obj, const std::string& name,
                                const std::vector<std::string>& units) {
    auto v = find_with_unit(obj, name, units);
    if (!v) throw ConfigError(name, "missing field");
    return *v;
}

inline const std::vector<std::string> freq_units = {"hz", "khz", "mhz", "ghz", "rad_per_s"};
inline const std::vector<std::string> time_units = {"s", "ns", "us"};
inline const std::vector<std::string> temp_units = {"k", "mk"};
inline const std::vector<std::string> len_units = {"m", "fm"};

inline void check_positive(double v, const std::string& key) {
    if (!(v > 0.0)) throw ConfigError(key, "must be strictly positive");
}

}  // namespace detail

inline DeviceParams load_device_params(const nlohmann::json& doc) {
    using namespace detail;
    const nlohmann::json& d = doc.contains("device") ? doc.at("device") : doc;

    DeviceParams p;
    p.omega_c = require_with_unit(d, "omega_c", freq_units);
    p.Omega_m = require_with_unit(d, "Omega_m", freq_units);
    p.J = require_with_unit(d, "J", freq_units);
    p.g0 = require_with_unit(d, "g0", freq_units);
    p.kappa_int = require_with_unit(d, "kappa_int", freq_units);
    p.kappa_ext = require_with_unit(d, "kappa_ext", freq_units);
    p.Gamma_m = require_with_unit(d, "Gamma_m", freq_units);
    p.T1_qubit = require_with_unit(d, "T1_qubit", time_units);
    p.T1_cavity = require_with_unit(d, "T1_cavity", time_units);
    p.Tphi_qubit = require_with_unit(d, "Tphi_qubit", time_units);
    p.temperature = require_with_unit(d, "temperature", temp_units);

    if (d.contains("alpha_fano")) p.alpha_fano = d["alpha_fano"].get<double>();
    p.x_zpf = find_with_unit(d, "x_zpf", len_units);
    if (d.contains("G_cavity_pull_hz_per_m"))
        p.G_cavity_pull = two_pi * d["G_cavity_pull_hz_per_m"].get<double>();

    check_positive(p.omega_c, "omega_c");
    check_positive(p.Omega_m, "Omega_m");
    check_positive(p.J, "J");
    check_positive(p.g0, "g0");
    check_positive(p.kappa_int, "kappa_int");
    check_positive(p.kappa_ext, "kappa_ext");
    check_positive(p.Gamma_m, "Gamma_m");
    check_positive(p.T1_qubit, "T1_qubit");
    check_positive(p.T1_cavity, "T1_cavity");
    check_positive(p.Tphi_qubit, "Tphi_qubit");
    if (p.temperature < 0.0) throw ConfigError("temperature", "must be >= 0");

    p.finalize();
    if (!(p.eta > 0.0 && p.eta < 1.0)) throw ConfigError("kappa_ext", "eta out of (0,1)");

    if (p.x_zpf && p.G_cavity_pull) {
        const double g0_check = *p.G_cavity_pull * *p.x_zpf;
        if (std::abs(g0_check - p.g0) > 1e-9 * std::abs(p.g0))
            throw ConfigError("g0", "inconsistent with G_cavity_pull * x_zpf");
    }
    return p;
}

inline HeatingModel load_heating_model(const nlohmann::json& j);

inline BathSpec load_bath_spec(const nlohmann::json& doc, const DeviceParams& p,
                               double n_p = 0.0) {
    BathSpec b;
    b.n_mech_eq = thermal_occupancy(p.Omega_m, p.temperature);
    b.n_ext_eq = 0.0;
    if (doc.contains("baths")) {
        const auto& bj = doc["baths"];
        if (bj.contains("n_mech_eq")) b.n_mech_eq = bj["n_mech_eq"].get<double>();
        if (bj.contains("n_ext_eq")) b.n_ext_eq = bj["n_ext_eq"].get<double>();
        if (bj.contains("n_int_eq")) b.n_int_eq = bj["n_int_eq"].get<double>();
        if (bj.contains("heating")) b.n_int_eq = load_heating_model(bj["heating"]).n_int_eq(n_p);
    }
    if (b.n_mech_eq < 0.0 || b.n_int_eq < 0.0 || b.n_ext_eq < 0.0)
        throw ConfigError("baths", "occupancies must be >= 0");
    return b;
}

inline HeatingModel load_heating_model(const nlohmann::json& j) {
    HeatingModel h;
    const std::string kind = j.value("kind", "constant");
    if (kind == "constant") {
        h.kind = HeatingModel::Kind::constant;
        h.value = j.at("n_int_eq").get<double>();
    } else if (kind == "power_law") {
        h.kind = HeatingModel::Kind::power_law;
        h.prefactor = j.at("prefactor").get<double>();
        h.exponent = j.at("exponent").get<double>();
        h.ref_np = j.value("ref_np", 1.0);
    } else if (kind == "table") {
        h.kind = HeatingModel::Kind::table;
        h.np_table = j.at("np").get<std::vector<double>>();
        h.n_table = j.at("n_int_eq").get<std::vector<double>>();
        if (h.np_table.size() != h.n_table.size() || h.np_table.empty())
            throw ConfigError("baths.heating", "np and n_int_eq tables must match and be non-empty");
    } else {
        throw ConfigError("baths.heating.kind", "unknown heating model '" + kind + "'");
    }
    return h;
}

// Round-trippable serialization; emits the same key convention load accepts.
inline nlohmann::json to_json(const DeviceParams& p) {
    nlohmann::json d;
    d["omega_c_hz"] = p.omega_c / two_pi;
    d["Omega_m_hz"] = p.Omega_m / two_pi;
    d["J_hz"] = p.J / two_pi;
    d["g0_hz"] = p.g0 / two_pi;
    d["kappa_int_hz"] = p.kappa_int / two_pi;
    d["kappa_ext_hz"] = p.kappa_ext / two_pi;
    d["Gamma_m_hz"] = p.Gamma_m / two_pi;
    d["T1_qubit_s"] = p.T1_qubit;
    d["T1_cavity_s"] = p.T1_cavity;
    d["Tphi_qubit_s"] = p.Tphi_qubit;
    d["temperature_k"] = p.temperature;
    d["alpha_fano"] = p.alpha_fano;
    if (p.x_zpf) d["x_zpf_m"] = *p.x_zpf;
    if (p.G_cavity_pull) d["G_cavity_pull_hz_per_m"] = *p.G_cavity_pull / two_pi;
    return nlohmann::json{{"device", d}};
}

}  // namespace omsim
