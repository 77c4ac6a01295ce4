#include "mmcim/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace mmcim {

using nlohmann::json;

double SystemParams::omega_1() const { return 2.0 * std::numbers::pi * f_1; }
double SystemParams::valve_kv() const { return V_acb / transformer.a; }

double SystemParams::L_T() const {
    const double z_base = valve_kv() * valve_kv() / S_b;
    return transformer.X_T * z_base / omega_1();
}

const GridParams& SystemParams::grid(int end) const { return end == 0 ? grid_re : grid_se; }
const MmcParams& SystemParams::mmc(int end) const { return end == 0 ? mmc_re : mmc_se; }
double SystemParams::T_d(int end) const { return end == 0 ? delays.T_d_re : delays.T_d_se; }

namespace {

json defaults_json() {
    return json{
        {"base", {{"S_b", 1.38e9}, {"V_acb", 525e3}, {"V_dcb", 840e3}, {"f_1", 50.0}}},
        {"grid_re", {{"v_g_kv", 542.3}, {"v_g_deg", 82.0}, {"L_g", 0.100}, {"R_g", 0.0}}},
        {"grid_se", {{"v_g_kv", 620.2}, {"v_g_deg", 90.0}, {"L_g", 0.0}, {"R_g", 40.0}}},
        {"mmc_re", {{"L", 0.140}, {"R", 1.0}, {"C_sm", 0.011}, {"N", 500}}},
        {"mmc_se", {{"L", 0.140}, {"R", 1.0}, {"C_sm", 0.011}, {"N", 500}}},
        {"transformer", {{"a", 1.2007}, {"X_T", 0.14}}},
        {"references",
         {{"P_s_ref", -1.25e9}, {"Q_ref_re", 0.0}, {"Q_ref_se", 0.0},
          {"v_dc_ref", 840e3}, {"v_ac_ref_pu", 1.0}}},
        {"controllers",
         {{"h_PQ", {{"Kp", 1.0}, {"Ti", 0.01}}},
          {"h_ov", {{"Kp", 1.3}, {"Ti", 0.01}}},
          {"h_vdc", {{"Kp", 10.0}, {"Ti", 0.05}}},
          {"h_PLL", {{"Kp", 100.0}, {"Ti", 0.05}}},
          {"h_i1", {{"Kp", 0.35}, {"Ti", 0.1}}},
          {"h_i2", {{"Kp", 0.8}, {"Ti", 0.01}}}}},
        {"delays", {{"T_d_re", 460e-6}, {"T_d_se", 0.0}}},
        {"ccc_mode", "CCSC"},
        {"truncation_n", 4},
    };
}

void deep_merge(json& base, const json& over) {
    if (!over.is_object() || !base.is_object()) {
        base = over;
        return;
    }
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (base.contains(it.key()))
            deep_merge(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

PiParams parse_pi(const json& j, const char* name) {
    PiParams p;
    p.Kp = j.at("Kp").get<double>();
    p.Ti = j.at("Ti").get<double>();
    if (!(p.Ti > 0.0))
        throw ConfigError(std::string("invariant violation: Ti (") + name + ")");
    return p;
}

GridParams parse_grid(const json& j) {
    GridParams g;
    g.v_g_kv = j.at("v_g_kv").get<double>();
    g.v_g_deg = j.at("v_g_deg").get<double>();
    g.L_g = j.at("L_g").get<double>();
    g.R_g = j.at("R_g").get<double>();
    return g;
}

MmcParams parse_mmc(const json& j) {
    MmcParams m;
    m.L = j.at("L").get<double>();
    m.R = j.at("R").get<double>();
    m.C_sm = j.at("C_sm").get<double>();
    m.N = j.at("N").get<int>();
    return m;
}

SystemParams from_json(const json& doc) {
    SystemParams p;
    const json& b = doc.at("base");
    p.S_b = b.at("S_b").get<double>() / 1e6;
    p.V_acb = b.at("V_acb").get<double>() / 1e3;
    p.V_dcb = b.at("V_dcb").get<double>() / 1e3;
    p.f_1 = b.at("f_1").get<double>();
    p.grid_re = parse_grid(doc.at("grid_re"));
    p.grid_se = parse_grid(doc.at("grid_se"));
    p.mmc_re = parse_mmc(doc.at("mmc_re"));
    p.mmc_se = parse_mmc(doc.at("mmc_se"));
    p.transformer.a = doc.at("transformer").at("a").get<double>();
    p.transformer.X_T = doc.at("transformer").at("X_T").get<double>();
    const json& r = doc.at("references");
    p.references.P_s_ref = r.at("P_s_ref").get<double>() / 1e6;
    p.references.Q_ref_re = r.at("Q_ref_re").get<double>() / 1e6;
    p.references.Q_ref_se = r.at("Q_ref_se").get<double>() / 1e6;
    p.references.v_dc_ref = r.at("v_dc_ref").get<double>() / 1e3;
    p.references.v_ac_ref_pu = r.value("v_ac_ref_pu", 1.0);
    const json& c = doc.at("controllers");
    p.controllers.h_PQ = parse_pi(c.at("h_PQ"), "h_PQ");
    p.controllers.h_ov = parse_pi(c.at("h_ov"), "h_ov");
    p.controllers.h_vdc = parse_pi(c.at("h_vdc"), "h_vdc");
    p.controllers.h_PLL = parse_pi(c.at("h_PLL"), "h_PLL");
    p.controllers.h_i1 = parse_pi(c.at("h_i1"), "h_i1");
    p.controllers.h_i2 = parse_pi(c.at("h_i2"), "h_i2");
    p.delays.T_d_re = doc.at("delays").at("T_d_re").get<double>();
    p.delays.T_d_se = doc.at("delays").at("T_d_se").get<double>();
    std::string mode = doc.at("ccc_mode").get<std::string>();
    for (auto& ch : mode) ch = static_cast<char>(std::tolower(ch));
    if (mode == "ccsc")
        p.ccc_mode = CccMode::ccsc;
    else if (mode == "fccc")
        p.ccc_mode = CccMode::fccc;
    else
        throw ConfigError("invariant violation: ccc_mode (expected CCSC or FCCC)");
    p.n = doc.at("truncation_n").get<int>();
    p.n_ptb = doc.value("perturbation_n", std::max(6, p.n + 2));
    p.scaling.k_a = p.transformer.a;
    p.scaling.k_m = 1.0;
    p.scaling.k_dc = p.transformer.a / 2.0;
    p.scaling.k_ac = 1.0 / 3.0;
    if (doc.contains("scaling")) {
        const json& s = doc.at("scaling");
        p.scaling.k_a = s.value("k_a", p.scaling.k_a);
        p.scaling.k_m = s.value("k_m", p.scaling.k_m);
        p.scaling.k_dc = s.value("k_dc", p.scaling.k_dc);
        p.scaling.k_ac = s.value("k_ac", p.scaling.k_ac);
    }
    validate(p);
    return p;
}

json parse_document(const std::string& text) {
    json doc = defaults_json();
    json user;
    try {
        user = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("parse failure: ") + e.what());
    }
    deep_merge(doc, user);
    return doc;
}

json pi_doc(const PiParams& p) { return json{{"Kp", p.Kp}, {"Ti", p.Ti}}; }

json grid_doc(const GridParams& g) {
    return json{{"v_g_kv", g.v_g_kv}, {"v_g_deg", g.v_g_deg}, {"L_g", g.L_g}, {"R_g", g.R_g}};
}

json mmc_doc(const MmcParams& m) {
    return json{{"L", m.L}, {"R", m.R}, {"C_sm", m.C_sm}, {"N", m.N}};
}

// inverse of from_json, including the unit conversions at the boundary
json to_doc(const SystemParams& p) {
    return json{
        {"base",
         {{"S_b", p.S_b * 1e6}, {"V_acb", p.V_acb * 1e3}, {"V_dcb", p.V_dcb * 1e3},
          {"f_1", p.f_1}}},
        {"grid_re", grid_doc(p.grid_re)},
        {"grid_se", grid_doc(p.grid_se)},
        {"mmc_re", mmc_doc(p.mmc_re)},
        {"mmc_se", mmc_doc(p.mmc_se)},
        {"transformer", {{"a", p.transformer.a}, {"X_T", p.transformer.X_T}}},
        {"references",
         {{"P_s_ref", p.references.P_s_ref * 1e6}, {"Q_ref_re", p.references.Q_ref_re * 1e6},
          {"Q_ref_se", p.references.Q_ref_se * 1e6}, {"v_dc_ref", p.references.v_dc_ref * 1e3},
          {"v_ac_ref_pu", p.references.v_ac_ref_pu}}},
        {"controllers",
         {{"h_PQ", pi_doc(p.controllers.h_PQ)}, {"h_ov", pi_doc(p.controllers.h_ov)},
          {"h_vdc", pi_doc(p.controllers.h_vdc)}, {"h_PLL", pi_doc(p.controllers.h_PLL)},
          {"h_i1", pi_doc(p.controllers.h_i1)}, {"h_i2", pi_doc(p.controllers.h_i2)}}},
        {"delays", {{"T_d_re", p.delays.T_d_re}, {"T_d_se", p.delays.T_d_se}}},
        {"ccc_mode", p.ccc_mode == CccMode::ccsc ? "CCSC" : "FCCC"},
        {"truncation_n", p.n},
        {"perturbation_n", p.n_ptb},
        {"scaling",
         {{"k_a", p.scaling.k_a}, {"k_m", p.scaling.k_m}, {"k_dc", p.scaling.k_dc},
          {"k_ac", p.scaling.k_ac}}},
    };
}

}  // namespace

SystemParams load_config_text(const std::string& json_text) {
    return from_json(parse_document(json_text));
}

SystemParams load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str());
}

std::string apply_overrides(const std::string& json_text,
                            const std::vector<std::string>& assignments) {
    json doc = parse_document(json_text.empty() ? std::string("{}") : json_text);
    for (const auto& a : assignments) {
        auto eq = a.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("override must be path=value: " + a);
        std::string path = a.substr(0, eq);
        std::string value = a.substr(eq + 1);
        json* node = &doc;
        size_t pos = 0;
        while (true) {
            auto dot = path.find('.', pos);
            std::string key = path.substr(pos, dot - pos);
            if (key.empty())
                throw ConfigError("empty path component in override: " + a);
            if (dot == std::string::npos) {
                json parsed = json::parse(value, nullptr, false);
                (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
                break;
            }
            node = &(*node)[key];
            pos = dot + 1;
        }
    }
    return doc.dump();
}

std::string dump_config(const SystemParams& p) { return to_doc(p).dump(2) + "\n"; }

void set_param(SystemParams& p, const std::string& path, double value) {
    json doc = to_doc(p);
    json* node = &doc;
    size_t pos = 0;
    while (true) {
        auto dot = path.find('.', pos);
        std::string key = path.substr(pos, dot - pos);
        if (key.empty())
            throw ConfigError("empty path component in parameter path: " + path);
        if (dot == std::string::npos) {
            if (!node->contains(key))
                throw ConfigError("unknown parameter path: " + path);
            (*node)[key] = value;
            break;
        }
        if (!node->contains(key))
            throw ConfigError("unknown parameter path: " + path);
        node = &(*node)[key];
        pos = dot + 1;
    }
    p = from_json(doc);
}

void validate(const SystemParams& p) {
    auto require = [](bool ok, const char* field) {
        if (!ok)
            throw ConfigError(std::string("invariant violation: ") + field);
    };
    require(p.S_b > 0.0, "S_b");
    require(p.V_acb > 0.0, "V_acb");
    require(p.V_dcb > 0.0, "V_dcb");
    require(p.f_1 > 0.0, "f_1");
    for (int end = 0; end < 2; ++end) {
        require(p.mmc(end).L > 0.0, "L");
        require(p.mmc(end).C_sm > 0.0, "C_sm");
        require(p.mmc(end).N >= 1, "N");
        require(p.mmc(end).R >= 0.0, "R");
        require(p.grid(end).L_g >= 0.0, "L_g");
        require(p.grid(end).R_g >= 0.0, "R_g");
        require(p.T_d(end) >= 0.0, "T_d");
    }
    require(p.transformer.a > 0.0, "a");
    require(p.transformer.X_T >= 0.0, "X_T");
    require(p.n >= 2, "n");
    require(p.n_ptb >= p.n, "perturbation_n");
    require(p.scaling.k_a > 0.0, "k_a");
    require(p.scaling.k_m != 0.0, "k_m");
    require(p.scaling.k_dc != 0.0, "k_dc");
    require(p.scaling.k_ac != 0.0, "k_ac");
}

SystemParams default_params() { return load_config_text("{}"); }

cplx evaluate_pi(const PiParams& p, cplx s) {
    if (s == cplx(0.0, 0.0))
        throw ConfigError("integrator pole at DC");
    return p.Kp + 1.0 / (p.Ti * s);
}

cplx delay_tf(double T_d, cplx s) {
    if (T_d < 0.0)
        throw ConfigError("invariant violation: T_d");
    return std::exp(-s * T_d);
}

}  // namespace mmcim
