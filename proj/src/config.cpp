#include "nfwave/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace nfwave {

const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::Simulate: return "simulate";
        case RunMode::Freeze: return "freeze";
        case RunMode::Tw: return "tw";
        case RunMode::Spectrum: return "spectrum";
        case RunMode::MtwBox: return "mtw-box";
        case RunMode::MtwShoot: return "mtw-shoot";
        case RunMode::Continue: return "continue";
        case RunMode::Codim1: return "codim1";
        case RunMode::Codim2: return "codim2";
        default: return "snake";
    }
}

std::optional<RunMode> parse_mode(const std::string& s) {
    static const std::map<std::string, RunMode> table = {
        {"simulate", RunMode::Simulate}, {"freeze", RunMode::Freeze},
        {"tw", RunMode::Tw},             {"spectrum", RunMode::Spectrum},
        {"mtw-box", RunMode::MtwBox},    {"mtw-shoot", RunMode::MtwShoot},
        {"continue", RunMode::Continue}, {"codim1", RunMode::Codim1},
        {"codim2", RunMode::Codim2},     {"snake", RunMode::Snake},
    };
    auto it = table.find(s);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::string ConfigErrors::joined() const {
    std::string out;
    for (const auto& e : errors) {
        out += e;
        out += "\n";
    }
    return out;
}

namespace {

struct RawConfig {
    // section -> key -> value
    std::map<std::string, std::map<std::string, std::string>> kv;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

RawConfig parse_ini(const std::string& text, ConfigErrors& errors) {
    RawConfig raw;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errors.errors.push_back("line " + std::to_string(lineno) +
                                        ": malformed section header");
                continue;
            }
            section = trim(line.substr(1, line.size() - 2));
            raw.kv[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errors.errors.push_back("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (section.empty()) {
            errors.errors.push_back("line " + std::to_string(lineno) + ": key '" + key +
                                    "' outside any [section]");
            continue;
        }
        if (raw.kv[section].count(key))
            errors.errors.push_back("line " + std::to_string(lineno) + ": duplicate key '" +
                                    section + "." + key + "'");
        raw.kv[section][key] = val;
    }
    return raw;
}

class Binder {
public:
    Binder(RawConfig& raw, ConfigErrors& errors) : raw_(raw), errors_(errors) {}

    void number(const std::string& sec, const std::string& key, double& slot) {
        auto v = take(sec, key);
        if (!v) return;
        try {
            std::size_t pos = 0;
            slot = std::stod(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing");
        } catch (...) {
            err(sec, key, "expected a number, got '" + *v + "'");
        }
    }
    void integer(const std::string& sec, const std::string& key, int& slot) {
        auto v = take(sec, key);
        if (!v) return;
        try {
            std::size_t pos = 0;
            slot = std::stoi(*v, &pos);
            if (pos != v->size()) throw std::invalid_argument("trailing");
        } catch (...) {
            err(sec, key, "expected an integer, got '" + *v + "'");
        }
    }
    void text(const std::string& sec, const std::string& key, std::string& slot) {
        auto v = take(sec, key);
        if (v) slot = *v;
    }
    void boolean(const std::string& sec, const std::string& key, bool& slot) {
        auto v = take(sec, key);
        if (!v) return;
        if (*v == "true" || *v == "1") slot = true;
        else if (*v == "false" || *v == "0") slot = false;
        else err(sec, key, "expected true/false");
    }

    void reject_unknown() {
        for (const auto& [sec, keys] : raw_.kv) {
            if (!touched_sections_.count(sec)) {
                errors_.errors.push_back("unknown section [" + sec + "]");
                continue;
            }
            for (const auto& [key, val] : keys)
                errors_.errors.push_back("unknown key '" + sec + "." + key + "'");
        }
    }

    void note_section(const std::string& sec) { touched_sections_.insert(sec); }

private:
    std::optional<std::string> take(const std::string& sec, const std::string& key) {
        touched_sections_.insert(sec);
        auto s = raw_.kv.find(sec);
        if (s == raw_.kv.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        std::string v = k->second;
        s->second.erase(k);
        if (s->second.empty()) raw_.kv.erase(s);
        return v;
    }
    void err(const std::string& sec, const std::string& key, const std::string& what) {
        errors_.errors.push_back("key '" + sec + "." + key + "': " + what);
    }

    RawConfig& raw_;
    ConfigErrors& errors_;
    std::set<std::string> touched_sections_;
};

}  // namespace

RunConfig validate_config(const std::string& text, ConfigErrors& errors) {
    RunConfig cfg;
    RawConfig raw = parse_ini(text, errors);
    Binder bind(raw, errors);

    bind.number("model", "beta", cfg.model.beta);
    bind.number("model", "a_ee", cfg.model.a_ee);
    bind.number("model", "a_ei", cfg.model.a_ei);
    bind.number("model", "a_ie", cfg.model.a_ie);
    bind.number("model", "a_ii", cfg.model.a_ii);
    bind.number("model", "theta_e", cfg.model.theta_e);
    bind.number("model", "theta_i", cfg.model.theta_i);
    bind.number("model", "sigma_e", cfg.model.sigma_e);
    bind.number("model", "sigma_i", cfg.model.sigma_i);
    bind.number("model", "tau", cfg.model.tau);

    bind.integer("grid", "n", cfg.grid_n);
    bind.number("grid", "L", cfg.grid_L);

    std::string mode_s = to_string(cfg.mode);
    bind.text("run", "mode", mode_s);
    if (auto m = parse_mode(mode_s)) cfg.mode = *m;
    else errors.errors.push_back("key 'run.mode': unknown mode '" + mode_s + "'");
    bind.text("run", "output", cfg.output_dir);
    bind.text("run", "seed", cfg.seed_path);
    bind.integer("run", "workers", cfg.workers);
    bind.text("run", "trajectory_format", cfg.trajectory_format);

    bind.number("simulate", "t_end", cfg.t_end);
    bind.number("simulate", "rtol", cfg.stepper_rtol);
    bind.number("simulate", "atol", cfg.stepper_atol);
    bind.integer("simulate", "save_stride", cfg.save_stride);
    bind.text("simulate", "initial", cfg.initial);
    bind.number("simulate", "pulse_center", cfg.pulse_center);
    bind.number("simulate", "pulse_width", cfg.pulse_width);
    bind.number("simulate", "pulse_amplitude", cfg.pulse_amplitude);
    bind.number("simulate", "pulse_v_shift", cfg.pulse_v_shift);
    bind.integer("simulate", "equilibrium_index", cfg.equilibrium_index);

    bind.number("tw", "newton_tol", cfg.newton_tol);
    bind.number("tw", "c_guess", cfg.c_guess);

    bind.integer("spectrum", "k", cfg.eig_k);
    bind.number("spectrum", "shift", cfg.eig_shift);
    bind.number("spectrum", "semigroup_t", cfg.semigroup_t);

    bind.text("mtw", "form", cfg.mtw_form);
    bind.integer("mtw", "slices", cfg.mtw_slices);
    bind.number("mtw", "period", cfg.mtw_period);
    bind.number("mtw", "amplitude", cfg.mtw_amplitude);

    bind.text("continue", "parameter", cfg.parameter);
    bind.number("continue", "from", cfg.p_from);
    bind.number("continue", "to", cfg.p_to);
    bind.number("continue", "ds0", cfg.ds0);
    bind.number("continue", "ds_max", cfg.ds_max);
    bind.integer("continue", "max_steps", cfg.max_steps);
    bind.integer("continue", "flag_stride", cfg.flag_stride);
    bind.text("continue", "problem", cfg.problem);
    bind.boolean("continue", "full_spectra", cfg.full_spectra);

    bind.text("codim1", "param1", cfg.param1);
    bind.text("codim1", "param2", cfg.param2);
    bind.integer("codim1", "bif_index", cfg.bif_index);
    bind.number("codim1", "direction", cfg.codim1_direction);

    bind.reject_unknown();

    // semantic checks
    try {
        cfg.model.validate();
    } catch (const std::invalid_argument& e) {
        errors.errors.push_back(e.what());
    }
    if (cfg.grid_n < 8) errors.errors.push_back("key 'grid.n': need at least 8 points");
    if (cfg.grid_L <= 0.0) errors.errors.push_back("key 'grid.L': must be positive");
    if (cfg.workers < 1) errors.errors.push_back("key 'run.workers': must be >= 1");
    if (cfg.newton_tol <= 0.0) errors.errors.push_back("key 'tw.newton_tol': must be positive");
    if (cfg.trajectory_format != "csv" && cfg.trajectory_format != "bin")
        errors.errors.push_back("key 'run.trajectory_format': expected csv or bin");
    if (cfg.mtw_form != "shoot-ode" && cfg.mtw_form != "shoot-dae" && cfg.mtw_form != "box-ode" &&
        cfg.mtw_form != "box-dae")
        errors.errors.push_back("key 'mtw.form': unknown formulation '" + cfg.mtw_form + "'");
    if (cfg.problem != "tw" && cfg.problem != "mtw-shoot" && cfg.problem != "mtw-box")
        errors.errors.push_back("key 'continue.problem': unknown problem '" + cfg.problem + "'");
    return cfg;
}

RunConfig load_config_file(const std::string& path, ConfigErrors& errors) {
    std::ifstream is(path);
    if (!is) {
        errors.errors.push_back("cannot open config file: " + path);
        return RunConfig{};
    }
    std::stringstream ss;
    ss << is.rdbuf();
    return validate_config(ss.str(), errors);
}

std::string dump_config(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "[model]\n";
    os << "beta = " << cfg.model.beta << "\n";
    os << "a_ee = " << cfg.model.a_ee << "\n";
    os << "a_ei = " << cfg.model.a_ei << "\n";
    os << "a_ie = " << cfg.model.a_ie << "\n";
    os << "a_ii = " << cfg.model.a_ii << "\n";
    os << "theta_e = " << cfg.model.theta_e << "\n";
    os << "theta_i = " << cfg.model.theta_i << "\n";
    os << "sigma_e = " << cfg.model.sigma_e << "\n";
    os << "sigma_i = " << cfg.model.sigma_i << "\n";
    os << "tau = " << cfg.model.tau << "\n\n";
    os << "[grid]\n";
    os << "n = " << cfg.grid_n << "\n";
    os << "L = " << cfg.grid_L << "\n\n";
    os << "[run]\n";
    os << "mode = " << to_string(cfg.mode) << "\n";
    os << "output = " << cfg.output_dir << "\n";
    if (!cfg.seed_path.empty()) os << "seed = " << cfg.seed_path << "\n";
    os << "workers = " << cfg.workers << "\n";
    os << "trajectory_format = " << cfg.trajectory_format << "\n\n";
    os << "[simulate]\n";
    os << "t_end = " << cfg.t_end << "\n";
    os << "rtol = " << cfg.stepper_rtol << "\n";
    os << "atol = " << cfg.stepper_atol << "\n";
    os << "save_stride = " << cfg.save_stride << "\n";
    os << "initial = " << cfg.initial << "\n";
    os << "pulse_center = " << cfg.pulse_center << "\n";
    os << "pulse_width = " << cfg.pulse_width << "\n";
    os << "pulse_amplitude = " << cfg.pulse_amplitude << "\n";
    os << "pulse_v_shift = " << cfg.pulse_v_shift << "\n";
    os << "equilibrium_index = " << cfg.equilibrium_index << "\n\n";
    os << "[tw]\n";
    os << "newton_tol = " << cfg.newton_tol << "\n";
    os << "c_guess = " << cfg.c_guess << "\n\n";
    os << "[spectrum]\n";
    os << "k = " << cfg.eig_k << "\n";
    os << "shift = " << cfg.eig_shift << "\n";
    os << "semigroup_t = " << cfg.semigroup_t << "\n\n";
    os << "[mtw]\n";
    os << "form = " << cfg.mtw_form << "\n";
    os << "slices = " << cfg.mtw_slices << "\n";
    os << "period = " << cfg.mtw_period << "\n";
    os << "amplitude = " << cfg.mtw_amplitude << "\n\n";
    os << "[continue]\n";
    os << "parameter = " << cfg.parameter << "\n";
    os << "from = " << cfg.p_from << "\n";
    os << "to = " << cfg.p_to << "\n";
    os << "ds0 = " << cfg.ds0 << "\n";
    os << "ds_max = " << cfg.ds_max << "\n";
    os << "max_steps = " << cfg.max_steps << "\n";
    os << "flag_stride = " << cfg.flag_stride << "\n";
    os << "problem = " << cfg.problem << "\n";
    os << "full_spectra = " << (cfg.full_spectra ? "true" : "false") << "\n\n";
    os << "[codim1]\n";
    os << "param1 = " << cfg.param1 << "\n";
    os << "param2 = " << cfg.param2 << "\n";
    os << "bif_index = " << cfg.bif_index << "\n";
    os << "direction = " << cfg.codim1_direction << "\n";
    return os.str();
}

}  // namespace nfwave
