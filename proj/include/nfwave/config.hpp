#pragma once

// Run configuration: INI-style text with [section] headers and key = value
// pairs (# or ; comments).  Validation is strict: unknown sections or keys
// are rejected, all errors are reported together.  Defaults reproduce the
// reference setup (N = 2048, L = 500, Newton tolerance 1e-9 sup norm).

#include <map>
#include <optional>
#include <string>

#include "nfwave/model.hpp"

namespace nfwave {

enum class RunMode { Simulate, Freeze, Tw, Spectrum, MtwBox, MtwShoot, Continue, Codim1, Codim2, Snake };
const char* to_string(RunMode m);
std::optional<RunMode> parse_mode(const std::string& s);

struct RunConfig {
    ModelParams model;
    int grid_n = 2048;
    double grid_L = 500.0;

    RunMode mode = RunMode::Tw;
    std::string output_dir = "out";
    std::string seed_path;
    int workers = 1;
    std::string trajectory_format = "csv";  // csv | bin

    // simulate / freeze
    double t_end = 50.0;
    double stepper_rtol = 1e-8;
    double stepper_atol = 1e-8;
    int save_stride = 1;
    std::string initial = "seed";  // seed | pulse | equilibrium
    double pulse_center = -120.0;
    double pulse_width = 15.0;
    double pulse_amplitude = 0.8;
    double pulse_v_shift = 15.0;
    int equilibrium_index = 0;

    // tw
    double newton_tol = 1e-9;
    double c_guess = 0.0;  // 0: from seed metadata or phase recovery

    // spectrum
    int eig_k = 20;
    double eig_shift = 0.02;
    double semigroup_t = 0.1;

    // mtw
    std::string mtw_form = "shoot-ode";
    int mtw_slices = 40;
    double mtw_period = 0.0;      // 0: from seed
    double mtw_amplitude = 1e-2;  // Hopf predictor amplitude (relative)

    // continue
    std::string parameter = "tau";
    double p_from = 0.0;  // 0: current model value
    double p_to = 0.0;
    double ds0 = 0.02;
    double ds_max = 0.2;
    int max_steps = 200;
    int flag_stride = 1;
    std::string problem = "tw";  // tw | mtw-shoot | mtw-box
    bool full_spectra = false;

    // codim1 / codim2
    std::string param1 = "theta_i";
    std::string param2 = "tau";
    int bif_index = 0;
    double codim1_direction = -1.0;
};

struct ConfigErrors {
    std::vector<std::string> errors;
    bool ok() const { return errors.empty(); }
    std::string joined() const;
};

// parse + validate; on failure the error list names every offending key
RunConfig validate_config(const std::string& text, ConfigErrors& errors);
RunConfig load_config_file(const std::string& path, ConfigErrors& errors);

// canonical echo of the effective configuration (round-trips through the parser)
std::string dump_config(const RunConfig& cfg);

}  // namespace nfwave
