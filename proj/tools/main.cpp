// Command line harness: every mode reads a config (plus overrides), writes a
// deterministic artifact set into the output directory and exits nonzero on
// solver failure with a diagnostic error.json.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "nfwave/config.hpp"
#include "nfwave/io.hpp"

namespace fs = std::filesystem;
using namespace nfwave;

namespace {

struct RunContext {
    RunConfig cfg;
    Grid grid;
    std::unique_ptr<KernelSet> kernels;
    fs::path out;
    std::ofstream log;

    void say(const std::string& msg) {
        log << msg << "\n";
        std::cout << msg << std::endl;
    }
    std::string path(const std::string& name) const { return (out / name).string(); }
};

StepperOptions stepper_opts(const RunConfig& cfg) {
    StepperOptions so;
    so.rtol = cfg.stepper_rtol;
    so.atol = cfg.stepper_atol;
    return so;
}

Vec initial_profile(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    if (cfg.initial == "seed" && !cfg.seed_path.empty()) {
        ProfileFile pf = read_profile_csv(cfg.seed_path);
        if (pf.grid.n_points != ctx.grid.n_points)
            return resample_profile(pf.profile, pf.grid, ctx.grid);
        return pf.profile;
    }
    auto eqs = clamped_equilibria(cfg.model);
    if (eqs.empty()) throw SolveError("no clamped equilibrium found for the initial state");
    const auto& eq = eqs[std::min<std::size_t>(cfg.equilibrium_index, eqs.size() - 1)];
    const int n = ctx.grid.n_points;
    Vec y(2 * (std::size_t)n);
    for (int i = 0; i < n; ++i) {
        y[i] = eq.u;
        y[n + i] = eq.v;
    }
    if (cfg.initial == "pulse") {
        for (int i = 0; i < n; ++i) {
            const double x = ctx.grid.nodes[i];
            const double bu = (x - cfg.pulse_center) / cfg.pulse_width;
            const double bv = (x - cfg.pulse_center - cfg.pulse_v_shift) / cfg.pulse_width;
            y[i] += cfg.pulse_amplitude * std::exp(-bu * bu);
            y[n + i] += 0.75 * cfg.pulse_amplitude * std::exp(-bv * bv);
        }
    } else if (cfg.initial != "equilibrium") {
        throw SolveError("no usable initial state: seed file missing and initial='" +
                         cfg.initial + "'");
    }
    return y;
}

WaveState load_wave(RunContext& ctx) {
    if (ctx.cfg.seed_path.empty()) throw SolveError("mode requires a seed profile (run.seed)");
    ProfileFile pf = read_profile_csv(ctx.cfg.seed_path);
    WaveState w;
    w.profile = pf.grid.n_points == ctx.grid.n_points
                    ? pf.profile
                    : resample_profile(pf.profile, pf.grid, ctx.grid);
    w.speed = ctx.cfg.c_guess;
    if (w.speed == 0.0) {
        auto it = pf.meta.find("c");
        if (it != pf.meta.end()) w.speed = it->second;
    }
    if (w.speed == 0.0) throw SolveError("no speed estimate: set tw.c_guess or seed metadata c=");
    return w;
}

int run_simulate(RunContext& ctx) {
    Vec y0 = initial_profile(ctx);
    Field f0(ctx.grid.n_points, y0);
    Trajectory tr = simulate_cauchy(f0, 0.0, ctx.cfg.t_end, ctx.cfg.model, *ctx.kernels,
                                    stepper_opts(ctx.cfg));
    ctx.say("simulate: " + std::to_string(tr.stats.n_accepted) + " steps accepted, " +
            std::to_string(tr.stats.n_rejected) + " rejected");
    if (ctx.cfg.trajectory_format == "bin")
        write_trajectory_bin(ctx.path("trajectory.bin"), tr, ctx.grid.n_points, false,
                             ctx.cfg.save_stride);
    else
        write_trajectory_csv(ctx.path("trajectory.csv"), tr, ctx.grid.n_points, false,
                             ctx.cfg.save_stride);
    write_profile_csv(ctx.path("final.csv"), ctx.grid,
                      Vec(tr.states.back().begin(), tr.states.back().end()));
    return 0;
}

int run_freeze(RunContext& ctx) {
    Vec y0 = initial_profile(ctx);
    ReferenceProfile ref = make_reference(y0, ctx.grid);
    FrozenState fs0;
    fs0.profile = y0;
    Trajectory tr = simulate_freezing_dae(fs0, ref, 0.0, ctx.cfg.t_end, ctx.cfg.model,
                                          *ctx.kernels, stepper_opts(ctx.cfg));
    ctx.say("freeze: " + std::to_string(tr.stats.n_accepted) + " steps, final lambda = " +
            format_double(tr.states.back()[2 * ctx.grid.n_points + 1]));
    if (ctx.cfg.trajectory_format == "bin")
        write_trajectory_bin(ctx.path("trajectory.bin"), tr, ctx.grid.n_points, true,
                             ctx.cfg.save_stride);
    else
        write_trajectory_csv(ctx.path("trajectory.csv"), tr, ctx.grid.n_points, true,
                             ctx.cfg.save_stride);
    FrozenState last = frozen_state_at(tr, tr.t1(), ctx.grid.n_points);
    write_profile_csv(ctx.path("final.csv"), ctx.grid, last.profile,
                      {{"c", last.lambda}, {"gamma", last.gamma}});
    return 0;
}

int run_tw(RunContext& ctx, WaveState* out_wave = nullptr) {
    WaveState guess = load_wave(ctx);
    ReferenceProfile ref = make_reference(guess.profile, ctx.grid);
    TwSolveOptions topt;
    topt.newton.tol_sup = ctx.cfg.newton_tol;
    NewtonResult info;
    WaveState w = solve_tw(guess, ref, ctx.cfg.model, *ctx.kernels, topt, &info);
    ctx.say("tw: converged in " + std::to_string(info.iterations) +
            " Newton iterations, c = " + format_double(w.speed));
    write_profile_csv(ctx.path("wave.csv"), ctx.grid, w.profile, {{"c", w.speed}});

    SpectrumOptions sopt;
    sopt.k = ctx.cfg.eig_k;
    sopt.shift = {ctx.cfg.eig_shift, 0.0};
    sopt.t_small = ctx.cfg.semigroup_t;
    SpectrumReport rep = tw_spectrum_shift_invert(w, ctx.cfg.model, *ctx.kernels, sopt);
    write_spectrum_json(ctx.path("spectrum_shift_invert.json"), rep);
    ctx.say("tw: kernel eigenvalue magnitude " + format_double(rep.kernel_eig_magnitude));
    if (out_wave) *out_wave = w;
    return 0;
}

int run_spectrum(RunContext& ctx) {
    WaveState w = load_wave(ctx);
    SpectrumOptions sopt;
    sopt.k = ctx.cfg.eig_k;
    sopt.shift = {ctx.cfg.eig_shift, 0.0};
    sopt.t_small = ctx.cfg.semigroup_t;
    SpectrumReport si = tw_spectrum_shift_invert(w, ctx.cfg.model, *ctx.kernels, sopt);
    SpectrumReport sg = tw_spectrum_semigroup(w, ctx.cfg.model, *ctx.kernels, sopt, &si);
    write_spectrum_json(ctx.path("spectrum_shift_invert.json"), si);
    write_spectrum_json(ctx.path("spectrum_semigroup.json"), sg);
    StabilityOptions stab;
    stab.spectrum = sopt;
    stab.always_cross_check = true;
    StabilityAssessment sa = assess_stability(w, ctx.cfg.model, *ctx.kernels, stab);
    ctx.say(std::string("spectrum: verdict ") + to_string(sa.verdict) + ", rightmost Re = " +
            format_double(sa.rightmost.real()));
    return 0;
}

MtwForm parse_form(const std::string& s) {
    if (s == "box-ode") return MtwForm::BoxOde;
    if (s == "box-dae") return MtwForm::BoxDae;
    if (s == "shoot-ode") return MtwForm::ShootOde;
    return MtwForm::ShootDae;
}

MtwOrbit seed_orbit(RunContext& ctx, MtwForm form) {
    const std::string& seed = ctx.cfg.seed_path;
    if (seed.size() > 5 && seed.substr(seed.size() - 5) == ".json") {
        int np = 0;
        MtwOrbit o = read_orbit_json(seed, &np);
        if (np != ctx.grid.n_points)
            throw SolveError("orbit seed grid does not match the configured grid");
        // re-tag the representation if the run asks for another formulation
        if ((form == MtwForm::BoxOde || form == MtwForm::BoxDae) && o.n_slices() < 2)
            throw SolveError("box run needs a box orbit seed (slices >= 2)");
        o.form = form;
        return o;
    }
    // profile seed: build a Hopf predictor around the wave
    WaveState w = load_wave(ctx);
    ReferenceProfile ref = make_reference(w.profile, ctx.grid);
    TwSolveOptions topt;
    topt.newton.tol_sup = ctx.cfg.newton_tol;
    w = solve_tw(w, ref, ctx.cfg.model, *ctx.kernels, topt);
    StabilityOptions stab;
    stab.spectrum.k = ctx.cfg.eig_k;
    stab.always_cross_check = true;
    StabilityAssessment sa = assess_stability(w, ctx.cfg.model, *ctx.kernels, stab);
    if (std::abs(sa.rightmost.imag()) < 1e-6)
        throw SolveError("seed wave has no oscillatory critical pair for an MTW predictor");
    EigPair pair;
    pair.value = sa.rightmost;
    pair.vector = sa.rightmost_vec;
    const double amp = ctx.cfg.mtw_amplitude * norm_inf(w.profile);
    MtwOrbit o = hopf_predictor(w, pair, amp, form, ctx.cfg.mtw_slices, ctx.grid);
    if (ctx.cfg.mtw_period > 0.0) o.period = ctx.cfg.mtw_period;
    return o;
}

int run_mtw(RunContext& ctx, bool box) {
    MtwForm form = parse_form(ctx.cfg.mtw_form);
    if (box && form != MtwForm::BoxOde && form != MtwForm::BoxDae) form = MtwForm::BoxOde;
    if (!box && form != MtwForm::ShootOde && form != MtwForm::ShootDae)
        form = MtwForm::ShootOde;
    MtwOrbit guess = seed_orbit(ctx, form);
    ReferenceProfile ref = make_reference(guess.slices[0], ctx.grid);
    MtwSolveOptions mopt;
    mopt.newton.tol_sup = box ? ctx.cfg.newton_tol : std::max(ctx.cfg.newton_tol, 1e-8);
    mopt.stepper = stepper_opts(ctx.cfg);
    NewtonResult info;
    MtwOrbit orbit = box ? solve_mtw_box(guess, form, ref, ctx.cfg.model, *ctx.kernels, mopt, &info)
                         : solve_mtw_shooting(guess, form, ref, ctx.cfg.model, *ctx.kernels,
                                              mopt, &info);
    ctx.say(std::string("mtw: ") + to_string(form) + " converged, T = " +
            format_double(orbit.period) + ", c = " + format_double(orbit.c_bar));
    write_orbit_json(ctx.path("orbit.json"), orbit, ctx.grid);
    FloquetOptions fopt;
    fopt.stepper = stepper_opts(ctx.cfg);
    FloquetReport fr = floquet_multipliers(orbit, ctx.cfg.model, *ctx.kernels, fopt);
    write_floquet_json(ctx.path("floquet.json"), fr);
    ctx.say(std::string("mtw: Floquet verdict ") + to_string(fr.verdict) + ", unit defects " +
            format_double(fr.unit_defect_space) + " / " + format_double(fr.unit_defect_time));
    return 0;
}

int run_continue(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg;
    ContinuationOptions copt;
    copt.ds0 = cfg.ds0;
    copt.ds_max = cfg.ds_max;
    copt.max_steps = cfg.max_steps;
    copt.flag_stride = cfg.flag_stride;
    const double p_start = cfg.p_from != 0.0 ? cfg.p_from : get_param(cfg.model, cfg.parameter);
    copt.p_lo = std::min(p_start, cfg.p_to);
    copt.p_hi = std::max(p_start, cfg.p_to);
    const double dir = cfg.p_to >= p_start ? 1.0 : -1.0;

    ModelParams mp = cfg.model;
    set_param(mp, cfg.parameter, p_start);

    Branch branch;
    if (cfg.problem == "tw") {
        WaveState guess = load_wave(ctx);
        ReferenceProfile ref = make_reference(guess.profile, ctx.grid);
        TwSolveOptions topt;
        topt.newton.tol_sup = cfg.newton_tol;
        WaveState w = solve_tw(guess, ref, mp, *ctx.kernels, topt);
        TwBranchConfig bc;
        bc.parameter = cfg.parameter;
        bc.cont = copt;
        branch = continue_tw_branch(w, mp, *ctx.kernels, bc, dir);
    } else {
        MtwForm form = cfg.problem == "mtw-box" ? MtwForm::BoxOde : MtwForm::ShootOde;
        MtwOrbit guess = seed_orbit(ctx, form);
        ReferenceProfile ref = make_reference(guess.slices[0], ctx.grid);
        MtwSolveOptions mopt;
        mopt.stepper = stepper_opts(cfg);
        MtwOrbit start = (form == MtwForm::BoxOde)
                             ? solve_mtw_box(guess, form, ref, mp, *ctx.kernels, mopt)
                             : solve_mtw_shooting(guess, form, ref, mp, *ctx.kernels, mopt);
        MtwBranchConfig bc;
        bc.parameter = cfg.parameter;
        bc.form = form;
        bc.cont = copt;
        bc.solve = mopt;
        branch = continue_mtw_branch(start, mp, *ctx.kernels, bc, dir);
    }
    ctx.say("continue: " + std::to_string(branch.points.size()) + " points, " +
            std::to_string(branch.bifurcations.size()) + " bifurcations (" +
            branch.termination + ")");
    write_branch_csv(ctx.path("branch.csv"), branch);
    write_bifurcations_json(ctx.path("bifurcations.json"), branch);

    if (cfg.full_spectra && cfg.problem == "tw") {
        // parallel post-pass over already computed points
        const int n2 = 2 * ctx.grid.n_points;
        fs::create_directories(ctx.out / "spectra");
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        const std::size_t total = branch.points.size();
        for (int wk = 0; wk < cfg.workers; ++wk) {
            pool.emplace_back([&, wk]() {
                KernelSet local(cfg.model, ctx.grid);
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= total) break;
                    const auto& bp = branch.points[i];
                    ModelParams pp = cfg.model;
                    set_param(pp, cfg.parameter, bp.parameter);
                    WaveState w;
                    w.profile.assign(bp.state.begin(), bp.state.begin() + n2);
                    w.speed = bp.state[n2];
                    SpectrumOptions sopt;
                    sopt.k = cfg.eig_k;
                    SpectrumReport rep = tw_spectrum_shift_invert(w, pp, local, sopt);
                    write_spectrum_json(
                        (ctx.out / "spectra" / ("point_" + std::to_string(i) + ".json")).string(),
                        rep);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return 0;
}

int run_codim1(RunContext& ctx) {
    std::vector<BifPoint> pts = read_bifpoints_file(ctx.cfg.seed_path);
    if (pts.empty()) throw SolveError("codim1: no bifurcation points in the seed file");
    const BifPoint& seedpt = pts[std::min<std::size_t>(ctx.cfg.bif_index, pts.size() - 1)];
    Codim1Options copt;
    copt.param1 = ctx.cfg.param1;
    copt.param2 = ctx.cfg.param2;
    copt.cont.ds0 = ctx.cfg.ds0;
    copt.cont.ds_max = ctx.cfg.ds_max;
    copt.cont.max_steps = ctx.cfg.max_steps;
    Branch curve;
    BifPoint seed2 = seedpt;
    seed2.p2 = seedpt.p1;  // detected in param2 (e.g. tau); the curve runs over param1
    seed2.p1 = get_param(ctx.cfg.model, ctx.cfg.param1);
    if (seedpt.kind == BifPoint::Kind::Hopf)
        curve = continue_hopf_curve(seed2, ctx.cfg.model, *ctx.kernels, copt,
                                    ctx.cfg.codim1_direction);
    else
        curve = continue_fold_curve(seed2, ctx.cfg.model, *ctx.kernels, copt,
                                    ctx.cfg.codim1_direction);
    ctx.say("codim1: " + std::to_string(curve.points.size()) + " points (" + curve.termination +
            ")");
    write_branch_csv(ctx.path("curve.csv"), curve);
    try {
        BifPoint fold = codim1_fold_point(curve);
        write_bifpoints_file(ctx.path("curve_fold.json"), {fold});
        ctx.say("codim1: curve fold near (" + format_double(fold.p1) + ", " +
                format_double(fold.p2) + ")");
    } catch (const SolveError&) {
        ctx.say("codim1: no fold detected on the curve");
    }
    return 0;
}

int run_codim2(RunContext& ctx) {
    std::vector<BifPoint> pts = read_bifpoints_file(ctx.cfg.seed_path);
    if (pts.empty()) throw SolveError("codim2: no bifurcation points in the seed file");
    const BifPoint& seedpt = pts[std::min<std::size_t>(ctx.cfg.bif_index, pts.size() - 1)];
    if (seedpt.kind != BifPoint::Kind::Hopf)
        throw SolveError("codim2: seed must be a Hopf point");
    Codim1Options copt;
    copt.param1 = ctx.cfg.param1;
    copt.param2 = ctx.cfg.param2;
    copt.cont.ds0 = ctx.cfg.ds0;
    copt.cont.ds_max = ctx.cfg.ds_max;
    copt.cont.max_steps = ctx.cfg.max_steps;
    BifPoint seed2 = seedpt;
    seed2.p2 = seedpt.p1;
    seed2.p1 = get_param(ctx.cfg.model, ctx.cfg.param1);
    Branch curve = continue_hopf_curve(seed2, ctx.cfg.model, *ctx.kernels, copt,
                                       ctx.cfg.codim1_direction);
    write_branch_csv(ctx.path("hopf_curve.csv"), curve);
    BifPoint bt = detect_codim2_bt(curve, ctx.cfg.model, *ctx.kernels, copt);
    write_bifpoints_file(ctx.path("bt.json"), {bt});
    ctx.say("codim2: BT at (" + format_double(bt.p1) + ", " + format_double(bt.p2) + "), " +
            (bt.refined ? "refined" : "extrapolated"));
    return 0;
}

int run_snake(RunContext& ctx) {
    MtwForm form = parse_form(ctx.cfg.mtw_form);
    MtwOrbit guess = seed_orbit(ctx, form);
    ReferenceProfile ref = make_reference(guess.slices[0], ctx.grid);
    MtwSolveOptions mopt;
    mopt.stepper = stepper_opts(ctx.cfg);
    const bool box = (form == MtwForm::BoxOde || form == MtwForm::BoxDae);
    MtwOrbit start = box ? solve_mtw_box(guess, form, ref, ctx.cfg.model, *ctx.kernels, mopt)
                         : solve_mtw_shooting(guess, form, ref, ctx.cfg.model, *ctx.kernels, mopt);
    MtwBranchConfig bc;
    bc.parameter = ctx.cfg.parameter;
    bc.form = form;
    bc.cont.ds0 = ctx.cfg.ds0;
    bc.cont.ds_max = ctx.cfg.ds_max;
    bc.cont.max_steps = ctx.cfg.max_steps;
    bc.cont.p_lo = std::min(ctx.cfg.p_from, ctx.cfg.p_to);
    bc.cont.p_hi = std::max(ctx.cfg.p_from, ctx.cfg.p_to);
    bc.solve = mopt;
    const double dir = ctx.cfg.p_to >= get_param(ctx.cfg.model, ctx.cfg.parameter) ? 1.0 : -1.0;
    Branch branch = continue_mtw_branch(start, ctx.cfg.model, *ctx.kernels, bc, dir);
    write_branch_csv(ctx.path("branch.csv"), branch);
    SnakingScan scan = snaking_scan(branch, ctx.cfg.model, *ctx.kernels, ctx.cfg.parameter);
    nlohmann::json j;
    j["fold_parameters"] = scan.fold_parameters;
    j["l1_norms"] = scan.l1_norms;
    j["tail_extents"] = scan.tail_extents;
    std::ofstream os(ctx.path("snaking.json"));
    os << j.dump(1) << "\n";
    ctx.say("snake: " + std::to_string(scan.fold_indices.size()) + " folds recorded");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nfwave: traveling and modulated traveling waves of a two-population neural field"};
    std::string config_path, mode_override, output_override, seed_override;
    int workers_override = 0;
    app.add_option("--config", config_path, "configuration file");
    app.add_option("--mode", mode_override, "override run.mode");
    app.add_option("--output", output_override, "override run.output");
    app.add_option("--seed", seed_override, "override run.seed");
    app.add_option("--workers", workers_override, "override run.workers");
    CLI11_PARSE(app, argc, argv);

    ConfigErrors errors;
    RunConfig cfg = config_path.empty() ? validate_config("", errors)
                                        : load_config_file(config_path, errors);
    if (!mode_override.empty()) {
        if (auto m = parse_mode(mode_override)) cfg.mode = *m;
        else errors.errors.push_back("unknown mode override: " + mode_override);
    }
    if (!output_override.empty()) cfg.output_dir = output_override;
    if (!seed_override.empty()) cfg.seed_path = seed_override;
    if (workers_override > 0) cfg.workers = workers_override;
    if (!errors.ok()) {
        std::cerr << "configuration errors:\n" << errors.joined();
        return 1;
    }

    RunContext ctx;
    ctx.cfg = cfg;
    ctx.out = cfg.output_dir;
    fs::create_directories(ctx.out);
    ctx.log.open(ctx.out / "run.log");
    {
        std::ofstream echo(ctx.out / "config_echo.ini");
        echo << dump_config(cfg);
    }
    try {
        ctx.grid = Grid(cfg.grid_n, cfg.grid_L);
        ctx.kernels = std::make_unique<KernelSet>(cfg.model, ctx.grid);
        switch (cfg.mode) {
            case RunMode::Simulate: return run_simulate(ctx);
            case RunMode::Freeze: return run_freeze(ctx);
            case RunMode::Tw: return run_tw(ctx);
            case RunMode::Spectrum: return run_spectrum(ctx);
            case RunMode::MtwBox: return run_mtw(ctx, true);
            case RunMode::MtwShoot: return run_mtw(ctx, false);
            case RunMode::Continue: return run_continue(ctx);
            case RunMode::Codim1: return run_codim1(ctx);
            case RunMode::Codim2: return run_codim2(ctx);
            case RunMode::Snake: return run_snake(ctx);
        }
    } catch (const std::exception& e) {
        ctx.say(std::string("error: ") + e.what());
        nlohmann::json j;
        j["error"] = e.what();
        std::ofstream os(ctx.out / "error.json");
        os << j.dump(1) << "\n";
        return 2;
    }
    return 0;
}
