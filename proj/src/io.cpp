#include "nfwave/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nfwave {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path);
    if (!os) throw SolveError("cannot open for writing: " + path);
    return os;
}

json cplx_json(const std::complex<double>& z) { return json::array({z.real(), z.imag()}); }

json eigs_json(const std::vector<EigPair>& pairs, double scale = 1.0) {
    json arr = json::array();
    for (const auto& p : pairs)
        arr.push_back(json::array({p.value.real() * scale, p.value.imag() * scale}));
    return arr;
}

}  // namespace

void write_profile_csv(const std::string& path, const Grid& grid, const Vec& profile,
                       const std::map<std::string, double>& meta) {
    auto os = open_out(path);
    os << "# nfwave profile\n";
    os << "# n=" << grid.n_points << " L=" << format_double(grid.half_length) << "\n";
    for (const auto& [k, v] : meta) os << "# " << k << "=" << format_double(v) << "\n";
    os << "x,u,v\n";
    const int n = grid.n_points;
    for (int i = 0; i < n; ++i)
        os << format_double(grid.nodes[i]) << ',' << format_double(profile[i]) << ','
           << format_double(profile[n + i]) << "\n";
}

ProfileFile read_profile_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw SolveError("cannot open profile file: " + path);
    ProfileFile out;
    int n = 0;
    double L = 0.0;
    std::string line;
    std::vector<double> us, vs;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string tok;
            while (ss >> tok) {
                auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = tok.substr(0, eq);
                const double val = std::stod(tok.substr(eq + 1));
                if (key == "n") n = (int)val;
                else if (key == "L") L = val;
                else out.meta[key] = val;
            }
            continue;
        }
        if (line.rfind("x,", 0) == 0) continue;
        std::istringstream ss(line);
        std::string cell;
        double vals[3];
        int c = 0;
        while (std::getline(ss, cell, ',') && c < 3) vals[c++] = std::stod(cell);
        if (c == 3) {
            us.push_back(vals[1]);
            vs.push_back(vals[2]);
        }
    }
    if (n == 0) n = (int)us.size();
    if ((int)us.size() != n || L <= 0.0)
        throw SolveError("malformed profile file (bad n/L metadata): " + path);
    out.grid = Grid(n, L);
    out.profile.resize(2 * (std::size_t)n);
    std::copy(us.begin(), us.end(), out.profile.begin());
    std::copy(vs.begin(), vs.end(), out.profile.begin() + n);
    return out;
}

namespace {

// (t, gamma, lambda) extraction for the two trajectory layouts
void traj_row(const Trajectory& traj, std::size_t k, int n_points, bool frozen, double* g,
              double* l, const double** samples) {
    const Vec& y = traj.states[k];
    if (frozen) {
        *g = y[2 * n_points];
        *l = y[2 * n_points + 1];
    } else {
        *g = 0.0;
        *l = 0.0;
    }
    *samples = y.data();
}

}  // namespace

void write_trajectory_csv(const std::string& path, const Trajectory& traj, int n_points,
                          bool frozen_layout, int stride) {
    auto os = open_out(path);
    os << "# nfwave trajectory rows=t,gamma,lambda,u...,v...\n";
    os << "# n=" << n_points << "\n";
    for (std::size_t k = 0; k < traj.times.size(); k += std::max(1, stride)) {
        double g, l;
        const double* s;
        traj_row(traj, k, n_points, frozen_layout, &g, &l, &s);
        os << format_double(traj.times[k]) << ',' << format_double(g) << ',' << format_double(l);
        for (int i = 0; i < 2 * n_points; ++i) os << ',' << format_double(s[i]);
        os << "\n";
    }
}

void write_trajectory_bin(const std::string& path, const Trajectory& traj, int n_points,
                          bool frozen_layout, int stride) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SolveError("cannot open for writing: " + path);
    const char magic[8] = {'N', 'F', 'W', 'B', '0', '0', '0', '1'};
    os.write(magic, 8);
    std::int64_t rows = 0;
    for (std::size_t k = 0; k < traj.times.size(); k += std::max(1, stride)) ++rows;
    const std::int64_t cols = 3 + 2 * (std::int64_t)n_points;
    os.write(reinterpret_cast<const char*>(&rows), 8);
    os.write(reinterpret_cast<const char*>(&cols), 8);
    for (std::size_t k = 0; k < traj.times.size(); k += std::max(1, stride)) {
        double g, l;
        const double* s;
        traj_row(traj, k, n_points, frozen_layout, &g, &l, &s);
        const double head[3] = {traj.times[k], g, l};
        os.write(reinterpret_cast<const char*>(head), 3 * sizeof(double));
        os.write(reinterpret_cast<const char*>(s), 2 * (std::size_t)n_points * sizeof(double));
    }
}

void write_branch_csv(const std::string& path, const Branch& branch) {
    auto os = open_out(path);
    os << "# nfwave branch kind=" << branch.kind << " parameter=" << branch.parameter_name
       << " termination=" << branch.termination << "\n";
    os << "s," << branch.parameter_name << ",c,T,test,stability\n";
    for (const auto& bp : branch.points) {
        os << format_double(bp.arclength) << ',' << format_double(bp.parameter) << ','
           << format_double(bp.speed) << ',' << format_double(bp.period) << ','
           << format_double(bp.test_value) << ','
           << (bp.flagged ? to_string(bp.stability) : "unflagged") << "\n";
    }
}

namespace {

json bif_json(const BifPoint& b, bool include_state) {
    json j;
    j["kind"] = to_string(b.kind);
    j["p1"] = b.p1;
    j["p2"] = b.p2;
    j["omega"] = b.omega;
    j["critical"] = cplx_json(b.critical);
    j["detection_residual"] = b.detection_residual;
    j["refined"] = b.refined;
    if (include_state) {
        j["state"] = b.state;
        json re = json::array(), im = json::array();
        for (const auto& z : b.eigvec) {
            re.push_back(z.real());
            im.push_back(z.imag());
        }
        j["eigvec_re"] = re;
        j["eigvec_im"] = im;
    }
    return j;
}

BifPoint bif_from_json(const json& j) {
    BifPoint b;
    const std::string kind = j.at("kind");
    if (kind == "Fold") b.kind = BifPoint::Kind::Fold;
    else if (kind == "Hopf") b.kind = BifPoint::Kind::Hopf;
    else if (kind == "BT") b.kind = BifPoint::Kind::BT;
    else b.kind = BifPoint::Kind::LimitPointCycles;
    b.p1 = j.at("p1");
    b.p2 = j.at("p2");
    b.omega = j.at("omega");
    b.critical = {j.at("critical")[0], j.at("critical")[1]};
    b.detection_residual = j.value("detection_residual", 0.0);
    b.refined = j.value("refined", false);
    if (j.contains("state")) b.state = j.at("state").get<Vec>();
    if (j.contains("eigvec_re")) {
        const auto re = j.at("eigvec_re").get<Vec>();
        const auto im = j.at("eigvec_im").get<Vec>();
        b.eigvec.resize(re.size());
        for (std::size_t i = 0; i < re.size(); ++i) b.eigvec[i] = {re[i], im[i]};
    }
    return b;
}

}  // namespace

void write_bifurcations_json(const std::string& path, const Branch& branch,
                             bool include_states) {
    json arr = json::array();
    for (const auto& b : branch.bifurcations) arr.push_back(bif_json(b, include_states));
    auto os = open_out(path);
    os << arr.dump(1) << "\n";
}

void write_bifpoints_file(const std::string& path, const std::vector<BifPoint>& pts) {
    json arr = json::array();
    for (const auto& b : pts) arr.push_back(bif_json(b, true));
    auto os = open_out(path);
    os << arr.dump(1) << "\n";
}

std::vector<BifPoint> read_bifpoints_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw SolveError("cannot open bifurcation file: " + path);
    json arr = json::parse(is);
    std::vector<BifPoint> out;
    for (const auto& j : arr) out.push_back(bif_from_json(j));
    return out;
}

void write_spectrum_json(const std::string& path, const SpectrumReport& report) {
    json j;
    j["method"] = report.method;
    j["c_bar"] = report.c_bar;
    j["kernel_eig_magnitude"] = report.kernel_eig_magnitude;
    j["rightmost_nonzero"] = cplx_json(report.rightmost_nonzero);
    j["goldstone_index"] = report.goldstone_index;
    j["eigenvalues"] = eigs_json(report.eigenvalues);
    if (report.c_bar != 0.0)
        j["eigenvalues_over_c"] = eigs_json(report.eigenvalues, 1.0 / report.c_bar);
    auto os = open_out(path);
    os << j.dump(1) << "\n";
}

void write_floquet_json(const std::string& path, const FloquetReport& report) {
    json j;
    j["multipliers"] = eigs_json(report.multipliers);
    j["unit_count"] = report.unit_count;
    j["unit_defect_space"] = report.unit_defect_space;
    j["unit_defect_time"] = report.unit_defect_time;
    j["verdict"] = to_string(report.verdict);
    auto os = open_out(path);
    os << j.dump(1) << "\n";
}

void write_orbit_json(const std::string& path, const MtwOrbit& orbit, const Grid& grid) {
    json j;
    j["form"] = to_string(orbit.form);
    j["period"] = orbit.period;
    j["c_bar"] = orbit.c_bar;
    j["lambda0"] = orbit.lambda0;
    j["lambdas"] = orbit.lambdas;
    j["n_points"] = grid.n_points;
    j["L"] = grid.half_length;
    j["residual_sup"] = orbit.residual_sup;
    json slices = json::array();
    for (const auto& s : orbit.slices) slices.push_back(s);
    j["slices"] = slices;
    auto os = open_out(path);
    os << j.dump() << "\n";
}

MtwOrbit read_orbit_json(const std::string& path, int* n_points) {
    std::ifstream is(path);
    if (!is) throw SolveError("cannot open orbit file: " + path);
    json j = json::parse(is);
    MtwOrbit o;
    const std::string form = j.at("form");
    if (form == "box-ode") o.form = MtwForm::BoxOde;
    else if (form == "box-dae") o.form = MtwForm::BoxDae;
    else if (form == "shoot-ode") o.form = MtwForm::ShootOde;
    else if (form == "shoot-dae") o.form = MtwForm::ShootDae;
    else throw SolveError("unknown orbit form: " + form);
    o.period = j.at("period");
    o.c_bar = j.at("c_bar");
    o.lambda0 = j.value("lambda0", 0.0);
    o.lambdas = j.value("lambdas", Vec{});
    o.residual_sup = j.value("residual_sup", 0.0);
    for (const auto& s : j.at("slices")) o.slices.push_back(s.get<Vec>());
    if (n_points) *n_points = j.at("n_points");
    return o;
}

}  // namespace nfwave
