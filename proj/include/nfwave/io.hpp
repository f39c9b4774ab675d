#pragma once

// Artifact formats: profile CSV (x,u,v with grid metadata in comment lines),
// trajectory CSV (t, gamma, lambda, samples), branch CSV with a bifurcation
// sidecar JSON, spectrum / Floquet / orbit JSON.  All floating point output
// is printed with %.17g so identical runs produce identical bytes.

#include <map>
#include <string>

#include "nfwave/continuation.hpp"

namespace nfwave {

std::string format_double(double v);

struct ProfileFile {
    Grid grid;
    Vec profile;  // stacked u then v
    std::map<std::string, double> meta;
};

void write_profile_csv(const std::string& path, const Grid& grid, const Vec& profile,
                       const std::map<std::string, double>& meta = {});
ProfileFile read_profile_csv(const std::string& path);

// one row per saved time: t, gamma, lambda, u..., v...
void write_trajectory_csv(const std::string& path, const Trajectory& traj, int n_points,
                          bool frozen_layout, int stride = 1);
// compact binary layout: magic, rows, cols, row-major doubles
void write_trajectory_bin(const std::string& path, const Trajectory& traj, int n_points,
                          bool frozen_layout, int stride = 1);

void write_branch_csv(const std::string& path, const Branch& branch);
void write_bifurcations_json(const std::string& path, const Branch& branch,
                             bool include_states = true);

void write_spectrum_json(const std::string& path, const SpectrumReport& report);
void write_floquet_json(const std::string& path, const FloquetReport& report);

void write_orbit_json(const std::string& path, const MtwOrbit& orbit, const Grid& grid);
MtwOrbit read_orbit_json(const std::string& path, int* n_points = nullptr);

// Hopf/Fold/BT points with enough state to reseed codim-1 runs
struct BifPointFile {
    std::vector<BifPoint> points;
};
void write_bifpoints_file(const std::string& path, const std::vector<BifPoint>& pts);
std::vector<BifPoint> read_bifpoints_file(const std::string& path);

}  // namespace nfwave
