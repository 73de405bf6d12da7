#pragma once

#include "plrnn/inference.hpp"
#include "plrnn/types.hpp"

#include <vector>

namespace plrnn {

// ---------------------------------------------------------------------------
// Fixed-point enumeration. Within the linear region with active set D the
// map is affine, so its fixed point solves (I - A - W D) z = h; scanning all
// 2^M regions finds every candidate. A candidate is a true fixed point only
// when its sign pattern puts it inside the region that produced it.

struct FixedPoint {
    VectorXd z_star;               // solution for this region; empty if degenerate
    ArrayXb region;                // diagonal of D
    Eigen::VectorXcd eigenvalues;  // of A + W D
    bool consistent = false;       // z_i > 0 exactly where region says so
    bool stable = false;           // max |eig| <= 1, neutral counted stable
    bool degenerate = false;       // I - A - W D singular (eigenvalue 1)
};

// All region candidates in mask order (bit i of the region index is
// dimension i). The identity variant has no regions: one all-active
// candidate, consistent whenever the system is nonsingular. max_m guards the
// 2^M blowup; raising it past ~24 costs minutes and gigabytes.
std::vector<FixedPoint> enumerate_fixed_points(const PlrnnParams& params, int max_m = 20);

// ---------------------------------------------------------------------------
// Attractor inventory from deterministic multi-start simulation. Noise is
// off and external inputs are clamped to zero, so this characterizes the
// autonomous flow of a trained model.

enum class AttractorKind { fixed_point, limit_cycle, chaotic };

inline const char* to_string(AttractorKind k) {
    switch (k) {
        case AttractorKind::fixed_point: return "fixed_point";
        case AttractorKind::limit_cycle: return "limit_cycle";
        default: return "chaotic";
    }
}

struct Attractor {
    AttractorKind kind = AttractorKind::fixed_point;
    MatrixXd segment;  // representative terminal states, full coordinates
    ArrayXb live;      // dims kept in distance computations; a relu coordinate
                       // that ran below the freeze threshold contributes
                       // nothing to the others (phi pins it to zero) and is
                       // dropped rather than poisoning every distance
    int basin_hits = 0;
    int matched_fixed_point = -1;  // index into AttractorSet::fixed_points
};

struct AttractorOptions {
    double transient_fraction = 0.2;  // leading part of each run discarded
    double init_sd = 2.0;             // initial states ~ N(0, init_sd^2 I)
    double fp_tol = 1e-6;             // terminal step size calling a fixed point
    double merge_tol = 1e-3;          // Hausdorff distance deduping objects; the
                                      // default suits points and cycles, chaotic
                                      // sets are sampling-gap limited and need a
                                      // looser value
    double freeze_threshold = -1e6;   // relu coordinate below this drops out
    double unbounded_threshold = 1e6; // positive excursion past this diverged
    int twin_horizon = 500;           // cycle-vs-chaos separation run length
    double twin_d0 = 1e-8;
    int twin_base_points = 10;
    int segment_cap = 500;            // representative states kept per object
    double chaos_p = 0.05;            // one-sided significance of a positive slope
    int enumeration_cap = 20;
};

struct AttractorSet {
    std::vector<Attractor> attractors;     // merged simulation objects
    std::vector<FixedPoint> fixed_points;  // consistent candidates from enumeration
    int n_stable = 0;    // stable fixed points plus cycles and chaotic objects;
                         // simulated fixed points matching an enumerated one are
                         // not counted twice
    int n_unstable = 0;  // unstable fixed points
    int n_unbounded = 0; // diverged runs (counted per run, not per object)
};

// Runs n_init deterministic trajectories of length T, classifies each
// bounded terminal behavior (fixed point when the last step moves less than
// fp_tol; otherwise chaotic when the log separation of twin trajectories
// grows with a significantly positive slope, else limit cycle), merges
// duplicates, and combines the result with the analytic fixed-point scan.
AttractorSet detect_attractors(const PlrnnParams& params, int n_init, int T, std::uint64_t seed,
                               const AttractorOptions& opt = {});

// Upper-tail probability of Student's t with dof degrees of freedom; backs
// the slope test above.
double student_t_sf(double t, double dof);

}  // namespace plrnn
