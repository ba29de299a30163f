#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "wsee/autodiff.hpp"
#include "wsee/types.hpp"

// Quadratic-transform fractional programming for WSEE maximization with a
// numerically solved power step. The sum of EE ratios is lifted with the
// auxiliary y (one per link) into 2*y*sqrt(R) - y^2*(rho*P + p_c), and the
// SINR inside each rate is decoupled from its interference with the
// auxiliary z. Both auxiliaries have closed-form optima; with them held
// fixed the power subproblem is concave and solved by projected gradient
// ascent with a backtracking line search.

namespace wsee::fp_numerical {

struct AuxState {
    Grid y;  // EE-ratio auxiliaries
    Grid z;  // SINR-decoupling auxiliaries
};

struct SolverOptions {
    double epsilon = 1e-4;      // stop when |f(t) - f(t-1)| < epsilon
    int max_outer_iters = 100;
    double inner_step = 0.1;    // initial gradient step before backtracking
    int inner_iters = 60;
    double inner_tol = 1e-7;    // projected-gradient norm stop
    int max_halvings = 40;
    std::optional<Grid> rho_init;    // defaults: 1/(2K) numerical, 1/(4K) closed-form
    std::optional<Grid> gamma_init;  // closed-form solver; default sinr at rho_init
    // Guarded line search along each iteration's displacement. Steps are
    // only ever accepted when they do not lower wsee, which also makes
    // the trace monotone by construction. Disabled, the closed-form
    // solver runs the plain published iteration (the unfolding template).
    bool accelerate = true;
    bool use_printed_rho_formula = false;  // closed-form power step variant
};

struct SolverReport {
    PowerAllocation rho_final;
    std::vector<double> objective_trace;  // wsee after each outer iteration
    int iterations = 0;
    bool converged = false;
    double wall_time_s = 0.0;
    bool degraded = false;  // an inner line search made no progress
    std::vector<std::pair<int, int>> degenerate_entries;  // closed-form solver only
    int guard_engagements = 0;                            // closed-form solver only
};

// y* = sqrt(R) / (rho*P + p_c), the exact maximizer of the per-link map
// y -> 2y*sqrt(R) - y^2*(rho*P + p_c).
Grid update_y(const ChannelRealization& chan, const PowerAllocation& rho,
              const NetworkConfig& cfg);

// z* = sqrt(signal) / (interference + noise), the exact maximizer of the
// decoupled SINR expression inside the transformed rate's logarithm.
Grid update_z(const ChannelRealization& chan, const PowerAllocation& rho,
              const NetworkConfig& cfg);

// Transformed rate B*log2(1 + 2z*sqrt(signal) - z^2*(interference+noise)).
// Equals the true rate exactly at z = update_z. Throws DomainViolation
// naming the link when the logarithm argument is nonpositive.
Grid transformed_rate(const ChannelRealization& chan, const PowerAllocation& rho,
                      const Grid& z, const NetworkConfig& cfg);

// sum over links of w * (2y*sqrt(Rt) - y^2*(rho*P + p_c)); equals wsee
// exactly at (y*, z*).
double objective(const ChannelRealization& chan, const PowerAllocation& rho, const Grid& y,
                 const Grid& z, const NetworkConfig& cfg);

// Tape over (rho, y, z) computing the objective above; used for the inner
// solver gradient and the gradient-correctness checks. Inputs are bound
// in the order rho, y, z as MK x 1 columns.
struct ObjectiveTape {
    ad::Tape tape;
    int rho_input = 0, y_input = 1, z_input = 2;
};
ObjectiveTape build_objective_tape(const ChannelRealization& chan, const NetworkConfig& cfg);

// Projected gradient ascent on the objective in rho with y, z fixed.
// Only improving steps are accepted, so the returned value never falls
// below the starting one. Sets `degraded` when a line search exhausts
// its halvings without progress.
PowerAllocation solve_rho_subproblem(const ChannelRealization& chan, const Grid& y,
                                     const Grid& z, const PowerAllocation& rho0,
                                     const NetworkConfig& cfg, const SolverOptions& opts,
                                     bool* degraded = nullptr);

// Full outer loop: refresh z and y, run the power subproblem, repeat
// until the wsee change drops below epsilon.
SolverReport solve(const ChannelRealization& chan, const NetworkConfig& cfg,
                   const SolverOptions& opts = {});

}  // namespace wsee::fp_numerical
