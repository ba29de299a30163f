#pragma once

#include <utility>
#include <vector>

#include "wsee/autodiff.hpp"
#include "wsee/fp_numerical.hpp"
#include "wsee/types.hpp"

// Fully closed-form WSEE solver: the rate is first rewritten with a
// Lagrange-style SINR auxiliary gamma (tight at gamma = SINR), the
// remaining ratio is decoupled with the quadratic auxiliary z, and the
// per-link power then has a closed-form stationary point, so one
// iteration is four elementwise updates. This iteration is the template
// the fully-unfolded model unrolls.
//
// The log2-based rate requires the affine part of the gamma expansion to
// carry a 1/ln2 factor and the ratio denominator to include the link's
// own signal power; without both, the transforms are not tight at their
// maximizers (and the downstream ascent/tightness tests fail). The power
// update ships in the re-derived stationary-point form; the originally
// published expression is kept behind SolverOptions::use_printed_rho_formula
// for comparison.

namespace wsee::fp_closedform {

using fp_numerical::SolverOptions;
using fp_numerical::SolverReport;

struct CfState {
    PowerAllocation rho;
    Grid gamma;
    Grid y;
    Grid z;
};

enum class ObjectiveForm {
    kSqrt,    // 2*y*sqrt(Rq) - y^2*(rho*P + p_c); tight: equals wsee at the aux optima
    kLinear,  // 2*y*Rq - y^2*(rho*P + p_c); the composition as originally published
};

// Interference power per link, excluding noise and the link's own signal:
// earlier-decoded intra-cell users plus all intercell transmissions.
Grid interference(const ChannelRealization& chan, const PowerAllocation& rho,
                  const NetworkConfig& cfg);

// Rate with the SINR pulled out of the logarithm by the auxiliary gamma;
// equals the true rate exactly at gamma = sinr(rho) and never exceeds it.
Grid rate_lagrange(const ChannelRealization& chan, const PowerAllocation& rho,
                   const Grid& gamma, const NetworkConfig& cfg);

// rate_lagrange with its ratio term decoupled by z; equals rate_lagrange
// exactly at z = update_z(rho, gamma) and never exceeds it.
Grid rate_quadratic(const ChannelRealization& chan, const PowerAllocation& rho,
                    const Grid& gamma, const Grid& z, const NetworkConfig& cfg);

// z* = sqrt(B * signal * (1+gamma)) / (signal + interference + noise).
Grid update_z(const ChannelRealization& chan, const PowerAllocation& rho, const Grid& gamma,
              const NetworkConfig& cfg);

// gamma* = post-SIC SINR (delegates to netmodel).
Grid update_gamma(const ChannelRealization& chan, const PowerAllocation& rho,
                  const NetworkConfig& cfg);

// Weighted objective over all links in the requested form. The sqrt form
// throws DomainViolation when some transformed rate is negative.
double objective(const ChannelRealization& chan, const CfState& state, const NetworkConfig& cfg,
                 ObjectiveForm form = ObjectiveForm::kSqrt);

// Closed-form per-link power. Each entry solves the first-order
// condition of the tight objective's coordinate restriction with the
// auxiliaries fixed and the 1/sqrt(Rq) factors taken from the incoming
// iterate, including the pricing of the interference this link causes to
// every other link; capped at 1 and passed through project_feasible. At
// the solver's fixed point the output zeroes the exact per-entry
// objective derivative. Entries with y = 0 or a vanishing denominator
// are set to zero and reported.
PowerAllocation update_rho(const ChannelRealization& chan, const CfState& state,
                           const NetworkConfig& cfg, bool use_printed_formula = false,
                           std::vector<std::pair<int, int>>* degenerate = nullptr);

// One full iteration in the published order: z from the incoming gamma,
// then gamma, then y, then the power step. `rho_raw` is the capped power
// before the budget projection (the unfolded model blends it before
// projecting).
struct StepResult {
    Grid z;
    Grid gamma;
    Grid y;
    Grid rho_raw;
    std::vector<std::pair<int, int>> degenerate;
};
StepResult iteration_step(const ChannelRealization& chan, const PowerAllocation& rho,
                          const Grid& gamma_in, const NetworkConfig& cfg,
                          bool use_printed_formula = false);

// Outer loop: iterate until the wsee change drops below epsilon (two
// consecutive small changes in accelerated mode). With opts.accelerate a
// guarded line search picks the best-wsee relaxation of each step's
// displacement, so the trace never decreases; disabled, the plain
// published iteration runs with the literal one-delta stopping rule.
SolverReport solve(const ChannelRealization& chan, const NetworkConfig& cfg,
                   const SolverOptions& opts = {});

// The solver's default start, 1/(4K) uniform.
PowerAllocation default_start(const NetworkConfig& cfg);

// Tape computing the objective over inputs (rho, gamma, y, z), each an
// MK x 1 column; used by the stationarity checks.
struct CfObjectiveTape {
    ad::Tape tape;
    int rho_input = 0, gamma_input = 1, y_input = 2, z_input = 3;
};
CfObjectiveTape build_objective_tape(const ChannelRealization& chan, const NetworkConfig& cfg,
                                     ObjectiveForm form = ObjectiveForm::kSqrt);

}  // namespace wsee::fp_closedform
