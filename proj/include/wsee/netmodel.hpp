#pragma once

#include "wsee/types.hpp"

namespace wsee::netmodel {

// Draws one channel realization: users placed uniformly at random inside
// their serving cell (min distance 1 m), log-distance pathloss with the
// configured exponent, Rayleigh small-scale fading with N-antenna gain
// |h|^2 (E|h|^2 = N). Users in each cell are then sorted by descending
// direct gain so the SIC decoding-order invariant holds. Deterministic
// for a fixed cfg.rng_seed.
//
// `fading_var_scale` scales the per-entry fading variance; it exists for
// the off-training-distribution evaluation and defaults to the nominal 1.
ChannelRealization generate_channels(const NetworkConfig& cfg, double fading_var_scale = 1.0);

// Post-SIC SINR of every link. For user k in cell m the denominator
// holds the intra-cell terms of users decoded later (j < k in the sorted
// order), all intercell transmissions, and the noise power.
Grid sinr(const ChannelRealization& chan, const PowerAllocation& rho, const NetworkConfig& cfg);

// Shannon rate per link, B * log2(1 + sinr), bit/s.
Grid rate(const Grid& sinr_values, const NetworkConfig& cfg);

// Per-link energy efficiency R / (rho * P_max + p_c), bit/joule.
Grid energy_efficiency(const Grid& rate_values, const PowerAllocation& rho,
                       const NetworkConfig& cfg);

// Weighted sum energy efficiency, the optimization objective.
double wsee(const ChannelRealization& chan, const PowerAllocation& rho,
            const NetworkConfig& cfg);

// All of the above in one pass.
LinkMetrics link_metrics(const ChannelRealization& chan, const PowerAllocation& rho,
                         const NetworkConfig& cfg);

// Clamps every entry to [0,1], then rescales any BS row whose sum
// exceeds 1 by 1/sum. Idempotent; feasible input is returned unchanged.
// NaN input throws InvalidInput.
PowerAllocation project_feasible(const Grid& rho_raw, const NetworkConfig& cfg);

// Uniform feasible allocation rho = 1 / (2K), the solvers' default start.
PowerAllocation uniform_allocation(const NetworkConfig& cfg);

// Pre-SIC SINR (all intra-cell users interfere). Only used to motivate
// the decoding order; generate_channels realizes that order by sorting.
Grid pre_sic_sinr(const ChannelRealization& chan, const PowerAllocation& rho,
                  const NetworkConfig& cfg);

}  // namespace wsee::netmodel
