#pragma once

#include "wsee/autodiff.hpp"
#include "wsee/types.hpp"

// Reusable tape subgraphs over a gain matrix node (MK x M). The gain node
// may be an input (training tapes, where the channel varies per sample)
// or a constant (per-instance tapes). All per-link vectors are MK x 1
// columns in row-major (m,k) order.

namespace wsee::tapes {

// Channel-derived quantities; independent of the power allocation.
struct GainNodes {
    ad::NodeId direct = -1;    // MK x 1 direct gains
    ad::NodeId coupling = -1;  // MK x MK interference coupling matrix
};
GainNodes gain_quantities(ad::Tape& t, ad::NodeId gain_matrix, const NetworkConfig& cfg);

// Power-dependent link quantities.
struct FlowNodes {
    ad::NodeId signal = -1;  // MK x 1 received signal power
    ad::NodeId inoise = -1;  // MK x 1 interference + noise
    ad::NodeId sinr = -1;    // MK x 1 post-SIC SINR
};
FlowNodes power_flow(ad::Tape& t, const GainNodes& gains, ad::NodeId rho,
                     const NetworkConfig& cfg);

// B * log2(1 + sinr) per link.
ad::NodeId rate_node(ad::Tape& t, ad::NodeId sinr, const NetworkConfig& cfg);

// Weighted sum EE scalar from a power node and its flow.
ad::NodeId wsee_node(ad::Tape& t, const FlowNodes& flow, ad::NodeId rho,
                     const NetworkConfig& cfg);

// clamp to [0,1] then rescale any BS row whose sum exceeds 1; mirrors
// netmodel::project_feasible.
ad::NodeId project_feasible_node(ad::Tape& t, ad::NodeId rho, const NetworkConfig& cfg);

// Tape computing wsee(rho) for a fixed channel; input 0 is rho (MK x 1).
struct WseeTape {
    ad::Tape tape;
    int rho_input = 0;
};
WseeTape build_wsee_tape(const ChannelRealization& chan, const NetworkConfig& cfg);

}  // namespace wsee::tapes
