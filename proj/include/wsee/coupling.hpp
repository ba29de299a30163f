#pragma once

#include "wsee/autodiff.hpp"
#include "wsee/types.hpp"

namespace wsee {

// Linear structure of the post-SIC interference: with users flattened to
// u = m*K + k, I_u(rho) = sum_v coupling[u][v] * rho_v * P_max. Row u
// holds the serving-cell gain for earlier-decoded users (j < k) and the
// cross-cell gain toward every user of every other BS. The same matrix
// prices how raising rho_v loads every other link.
ad::Mat interference_coupling(const ChannelRealization& chan, const NetworkConfig& cfg);

// Direct gains G[m][k][m] flattened to an MK x 1 column.
ad::Mat direct_gain_vector(const ChannelRealization& chan, const NetworkConfig& cfg);

// Gains as an (MK x M) matrix, row u = (m,k), column n = source BS.
ad::Mat gain_matrix(const ChannelRealization& chan, const NetworkConfig& cfg);

}  // namespace wsee
