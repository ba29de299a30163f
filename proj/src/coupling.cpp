#include "wsee/coupling.hpp"

namespace wsee {

ad::Mat interference_coupling(const ChannelRealization& chan, const NetworkConfig& cfg) {
    const int m_count = cfg.num_bs, k_count = cfg.users_per_bs;
    const int users = m_count * k_count;
    ad::Mat w(users, users, 0.0);
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            const int u = m * k_count + k;
            for (int j = 0; j < k; ++j) w.at(u, m * k_count + j) = chan.gains.at(m, k, m);
            for (int n = 0; n < m_count; ++n) {
                if (n == m) continue;
                for (int kp = 0; kp < k_count; ++kp)
                    w.at(u, n * k_count + kp) = chan.gains.at(m, k, n);
            }
        }
    }
    return w;
}

ad::Mat direct_gain_vector(const ChannelRealization& chan, const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ad::Mat g(users, 1);
    for (int m = 0; m < cfg.num_bs; ++m)
        for (int k = 0; k < cfg.users_per_bs; ++k)
            g.v[m * cfg.users_per_bs + k] = chan.gains.at(m, k, m);
    return g;
}

ad::Mat gain_matrix(const ChannelRealization& chan, const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ad::Mat g(users, cfg.num_bs);
    for (int m = 0; m < cfg.num_bs; ++m)
        for (int k = 0; k < cfg.users_per_bs; ++k)
            for (int n = 0; n < cfg.num_bs; ++n)
                g.at(m * cfg.users_per_bs + k, n) = chan.gains.at(m, k, n);
    return g;
}

}  // namespace wsee
