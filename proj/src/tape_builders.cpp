#include "wsee/tape_builders.hpp"

#include <limits>

#include "wsee/coupling.hpp"

namespace wsee::tapes {

namespace {

// 0/1 masks encoding which (user, source) pairs feed each structure.
ad::Mat direct_mask(const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ad::Mat e(users, cfg.num_bs, 0.0);
    for (int m = 0; m < cfg.num_bs; ++m)
        for (int k = 0; k < cfg.users_per_bs; ++k) e.at(m * cfg.users_per_bs + k, m) = 1.0;
    return e;
}

// Spread[n][(n,j)] = 1: expands per-BS columns to per-user columns.
ad::Mat spread_mask(const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ad::Mat s(cfg.num_bs, users, 0.0);
    for (int n = 0; n < cfg.num_bs; ++n)
        for (int j = 0; j < cfg.users_per_bs; ++j) s.at(n, n * cfg.users_per_bs + j) = 1.0;
    return s;
}

// Intra-cell mask: row u=(m,k) selects same-cell users decoded earlier.
ad::Mat intra_mask(const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ad::Mat e(users, users, 0.0);
    for (int m = 0; m < cfg.num_bs; ++m)
        for (int k = 0; k < cfg.users_per_bs; ++k)
            for (int j = 0; j < k; ++j)
                e.at(m * cfg.users_per_bs + k, m * cfg.users_per_bs + j) = 1.0;
    return e;
}

// Intercell mask: row u=(m,k) selects every user of every other BS.
ad::Mat inter_mask(const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ad::Mat e(users, users, 0.0);
    for (int m = 0; m < cfg.num_bs; ++m)
        for (int k = 0; k < cfg.users_per_bs; ++k)
            for (int n = 0; n < cfg.num_bs; ++n) {
                if (n == m) continue;
                for (int j = 0; j < cfg.users_per_bs; ++j)
                    e.at(m * cfg.users_per_bs + k, n * cfg.users_per_bs + j) = 1.0;
            }
    return e;
}

}  // namespace

GainNodes gain_quantities(ad::Tape& t, ad::NodeId gain_matrix, const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    GainNodes gn;

    const ad::NodeId e_dir = t.constant(direct_mask(cfg), "direct_mask");
    gn.direct = t.matmul(t.mul(gain_matrix, e_dir), t.constant(ad::Mat(cfg.num_bs, 1, 1.0)));

    // coupling[u][v] = direct[u] on intra-SIC pairs, G[u][bs(v)] across cells
    const ad::NodeId intra = t.mul(t.matmul(gn.direct, t.constant(ad::Mat(1, users, 1.0))),
                                   t.constant(intra_mask(cfg), "intra_mask"));
    const ad::NodeId inter = t.mul(t.matmul(gain_matrix, t.constant(spread_mask(cfg), "spread")),
                                   t.constant(inter_mask(cfg), "inter_mask"));
    gn.coupling = t.add(intra, inter);
    return gn;
}

FlowNodes power_flow(ad::Tape& t, const GainNodes& gains, ad::NodeId rho,
                     const NetworkConfig& cfg) {
    FlowNodes fn;
    fn.signal = t.scale(t.mul(gains.direct, rho), cfg.p_max);
    fn.inoise = t.add_const(t.scale(t.matmul(gains.coupling, rho), cfg.p_max), cfg.noise_power);
    fn.sinr = t.div(fn.signal, fn.inoise);
    return fn;
}

ad::NodeId rate_node(ad::Tape& t, ad::NodeId sinr, const NetworkConfig& cfg) {
    return t.scale(t.log2(t.add_const(sinr, 1.0)), cfg.bandwidth);
}

ad::NodeId wsee_node(ad::Tape& t, const FlowNodes& flow, ad::NodeId rho,
                     const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ad::Mat wmat(users, 1);
    wmat.v = cfg.weights.flat();
    const ad::NodeId weights = t.constant(wmat, "weights");
    const ad::NodeId rate = rate_node(t, flow.sinr, cfg);
    const ad::NodeId power = t.add_const(t.scale(rho, cfg.p_max), cfg.circuit_power);
    return t.reduce_sum(t.mul(weights, t.div(rate, power)));
}

ad::NodeId project_feasible_node(ad::Tape& t, ad::NodeId rho, const NetworkConfig& cfg) {
    const int m_count = cfg.num_bs, k_count = cfg.users_per_bs;
    const ad::NodeId clamped = t.clamp(rho, 0.0, 1.0);
    const ad::NodeId rows = t.reshape(clamped, m_count, k_count);
    const ad::NodeId row_sum = t.matmul(rows, t.constant(ad::Mat(k_count, 1, 1.0)));
    const ad::NodeId divisor = t.clamp(row_sum, 1.0, std::numeric_limits<double>::infinity());
    const ad::NodeId expanded = t.matmul(divisor, t.constant(ad::Mat(1, k_count, 1.0)));
    return t.reshape(t.div(rows, expanded), m_count * k_count, 1);
}

WseeTape build_wsee_tape(const ChannelRealization& chan, const NetworkConfig& cfg) {
    WseeTape wt;
    ad::Tape& t = wt.tape;
    const ad::NodeId rho = t.input(cfg.num_bs * cfg.users_per_bs, 1, "rho");
    const ad::NodeId gmat = t.constant(gain_matrix(chan, cfg), "gains");
    const GainNodes gn = gain_quantities(t, gmat, cfg);
    const FlowNodes fn = power_flow(t, gn, rho, cfg);
    t.set_output(wsee_node(t, fn, rho, cfg));
    return wt;
}

}  // namespace wsee::tapes
