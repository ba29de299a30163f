#include "wsee/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace wsee {

void NetworkConfig::validate(bool require_positive_weight) const {
    if (num_bs < 1 || users_per_bs < 1 || num_antennas < 1)
        throw InvalidInput("NetworkConfig: counts must be >= 1");
    if (!(p_max > 0.0) || !(circuit_power > 0.0) || !(bandwidth > 0.0) || !(noise_power > 0.0))
        throw InvalidInput("NetworkConfig: p_max, circuit_power, bandwidth, noise_power must be > 0");
    if (weights.num_bs() != num_bs || weights.users_per_bs() != users_per_bs)
        throw ShapeError("NetworkConfig: weights shape mismatch");
    bool any_positive = false;
    for (double w : weights.flat()) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("NetworkConfig: weights must be finite and >= 0");
        any_positive = any_positive || w > 0.0;
    }
    if (require_positive_weight && !any_positive)
        throw InvalidInput("NetworkConfig: at least one weight must be > 0");
    if (!(path_loss_exponent >= 0.0) || !(cell_radius > 0.0))
        throw InvalidInput("NetworkConfig: bad geometry parameters");
}

NetworkConfig make_config(int num_bs, int users_per_bs, int num_antennas, double p_max,
                          double circuit_power, double bandwidth, double noise_power,
                          double path_loss_exponent, double cell_radius, uint64_t rng_seed) {
    NetworkConfig cfg;
    cfg.num_bs = num_bs;
    cfg.users_per_bs = users_per_bs;
    cfg.num_antennas = num_antennas;
    cfg.p_max = p_max;
    cfg.circuit_power = circuit_power;
    cfg.bandwidth = bandwidth;
    cfg.noise_power = noise_power;
    cfg.weights = Grid(num_bs, users_per_bs, 1.0);
    cfg.path_loss_exponent = path_loss_exponent;
    cfg.cell_radius = cell_radius;
    cfg.rng_seed = rng_seed;
    cfg.validate();
    return cfg;
}

double thermal_noise_watts(double bandwidth_hz, double noise_figure_db) {
    const double density_dbm_hz = -174.0 + noise_figure_db;
    return std::pow(10.0, density_dbm_hz / 10.0) * 1e-3 * bandwidth_hz;
}

}  // namespace wsee

namespace wsee::netmodel {

namespace {

struct Point {
    double x = 0.0, y = 0.0;
};

// BS sites on a square grid with 2*cell_radius spacing.
std::vector<Point> bs_positions(const NetworkConfig& cfg) {
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.num_bs))));
    std::vector<Point> sites(cfg.num_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        sites[m].x = (m % cols) * 2.0 * cfg.cell_radius;
        sites[m].y = (m / cols) * 2.0 * cfg.cell_radius;
    }
    return sites;
}

double distance(const Point& a, const Point& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

void check_shapes(const ChannelRealization& chan, const PowerAllocation& rho,
                  const NetworkConfig& cfg) {
    if (chan.gains.num_bs() != cfg.num_bs || chan.gains.users_per_bs() != cfg.users_per_bs)
        throw ShapeError("channel/config dimension mismatch");
    if (rho.rho.num_bs() != cfg.num_bs || rho.rho.users_per_bs() != cfg.users_per_bs)
        throw ShapeError("allocation/config dimension mismatch");
}

// Interference + noise seen by user (m,k) under post-SIC decoding.
double post_sic_denominator(const ChannelRealization& chan, const PowerAllocation& rho,
                            const NetworkConfig& cfg, int m, int k) {
    const double p = cfg.p_max;
    double den = cfg.noise_power;
    for (int j = 0; j < k; ++j)
        den += chan.gains.at(m, k, m) * rho.rho.at(m, j) * p;
    for (int n = 0; n < cfg.num_bs; ++n) {
        if (n == m) continue;
        for (int kp = 0; kp < cfg.users_per_bs; ++kp)
            den += chan.gains.at(m, k, n) * rho.rho.at(n, kp) * p;
    }
    return den;
}

}  // namespace

ChannelRealization generate_channels(const NetworkConfig& cfg, double fading_var_scale) {
    cfg.validate();
    if (!(fading_var_scale > 0.0)) throw InvalidInput("fading_var_scale must be > 0");

    std::mt19937_64 rng(cfg.rng_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto sites = bs_positions(cfg);
    const int m_count = cfg.num_bs, k_count = cfg.users_per_bs;

    // User positions first, in a fixed draw order, so the gain draws that
    // follow see a stable RNG stream.
    std::vector<std::vector<Point>> users(m_count, std::vector<Point>(k_count));
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            const double r = std::max(1.0, cfg.cell_radius * std::sqrt(unit(rng)));
            const double phi = 2.0 * M_PI * unit(rng);
            users[m][k] = {sites[m].x + r * std::cos(phi), sites[m].y + r * std::sin(phi)};
        }
    }

    ChannelRealization chan;
    chan.seed = cfg.rng_seed;
    chan.gains = GainTensor(m_count, k_count);
    // Per-entry complex Gaussian CN(0, fading_var_scale); |h|^2 summed over
    // N antennas so E|h|^2 = N * fading_var_scale at nominal scale.
    const double comp_sigma = std::sqrt(fading_var_scale / 2.0);
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            for (int n = 0; n < m_count; ++n) {
                const double d = std::max(1.0, distance(users[m][k], sites[n]));
                const double pathloss = std::pow(d, -cfg.path_loss_exponent);
                double h2 = 0.0;
                for (int a = 0; a < cfg.num_antennas; ++a) {
                    const double re = comp_sigma * gauss(rng);
                    const double im = comp_sigma * gauss(rng);
                    h2 += re * re + im * im;
                }
                // Guard against an exact-zero fading draw; gains must stay
                // strictly positive for the SINR/ratio algebra.
                chan.gains.at(m, k, n) = std::max(pathloss * h2, 1e-300);
            }
        }
    }

    // SIC order: sort each cell's users by descending direct gain, moving
    // the whole gain row [k][*] with the user.
    for (int m = 0; m < m_count; ++m) {
        std::vector<int> order(k_count);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return chan.gains.at(m, a, m) > chan.gains.at(m, b, m);
        });
        GainTensor sorted = chan.gains;
        for (int k = 0; k < k_count; ++k)
            for (int n = 0; n < m_count; ++n)
                sorted.at(m, k, n) = chan.gains.at(m, order[k], n);
        chan.gains = sorted;
    }
    return chan;
}

Grid sinr(const ChannelRealization& chan, const PowerAllocation& rho, const NetworkConfig& cfg) {
    check_shapes(chan, rho, cfg);
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double signal = chan.gains.at(m, k, m) * rho.rho.at(m, k) * cfg.p_max;
            out.at(m, k) = signal / post_sic_denominator(chan, rho, cfg, m, k);
        }
    }
    return out;
}

Grid pre_sic_sinr(const ChannelRealization& chan, const PowerAllocation& rho,
                  const NetworkConfig& cfg) {
    check_shapes(chan, rho, cfg);
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double signal = chan.gains.at(m, k, m) * rho.rho.at(m, k) * cfg.p_max;
            double den = cfg.noise_power;
            for (int j = 0; j < cfg.users_per_bs; ++j) {
                if (j == k) continue;
                den += chan.gains.at(m, k, m) * rho.rho.at(m, j) * cfg.p_max;
            }
            for (int n = 0; n < cfg.num_bs; ++n) {
                if (n == m) continue;
                for (int kp = 0; kp < cfg.users_per_bs; ++kp)
                    den += chan.gains.at(m, k, n) * rho.rho.at(n, kp) * cfg.p_max;
            }
            out.at(m, k) = signal / den;
        }
    }
    return out;
}

Grid rate(const Grid& sinr_values, const NetworkConfig& cfg) {
    if (sinr_values.num_bs() != cfg.num_bs || sinr_values.users_per_bs() != cfg.users_per_bs)
        throw ShapeError("sinr/config dimension mismatch");
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (size_t i = 0; i < out.size(); ++i)
        out.flat()[i] = cfg.bandwidth * std::log2(1.0 + sinr_values.flat()[i]);
    return out;
}

Grid energy_efficiency(const Grid& rate_values, const PowerAllocation& rho,
                       const NetworkConfig& cfg) {
    if (!rate_values.same_shape(rho.rho))
        throw ShapeError("rate/allocation dimension mismatch");
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (size_t i = 0; i < out.size(); ++i)
        out.flat()[i] = rate_values.flat()[i] / (rho.rho.flat()[i] * cfg.p_max + cfg.circuit_power);
    return out;
}

LinkMetrics link_metrics(const ChannelRealization& chan, const PowerAllocation& rho,
                         const NetworkConfig& cfg) {
    LinkMetrics lm;
    lm.sinr = sinr(chan, rho, cfg);
    lm.rate = rate(lm.sinr, cfg);
    lm.ee = energy_efficiency(lm.rate, rho, cfg);
    lm.wsee = 0.0;
    for (size_t i = 0; i < lm.ee.size(); ++i)
        lm.wsee += cfg.weights.flat()[i] * lm.ee.flat()[i];
    return lm;
}

double wsee(const ChannelRealization& chan, const PowerAllocation& rho,
            const NetworkConfig& cfg) {
    return link_metrics(chan, rho, cfg).wsee;
}

PowerAllocation project_feasible(const Grid& rho_raw, const NetworkConfig& cfg) {
    if (rho_raw.num_bs() != cfg.num_bs || rho_raw.users_per_bs() != cfg.users_per_bs)
        throw ShapeError("allocation/config dimension mismatch");
    for (double x : rho_raw.flat())
        if (std::isnan(x)) throw InvalidInput("project_feasible: NaN entry");

    PowerAllocation out;
    out.rho = rho_raw;
    for (double& x : out.rho.flat()) x = std::clamp(x, 0.0, 1.0);
    for (int m = 0; m < cfg.num_bs; ++m) {
        double row_sum = 0.0;
        for (int k = 0; k < cfg.users_per_bs; ++k) row_sum += out.rho.at(m, k);
        if (row_sum > 1.0)
            for (int k = 0; k < cfg.users_per_bs; ++k) out.rho.at(m, k) /= row_sum;
    }
    return out;
}

PowerAllocation uniform_allocation(const NetworkConfig& cfg) {
    PowerAllocation pa;
    pa.rho = Grid(cfg.num_bs, cfg.users_per_bs, 1.0 / (2.0 * cfg.users_per_bs));
    return pa;
}

}  // namespace wsee::netmodel
