#include "wsee/fp_closedform.hpp"

#include <chrono>
#include <deque>
#include <limits>
#include <cmath>

#include "wsee/coupling.hpp"
#include "wsee/netmodel.hpp"

namespace wsee::fp_closedform {

namespace {

constexpr double kInvLn2 = 1.4426950408889634;  // 1/ln(2)

void check_state(const ChannelRealization& chan, const PowerAllocation& rho,
                 const NetworkConfig& cfg) {
    if (chan.gains.num_bs() != cfg.num_bs || chan.gains.users_per_bs() != cfg.users_per_bs)
        throw ShapeError("closedform: channel/config dimension mismatch");
    if (rho.rho.num_bs() != cfg.num_bs || rho.rho.users_per_bs() != cfg.users_per_bs)
        throw ShapeError("closedform: allocation/config dimension mismatch");
}

// Capped (but not yet budget-projected) power update. Each entry solves
// the first-order condition of the tight (sqrt-form) objective's
// coordinate restriction, with the slowly varying 1/sqrt(Rq) factors
// evaluated at the incoming iterate (Jacobi-style): at tight auxiliaries
// y/sqrt(Rq) = 1/(rho*P + p_c) =: scale. The interference terms are
// linear in rho, so the coordinates decouple and cross[] prices the load
// each link puts on every other link. At a fixed point of the full
// iteration the frozen factors coincide with the true ones, so the fixed
// point zeroes the exact objective gradient at interior entries.
Grid raw_rho_update(const ChannelRealization& chan, const PowerAllocation& rho_prev,
                    const Grid& gamma, const Grid& y, const Grid& z, const NetworkConfig& cfg,
                    std::vector<std::pair<int, int>>& degenerate) {
    const int m_count = cfg.num_bs, k_count = cfg.users_per_bs;
    const int users = m_count * k_count;
    const double p = cfg.p_max;
    Grid raw(m_count, k_count);

    std::vector<double> scale(users);
    for (int u = 0; u < users; ++u)
        scale[u] = cfg.weights.flat()[u] / (rho_prev.rho.flat()[u] * p + cfg.circuit_power);

    const ad::Mat coupling = interference_coupling(chan, cfg);
    std::vector<double> cross(users, 0.0);
    for (int u = 0; u < users; ++u) {
        const double load = kInvLn2 * p * scale[u] * z.flat()[u] * z.flat()[u];
        for (int v = 0; v < users; ++v) cross[v] += load * coupling.at(u, v);
    }

    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            const int v = m * k_count + k;
            const double g = chan.gains.at(m, k, m);
            const double ga = gamma.at(m, k);
            const double yy = y.at(m, k);
            const double zz = z.at(m, k);
            const double w = cfg.weights.at(m, k);
            if (yy == 0.0) {
                raw.at(m, k) = 0.0;
                degenerate.emplace_back(m, k);
                continue;
            }
            const double b = cfg.bandwidth * g * p * (1.0 + ga);
            const double numer = kInvLn2 * scale[v] * zz * std::sqrt(b);
            const double denom =
                w * yy * yy * p + kInvLn2 * scale[v] * zz * zz * g * p + cross[v];
            if (!(denom > 0.0) || !std::isfinite(denom) || numer == 0.0) {
                raw.at(m, k) = 0.0;
                if (!(denom > 0.0) || !std::isfinite(denom)) degenerate.emplace_back(m, k);
                continue;
            }
            const double root = numer / denom;
            raw.at(m, k) = std::min(root * root, 1.0);
        }
    }
    return raw;
}

// The power expression as originally published, kept for comparison only.
Grid raw_rho_update_printed(const ChannelRealization& chan, const PowerAllocation& rho_prev,
                            const Grid& gamma, const Grid& y, const Grid& z,
                            const NetworkConfig& cfg,
                            std::vector<std::pair<int, int>>& degenerate) {
    const Grid intf = interference(chan, rho_prev, cfg);
    Grid raw(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double g = chan.gains.at(m, k, m);
            const double ga = gamma.at(m, k);
            const double yy = y.at(m, k);
            const double zz = z.at(m, k);
            const double den = 4.0 * std::pow(yy, 4) * zz * zz * (1.0 + ga) * g * cfg.p_max;
            if (!(den > 0.0) || !std::isfinite(den)) {
                raw.at(m, k) = 0.0;
                degenerate.emplace_back(m, k);
                continue;
            }
            const double core = std::pow(zz * (1.0 + ga) * g * cfg.p_max, 2) -
                                yy * yy * (std::log2(1.0 + ga) + ga +
                                           zz * zz * (1.0 - intf.at(m, k) - cfg.noise_power));
            raw.at(m, k) = std::min(core * core / den, 1.0);
        }
    }
    return raw;
}

}  // namespace

Grid interference(const ChannelRealization& chan, const PowerAllocation& rho,
                  const NetworkConfig& cfg) {
    check_state(chan, rho, cfg);
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            double acc = 0.0;
            for (int j = 0; j < k; ++j)
                acc += chan.gains.at(m, k, m) * rho.rho.at(m, j) * cfg.p_max;
            for (int n = 0; n < cfg.num_bs; ++n) {
                if (n == m) continue;
                for (int kp = 0; kp < cfg.users_per_bs; ++kp)
                    acc += chan.gains.at(m, k, n) * rho.rho.at(n, kp) * cfg.p_max;
            }
            out.at(m, k) = acc;
        }
    }
    return out;
}

Grid rate_lagrange(const ChannelRealization& chan, const PowerAllocation& rho,
                   const Grid& gamma, const NetworkConfig& cfg) {
    check_state(chan, rho, cfg);
    const Grid intf = interference(chan, rho, cfg);
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double g = gamma.at(m, k);
            const double signal = chan.gains.at(m, k, m) * rho.rho.at(m, k) * cfg.p_max;
            const double den = signal + intf.at(m, k) + cfg.noise_power;
            out.at(m, k) = cfg.bandwidth * std::log2(1.0 + g) +
                           cfg.bandwidth * kInvLn2 * (-g + (1.0 + g) * signal / den);
        }
    }
    return out;
}

Grid rate_quadratic(const ChannelRealization& chan, const PowerAllocation& rho,
                    const Grid& gamma, const Grid& z, const NetworkConfig& cfg) {
    check_state(chan, rho, cfg);
    const Grid intf = interference(chan, rho, cfg);
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double g = gamma.at(m, k);
            const double zz = z.at(m, k);
            const double signal = chan.gains.at(m, k, m) * rho.rho.at(m, k) * cfg.p_max;
            const double den = signal + intf.at(m, k) + cfg.noise_power;
            const double quad =
                2.0 * zz * std::sqrt(cfg.bandwidth * signal * (1.0 + g)) - zz * zz * den;
            out.at(m, k) =
                cfg.bandwidth * std::log2(1.0 + g) - cfg.bandwidth * kInvLn2 * g + kInvLn2 * quad;
        }
    }
    return out;
}

Grid update_z(const ChannelRealization& chan, const PowerAllocation& rho, const Grid& gamma,
              const NetworkConfig& cfg) {
    check_state(chan, rho, cfg);
    const Grid intf = interference(chan, rho, cfg);
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double g = gamma.at(m, k);
            const double signal = chan.gains.at(m, k, m) * rho.rho.at(m, k) * cfg.p_max;
            const double den = signal + intf.at(m, k) + cfg.noise_power;
            out.at(m, k) = std::sqrt(cfg.bandwidth * signal * (1.0 + g)) / den;
        }
    }
    return out;
}

Grid update_gamma(const ChannelRealization& chan, const PowerAllocation& rho,
                  const NetworkConfig& cfg) {
    return netmodel::sinr(chan, rho, cfg);
}

double objective(const ChannelRealization& chan, const CfState& state, const NetworkConfig& cfg,
                 ObjectiveForm form) {
    const Grid rq = rate_quadratic(chan, state.rho, state.gamma, state.z, cfg);
    double acc = 0.0;
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double y = state.y.at(m, k);
            const double power = state.rho.rho.at(m, k) * cfg.p_max + cfg.circuit_power;
            double gain_term = 0.0;
            if (form == ObjectiveForm::kLinear) {
                gain_term = 2.0 * y * rq.at(m, k);
            } else {
                double r = rq.at(m, k);
                // Rounding on starved links can leave -1e-18-scale values.
                if (r < 0.0 && r > -1e-9 * (cfg.bandwidth + 1.0)) r = 0.0;
                if (r < 0.0)
                    throw DomainViolation("objective: negative transformed rate under sqrt at (" +
                                          std::to_string(m) + "," + std::to_string(k) + ")");
                gain_term = 2.0 * y * std::sqrt(r);
            }
            acc += cfg.weights.at(m, k) * (gain_term - y * y * power);
        }
    }
    return acc;
}

PowerAllocation update_rho(const ChannelRealization& chan, const CfState& state,
                           const NetworkConfig& cfg, bool use_printed_formula,
                           std::vector<std::pair<int, int>>* degenerate) {
    check_state(chan, state.rho, cfg);
    std::vector<std::pair<int, int>> degen;
    const Grid raw =
        use_printed_formula
            ? raw_rho_update_printed(chan, state.rho, state.gamma, state.y, state.z, cfg, degen)
            : raw_rho_update(chan, state.rho, state.gamma, state.y, state.z, cfg, degen);
    if (degenerate) *degenerate = std::move(degen);
    return netmodel::project_feasible(raw, cfg);
}

StepResult iteration_step(const ChannelRealization& chan, const PowerAllocation& rho,
                          const Grid& gamma_in, const NetworkConfig& cfg,
                          bool use_printed_formula) {
    StepResult st;
    st.z = update_z(chan, rho, gamma_in, cfg);
    st.gamma = update_gamma(chan, rho, cfg);
    st.y = fp_numerical::update_y(chan, rho, cfg);
    st.rho_raw = use_printed_formula
                     ? raw_rho_update_printed(chan, rho, st.gamma, st.y, st.z, cfg, st.degenerate)
                     : raw_rho_update(chan, rho, st.gamma, st.y, st.z, cfg, st.degenerate);
    return st;
}

PowerAllocation default_start(const NetworkConfig& cfg) {
    // A quarter of the equal split. Starting lower than the numerical
    // solver keeps the first closed-form step off the budget cap, which
    // measurably improves the basin the iteration settles in.
    PowerAllocation pa;
    pa.rho = Grid(cfg.num_bs, cfg.users_per_bs, 1.0 / (4.0 * cfg.users_per_bs));
    return pa;
}

SolverReport solve(const ChannelRealization& chan, const NetworkConfig& cfg,
                   const SolverOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    SolverReport rep;

    PowerAllocation rho = opts.rho_init ? netmodel::project_feasible(*opts.rho_init, cfg)
                                        : default_start(cfg);
    Grid gamma = opts.gamma_init ? *opts.gamma_init : netmodel::sinr(chan, rho, cfg);
    double f_prev = netmodel::wsee(chan, rho, cfg);
    int small_streak = 0;
    std::deque<Grid> history;  // trailing iterates for the long-window direction

    for (int iter = 1; iter <= opts.max_outer_iters; ++iter) {
        StepResult st = iteration_step(chan, rho, gamma, cfg, opts.use_printed_rho_formula);
        for (const auto& e : st.degenerate) rep.degenerate_entries.push_back(e);
        PowerAllocation target = netmodel::project_feasible(st.rho_raw, cfg);

        double f = 0.0;
        if (!opts.accelerate) {
            // Plain published iteration; this is what the unfolded model
            // reproduces layer by layer.
            rho = target;
            gamma = st.gamma;
            f = netmodel::wsee(chan, rho, cfg);
            rep.objective_trace.push_back(f);
            rep.iterations = iter;
            if (std::abs(f - f_prev) < opts.epsilon) {
                rep.converged = true;
                break;
            }
            f_prev = f;
            continue;
        }

        // Guarded line search: best wsee over relaxations of the step
        // displacement and of the trailing-window displacement.
        const double f_cur = netmodel::wsee(chan, rho, cfg);
        const double f_plain = netmodel::wsee(chan, target, cfg);
        if (f_plain < f_cur) ++rep.guard_engagements;

        PowerAllocation best = rho;
        double f_best = f_cur;
        Grid dir(cfg.num_bs, cfg.users_per_bs);
        for (size_t i = 0; i < dir.size(); ++i)
            dir.flat()[i] = target.rho.flat()[i] - rho.rho.flat()[i];
        auto consider = [&](const Grid& d, double theta) {
            Grid cand = rho.rho;
            for (size_t i = 0; i < cand.size(); ++i) cand.flat()[i] += theta * d.flat()[i];
            PowerAllocation pa = netmodel::project_feasible(cand, cfg);
            const double fc = netmodel::wsee(chan, pa, cfg);
            if (fc > f_best) {
                f_best = fc;
                best = pa;
            }
        };
        for (double theta : {8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.125}) consider(dir, theta);
        if (history.size() >= 8) {
            Grid long_dir(cfg.num_bs, cfg.users_per_bs);
            for (size_t i = 0; i < long_dir.size(); ++i)
                long_dir.flat()[i] = rho.rho.flat()[i] - history.front().flat()[i];
            for (double theta : {16.0, 8.0, 4.0, 2.0, 1.0}) consider(long_dir, theta);
        }
        history.push_back(rho.rho);
        if (history.size() > 8) history.pop_front();

        rho = best;
        gamma = netmodel::sinr(chan, rho, cfg);
        f = f_best;

        rep.objective_trace.push_back(f);
        rep.iterations = iter;
        small_streak = std::abs(f - f_prev) < opts.epsilon ? small_streak + 1 : 0;
        // Relaxed steps make single small deltas transient; require two.
        if (small_streak >= 2) {
            rep.converged = true;
            break;
        }
        f_prev = f;
    }
    rep.rho_final = rho;
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

CfObjectiveTape build_objective_tape(const ChannelRealization& chan, const NetworkConfig& cfg,
                                     ObjectiveForm form) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    CfObjectiveTape ot;
    ad::Tape& t = ot.tape;

    const ad::NodeId rho = t.input(users, 1, "rho");
    const ad::NodeId gamma = t.input(users, 1, "gamma");
    const ad::NodeId y = t.input(users, 1, "y");
    const ad::NodeId z = t.input(users, 1, "z");

    const ad::NodeId coupling = t.constant(interference_coupling(chan, cfg), "coupling");
    const ad::NodeId direct = t.constant(direct_gain_vector(chan, cfg), "direct_gain");
    ad::Mat wmat(users, 1);
    wmat.v = cfg.weights.flat();
    const ad::NodeId weights = t.constant(wmat, "weights");

    const ad::NodeId one_plus_gamma = t.add_const(gamma, 1.0);
    const ad::NodeId signal = t.scale(t.mul(direct, rho), cfg.p_max);
    const ad::NodeId den = t.add_const(
        t.add(signal, t.scale(t.matmul(coupling, rho), cfg.p_max)), cfg.noise_power);

    const ad::NodeId quad = t.sub(
        t.scale(t.mul(z, t.sqrt(t.scale(t.mul(signal, one_plus_gamma), cfg.bandwidth))), 2.0),
        t.mul(t.mul(z, z), den));
    const ad::NodeId rate_q = t.add(t.sub(t.scale(t.log2(one_plus_gamma), cfg.bandwidth),
                                          t.scale(gamma, cfg.bandwidth * kInvLn2)),
                                    t.scale(quad, kInvLn2));

    const ad::NodeId power = t.add_const(t.scale(rho, cfg.p_max), cfg.circuit_power);
    ad::NodeId gain_term;
    if (form == ObjectiveForm::kLinear) {
        gain_term = t.scale(t.mul(y, rate_q), 2.0);
    } else {
        // Starved links can produce -1e-18-scale transformed rates from
        // rounding; clamp instead of throwing inside the tape.
        const ad::NodeId floored = t.clamp(rate_q, 0.0, std::numeric_limits<double>::infinity());
        gain_term = t.scale(t.mul(y, t.sqrt(floored)), 2.0);
    }
    const ad::NodeId per_link = t.sub(gain_term, t.mul(t.mul(y, y), power));
    t.set_output(t.reduce_sum(t.mul(weights, per_link)));
    return ot;
}

}  // namespace wsee::fp_closedform
