#include "wsee/fp_numerical.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "wsee/coupling.hpp"
#include "wsee/netmodel.hpp"

namespace wsee::fp_numerical {

namespace {

// Signal power and interference-plus-noise per link, the two quantities
// every transform below is built from.
void signal_and_denominator(const ChannelRealization& chan, const PowerAllocation& rho,
                            const NetworkConfig& cfg, Grid& signal, Grid& inoise) {
    const int m_count = cfg.num_bs, k_count = cfg.users_per_bs;
    signal = Grid(m_count, k_count);
    inoise = Grid(m_count, k_count);
    for (int m = 0; m < m_count; ++m) {
        for (int k = 0; k < k_count; ++k) {
            signal.at(m, k) = chan.gains.at(m, k, m) * rho.rho.at(m, k) * cfg.p_max;
            double den = cfg.noise_power;
            for (int j = 0; j < k; ++j)
                den += chan.gains.at(m, k, m) * rho.rho.at(m, j) * cfg.p_max;
            for (int n = 0; n < m_count; ++n) {
                if (n == m) continue;
                for (int kp = 0; kp < k_count; ++kp)
                    den += chan.gains.at(m, k, n) * rho.rho.at(n, kp) * cfg.p_max;
            }
            inoise.at(m, k) = den;
        }
    }
}

double l2_norm(const Grid& g) {
    double acc = 0.0;
    for (double x : g.flat()) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace

Grid update_y(const ChannelRealization& chan, const PowerAllocation& rho,
              const NetworkConfig& cfg) {
    const Grid r = netmodel::rate(netmodel::sinr(chan, rho, cfg), cfg);
    Grid y(cfg.num_bs, cfg.users_per_bs);
    for (size_t i = 0; i < y.size(); ++i)
        y.flat()[i] = std::sqrt(r.flat()[i]) / (rho.rho.flat()[i] * cfg.p_max + cfg.circuit_power);
    return y;
}

Grid update_z(const ChannelRealization& chan, const PowerAllocation& rho,
              const NetworkConfig& cfg) {
    Grid signal, inoise;
    signal_and_denominator(chan, rho, cfg, signal, inoise);
    Grid z(cfg.num_bs, cfg.users_per_bs);
    for (size_t i = 0; i < z.size(); ++i)
        z.flat()[i] = std::sqrt(signal.flat()[i]) / inoise.flat()[i];
    return z;
}

Grid transformed_rate(const ChannelRealization& chan, const PowerAllocation& rho,
                      const Grid& z, const NetworkConfig& cfg) {
    if (!z.same_shape(rho.rho)) throw ShapeError("transformed_rate: z shape mismatch");
    Grid signal, inoise;
    signal_and_denominator(chan, rho, cfg, signal, inoise);
    Grid out(cfg.num_bs, cfg.users_per_bs);
    for (int m = 0; m < cfg.num_bs; ++m) {
        for (int k = 0; k < cfg.users_per_bs; ++k) {
            const double zz = z.at(m, k);
            const double arg =
                1.0 + 2.0 * zz * std::sqrt(signal.at(m, k)) - zz * zz * inoise.at(m, k);
            if (!(arg > 0.0))
                throw DomainViolation("transformed_rate: nonpositive log argument at link (" +
                                      std::to_string(m) + "," + std::to_string(k) + ")");
            out.at(m, k) = cfg.bandwidth * std::log2(arg);
        }
    }
    return out;
}

double objective(const ChannelRealization& chan, const PowerAllocation& rho, const Grid& y,
                 const Grid& z, const NetworkConfig& cfg) {
    const Grid rt = transformed_rate(chan, rho, z, cfg);
    double acc = 0.0;
    for (size_t i = 0; i < rt.size(); ++i) {
        const double yy = y.flat()[i];
        acc += cfg.weights.flat()[i] *
               (2.0 * yy * std::sqrt(rt.flat()[i]) -
                yy * yy * (rho.rho.flat()[i] * cfg.p_max + cfg.circuit_power));
    }
    return acc;
}

ObjectiveTape build_objective_tape(const ChannelRealization& chan, const NetworkConfig& cfg) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    ObjectiveTape ot;
    ad::Tape& t = ot.tape;

    const ad::NodeId rho = t.input(users, 1, "rho");
    const ad::NodeId y = t.input(users, 1, "y");
    const ad::NodeId z = t.input(users, 1, "z");

    const ad::NodeId coupling = t.constant(interference_coupling(chan, cfg), "coupling");
    const ad::NodeId direct = t.constant(direct_gain_vector(chan, cfg), "direct_gain");
    ad::Mat wmat(users, 1);
    wmat.v = cfg.weights.flat();
    const ad::NodeId weights = t.constant(wmat, "weights");

    const ad::NodeId signal = t.scale(t.mul(direct, rho), cfg.p_max);
    const ad::NodeId inoise = t.add_const(t.scale(t.matmul(coupling, rho), cfg.p_max),
                                          cfg.noise_power);
    const ad::NodeId arg = t.add_const(
        t.sub(t.scale(t.mul(z, t.sqrt(signal)), 2.0), t.mul(t.mul(z, z), inoise)), 1.0);
    const ad::NodeId rate_t = t.scale(t.log2(arg), cfg.bandwidth);

    const ad::NodeId power = t.add_const(t.scale(rho, cfg.p_max), cfg.circuit_power);
    const ad::NodeId per_link = t.sub(t.scale(t.mul(y, t.sqrt(rate_t)), 2.0),
                                      t.mul(t.mul(y, y), power));
    t.set_output(t.reduce_sum(t.mul(weights, per_link)));
    return ot;
}

namespace {

ad::Mat column_of(const Grid& g) {
    ad::Mat m(static_cast<int>(g.size()), 1);
    m.v = g.flat();
    return m;
}

Grid grid_of(const ad::Mat& m, const NetworkConfig& cfg) {
    Grid g(cfg.num_bs, cfg.users_per_bs);
    g.flat() = m.v;
    return g;
}

// Projected gradient ascent with Armijo backtracking. Steps that leave
// the transform's log domain are rejected like any failed trial.
PowerAllocation subproblem_with_tape(ObjectiveTape& ot, const Grid& y, const Grid& z,
                                     const PowerAllocation& rho0, const NetworkConfig& cfg,
                                     const SolverOptions& opts, bool* degraded) {
    constexpr double kArmijoSlope = 1e-4;
    if (degraded) *degraded = false;

    const ad::Mat y_col = column_of(y);
    const ad::Mat z_col = column_of(z);
    auto eval = [&](const PowerAllocation& p, bool* ok) -> double {
        try {
            const double v = ot.tape.forward({column_of(p.rho), y_col, z_col}).v[0];
            *ok = true;
            return v;
        } catch (const DomainViolation&) {
            *ok = false;
            return 0.0;
        }
    };

    PowerAllocation rho = rho0;
    bool ok = false;
    double value = eval(rho, &ok);
    if (!ok) throw DomainViolation("solve_rho_subproblem: infeasible transform domain at rho0");

    for (int it = 0; it < opts.inner_iters; ++it) {
        ot.tape.backward();
        const Grid grad = grid_of(ot.tape.input_gradient(0), cfg);

        // Unit-step projected displacement as the stationarity measure.
        Grid probe = rho.rho;
        for (size_t i = 0; i < probe.size(); ++i) probe.flat()[i] += grad.flat()[i];
        PowerAllocation probe_proj = netmodel::project_feasible(probe, cfg);
        Grid displacement(cfg.num_bs, cfg.users_per_bs);
        for (size_t i = 0; i < displacement.size(); ++i)
            displacement.flat()[i] = probe_proj.rho.flat()[i] - rho.rho.flat()[i];
        if (l2_norm(displacement) <= opts.inner_tol) break;

        double step = opts.inner_step;
        bool accepted = false;
        for (int h = 0; h < opts.max_halvings; ++h) {
            Grid trial = rho.rho;
            for (size_t i = 0; i < trial.size(); ++i) trial.flat()[i] += step * grad.flat()[i];
            PowerAllocation cand = netmodel::project_feasible(trial, cfg);

            double slope = 0.0;
            for (size_t i = 0; i < trial.size(); ++i)
                slope += grad.flat()[i] * (cand.rho.flat()[i] - rho.rho.flat()[i]);

            bool cand_ok = false;
            const double cand_value = eval(cand, &cand_ok);
            if (cand_ok && cand_value >= value + kArmijoSlope * slope && cand_value >= value) {
                rho = cand;
                value = cand_value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (degraded) *degraded = true;
            break;
        }
    }
    // Leave the tape evaluated at the accepted point for the caller.
    bool final_ok = false;
    eval(rho, &final_ok);
    return rho;
}

}  // namespace

PowerAllocation solve_rho_subproblem(const ChannelRealization& chan, const Grid& y,
                                     const Grid& z, const PowerAllocation& rho0,
                                     const NetworkConfig& cfg, const SolverOptions& opts,
                                     bool* degraded) {
    ObjectiveTape ot = build_objective_tape(chan, cfg);
    return subproblem_with_tape(ot, y, z, rho0, cfg, opts, degraded);
}

SolverReport solve(const ChannelRealization& chan, const NetworkConfig& cfg,
                   const SolverOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    SolverReport rep;

    PowerAllocation rho = opts.rho_init ? netmodel::project_feasible(*opts.rho_init, cfg)
                                        : netmodel::uniform_allocation(cfg);
    double f_prev = netmodel::wsee(chan, rho, cfg);
    ObjectiveTape ot = build_objective_tape(chan, cfg);

    for (int iter = 1; iter <= opts.max_outer_iters; ++iter) {
        const Grid z = update_z(chan, rho, cfg);
        const Grid y = update_y(chan, rho, cfg);
        bool step_degraded = false;
        PowerAllocation target = subproblem_with_tape(ot, y, z, rho, cfg, opts, &step_degraded);
        rep.degraded = rep.degraded || step_degraded;

        double f_best = netmodel::wsee(chan, target, cfg);
        PowerAllocation best = target;
        if (opts.accelerate) {
            // The MM step is monotone; extrapolating along it often is too
            // and shortens the tail. Candidates never degrade wsee.
            for (double theta : {2.0, 4.0}) {
                Grid cand = rho.rho;
                for (size_t i = 0; i < cand.size(); ++i)
                    cand.flat()[i] += theta * (target.rho.flat()[i] - rho.rho.flat()[i]);
                PowerAllocation pa = netmodel::project_feasible(cand, cfg);
                const double f = netmodel::wsee(chan, pa, cfg);
                if (f > f_best) {
                    f_best = f;
                    best = pa;
                }
            }
        }
        const double f_cur = netmodel::wsee(chan, rho, cfg);
        if (f_best < f_cur) {
            best = rho;
            f_best = f_cur;
        }
        rho = best;

        rep.objective_trace.push_back(f_best);
        rep.iterations = iter;
        if (std::abs(f_best - f_prev) < opts.epsilon) {
            rep.converged = true;
            break;
        }
        f_prev = f_best;
    }
    rep.rho_final = rho;
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace wsee::fp_numerical
