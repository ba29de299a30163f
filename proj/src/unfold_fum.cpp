#include "wsee/unfold_fum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "wsee/coupling.hpp"
#include "wsee/netmodel.hpp"
#include "wsee/tape_builders.hpp"

namespace wsee::unfold_fum {

namespace {

constexpr double kInvLn2 = 1.4426950408889634;

ad::Mat column_of(const Grid& g) {
    ad::Mat m(static_cast<int>(g.size()), 1);
    m.v = g.flat();
    return m;
}

}  // namespace

FumModel make_model(const NetworkConfig& cfg, int num_layers, bool randomize, uint64_t seed) {
    if (num_layers < 1) throw InvalidInput("fum: need at least one layer");
    FumModel model;
    model.cfg = cfg;
    model.init_rho = fp_closedform::default_start(cfg).rho;  // matches the solver
    model.init_gamma = Grid();  // start from sinr(G, init_rho)

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int l = 0; l < num_layers; ++l) {
        FumLayer layer;
        layer.alpha_rho = Grid(cfg.num_bs, cfg.users_per_bs, 0.1);
        layer.theta_rho = Grid(cfg.num_bs, cfg.users_per_bs, 1.0 / (2.0 * cfg.users_per_bs));
        layer.alpha_gamma = Grid(cfg.num_bs, cfg.users_per_bs, 0.1);
        layer.theta_gamma = Grid(cfg.num_bs, cfg.users_per_bs, 1.0);
        if (randomize) {
            for (auto* g : {&layer.alpha_rho, &layer.alpha_gamma})
                for (double& x : g->flat()) x = unit(rng);
            for (double& x : layer.theta_rho.flat()) x = unit(rng);
            for (double& x : layer.theta_gamma.flat()) x = 2.0 * unit(rng);
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

ForwardResult forward(const FumModel& model, const ChannelRealization& chan) {
    const NetworkConfig& cfg = model.cfg;
    PowerAllocation rho;
    rho.rho = model.init_rho;
    Grid gamma = model.init_gamma.empty() ? netmodel::sinr(chan, rho, cfg) : model.init_gamma;

    for (const FumLayer& layer : model.layers) {
        fp_closedform::StepResult st = fp_closedform::iteration_step(chan, rho, gamma, cfg);
        Grid blend(cfg.num_bs, cfg.users_per_bs);
        for (size_t i = 0; i < blend.size(); ++i) {
            const double a = layer.alpha_rho.flat()[i];
            blend.flat()[i] = (1.0 - a) * st.rho_raw.flat()[i] + a * layer.theta_rho.flat()[i];
        }
        rho = netmodel::project_feasible(blend, cfg);
        for (size_t i = 0; i < gamma.size(); ++i) {
            const double a = layer.alpha_gamma.flat()[i];
            gamma.flat()[i] = (1.0 - a) * st.gamma.flat()[i] + a * layer.theta_gamma.flat()[i];
        }
    }
    return {rho, gamma};
}

double loss(const FumModel& model, const ChannelRealization& chan,
            const PowerAllocation& rho_hat, double lambda, const Grid* rho_target) {
    double l = -netmodel::wsee(chan, rho_hat, model.cfg);
    if (lambda != 0.0 && rho_target != nullptr) {
        double mse = 0.0;
        for (size_t i = 0; i < rho_hat.rho.size(); ++i) {
            const double d = rho_hat.rho.flat()[i] - rho_target->flat()[i];
            mse += d * d;
        }
        l += lambda * mse / static_cast<double>(rho_hat.rho.size());
    }
    return l;
}

int update(FumModel& model, const FumGrads& grads, double delta) {
    if (grads.layers.size() != model.layers.size())
        throw ShapeError("fum update: gradient/layer count mismatch");
    int rejected = 0;
    auto apply = [&](Grid& param, const Grid& grad, double lo, double hi) {
        for (size_t i = 0; i < param.size(); ++i) {
            const double g = grad.flat()[i];
            if (std::isnan(g)) {
                ++rejected;
                continue;
            }
            param.flat()[i] = std::clamp(param.flat()[i] - delta * g, lo, hi);
        }
    };
    constexpr double kInf = std::numeric_limits<double>::infinity();
    for (size_t l = 0; l < model.layers.size(); ++l) {
        apply(model.layers[l].alpha_rho, grads.layers[l].alpha_rho, 0.0, 1.0);
        apply(model.layers[l].theta_rho, grads.layers[l].theta_rho, -kInf, kInf);
        apply(model.layers[l].alpha_gamma, grads.layers[l].alpha_gamma, 0.0, 1.0);
        apply(model.layers[l].theta_gamma, grads.layers[l].theta_gamma, 0.0, kInf);
    }
    return rejected;
}

FumTape build_training_tape(const NetworkConfig& cfg, int depth, const Grid& init_rho,
                            bool init_gamma_from_sinr, const Grid& init_gamma, double lambda) {
    const int users = cfg.num_bs * cfg.users_per_bs;
    FumTape ft;
    ft.depth = depth;
    ad::Tape& t = ft.tape;

    const ad::NodeId gmat = t.input(users, cfg.num_bs, "gains");
    struct LayerInputs {
        ad::NodeId alpha_rho, theta_rho, alpha_gamma, theta_gamma;
    };
    std::vector<LayerInputs> params;
    params.reserve(depth);
    for (int l = 0; l < depth; ++l) {
        LayerInputs li;
        li.alpha_rho = t.input(users, 1, "alpha_rho" + std::to_string(l));
        li.theta_rho = t.input(users, 1, "theta_rho" + std::to_string(l));
        li.alpha_gamma = t.input(users, 1, "alpha_gamma" + std::to_string(l));
        li.theta_gamma = t.input(users, 1, "theta_gamma" + std::to_string(l));
        params.push_back(li);
    }
    const ad::NodeId target = t.input(users, 1, "rho_target");
    ft.target_input = 1 + 4 * depth;

    const tapes::GainNodes gains = tapes::gain_quantities(t, gmat, cfg);
    ad::Mat wmat(users, 1);
    wmat.v = cfg.weights.flat();
    const ad::NodeId weights = t.constant(wmat, "weights");
    const ad::NodeId one = t.constant_scalar(1.0);

    ad::NodeId rho = t.constant(column_of(init_rho), "init_rho");
    ad::NodeId gamma;
    if (init_gamma_from_sinr)
        gamma = tapes::power_flow(t, gains, rho, cfg).sinr;
    else
        gamma = t.constant(column_of(init_gamma), "init_gamma");

    for (int l = 0; l < depth; ++l) {
        const tapes::FlowNodes flow = tapes::power_flow(t, gains, rho, cfg);
        const ad::NodeId dtot = t.add(flow.signal, flow.inoise);
        // z from the incoming gamma (published update order), fresh SINR after
        const ad::NodeId z = t.div(
            t.sqrt(t.scale(t.mul(flow.signal, t.add_const(gamma, 1.0)), cfg.bandwidth)), dtot);
        const ad::NodeId gamma_cf = flow.sinr;
        const ad::NodeId cost = t.add_const(t.scale(rho, cfg.p_max), cfg.circuit_power);
        const ad::NodeId y = t.div(t.sqrt(tapes::rate_node(t, gamma_cf, cfg)), cost);
        const ad::NodeId scale_vec = t.div(weights, cost);

        const ad::NodeId z2 = t.mul(z, z);
        const ad::NodeId cross = t.scale(
            t.matmul(gains.coupling, t.mul(scale_vec, z2), /*transpose_a=*/true),
            kInvLn2 * cfg.p_max);
        const ad::NodeId bvec = t.scale(t.mul(gains.direct, t.add_const(gamma_cf, 1.0)),
                                        cfg.bandwidth * cfg.p_max);
        const ad::NodeId numer = t.scale(t.mul(scale_vec, t.mul(z, t.sqrt(bvec))), kInvLn2);
        const ad::NodeId denom =
            t.add(t.add(t.scale(t.mul(weights, t.mul(y, y)), cfg.p_max),
                        t.scale(t.mul(scale_vec, t.mul(z2, gains.direct)),
                                kInvLn2 * cfg.p_max)),
                  cross);
        // Floor keeps an all-dead-links corner from producing 0/0; for
        // y = 0 links numer is 0 as well, matching the solver's zero.
        const ad::NodeId root =
            t.div(numer, t.clamp(denom, 1e-300, std::numeric_limits<double>::infinity()));
        const ad::NodeId rho_cf = t.clamp(t.mul(root, root), 0.0, 1.0);

        const ad::NodeId blend =
            t.add(t.mul(t.sub(one, params[l].alpha_rho), rho_cf),
                  t.mul(params[l].alpha_rho, params[l].theta_rho));
        rho = tapes::project_feasible_node(t, blend, cfg);
        gamma = t.add(t.mul(t.sub(one, params[l].alpha_gamma), gamma_cf),
                      t.mul(params[l].alpha_gamma, params[l].theta_gamma));
    }

    // Loss: -wsee(rho_hat) + lambda * mean((rho_hat - target)^2)
    const tapes::FlowNodes out_flow = tapes::power_flow(t, gains, rho, cfg);
    const ad::NodeId wsee = tapes::wsee_node(t, out_flow, rho, cfg);
    ad::NodeId loss_node = t.scale(wsee, -1.0);
    if (lambda != 0.0) {
        const ad::NodeId diff = t.sub(rho, target);
        loss_node = t.add(loss_node, t.scale(t.reduce_sum(t.mul(diff, diff)),
                                             lambda / static_cast<double>(users)));
    } else {
        // Keep the target bound (zero contribution) so input arity is stable.
        loss_node = t.add(loss_node, t.scale(t.reduce_sum(target), 0.0));
    }
    t.set_output(loss_node);
    return ft;
}

namespace {

struct SampleBinder {
    std::vector<ad::Mat> inputs;

    SampleBinder(const FumTape& ft, const FumModel& model, const NetworkConfig& cfg) {
        inputs.resize(2 + 4 * ft.depth);
        (void)cfg;
        refresh_params(ft, model);
    }

    void refresh_params(const FumTape& ft, const FumModel& model) {
        for (int l = 0; l < ft.depth; ++l) {
            inputs[1 + 4 * l + 0] = column_of(model.layers[l].alpha_rho);
            inputs[1 + 4 * l + 1] = column_of(model.layers[l].theta_rho);
            inputs[1 + 4 * l + 2] = column_of(model.layers[l].alpha_gamma);
            inputs[1 + 4 * l + 3] = column_of(model.layers[l].theta_gamma);
        }
    }

    void bind_sample(const FumTape& ft, const NetworkConfig& cfg, const ChannelRealization& chan,
                     const Grid* target) {
        inputs[0] = gain_matrix(chan, cfg);
        if (target != nullptr)
            inputs[ft.target_input] = column_of(*target);
        else
            inputs[ft.target_input] = ad::Mat(cfg.num_bs * cfg.users_per_bs, 1, 0.0);
    }
};

FumGrads zero_grads(const FumModel& model, int depth) {
    FumGrads g;
    const NetworkConfig& cfg = model.cfg;
    for (int l = 0; l < depth; ++l) {
        FumLayer layer;
        layer.alpha_rho = Grid(cfg.num_bs, cfg.users_per_bs, 0.0);
        layer.theta_rho = Grid(cfg.num_bs, cfg.users_per_bs, 0.0);
        layer.alpha_gamma = Grid(cfg.num_bs, cfg.users_per_bs, 0.0);
        layer.theta_gamma = Grid(cfg.num_bs, cfg.users_per_bs, 0.0);
        g.layers.push_back(std::move(layer));
    }
    return g;
}

double validation_ratio(const FumModel& model, const std::vector<ChannelRealization>& channels,
                        const std::vector<double>& reference_wsee) {
    if (channels.empty()) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < channels.size(); ++i) {
        const ForwardResult fr = forward(model, channels[i]);
        acc += netmodel::wsee(channels[i], fr.rho, model.cfg) /
               std::max(reference_wsee[i], 1e-300);
    }
    return acc / static_cast<double>(channels.size());
}

}  // namespace

TrainResult train_incremental(const std::vector<ChannelRealization>& train_channels,
                              const std::vector<Grid>& train_targets,
                              const std::vector<ChannelRealization>& val_channels,
                              const std::vector<double>& val_reference_wsee,
                              const NetworkConfig& cfg, const TrainOptions& opts) {
    if (train_channels.empty()) throw InvalidInput("fum train: empty dataset");
    const bool supervised = opts.lambda != 0.0 && !train_targets.empty();
    if (supervised && train_targets.size() != train_channels.size())
        throw ShapeError("fum train: target count mismatch");

    TrainResult result;
    FumModel model = make_model(cfg, 1);
    std::mt19937_64 shuffle_rng(opts.shuffle_seed);

    // Rounds 0..L-1 grow the network; the last pass trains the full stack.
    for (int round = 0; round <= opts.target_depth; ++round) {
        const int depth = std::min(round + 1, opts.target_depth);
        while (model.depth() < depth) model.layers.push_back(model.layers.back());

        FumTape ft = build_training_tape(cfg, depth, model.init_rho, model.init_gamma.empty(),
                                         model.init_gamma, supervised ? opts.lambda : 0.0);
        SampleBinder binder(ft, model, cfg);

        std::vector<size_t> order(train_channels.size());
        std::iota(order.begin(), order.end(), 0);

        for (int epoch = 0; epoch < opts.epochs_per_round; ++epoch) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            double epoch_loss = 0.0;
            size_t seen = 0;
            for (size_t start = 0; start < order.size(); start += opts.batch_size) {
                const size_t stop = std::min(order.size(), start + opts.batch_size);
                FumGrads batch_grads = zero_grads(model, depth);
                for (size_t i = start; i < stop; ++i) {
                    const size_t s = order[i];
                    binder.bind_sample(ft, cfg, train_channels[s],
                                       supervised ? &train_targets[s] : nullptr);
                    epoch_loss += ft.tape.forward(binder.inputs).v[0];
                    ft.tape.backward();
                    for (int l = 0; l < depth; ++l) {
                        const auto add_to = [&](Grid& dst, int input_idx) {
                            const ad::Mat& g = ft.tape.input_gradient(input_idx);
                            for (size_t j = 0; j < dst.size(); ++j) dst.flat()[j] += g.v[j];
                        };
                        add_to(batch_grads.layers[l].alpha_rho, 1 + 4 * l + 0);
                        add_to(batch_grads.layers[l].theta_rho, 1 + 4 * l + 1);
                        add_to(batch_grads.layers[l].alpha_gamma, 1 + 4 * l + 2);
                        add_to(batch_grads.layers[l].theta_gamma, 1 + 4 * l + 3);
                    }
                }
                const double inv = 1.0 / static_cast<double>(stop - start);
                for (auto& layer : batch_grads.layers)
                    for (auto* g :
                         {&layer.alpha_rho, &layer.theta_rho, &layer.alpha_gamma,
                          &layer.theta_gamma})
                        for (double& x : g->flat()) x *= inv;

                FumModel trimmed;  // update only the active depth
                trimmed.cfg = model.cfg;
                trimmed.init_rho = model.init_rho;
                trimmed.init_gamma = model.init_gamma;
                trimmed.layers.assign(model.layers.begin(), model.layers.begin() + depth);
                result.rejected_updates += update(trimmed, batch_grads, opts.learning_rate);
                std::copy(trimmed.layers.begin(), trimmed.layers.end(), model.layers.begin());
                binder.refresh_params(ft, model);
                seen += stop - start;
            }
            TrainLogRow row;
            row.round = round;
            row.epoch = epoch;
            row.loss = epoch_loss / static_cast<double>(std::max<size_t>(seen, 1));
            FumModel probe = model;
            probe.layers.resize(depth);
            row.wsee_ratio = validation_ratio(probe, val_channels, val_reference_wsee);
            result.log.push_back(row);
        }
    }

    model.trained = true;
    result.model = std::move(model);
    return result;
}

InferResult infer(const FumModel& model, const ChannelRealization& chan) {
    const auto t0 = std::chrono::steady_clock::now();
    ForwardResult fr = forward(model, chan);
    InferResult out;
    out.rho = std::move(fr.rho);
    out.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace wsee::unfold_fum
