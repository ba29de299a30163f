#include "wsee/unfold_masum.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "wsee/coupling.hpp"
#include "wsee/fp_numerical.hpp"
#include "wsee/netmodel.hpp"
#include "wsee/tape_builders.hpp"

namespace wsee::unfold_masum {

namespace {

constexpr int kConvChannelsIn = 3;  // gains, y, z

ad::Mat matmul_plain(const ad::Mat& a, const ad::Mat& b) {
    ad::Mat out(a.rows, b.cols, 0.0);
    for (int r = 0; r < a.rows; ++r)
        for (int t = 0; t < a.cols; ++t) {
            const double x = a.at(r, t);
            if (x == 0.0) continue;
            for (int c = 0; c < b.cols; ++c) out.at(r, c) += x * b.at(t, c);
        }
    return out;
}

void add_row_bias(ad::Mat& a, const ad::Mat& bias) {
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) a.at(r, c) += bias.at(0, c);
}

void relu_inplace(ad::Mat& a) {
    for (double& x : a.v) x = std::max(x, 0.0);
}

ad::Mat softmax_rows_plain(const ad::Mat& a) {
    ad::Mat out(a.rows, a.cols);
    for (int r = 0; r < a.rows; ++r) {
        double mx = a.at(r, 0);
        for (int c = 1; c < a.cols; ++c) mx = std::max(mx, a.at(r, c));
        double sum = 0.0;
        for (int c = 0; c < a.cols; ++c) {
            const double e = std::exp(a.at(r, c) - mx);
            out.at(r, c) = e;
            sum += e;
        }
        for (int c = 0; c < a.cols; ++c) out.at(r, c) /= sum;
    }
    return out;
}

// Zero-padded same-size 3x3 convolution on a (P x C_in) map.
ad::Mat conv3x3_plain(const ad::Mat& x, int h, int w, const ad::Mat& kernel,
                      const ad::Mat& bias) {
    const int c_in = x.cols, c_out = kernel.cols;
    ad::Mat out(x.rows, c_out, 0.0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const int p = i * w + j;
            for (int tap = 0; tap < 9; ++tap) {
                const int qi = i + tap / 3 - 1, qj = j + tap % 3 - 1;
                if (qi < 0 || qi >= h || qj < 0 || qj >= w) continue;
                const int q = qi * w + qj;
                for (int ci = 0; ci < c_in; ++ci) {
                    const double xv = x.at(q, ci);
                    if (xv == 0.0) continue;
                    const int krow = tap * c_in + ci;
                    for (int co = 0; co < c_out; ++co)
                        out.at(p, co) += xv * kernel.at(krow, co);
                }
            }
            for (int co = 0; co < c_out; ++co) out.at(p, co) += bias.at(0, co);
        }
    }
    return out;
}

// im2col selection matrix for the tape mirror of conv3x3_plain.
ad::Mat im2col_matrix(int h, int w, int c_in) {
    const int p_count = h * w;
    ad::Mat s(p_count * 9 * c_in, p_count * c_in, 0.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int p = i * w + j;
            for (int tap = 0; tap < 9; ++tap) {
                const int qi = i + tap / 3 - 1, qj = j + tap % 3 - 1;
                if (qi < 0 || qi >= h || qj < 0 || qj >= w) continue;
                const int q = qi * w + qj;
                for (int c = 0; c < c_in; ++c)
                    s.at(p * 9 * c_in + tap * c_in + c, q * c_in + c) = 1.0;
            }
        }
    return s;
}

ad::Mat grid_column(const Grid& g) {
    ad::Mat m(static_cast<int>(g.size()), 1);
    m.v = g.flat();
    return m;
}

}  // namespace

MasumModel make_model(const NetworkConfig& cfg, int num_stages, int num_attention,
                      uint64_t seed, int channels) {
    if (num_stages < 1) throw InvalidInput("masum: need at least one stage");
    if (num_attention > num_stages) throw InvalidInput("masum: more attention blocks than stages");
    const int users = cfg.num_bs * cfg.users_per_bs;
    const int p_count = users * cfg.num_bs;

    MasumModel model;
    model.cfg = cfg;
    model.channels = channels;
    model.hidden = 4 * users;
    model.init_rho = Grid(cfg.num_bs, cfg.users_per_bs, 1.0 / (2.0 * cfg.users_per_bs));

    std::mt19937_64 rng(seed);
    auto randn_mat = [&rng](int r, int c, double scale) {
        std::normal_distribution<double> gauss(0.0, scale);
        ad::Mat m(r, c);
        for (double& x : m.v) x = gauss(rng);
        return m;
    };

    for (int s = 0; s < num_stages; ++s) {
        MasumStage stage;
        stage.conv_kernel =
            randn_mat(9 * kConvChannelsIn, channels, std::sqrt(2.0 / (9.0 * kConvChannelsIn)));
        stage.conv_bias = ad::Mat(1, channels, 0.0);
        stage.fc1 = randn_mat(p_count * channels, model.hidden,
                              std::sqrt(2.0 / (p_count * channels)));
        stage.fc1_b = ad::Mat(1, model.hidden, 0.0);
        stage.fc2 = randn_mat(model.hidden, users, std::sqrt(2.0 / model.hidden));
        // Bias toward the uniform split so early stages emit sane powers.
        stage.fc2_b = ad::Mat(1, users, 1.0 / (2.0 * cfg.users_per_bs));
        model.stages.push_back(std::move(stage));
    }

    for (int a = 0; a < num_attention; ++a) {
        AttentionBlockParams blk;
        blk.w1 = randn_mat(channels, channels, std::sqrt(1.0 / channels));
        blk.w2 = randn_mat(channels, channels, std::sqrt(1.0 / channels));
        blk.w3 = randn_mat(channels, channels, std::sqrt(1.0 / channels));
        blk.w_out = ad::Mat(channels, channels, 0.0);  // exact pass-through at start
        blk.position = num_stages - num_attention + a + 1;
        model.attention.push_back(std::move(blk));
    }

    const int n_att = std::max(num_attention, 1);
    for (int b = 0; b < num_attention; ++b) {
        ad::Mat slice(channels, channels, 0.0);
        for (int c = 0; c < channels; ++c) slice.at(c, c) = 1.0 / n_att;
        model.fuse1_slices.push_back(std::move(slice));
    }
    model.fuse2 = ad::Mat(channels, channels, 0.0);
    for (int c = 0; c < channels; ++c) model.fuse2.at(c, c) = 1.0;
    model.fc_att1 = randn_mat(channels, model.hidden, std::sqrt(2.0 / channels));
    model.fc_att1_b = ad::Mat(1, model.hidden, 0.0);
    model.fc_att2 = randn_mat(model.hidden, users, std::sqrt(2.0 / model.hidden));
    model.fc_att2_b = ad::Mat(1, users, 0.0);
    return model;
}

PermutedBatch permutation_augment(const GainTensor& gains, int n_perms, uint64_t seed) {
    if (n_perms < 1) throw InvalidInput("permutation_augment: n_perms must be >= 1");
    const int m_count = gains.num_bs(), k_count = gains.users_per_bs();
    PermutedBatch batch;
    std::mt19937_64 rng(seed);

    for (int n = 0; n < n_perms; ++n) {
        std::vector<int> perm(m_count * k_count);
        std::iota(perm.begin(), perm.end(), 0);
        if (n > 0) {
            for (int m = 0; m < m_count; ++m) {
                std::shuffle(perm.begin() + m * k_count, perm.begin() + (m + 1) * k_count, rng);
            }
        }
        GainTensor permuted(m_count, k_count);
        for (int m = 0; m < m_count; ++m)
            for (int k = 0; k < k_count; ++k) {
                const int src = perm[m * k_count + k] - m * k_count;
                for (int c = 0; c < m_count; ++c)
                    permuted.at(m, k, c) = gains.at(m, src, c);
            }
        batch.gains.push_back(std::move(permuted));
        batch.perms.push_back(std::move(perm));
    }
    return batch;
}

FeatureMap attention_block(const FeatureMap& f_c, const AttentionBlockParams& params,
                           ad::Mat* attention_weights) {
    if (f_c.data.cols != params.w1.rows) throw ShapeError("attention_block: channel mismatch");
    const ad::Mat f1 = matmul_plain(f_c.data, params.w1);
    const ad::Mat f2 = matmul_plain(f_c.data, params.w2);
    const ad::Mat f3 = matmul_plain(f_c.data, params.w3);

    // scores[p][q] = <f1_p, f2_q>
    ad::Mat scores(f_c.positions(), f_c.positions(), 0.0);
    for (int p = 0; p < f_c.positions(); ++p)
        for (int q = 0; q < f_c.positions(); ++q) {
            double acc = 0.0;
            for (int c = 0; c < f_c.c; ++c) acc += f1.at(p, c) * f2.at(q, c);
            scores.at(p, q) = acc;
        }
    const ad::Mat weights = softmax_rows_plain(scores);
    if (attention_weights != nullptr) *attention_weights = weights;
    const ad::Mat calibrated = matmul_plain(weights, f3);
    ad::Mat projected = matmul_plain(calibrated, params.w_out);
    for (size_t i = 0; i < projected.size(); ++i) projected.v[i] += f_c.data.v[i];

    FeatureMap out = f_c;
    out.data = std::move(projected);
    return out;
}

FeatureMap fuse_features(const std::vector<FeatureMap>& maps, const ad::Mat& fuse1,
                         const ad::Mat& fuse2) {
    if (maps.empty()) throw InvalidInput("fuse_features: no maps");
    for (const FeatureMap& m : maps)
        if (m.h != maps[0].h || m.w != maps[0].w)
            throw ShapeError("fuse_features: unequal spatial dims");

    const int p_count = maps[0].positions();
    int total_c = 0;
    for (const FeatureMap& m : maps) total_c += m.c;
    if (fuse1.rows != total_c) throw ShapeError("fuse_features: fuse1 shape mismatch");

    ad::Mat concat(p_count, total_c);
    int offset = 0;
    for (const FeatureMap& m : maps) {
        for (int p = 0; p < p_count; ++p)
            for (int c = 0; c < m.c; ++c) concat.at(p, offset + c) = m.data.at(p, c);
        offset += m.c;
    }
    FeatureMap out;
    out.h = maps[0].h;
    out.w = maps[0].w;
    out.c = fuse2.cols;
    out.data = matmul_plain(matmul_plain(concat, fuse1), fuse2);
    return out;
}

PowerAllocation refine(const Grid& p_att, const Grid& p_main, const NetworkConfig& cfg) {
    if (!p_att.same_shape(p_main)) throw ShapeError("refine: shape mismatch");
    Grid out(p_att.num_bs(), p_att.users_per_bs());
    for (size_t i = 0; i < out.size(); ++i) {
        const double s = p_att.flat()[i] + p_main.flat()[i];
        out.flat()[i] = s / (1.0 + std::exp(-s));
    }
    return netmodel::project_feasible(out, cfg);
}

namespace {

struct StageIO {
    ad::Mat f_c;  // post-relu conv features
    Grid power;   // projected stage output
};

StageIO run_stage_plain(const MasumModel& model, const MasumStage& stage,
                        const ChannelRealization& chan, const PowerAllocation& rho) {
    const NetworkConfig& cfg = model.cfg;
    const int users = cfg.num_bs * cfg.users_per_bs;
    const int h = users, w = cfg.num_bs;

    const Grid y = fp_numerical::update_y(chan, rho, cfg);
    const Grid z = fp_numerical::update_z(chan, rho, cfg);

    // Raw gains span decades and the auxiliaries grow with 1/noise;
    // normalize each channel by its instance mean so the conv sees O(1).
    const ad::Mat gmat = gain_matrix(chan, cfg);
    double g_mean = 0.0, y_mean = 0.0, z_mean = 0.0;
    for (double v : gmat.v) g_mean += v;
    g_mean /= static_cast<double>(gmat.size());
    for (double v : y.flat()) y_mean += v;
    y_mean /= static_cast<double>(y.size());
    for (double v : z.flat()) z_mean += v;
    z_mean /= static_cast<double>(z.size());

    ad::Mat image(h * w, kConvChannelsIn);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const int p = i * w + j;
            image.at(p, 0) = gmat.at(i, j) / (g_mean + 1e-300);
            image.at(p, 1) = y.flat()[i] / (y_mean + 1e-300);
            image.at(p, 2) = z.flat()[i] / (z_mean + 1e-300);
        }

    StageIO io;
    io.f_c = conv3x3_plain(image, h, w, stage.conv_kernel, stage.conv_bias);
    relu_inplace(io.f_c);

    ad::Mat flat(1, io.f_c.rows * io.f_c.cols);
    flat.v = io.f_c.v;
    ad::Mat hidden = matmul_plain(flat, stage.fc1);
    add_row_bias(hidden, stage.fc1_b);
    relu_inplace(hidden);
    ad::Mat delta = matmul_plain(hidden, stage.fc2);
    add_row_bias(delta, stage.fc2_b);

    Grid raw(cfg.num_bs, cfg.users_per_bs);
    raw.flat() = delta.v;
    io.power = netmodel::project_feasible(raw, cfg).rho;
    return io;
}

}  // namespace

PowerAllocation forward(const MasumModel& model, const ChannelRealization& chan,
                        const Grid& rho_init) {
    const NetworkConfig& cfg = model.cfg;
    PowerAllocation rho = netmodel::project_feasible(rho_init, cfg);

    std::vector<FeatureMap> attention_maps;
    for (int s = 0; s < model.num_stages(); ++s) {
        StageIO io = run_stage_plain(model, model.stages[s], chan, rho);
        for (const AttentionBlockParams& blk : model.attention) {
            if (blk.position == s + 1) {
                FeatureMap fm;
                fm.h = cfg.num_bs * cfg.users_per_bs;
                fm.w = cfg.num_bs;
                fm.c = model.channels;
                fm.data = io.f_c;
                attention_maps.push_back(attention_block(fm, blk));
            }
        }
        rho.rho = io.power;
    }

    Grid p_att(cfg.num_bs, cfg.users_per_bs, 0.0);
    if (!attention_maps.empty()) {
        const int n_att = static_cast<int>(attention_maps.size());
        // Stack the active blocks' fusion slices into the concat kernel.
        ad::Mat fuse1(n_att * model.channels, model.channels, 0.0);
        int used = 0;
        for (size_t b = 0; b < model.attention.size() && used < n_att; ++b) {
            if (model.attention[b].position > model.num_stages()) continue;
            for (int r = 0; r < model.channels; ++r)
                for (int c = 0; c < model.channels; ++c)
                    fuse1.at(used * model.channels + r, c) = model.fuse1_slices[b].at(r, c);
            ++used;
        }
        const FeatureMap fused = fuse_features(attention_maps, fuse1, model.fuse2);
        ad::Mat pooled(1, fused.c, 0.0);
        for (int p = 0; p < fused.positions(); ++p)
            for (int c = 0; c < fused.c; ++c) pooled.at(0, c) += fused.data.at(p, c);
        for (double& x : pooled.v) x /= fused.positions();
        ad::Mat hidden = matmul_plain(pooled, model.fc_att1);
        add_row_bias(hidden, model.fc_att1_b);
        relu_inplace(hidden);
        ad::Mat att = matmul_plain(hidden, model.fc_att2);
        add_row_bias(att, model.fc_att2_b);
        p_att.flat() = att.v;
    }

    return refine(p_att, rho.rho, model.cfg);
}

PowerAllocation forward(const MasumModel& model, const ChannelRealization& chan) {
    return forward(model, chan, model.init_rho);
}

double loss(const MasumModel& model, const ChannelRealization& chan,
            const PowerAllocation& p_hat, double lambda, const Grid* target) {
    double l = -netmodel::wsee(chan, p_hat, model.cfg);
    if (lambda != 0.0 && target != nullptr) {
        double mse = 0.0;
        for (size_t i = 0; i < p_hat.rho.size(); ++i) {
            const double d = p_hat.rho.flat()[i] - target->flat()[i];
            mse += d * d;
        }
        l += lambda * mse / static_cast<double>(p_hat.rho.size());
    }
    return l;
}

MasumTape build_training_tape(const MasumModel& model, int depth, double lambda) {
    const NetworkConfig& cfg = model.cfg;
    const int users = cfg.num_bs * cfg.users_per_bs;
    const int h = users, w = cfg.num_bs, p_count = h * w;
    const int ch = model.channels;

    MasumTape mt;
    mt.depth = depth;
    ad::Tape& t = mt.tape;

    const ad::NodeId gmat = t.input(users, cfg.num_bs, "gains");

    struct StageInputs {
        ad::NodeId kernel, bias, fc1, fc1_b, fc2, fc2_b;
    };
    std::vector<StageInputs> stage_in;
    for (int s = 0; s < depth; ++s) {
        StageInputs si;
        si.kernel = t.input(9 * kConvChannelsIn, ch, "conv" + std::to_string(s));
        si.bias = t.input(1, ch);
        si.fc1 = t.input(p_count * ch, model.hidden);
        si.fc1_b = t.input(1, model.hidden);
        si.fc2 = t.input(model.hidden, users);
        si.fc2_b = t.input(1, users);
        for (int k = 0; k < 6; ++k) mt.param_inputs.push_back(1 + 6 * s + k);
        stage_in.push_back(si);
    }

    std::vector<int> active_blocks;
    for (size_t b = 0; b < model.attention.size(); ++b)
        if (model.attention[b].position <= depth) active_blocks.push_back(static_cast<int>(b));
    mt.active_attention = static_cast<int>(active_blocks.size());

    struct BlockInputs {
        ad::NodeId w1, w2, w3, w_out, fuse_slice;
    };
    std::vector<BlockInputs> block_in;
    for (size_t b = 0; b < active_blocks.size(); ++b) {
        BlockInputs bi;
        bi.w1 = t.input(ch, ch);
        bi.w2 = t.input(ch, ch);
        bi.w3 = t.input(ch, ch);
        bi.w_out = t.input(ch, ch);
        bi.fuse_slice = t.input(ch, ch);
        const int base = 1 + 6 * depth + 5 * static_cast<int>(b);
        for (int k = 0; k < 5; ++k) mt.param_inputs.push_back(base + k);
        block_in.push_back(bi);
    }

    ad::NodeId fuse2 = -1, fc_att1 = -1, fc_att1_b = -1, fc_att2 = -1, fc_att2_b = -1;
    int next = 1 + 6 * depth + 5 * mt.active_attention;
    if (mt.active_attention > 0) {
        fuse2 = t.input(ch, ch);
        fc_att1 = t.input(ch, model.hidden);
        fc_att1_b = t.input(1, model.hidden);
        fc_att2 = t.input(model.hidden, users);
        fc_att2_b = t.input(1, users);
        for (int k = 0; k < 5; ++k) mt.param_inputs.push_back(next + k);
        next += 5;
    }
    const ad::NodeId target = t.input(users, 1, "rho_target");
    mt.target_input = next;

    const tapes::GainNodes gains = tapes::gain_quantities(t, gmat, cfg);
    const ad::NodeId im2col = t.constant(im2col_matrix(h, w, kConvChannelsIn), "im2col");
    const ad::NodeId ones_w = t.constant(ad::Mat(1, w, 1.0));
    const ad::NodeId ones_p = t.constant(ad::Mat(p_count, 1, 1.0));
    ad::Mat e1m(1, kConvChannelsIn, 0.0), e2m = e1m, e3m = e1m;
    e1m.v[0] = 1.0;
    e2m.v[1] = 1.0;
    e3m.v[2] = 1.0;
    const ad::NodeId e1 = t.constant(e1m), e2 = t.constant(e2m), e3 = t.constant(e3m);
    const double inf = std::numeric_limits<double>::infinity();

    ad::NodeId rho = t.constant(grid_column(model.init_rho), "init_rho");
    std::vector<ad::NodeId> att_maps;

    for (int s = 0; s < depth; ++s) {
        const tapes::FlowNodes flow = tapes::power_flow(t, gains, rho, cfg);
        const ad::NodeId cost = t.add_const(t.scale(rho, cfg.p_max), cfg.circuit_power);
        const ad::NodeId y = t.div(t.sqrt(tapes::rate_node(t, flow.sinr, cfg)), cost);
        const ad::NodeId z = t.div(t.sqrt(flow.signal), flow.inoise);

        const ad::NodeId g_mean = t.add_const(
            t.scale(t.reduce_sum(gmat), 1.0 / (users * cfg.num_bs)), 1e-300);
        const ad::NodeId y_mean =
            t.add_const(t.scale(t.reduce_sum(y), 1.0 / users), 1e-300);
        const ad::NodeId z_mean =
            t.add_const(t.scale(t.reduce_sum(z), 1.0 / users), 1e-300);
        const ad::NodeId g_col = t.div(t.reshape(gmat, p_count, 1), g_mean);
        const ad::NodeId y_col = t.reshape(t.matmul(t.div(y, y_mean), ones_w), p_count, 1);
        const ad::NodeId z_col = t.reshape(t.matmul(t.div(z, z_mean), ones_w), p_count, 1);
        const ad::NodeId image = t.add(t.add(t.matmul(g_col, e1), t.matmul(y_col, e2)),
                                       t.matmul(z_col, e3));

        const ad::NodeId patches = t.reshape(
            t.matmul(im2col, t.reshape(image, p_count * kConvChannelsIn, 1)), p_count,
            9 * kConvChannelsIn);
        const ad::NodeId conv = t.clamp(
            t.add(t.matmul(patches, stage_in[s].kernel), t.matmul(ones_p, stage_in[s].bias)),
            0.0, inf);

        for (size_t bi = 0; bi < active_blocks.size(); ++bi) {
            if (model.attention[active_blocks[bi]].position != s + 1) continue;
            const BlockInputs& blk = block_in[bi];
            const ad::NodeId f1 = t.matmul(conv, blk.w1);
            const ad::NodeId f2 = t.matmul(conv, blk.w2);
            const ad::NodeId f3 = t.matmul(conv, blk.w3);
            const ad::NodeId weights = t.softmax_rows(t.matmul(f1, f2, false, true));
            const ad::NodeId cal = t.matmul(t.matmul(weights, f3), blk.w_out);
            att_maps.push_back(t.matmul(t.add(cal, conv), blk.fuse_slice));
        }

        const ad::NodeId flat = t.reshape(conv, 1, p_count * ch);
        const ad::NodeId hidden = t.clamp(
            t.add(t.matmul(flat, stage_in[s].fc1), stage_in[s].fc1_b), 0.0, inf);
        const ad::NodeId delta = t.add(t.matmul(hidden, stage_in[s].fc2), stage_in[s].fc2_b);
        rho = tapes::project_feasible_node(t, t.reshape(delta, users, 1), cfg);
    }

    ad::NodeId s_sum = rho;
    if (!att_maps.empty()) {
        ad::NodeId mixed = att_maps[0];
        for (size_t b = 1; b < att_maps.size(); ++b) mixed = t.add(mixed, att_maps[b]);
        const ad::NodeId fused = t.matmul(mixed, fuse2);
        const ad::NodeId pooled =
            t.scale(t.matmul(t.constant(ad::Mat(1, p_count, 1.0)), fused), 1.0 / p_count);
        const ad::NodeId hidden =
            t.clamp(t.add(t.matmul(pooled, fc_att1), fc_att1_b), 0.0, inf);
        const ad::NodeId p_att = t.add(t.matmul(hidden, fc_att2), fc_att2_b);
        s_sum = t.add(rho, t.reshape(p_att, users, 1));
    }
    const ad::NodeId refined =
        tapes::project_feasible_node(t, t.mul(t.sigmoid(s_sum), s_sum), cfg);

    const tapes::FlowNodes out_flow = tapes::power_flow(t, gains, refined, cfg);
    ad::NodeId loss_node = t.scale(tapes::wsee_node(t, out_flow, refined, cfg), -1.0);
    if (lambda != 0.0) {
        const ad::NodeId diff = t.sub(refined, target);
        loss_node = t.add(loss_node, t.scale(t.reduce_sum(t.mul(diff, diff)),
                                             lambda / static_cast<double>(users)));
    } else {
        loss_node = t.add(loss_node, t.scale(t.reduce_sum(target), 0.0));
    }
    t.set_output(loss_node);
    return mt;
}

std::vector<ad::Mat> bind_inputs(const MasumTape& mt, const MasumModel& model,
                                 const ChannelRealization& chan, const Grid* target) {
    const NetworkConfig& cfg = model.cfg;
    const int users = cfg.num_bs * cfg.users_per_bs;
    std::vector<ad::Mat> inputs(mt.target_input + 1);
    inputs[0] = gain_matrix(chan, cfg);

    for (int s = 0; s < mt.depth; ++s) {
        const MasumStage& st = model.stages[s];
        inputs[1 + 6 * s + 0] = st.conv_kernel;
        inputs[1 + 6 * s + 1] = st.conv_bias;
        inputs[1 + 6 * s + 2] = st.fc1;
        inputs[1 + 6 * s + 3] = st.fc1_b;
        inputs[1 + 6 * s + 4] = st.fc2;
        inputs[1 + 6 * s + 5] = st.fc2_b;
    }
    int next = 1 + 6 * mt.depth;
    int active = 0;
    for (size_t b = 0; b < model.attention.size(); ++b) {
        const AttentionBlockParams& blk = model.attention[b];
        if (blk.position > mt.depth) continue;
        inputs[next + 5 * active + 0] = blk.w1;
        inputs[next + 5 * active + 1] = blk.w2;
        inputs[next + 5 * active + 2] = blk.w3;
        inputs[next + 5 * active + 3] = blk.w_out;
        inputs[next + 5 * active + 4] = model.fuse1_slices[b];
        ++active;
    }
    next += 5 * active;
    if (active > 0) {
        inputs[next + 0] = model.fuse2;
        inputs[next + 1] = model.fc_att1;
        inputs[next + 2] = model.fc_att1_b;
        inputs[next + 3] = model.fc_att2;
        inputs[next + 4] = model.fc_att2_b;
        next += 5;
    }
    if (target != nullptr)
        inputs[mt.target_input] = grid_column(*target);
    else
        inputs[mt.target_input] = ad::Mat(users, 1, 0.0);
    return inputs;
}

namespace {

// Adam over a flat list of parameter matrices.
struct Adam {
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int step = 0;
    std::vector<ad::Mat> m, v;

    explicit Adam(const std::vector<ad::Mat*>& params, double learning_rate) : lr(learning_rate) {
        for (const ad::Mat* p : params) {
            m.emplace_back(p->rows, p->cols, 0.0);
            v.emplace_back(p->rows, p->cols, 0.0);
        }
    }

    void apply(std::vector<ad::Mat*>& params, const std::vector<ad::Mat>& grads) {
        ++step;
        const double c1 = 1.0 - std::pow(beta1, step);
        const double c2 = 1.0 - std::pow(beta2, step);
        for (size_t i = 0; i < params.size(); ++i) {
            for (size_t j = 0; j < params[i]->size(); ++j) {
                const double g = grads[i].v[j];
                if (std::isnan(g)) continue;
                m[i].v[j] = beta1 * m[i].v[j] + (1.0 - beta1) * g;
                v[i].v[j] = beta2 * v[i].v[j] + (1.0 - beta2) * g * g;
                params[i]->v[j] -=
                    lr * (m[i].v[j] / c1) / (std::sqrt(v[i].v[j] / c2) + eps);
            }
        }
    }
};

std::vector<ad::Mat*> collect_params(MasumModel& model, int depth, int active_attention) {
    std::vector<ad::Mat*> out;
    for (int s = 0; s < depth; ++s) {
        MasumStage& st = model.stages[s];
        out.push_back(&st.conv_kernel);
        out.push_back(&st.conv_bias);
        out.push_back(&st.fc1);
        out.push_back(&st.fc1_b);
        out.push_back(&st.fc2);
        out.push_back(&st.fc2_b);
    }
    int active = 0;
    for (size_t b = 0; b < model.attention.size(); ++b) {
        AttentionBlockParams& blk = model.attention[b];
        if (blk.position > depth) continue;
        out.push_back(&blk.w1);
        out.push_back(&blk.w2);
        out.push_back(&blk.w3);
        out.push_back(&blk.w_out);
        out.push_back(&model.fuse1_slices[b]);
        ++active;
    }
    if (active > 0) {
        out.push_back(&model.fuse2);
        out.push_back(&model.fc_att1);
        out.push_back(&model.fc_att1_b);
        out.push_back(&model.fc_att2);
        out.push_back(&model.fc_att2_b);
    }
    (void)active_attention;
    return out;
}

double validation_ratio(const MasumModel& model, const std::vector<ChannelRealization>& channels,
                        const std::vector<double>& reference_wsee) {
    if (channels.empty()) return 0.0;
    double acc = 0.0;
    for (size_t i = 0; i < channels.size(); ++i) {
        const PowerAllocation p = forward(model, channels[i]);
        acc += netmodel::wsee(channels[i], p, model.cfg) / std::max(reference_wsee[i], 1e-300);
    }
    return acc / static_cast<double>(channels.size());
}

}  // namespace

TrainResult train_incremental(const std::vector<ChannelRealization>& train_channels,
                              const std::vector<Grid>& train_targets,
                              const std::vector<ChannelRealization>& val_channels,
                              const std::vector<double>& val_reference_wsee,
                              const NetworkConfig& cfg, const TrainOptions& opts) {
    if (train_channels.empty()) throw InvalidInput("masum train: empty dataset");
    const bool supervised = opts.lambda != 0.0 && !train_targets.empty();
    if (supervised && train_targets.size() != train_channels.size())
        throw ShapeError("masum train: target count mismatch");

    TrainResult result;
    MasumModel model =
        make_model(cfg, opts.num_stages, opts.num_attention, opts.seed, opts.channels);
    std::mt19937_64 shuffle_rng(opts.seed + 17);

    for (int round = 0; round <= opts.num_stages; ++round) {
        const int depth = std::min(round + 1, opts.num_stages);
        MasumTape mt = build_training_tape(model, depth, supervised ? opts.lambda : 0.0);
        std::vector<ad::Mat*> params = collect_params(model, depth, mt.active_attention);

        // collect_params holds fuse1 back until all blocks are active;
        // the tape always takes the active-count slice, so only sizes
        // matching the stored kernel feed gradients back into it.
        Adam adam(params, opts.learning_rate);

        std::vector<size_t> order(train_channels.size());
        std::iota(order.begin(), order.end(), 0);

        for (int epoch = 0; epoch < opts.epochs_per_round; ++epoch) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            double epoch_loss = 0.0;
            size_t seen = 0;
            for (size_t start = 0; start < order.size(); start += opts.batch_size) {
                const size_t stop = std::min(order.size(), start + opts.batch_size);
                std::vector<ad::Mat> grads;
                for (ad::Mat* p : params) grads.emplace_back(p->rows, p->cols, 0.0);
                for (size_t i = start; i < stop; ++i) {
                    const size_t s = order[i];
                    std::vector<ad::Mat> inputs = bind_inputs(
                        mt, model, train_channels[s], supervised ? &train_targets[s] : nullptr);
                    epoch_loss += mt.tape.forward(inputs).v[0];
                    mt.tape.backward();
                    for (size_t pi = 0; pi < mt.param_inputs.size() && pi < grads.size(); ++pi) {
                        const ad::Mat& g = mt.tape.input_gradient(mt.param_inputs[pi]);
                        if (g.size() != grads[pi].size()) continue;
                        for (size_t j = 0; j < g.size(); ++j) grads[pi].v[j] += g.v[j];
                    }
                }
                const double inv = 1.0 / static_cast<double>(stop - start);
                for (ad::Mat& g : grads)
                    for (double& x : g.v) x *= inv;
                adam.apply(params, grads);
                seen += stop - start;
            }
            TrainLogRow row;
            row.round = round;
            row.epoch = epoch;
            row.loss = epoch_loss / static_cast<double>(std::max<size_t>(seen, 1));
            MasumModel probe = model;
            probe.stages.resize(depth);
            row.wsee_ratio = validation_ratio(probe, val_channels, val_reference_wsee);
            result.log.push_back(row);
        }
    }

    model.trained = true;
    result.model = std::move(model);
    return result;
}

InferResult infer(const MasumModel& model, const ChannelRealization& chan) {
    const auto t0 = std::chrono::steady_clock::now();
    InferResult out;
    out.rho = forward(model, chan);
    out.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace wsee::unfold_masum
