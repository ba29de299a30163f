#pragma once

#include <optional>
#include <vector>

#include "wsee/autodiff.hpp"
#include "wsee/types.hpp"

// Semi-unfolded model: the numerical solver's auxiliary updates (y, z)
// are computed in closed form from each stage's incoming power and fed,
// together with the gain image, into a data-driven pipeline — a 3x3
// convolution and a fully connected head produce each stage's power
// prediction, while self-attention blocks on selected stages feed a
// fused compensation head whose output refines the final prediction.
//
// Image layout: rows = user links in (m,k) order (H = M*K), columns =
// source BS (W = M); channels gains / y / z. Feature maps are stored as
// (P x C) matrices with P = H*W positions.

namespace wsee::unfold_masum {

struct FeatureMap {
    int h = 0, w = 0, c = 0;
    ad::Mat data;  // (h*w) x c

    int positions() const { return h * w; }
};

struct AttentionBlockParams {
    ad::Mat w1, w2, w3;  // C x C 1x1 convs
    ad::Mat w_out;       // C x C output projection
    int position = 0;    // 1-based stage index the block taps
};

struct MasumStage {
    ad::Mat conv_kernel;  // (9*C_in) x C
    ad::Mat conv_bias;    // 1 x C
    ad::Mat fc1, fc1_b;   // (P*C) x hidden, 1 x hidden
    ad::Mat fc2, fc2_b;   // hidden x MK, 1 x MK
};

struct MasumModel {
    NetworkConfig cfg;
    int channels = 8;
    int hidden = 0;  // FC hidden width, 4*M*K by default
    std::vector<MasumStage> stages;
    std::vector<AttentionBlockParams> attention;
    // First fusion conv, stored as one C x C slice per attention block
    // (equivalent to the stacked (C*n_att) x C kernel acting on the
    // channel concatenation); then the second C x C conv.
    std::vector<ad::Mat> fuse1_slices;
    ad::Mat fuse2;
    ad::Mat fc_att1, fc_att1_b;  // C x hidden, 1 x hidden
    ad::Mat fc_att2, fc_att2_b;  // hidden x MK, 1 x MK
    Grid init_rho;
    bool trained = false;

    int num_stages() const { return static_cast<int>(stages.size()); }
};

// Fresh model with `num_stages` stages and `num_attention` blocks on the
// last stages (mirroring the published placements). Convolutions and FC
// layers get small random weights, attention output projections start at
// zero (exact pass-through), fusion starts as the mean of its inputs.
MasumModel make_model(const NetworkConfig& cfg, int num_stages, int num_attention,
                      uint64_t seed = 0, int channels = 8);

// Identity arrangement plus n_perms-1 random per-cell user permutations
// of the gain image rows; returned permutations let callers reorder
// labels identically.
struct PermutedBatch {
    std::vector<GainTensor> gains;
    std::vector<std::vector<int>> perms;  // per instance: perm[m*K+k] = source row
};
PermutedBatch permutation_augment(const GainTensor& gains, int n_perms, uint64_t seed = 0);

// f_A = (softmax_rows(F1*F2^T) * F3) * w_out + f_c, all 1x1 convs.
// `attention_weights`, when given, receives the row-softmax matrix.
FeatureMap attention_block(const FeatureMap& f_c, const AttentionBlockParams& params,
                           ad::Mat* attention_weights = nullptr);

// Channel-concatenate equal-sized maps and apply the two 1x1 convs.
FeatureMap fuse_features(const std::vector<FeatureMap>& maps, const ad::Mat& fuse1,
                         const ad::Mat& fuse2);

// sigmoid(s) ⊙ s with s = p_att + p_main, budget-projected.
PowerAllocation refine(const Grid& p_att, const Grid& p_main, const NetworkConfig& cfg);

// Plain (tape-free) forward pass.
PowerAllocation forward(const MasumModel& model, const ChannelRealization& chan,
                        const Grid& rho_init);
PowerAllocation forward(const MasumModel& model, const ChannelRealization& chan);

// -wsee(p_hat) + lambda * mean squared error against a target.
double loss(const MasumModel& model, const ChannelRealization& chan,
            const PowerAllocation& p_hat, double lambda = 0.0, const Grid* target = nullptr);

struct TrainLogRow {
    int round = 0;
    int epoch = 0;
    double loss = 0.0;
    double wsee_ratio = 0.0;
};

struct TrainOptions {
    int num_stages = 5;
    int num_attention = 2;
    int channels = 8;
    int epochs_per_round = 10;
    double learning_rate = 1e-3;
    int batch_size = 128;
    double lambda = 0.0;
    uint64_t seed = 1;
};

struct TrainResult {
    MasumModel model;
    std::vector<TrainLogRow> log;
};

// Same incremental schedule as the fully-unfolded model; stages are added
// round by round (attention blocks join once their stage exists) and a
// final round trains everything. Adam drives the update.
TrainResult train_incremental(const std::vector<ChannelRealization>& train_channels,
                              const std::vector<Grid>& train_targets,
                              const std::vector<ChannelRealization>& val_channels,
                              const std::vector<double>& val_reference_wsee,
                              const NetworkConfig& cfg, const TrainOptions& opts);

struct InferResult {
    PowerAllocation rho;
    double elapsed_s = 0.0;
};
InferResult infer(const MasumModel& model, const ChannelRealization& chan);

// Training tape over one sample. Parameter inputs are ordered:
// per stage [conv_kernel, conv_bias, fc1, fc1_b, fc2, fc2_b], then per
// active attention block [w1, w2, w3, w_out, fuse1_slice], then fuse2,
// fc_att1, fc_att1_b, fc_att2, fc_att2_b; gain matrix first, target
// last.
struct MasumTape {
    ad::Tape tape;
    int gain_input = 0;
    int target_input = 0;
    std::vector<int> param_inputs;
    int depth = 0;
    int active_attention = 0;
};
MasumTape build_training_tape(const MasumModel& model, int depth, double lambda);

// Binds one sample + current parameters in the tape's input order.
std::vector<ad::Mat> bind_inputs(const MasumTape& mt, const MasumModel& model,
                                 const ChannelRealization& chan, const Grid* target);

}  // namespace wsee::unfold_masum
