#pragma once

#include <optional>
#include <vector>

#include "wsee/autodiff.hpp"
#include "wsee/fp_closedform.hpp"
#include "wsee/types.hpp"

// Fully-unfolded model: the closed-form solver iteration unrolled into L
// layers. Each layer runs the exact closed-form quadruple and then blends
// the result with learnable per-link damping and bias, so zero damping
// reproduces the solver iteration identically and learning perturbs the
// flow instead of replacing it. Trained by plain gradient descent on the
// unprojected objective (optionally mixed with a supervised term).

namespace wsee::unfold_fum {

struct FumLayer {
    Grid alpha_rho;    // damping in [0,1]
    Grid theta_rho;    // power bias
    Grid alpha_gamma;  // damping in [0,1]
    Grid theta_gamma;  // SINR bias, >= 0
};

struct FumModel {
    NetworkConfig cfg;
    std::vector<FumLayer> layers;
    Grid init_rho;
    // Empty grid means "start from sinr(G, init_rho)", the solver default.
    Grid init_gamma;
    bool trained = false;

    int depth() const { return static_cast<int>(layers.size()); }
};

// Fresh model: damping 0.1, theta_rho = 1/(2K), theta_gamma = 1,
// init_rho uniform. `randomize` draws the parameters uniformly instead
// (used by the training-improves-over-random checks).
FumModel make_model(const NetworkConfig& cfg, int num_layers, bool randomize = false,
                    uint64_t seed = 0);

struct ForwardResult {
    PowerAllocation rho;
    Grid gamma;
};

// Plain (tape-free) forward pass; shares the iteration-step code with the
// closed-form solver, so alpha = 0 reproduces it to machine precision.
ForwardResult forward(const FumModel& model, const ChannelRealization& chan);

// Loss: -wsee(rho_hat) + lambda * mean squared error against a target
// allocation (lambda 0 by default). By transform tightness -wsee equals
// the negated tight objective at rho_hat's own auxiliaries.
double loss(const FumModel& model, const ChannelRealization& chan,
            const PowerAllocation& rho_hat, double lambda = 0.0,
            const Grid* rho_target = nullptr);

// Gradients mirror the layer parameter layout.
struct FumGrads {
    std::vector<FumLayer> layers;
};

// Plain gradient-descent update: parameter -= delta * gradient, damping
// re-clamped to [0,1], gamma bias to >= 0. NaN gradients leave the entry
// untouched and are counted.
int update(FumModel& model, const FumGrads& grads, double delta);

// Training tape over one sample: inputs are the gain matrix, each layer's
// four parameter grids, and the supervised target.
struct FumTape {
    ad::Tape tape;
    int gain_input = 0;
    int first_param_input = 1;  // 4 per layer: alpha_rho, theta_rho, alpha_gamma, theta_gamma
    int target_input = 0;       // set by builder
    int depth = 0;
};
FumTape build_training_tape(const NetworkConfig& cfg, int depth, const Grid& init_rho,
                            bool init_gamma_from_sinr, const Grid& init_gamma, double lambda);

struct TrainLogRow {
    int round = 0;
    int epoch = 0;
    double loss = 0.0;
    double wsee_ratio = 0.0;
};

struct TrainOptions {
    int target_depth = 5;
    int epochs_per_round = 12;
    double learning_rate = 1e-3;
    int batch_size = 64;
    double lambda = 0.0;     // supervised mix-in
    uint64_t shuffle_seed = 1;
};

struct TrainResult {
    FumModel model;
    std::vector<TrainLogRow> log;
    int rejected_updates = 0;  // NaN-gradient parameter entries
};

// Incremental training: round tau trains the depth-(tau+1) network, the
// new layer starting from the previous layer's trained values; a final
// round trains the full stack. Validation channels (with their reference
// wsee) drive the logged achieved-WSEE ratio.
TrainResult train_incremental(const std::vector<ChannelRealization>& train_channels,
                              const std::vector<Grid>& train_targets,  // may be empty
                              const std::vector<ChannelRealization>& val_channels,
                              const std::vector<double>& val_reference_wsee,
                              const NetworkConfig& cfg, const TrainOptions& opts);

// Single forward pass with wall-clock timing; no tape is constructed.
struct InferResult {
    PowerAllocation rho;
    double elapsed_s = 0.0;
};
InferResult infer(const FumModel& model, const ChannelRealization& chan);

}  // namespace wsee::unfold_fum
