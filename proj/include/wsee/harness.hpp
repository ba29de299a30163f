#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wsee/serialize.hpp"
#include "wsee/types.hpp"
#include "wsee/unfold_fum.hpp"
#include "wsee/unfold_masum.hpp"

// Experiment orchestration: dataset generation, benchmark sweeps,
// robustness evaluation, timing, ablations, and the CLI front end.

namespace wsee::harness {

// Runs fn(i) for i in [0, n) across workers; capped by the
// UNFOLD_EE_THREADS environment variable. Work is seed-partitioned by
// index, so results do not depend on the worker count.
void parallel_for(int n, const std::function<void(int)>& fn);
int worker_count();

struct GenOptions {
    int restarts = 3;            // best-of-restarts solver targets
    double train_fraction = 0.36;
    double val_fraction = 0.32;  // remainder goes to test
    fp_numerical::SolverOptions solver;
};

// Channels plus best-of-restarts solver targets; samples whose solve
// reports degraded progress are regenerated with a fresh seed.
serialize::Dataset gen_dataset(const NetworkConfig& cfg, int n_samples,
                               const std::string& solver_choice, uint64_t seed,
                               const GenOptions& opts = {});

struct SchemeSet {
    bool alg_numerical = true;
    bool alg_closedform = true;
    const unfold_fum::FumModel* fum = nullptr;
    const unfold_masum::MasumModel* masum = nullptr;
};

// Mean WSEE per scheme over a fixed evaluation set for each P_max point.
// Solver runs warm-start from the previous point's allocation (scaled to
// preserve transmit power), which makes their curves non-decreasing.
// Untrained models are refused.
std::vector<serialize::BenchRow> bench_pmax_sweep(const NetworkConfig& cfg,
                                                  const SchemeSet& schemes,
                                                  const std::vector<double>& pmax_dbw,
                                                  int eval_samples, uint64_t seed);

struct OffTrainingShift {
    double path_loss_exponent_delta = 0.5;
    double fading_var_scale = 1.5;
};

struct OffTrainingResult {
    double fum_ratio = 0.0;    // aggregate achieved-WSEE ratio vs the numerical solver
    double masum_ratio = 0.0;
    int samples = 0;
};
OffTrainingResult eval_off_training(const unfold_fum::FumModel* fum,
                                    const unfold_masum::MasumModel* masum,
                                    const NetworkConfig& cfg, const OffTrainingShift& shift,
                                    int n_eval, uint64_t seed);

struct TimingStats {
    double median_s = 0.0;
    double p95_s = 0.0;
    int calls = 0;
};
// Warm per-call wall time over reps x instances; solver schemes time the
// full convergence loop, model schemes one forward pass. Single-threaded.
TimingStats measure_inference(const std::string& scheme, const NetworkConfig& cfg,
                              const std::vector<ChannelRealization>& instances, int reps,
                              const unfold_fum::FumModel* fum = nullptr,
                              const unfold_masum::MasumModel* masum = nullptr);

struct AblationRow {
    int setting = 0;  // layer count or attention count
    double accuracy_pct = 0.0;
    double inference_ms = 0.0;
};
// Trains a fresh model per grid point on the given dataset and reports
// held-out accuracy plus median inference time.
std::vector<AblationRow> ablation_layers(const serialize::Dataset& ds,
                                         const std::vector<int>& layer_grid,
                                         const unfold_fum::TrainOptions& base);
std::vector<AblationRow> ablation_attention(const serialize::Dataset& ds,
                                            const std::vector<int>& attention_grid,
                                            const unfold_masum::TrainOptions& base);

// CLI entry: subcommands gen-data, solve, train, eval, bench, ablate,
// trace. Returns 0 on success, 1 on invalid input, 2 on runtime failure.
int cli(const std::vector<std::string>& args);

}  // namespace wsee::harness
