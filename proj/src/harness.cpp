#include "wsee/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "wsee/fp_closedform.hpp"
#include "wsee/fp_numerical.hpp"
#include "wsee/netmodel.hpp"

namespace wsee::harness {

int worker_count() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("UNFOLD_EE_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
    const int workers = std::min(worker_count(), std::max(n, 1));
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (std::thread& t : pool) t.join();
}

namespace {

fp_numerical::SolverReport run_solver(const std::string& choice, const ChannelRealization& chan,
                                      const NetworkConfig& cfg,
                                      const fp_numerical::SolverOptions& opts) {
    if (choice == "num") return fp_numerical::solve(chan, cfg, opts);
    if (choice == "cf") return fp_closedform::solve(chan, cfg, opts);
    throw InvalidInput("unknown solver: " + choice + " (expected 'num' or 'cf')");
}

Grid random_feasible(const NetworkConfig& cfg, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Grid g(cfg.num_bs, cfg.users_per_bs);
    for (double& x : g.flat()) x = unit(rng) / cfg.users_per_bs;
    return netmodel::project_feasible(g, cfg).rho;
}

}  // namespace

serialize::Dataset gen_dataset(const NetworkConfig& cfg, int n_samples,
                               const std::string& solver_choice, uint64_t seed,
                               const GenOptions& opts) {
    if (n_samples < 1) throw InvalidInput("gen_dataset: need at least one sample");
    cfg.validate(true);

    serialize::Dataset ds;
    ds.cfg = cfg;
    ds.samples.resize(n_samples);

    std::atomic<int> regenerated{0};
    parallel_for(n_samples, [&](int i) {
        // Seed-partitioned per sample; regeneration steps the offset.
        for (uint64_t attempt = 0;; ++attempt) {
            NetworkConfig sample_cfg = cfg;
            sample_cfg.rng_seed = seed + 1000003ull * attempt + static_cast<uint64_t>(i);
            const ChannelRealization chan = netmodel::generate_channels(sample_cfg);

            bool degraded = false;
            double best_wsee = -1.0;
            Grid best_rho;
            for (int r = 0; r < opts.restarts; ++r) {
                fp_numerical::SolverOptions sopts = opts.solver;
                if (r > 0) sopts.rho_init = random_feasible(cfg, sample_cfg.rng_seed + 7919ull * r);
                const auto rep = run_solver(solver_choice, chan, cfg, sopts);
                degraded = degraded || rep.degraded;
                const double w = rep.objective_trace.empty() ? 0.0 : rep.objective_trace.back();
                if (w > best_wsee) {
                    best_wsee = w;
                    best_rho = rep.rho_final.rho;
                }
            }
            if (degraded) {
                ++regenerated;
                continue;
            }
            ds.samples[i].channel = chan;
            ds.samples[i].target_rho = best_rho;
            ds.samples[i].target_wsee = best_wsee;
            ds.samples[i].solver = solver_choice;
            break;
        }
    });

    std::vector<int> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 split_rng(seed * 31 + 7);
    std::shuffle(order.begin(), order.end(), split_rng);
    const int n_train = static_cast<int>(std::lround(opts.train_fraction * n_samples));
    const int n_val = static_cast<int>(std::lround(opts.val_fraction * n_samples));
    for (int i = 0; i < n_samples; ++i) {
        if (i < n_train)
            ds.train_idx.push_back(order[i]);
        else if (i < n_train + n_val)
            ds.val_idx.push_back(order[i]);
        else
            ds.test_idx.push_back(order[i]);
    }
    return ds;
}

std::vector<serialize::BenchRow> bench_pmax_sweep(const NetworkConfig& cfg,
                                                  const SchemeSet& schemes,
                                                  const std::vector<double>& pmax_dbw,
                                                  int eval_samples, uint64_t seed) {
    if (pmax_dbw.empty()) throw InvalidInput("bench: empty sweep");
    if (schemes.fum != nullptr && !schemes.fum->trained)
        throw InvalidInput("bench: refusing an untrained fum model");
    if (schemes.masum != nullptr && !schemes.masum->trained)
        throw InvalidInput("bench: refusing an untrained masum model");

    std::vector<ChannelRealization> channels(eval_samples);
    for (int i = 0; i < eval_samples; ++i) {
        NetworkConfig sample_cfg = cfg;
        sample_cfg.rng_seed = seed + static_cast<uint64_t>(i);
        channels[i] = netmodel::generate_channels(sample_cfg);
    }

    struct SchemeState {
        std::string name;
        std::vector<Grid> warm;  // per instance, previous sweep point's rho
    };
    std::vector<serialize::BenchRow> rows;
    std::vector<Grid> warm_num(eval_samples), warm_cf(eval_samples);
    std::vector<double> prev_pmax(2, 0.0);

    double last_pmax_w = 0.0;
    bool have_prev = false;
    for (double dbw : pmax_dbw) {
        NetworkConfig point_cfg = cfg;
        point_cfg.p_max = std::pow(10.0, dbw / 10.0);

        std::vector<double> alg1_wsee(eval_samples, 0.0);

        auto eval_scheme = [&](const std::string& name) -> std::pair<double, double> {
            double total = 0.0, seconds = 0.0;
            std::vector<double> per(eval_samples, 0.0);
            std::vector<double> secs(eval_samples, 0.0);
            parallel_for(eval_samples, [&](int i) {
                const auto t0 = std::chrono::steady_clock::now();
                double w = 0.0;
                if (name == "num" || name == "cf") {
                    fp_numerical::SolverOptions sopts;
                    std::vector<Grid>& warm = name == "num" ? warm_num : warm_cf;
                    if (have_prev && !warm[i].empty()) {
                        Grid init = warm[i];
                        const double scale = last_pmax_w / point_cfg.p_max;
                        for (double& x : init.flat()) x *= scale;
                        sopts.rho_init = init;
                    }
                    const auto rep = run_solver(name, channels[i], point_cfg, sopts);
                    w = rep.objective_trace.back();
                    warm[i] = rep.rho_final.rho;
                    if (name == "num") alg1_wsee[i] = w;
                } else if (name == "fum") {
                    const auto fr = unfold_fum::forward(*schemes.fum, channels[i]);
                    // forward() reads cfg from the model; rebuild with the
                    // sweep point's budget.
                    unfold_fum::FumModel probe = *schemes.fum;
                    probe.cfg = point_cfg;
                    const auto fr2 = unfold_fum::forward(probe, channels[i]);
                    (void)fr;
                    w = netmodel::wsee(channels[i], fr2.rho, point_cfg);
                } else {  // masum
                    unfold_masum::MasumModel probe = *schemes.masum;
                    probe.cfg = point_cfg;
                    const PowerAllocation p = unfold_masum::forward(probe, channels[i]);
                    w = netmodel::wsee(channels[i], p, point_cfg);
                }
                per[i] = w;
                secs[i] =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            });
            for (int i = 0; i < eval_samples; ++i) {
                total += per[i];
                seconds += secs[i];
            }
            return {total / eval_samples, seconds / eval_samples};
        };

        std::vector<std::pair<std::string, bool>> wanted = {
            {"num", schemes.alg_numerical},
            {"cf", schemes.alg_closedform},
            {"fum", schemes.fum != nullptr},
            {"masum", schemes.masum != nullptr}};
        double alg1_mean = 0.0;
        for (const auto& [name, on] : wanted) {
            if (!on) continue;
            const auto [mean_wsee, mean_s] = eval_scheme(name);
            if (name == "num") alg1_mean = mean_wsee;
            serialize::BenchRow row;
            row.scheme = name;
            row.p_max_dbw = dbw;
            row.wsee_bits_per_joule = mean_wsee;
            row.wall_time_s = mean_s;
            row.accuracy_pct = alg1_mean > 0.0 ? 100.0 * mean_wsee / alg1_mean : 0.0;
            rows.push_back(row);
        }
        last_pmax_w = point_cfg.p_max;
        have_prev = true;
    }
    return rows;
}

OffTrainingResult eval_off_training(const unfold_fum::FumModel* fum,
                                    const unfold_masum::MasumModel* masum,
                                    const NetworkConfig& cfg, const OffTrainingShift& shift,
                                    int n_eval, uint64_t seed) {
    OffTrainingResult out;
    out.samples = n_eval;
    NetworkConfig shifted = cfg;
    shifted.path_loss_exponent += shift.path_loss_exponent_delta;

    std::vector<double> fum_acc(n_eval, 0.0), masum_acc(n_eval, 0.0);
    parallel_for(n_eval, [&](int i) {
        NetworkConfig sample_cfg = shifted;
        sample_cfg.rng_seed = seed + static_cast<uint64_t>(i);
        const ChannelRealization chan =
            netmodel::generate_channels(sample_cfg, shift.fading_var_scale);
        const auto ref = fp_numerical::solve(chan, cfg, {});
        const double ref_wsee = ref.objective_trace.back();
        if (fum != nullptr) {
            const auto fr = unfold_fum::forward(*fum, chan);
            fum_acc[i] = netmodel::wsee(chan, fr.rho, cfg) / std::max(ref_wsee, 1e-300);
        }
        if (masum != nullptr) {
            const PowerAllocation p = unfold_masum::forward(*masum, chan);
            masum_acc[i] = netmodel::wsee(chan, p, cfg) / std::max(ref_wsee, 1e-300);
        }
    });
    for (int i = 0; i < n_eval; ++i) {
        out.fum_ratio += fum_acc[i] / n_eval;
        out.masum_ratio += masum_acc[i] / n_eval;
    }
    return out;
}

TimingStats measure_inference(const std::string& scheme, const NetworkConfig& cfg,
                              const std::vector<ChannelRealization>& instances, int reps,
                              const unfold_fum::FumModel* fum,
                              const unfold_masum::MasumModel* masum) {
    if (instances.empty() || reps < 1) throw InvalidInput("measure_inference: empty workload");
    std::vector<double> times;
    times.reserve(instances.size() * reps);

    auto run_once = [&](const ChannelRealization& chan) {
        const auto t0 = std::chrono::steady_clock::now();
        if (scheme == "num") {
            (void)fp_numerical::solve(chan, cfg, {});
        } else if (scheme == "cf") {
            (void)fp_closedform::solve(chan, cfg, {});
        } else if (scheme == "fum") {
            (void)unfold_fum::forward(*fum, chan);
        } else if (scheme == "masum") {
            (void)unfold_masum::forward(*masum, chan);
        } else {
            throw InvalidInput("measure_inference: unknown scheme " + scheme);
        }
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    // One warm pass outside the measurement.
    run_once(instances.front());
    for (int r = 0; r < reps; ++r)
        for (const ChannelRealization& chan : instances) times.push_back(run_once(chan));

    std::sort(times.begin(), times.end());
    TimingStats st;
    st.calls = static_cast<int>(times.size());
    st.median_s = times[times.size() / 2];
    st.p95_s = times[std::min(times.size() - 1, static_cast<size_t>(times.size() * 95 / 100))];
    return st;
}

namespace {

std::vector<ChannelRealization> collect(const serialize::Dataset& ds,
                                        const std::vector<int>& idx) {
    std::vector<ChannelRealization> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(ds.samples[i].channel);
    return out;
}

std::vector<Grid> collect_targets(const serialize::Dataset& ds, const std::vector<int>& idx) {
    std::vector<Grid> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(ds.samples[i].target_rho);
    return out;
}

std::vector<double> collect_wsee(const serialize::Dataset& ds, const std::vector<int>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(ds.samples[i].target_wsee);
    return out;
}

double heldout_accuracy_fum(const unfold_fum::FumModel& model, const serialize::Dataset& ds) {
    double acc = 0.0;
    for (int i : ds.test_idx) {
        const auto fr = unfold_fum::forward(model, ds.samples[i].channel);
        acc += netmodel::wsee(ds.samples[i].channel, fr.rho, model.cfg) /
               std::max(ds.samples[i].target_wsee, 1e-300);
    }
    return 100.0 * acc / std::max<size_t>(ds.test_idx.size(), 1);
}

double heldout_accuracy_masum(const unfold_masum::MasumModel& model,
                              const serialize::Dataset& ds) {
    double acc = 0.0;
    for (int i : ds.test_idx) {
        const PowerAllocation p = unfold_masum::forward(model, ds.samples[i].channel);
        acc += netmodel::wsee(ds.samples[i].channel, p, model.cfg) /
               std::max(ds.samples[i].target_wsee, 1e-300);
    }
    return 100.0 * acc / std::max<size_t>(ds.test_idx.size(), 1);
}

}  // namespace

std::vector<AblationRow> ablation_layers(const serialize::Dataset& ds,
                                         const std::vector<int>& layer_grid,
                                         const unfold_fum::TrainOptions& base) {
    std::vector<AblationRow> rows;
    const auto train_ch = collect(ds, ds.train_idx);
    const auto train_t = collect_targets(ds, ds.train_idx);
    const auto val_ch = collect(ds, ds.val_idx);
    const auto val_w = collect_wsee(ds, ds.val_idx);
    const auto test_ch = collect(ds, ds.test_idx);

    for (int L : layer_grid) {
        unfold_fum::TrainOptions opts = base;
        opts.target_depth = L;
        const auto tr = unfold_fum::train_incremental(train_ch, train_t, val_ch, val_w, ds.cfg, opts);
        AblationRow row;
        row.setting = L;
        row.accuracy_pct = heldout_accuracy_fum(tr.model, ds);
        const auto stats = measure_inference("fum", ds.cfg, test_ch, 3, &tr.model, nullptr);
        row.inference_ms = stats.median_s * 1e3;
        rows.push_back(row);
    }
    return rows;
}

std::vector<AblationRow> ablation_attention(const serialize::Dataset& ds,
                                            const std::vector<int>& attention_grid,
                                            const unfold_masum::TrainOptions& base) {
    std::vector<AblationRow> rows;
    const auto train_ch = collect(ds, ds.train_idx);
    const auto train_t = collect_targets(ds, ds.train_idx);
    const auto val_ch = collect(ds, ds.val_idx);
    const auto val_w = collect_wsee(ds, ds.val_idx);
    const auto test_ch = collect(ds, ds.test_idx);

    for (int blocks : attention_grid) {
        unfold_masum::TrainOptions opts = base;
        opts.num_attention = blocks;
        const auto tr =
            unfold_masum::train_incremental(train_ch, train_t, val_ch, val_w, ds.cfg, opts);
        AblationRow row;
        row.setting = blocks;
        row.accuracy_pct = heldout_accuracy_masum(tr.model, ds);
        const auto stats = measure_inference("masum", ds.cfg, test_ch, 3, nullptr, &tr.model);
        row.inference_ms = stats.median_s * 1e3;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------

namespace {

std::string ablation_to_csv(const std::vector<AblationRow>& rows, const std::string& label) {
    std::ostringstream out;
    out << label << ",accuracy_pct,inference_ms\n";
    out.precision(12);
    for (const AblationRow& r : rows)
        out << r.setting << "," << r.accuracy_pct << "," << r.inference_ms << "\n";
    return out.str();
}

int cli_impl(const std::vector<std::string>& args) {
    CLI::App app{"WSEE power control: fractional-programming solvers and unfolded models"};
    app.require_subcommand(1);

    // --- shared options ------------------------------------------------
    std::string config_path, data_path, out_path, log_path, model_path;
    std::string algorithm = "cf", model_kind = "fum", target = "layers";
    uint64_t seed = 0;
    bool seed_given = false;
    int n_samples = 100;
    std::string solver_choice = "num";
    int restarts = 3;

    auto* gen = app.add_subcommand("gen-data", "generate channels with solver targets");
    gen->add_option("--config", config_path, "network config JSON")->required();
    gen->add_option("--out", out_path, "output JSONL path")->required();
    gen->add_option("--n", n_samples, "sample count");
    gen->add_option("--solver", solver_choice, "target solver: num|cf");
    gen->add_option("--restarts", restarts, "solver restarts per sample");
    gen->add_option("--seed", seed, "base RNG seed");

    auto* solve = app.add_subcommand("solve", "run one solver on one random instance");
    solve->add_option("--algorithm", algorithm, "num|cf")->required();
    solve->add_option("--config", config_path, "network config JSON")->required();
    auto* solve_seed = solve->add_option("--seed", seed, "instance seed");
    solve->add_option("--out", out_path, "report JSON path (default stdout)");

    std::string train_model = "fum";
    int train_layers = 5, train_attention = 2, train_epochs = 0;
    double train_lambda = -1.0, train_lr = 0.0;
    auto* train = app.add_subcommand("train", "train an unfolded model on a dataset");
    train->add_option("--model", train_model, "fum|masum")->required();
    train->add_option("--data", data_path, "dataset JSONL")->required();
    train->add_option("--out", out_path, "model JSON path")->required();
    train->add_option("--log", log_path, "training log CSV path");
    train->add_option("--layers", train_layers, "fum layers / masum stages");
    train->add_option("--attention", train_attention, "masum attention blocks");
    train->add_option("--epochs", train_epochs, "epochs per round override");
    train->add_option("--lambda", train_lambda, "supervised loss weight");
    train->add_option("--lr", train_lr, "learning rate override");
    train->add_option("--seed", seed, "training seed");

    bool off_training = false;
    auto* eval = app.add_subcommand("eval", "evaluate a model against its dataset targets");
    eval->add_option("--model", model_path, "model JSON")->required();
    eval->add_option("--data", data_path, "dataset JSONL")->required();
    eval->add_flag("--off-training", off_training, "evaluate on the shifted distribution");
    eval->add_option("--out", out_path, "CSV output (default stdout)");
    eval->add_option("--seed", seed, "evaluation seed");

    double pmax_from = -20.0, pmax_to = 10.0, pmax_step = 5.0;
    std::string fum_path, masum_path;
    int bench_samples = 20;
    bool timing = false;
    auto* bench = app.add_subcommand("bench", "P_max sweep and timing");
    bench->add_option("--config", config_path, "network config JSON")->required();
    bench->add_option("--pmax-from", pmax_from, "sweep start, dBW");
    bench->add_option("--pmax-to", pmax_to, "sweep end, dBW");
    bench->add_option("--pmax-step", pmax_step, "sweep step, dB");
    bench->add_option("--samples", bench_samples, "evaluation instances");
    bench->add_option("--fum", fum_path, "trained fum model JSON");
    bench->add_option("--masum", masum_path, "trained masum model JSON");
    bench->add_flag("--timing", timing, "add per-scheme timing rows (median ms at cfg P_max)");
    bench->add_option("--out", out_path, "CSV output")->required();
    bench->add_option("--seed", seed, "instance seed");

    auto* ablate = app.add_subcommand("ablate", "layer-count / attention-count study");
    ablate->add_option("--data", data_path, "dataset JSONL")->required();
    ablate->add_option("--target", target, "layers|attention");
    ablate->add_option("--epochs", train_epochs, "epochs per round override");
    ablate->add_option("--out", out_path, "CSV output")->required();
    ablate->add_option("--seed", seed, "training seed");

    auto* trace = app.add_subcommand("trace", "per-iteration wsee traces of both solvers");
    trace->add_option("--config", config_path, "network config JSON")->required();
    trace->add_option("--seed", seed, "instance seed");
    trace->add_option("--out", out_path, "CSV output (default stdout)");

    std::vector<std::string> argv_like = args;
    std::vector<char*> argv;
    std::string prog = "wsee";
    argv.push_back(prog.data());
    for (std::string& a : argv_like) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        std::ostringstream msg;
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    seed_given = solve_seed->count() > 0 || seed != 0;

    auto emit = [&](const std::string& content) {
        if (out_path.empty())
            std::cout << content;
        else
            serialize::write_file(out_path, content);
    };

    if (gen->parsed()) {
        const auto cli_cfg = serialize::cli_config_from_json(serialize::read_file(config_path));
        GenOptions gopts;
        gopts.restarts = restarts;
        gopts.solver = cli_cfg.solver;
        const auto ds = gen_dataset(cli_cfg.network, n_samples, solver_choice, seed, gopts);
        emit(serialize::dataset_to_jsonl(ds));
        return 0;
    }

    if (solve->parsed()) {
        auto cli_cfg = serialize::cli_config_from_json(serialize::read_file(config_path));
        if (solve_seed->count() > 0) cli_cfg.network.rng_seed = seed;
        const ChannelRealization chan = netmodel::generate_channels(cli_cfg.network);
        const auto rep = run_solver(algorithm, chan, cli_cfg.network, cli_cfg.solver);
        std::cerr << "solved in " << rep.iterations << " iterations, wall time "
                  << rep.wall_time_s << " s\n";
        emit(serialize::report_to_json(rep, seed_given, algorithm == "cf"));
        return 0;
    }

    if (train->parsed()) {
        const auto ds = serialize::dataset_from_jsonl(serialize::read_file(data_path));
        const auto train_ch = collect(ds, ds.train_idx);
        const auto train_t = collect_targets(ds, ds.train_idx);
        const auto val_ch = collect(ds, ds.val_idx);
        const auto val_w = collect_wsee(ds, ds.val_idx);
        if (train_model == "fum") {
            unfold_fum::TrainOptions opts;
            opts.target_depth = train_layers;
            if (train_epochs > 0) opts.epochs_per_round = train_epochs;
            if (train_lambda >= 0.0) opts.lambda = train_lambda;
            if (train_lr > 0.0) opts.learning_rate = train_lr;
            opts.shuffle_seed = seed + 1;
            const auto tr =
                unfold_fum::train_incremental(train_ch, train_t, val_ch, val_w, ds.cfg, opts);
            serialize::write_file(out_path, serialize::fum_to_json(tr.model));
            if (!log_path.empty())
                serialize::write_file(log_path, serialize::fum_log_to_csv(tr.log));
        } else if (train_model == "masum") {
            unfold_masum::TrainOptions opts;
            opts.num_stages = train_layers;
            opts.num_attention = train_attention;
            if (train_epochs > 0) opts.epochs_per_round = train_epochs;
            if (train_lambda >= 0.0) opts.lambda = train_lambda;
            if (train_lr > 0.0) opts.learning_rate = train_lr;
            opts.seed = seed + 1;
            const auto tr =
                unfold_masum::train_incremental(train_ch, train_t, val_ch, val_w, ds.cfg, opts);
            serialize::write_file(out_path, serialize::masum_to_json(tr.model));
            if (!log_path.empty())
                serialize::write_file(log_path, serialize::masum_log_to_csv(tr.log));
        } else {
            throw InvalidInput("train: unknown model " + train_model);
        }
        return 0;
    }

    if (eval->parsed()) {
        const auto ds = serialize::dataset_from_jsonl(serialize::read_file(data_path));
        const std::string model_text = serialize::read_file(model_path);
        std::ostringstream csv;
        csv << "scheme,samples,accuracy_pct\n";
        csv.precision(10);
        const bool is_fum = model_text.find("\"fum\"") != std::string::npos;
        if (off_training) {
            OffTrainingShift shift;
            unfold_fum::FumModel fum;
            unfold_masum::MasumModel masum;
            const unfold_fum::FumModel* fp = nullptr;
            const unfold_masum::MasumModel* mp = nullptr;
            if (is_fum) {
                fum = serialize::fum_from_json(model_text);
                fp = &fum;
            } else {
                masum = serialize::masum_from_json(model_text);
                mp = &masum;
            }
            const auto res = eval_off_training(fp, mp, ds.cfg, shift,
                                               static_cast<int>(ds.test_idx.size()), seed + 71);
            csv << (is_fum ? "fum" : "masum") << "," << res.samples << ","
                << 100.0 * (is_fum ? res.fum_ratio : res.masum_ratio) << "\n";
        } else if (is_fum) {
            const auto model = serialize::fum_from_json(model_text);
            csv << "fum," << ds.test_idx.size() << "," << heldout_accuracy_fum(model, ds) << "\n";
        } else {
            const auto model = serialize::masum_from_json(model_text);
            csv << "masum," << ds.test_idx.size() << "," << heldout_accuracy_masum(model, ds)
                << "\n";
        }
        emit(csv.str());
        return 0;
    }

    if (bench->parsed()) {
        const auto cli_cfg = serialize::cli_config_from_json(serialize::read_file(config_path));
        SchemeSet schemes;
        unfold_fum::FumModel fum;
        unfold_masum::MasumModel masum;
        if (!fum_path.empty()) {
            fum = serialize::fum_from_json(serialize::read_file(fum_path));
            schemes.fum = &fum;
        }
        if (!masum_path.empty()) {
            masum = serialize::masum_from_json(serialize::read_file(masum_path));
            schemes.masum = &masum;
        }
        std::vector<double> points;
        for (double p = pmax_from; p <= pmax_to + 1e-9; p += pmax_step) points.push_back(p);
        auto rows = bench_pmax_sweep(cli_cfg.network, schemes, points, bench_samples, seed + 11);
        if (timing) {
            std::vector<ChannelRealization> instances;
            for (int i = 0; i < bench_samples; ++i) {
                NetworkConfig c2 = cli_cfg.network;
                c2.rng_seed = seed + 900 + i;
                instances.push_back(netmodel::generate_channels(c2));
            }
            for (const std::string& name : {"num", "cf", "fum", "masum"}) {
                if (name == "fum" && schemes.fum == nullptr) continue;
                if (name == "masum" && schemes.masum == nullptr) continue;
                const auto st =
                    measure_inference(name, cli_cfg.network, instances, 5, schemes.fum,
                                      schemes.masum);
                serialize::BenchRow row;
                row.scheme = name + std::string("-timing");
                row.p_max_dbw = 10.0 * std::log10(cli_cfg.network.p_max);
                row.wall_time_s = st.median_s;
                rows.push_back(row);
            }
        }
        emit(serialize::bench_to_csv(rows));
        return 0;
    }

    if (ablate->parsed()) {
        const auto ds = serialize::dataset_from_jsonl(serialize::read_file(data_path));
        if (target == "layers") {
            unfold_fum::TrainOptions base;
            if (train_epochs > 0) base.epochs_per_round = train_epochs;
            base.shuffle_seed = seed + 1;
            emit(ablation_to_csv(ablation_layers(ds, {3, 5, 7}, base), "layers"));
        } else if (target == "attention") {
            unfold_masum::TrainOptions base;
            if (train_epochs > 0) base.epochs_per_round = train_epochs;
            base.seed = seed + 1;
            emit(ablation_to_csv(ablation_attention(ds, {0, 1, 2, 3}, base), "attention_blocks"));
        } else {
            throw InvalidInput("ablate: unknown target " + target);
        }
        return 0;
    }

    if (trace->parsed()) {
        auto cli_cfg = serialize::cli_config_from_json(serialize::read_file(config_path));
        cli_cfg.network.rng_seed = seed;
        const ChannelRealization chan = netmodel::generate_channels(cli_cfg.network);
        const auto rep1 = fp_numerical::solve(chan, cli_cfg.network, cli_cfg.solver);
        const auto rep2 = fp_closedform::solve(chan, cli_cfg.network, cli_cfg.solver);
        std::ostringstream csv;
        csv << "iteration,wsee_num,wsee_cf\n";
        csv.precision(12);
        const size_t rows = std::max(rep1.objective_trace.size(), rep2.objective_trace.size());
        for (size_t i = 0; i < rows; ++i) {
            csv << (i + 1) << ",";
            if (i < rep1.objective_trace.size()) csv << rep1.objective_trace[i];
            csv << ",";
            if (i < rep2.objective_trace.size()) csv << rep2.objective_trace[i];
            csv << "\n";
        }
        emit(csv.str());
        return 0;
    }

    return 1;
}

}  // namespace

int cli(const std::vector<std::string>& args) {
    try {
        return cli_impl(args);
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: bad input document: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace wsee::harness
