#pragma once

#include <string>
#include <vector>

#include "wsee/fp_numerical.hpp"
#include "wsee/types.hpp"
#include "wsee/unfold_fum.hpp"
#include "wsee/unfold_masum.hpp"

// JSON / JSON-lines / CSV encodings for every externally visible
// artifact. Field names are part of the CLI contract; see README.

namespace wsee::serialize {

std::string config_to_json(const NetworkConfig& cfg);
NetworkConfig config_from_json(const std::string& text);

// Reads the top-level network fields plus optional "solver" and
// "training" objects from one config document.
struct CliConfig {
    NetworkConfig network;
    fp_numerical::SolverOptions solver;
    unfold_fum::TrainOptions fum_train;
    unfold_masum::TrainOptions masum_train;
};
CliConfig cli_config_from_json(const std::string& text);

std::string channel_to_jsonl(const ChannelRealization& chan);
ChannelRealization channel_from_jsonl(const std::string& line);

// `zero_wall_time` keeps seeded reports byte-identical across runs; the
// measured time still goes to the caller's log.
std::string report_to_json(const fp_numerical::SolverReport& report, bool zero_wall_time,
                           bool include_degenerate);

std::string fum_to_json(const unfold_fum::FumModel& model);
unfold_fum::FumModel fum_from_json(const std::string& text);

std::string masum_to_json(const unfold_masum::MasumModel& model);
unfold_masum::MasumModel masum_from_json(const std::string& text);

// Dataset: meta line then one sample per line.
struct DatasetSample {
    ChannelRealization channel;
    Grid target_rho;
    double target_wsee = 0.0;
    std::string solver;  // "num" or "cf"
};
struct Dataset {
    NetworkConfig cfg;
    std::vector<DatasetSample> samples;
    std::vector<int> train_idx, val_idx, test_idx;
};
std::string dataset_to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(const std::string& text);

// CSV row container for benches and ablations; the header is fixed.
struct BenchRow {
    std::string scheme;
    double p_max_dbw = 0.0;
    double wsee_bits_per_joule = 0.0;
    double wall_time_s = 0.0;
    double accuracy_pct = 0.0;
};
inline constexpr const char* kBenchCsvHeader =
    "scheme,p_max_dbw,wsee_bits_per_joule,wall_time_s,accuracy_pct";
std::string bench_to_csv(const std::vector<BenchRow>& rows);

inline constexpr const char* kTrainLogCsvHeader = "round,epoch,loss,wsee_ratio";
std::string fum_log_to_csv(const std::vector<unfold_fum::TrainLogRow>& rows);
std::string masum_log_to_csv(const std::vector<unfold_masum::TrainLogRow>& rows);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace wsee::serialize
