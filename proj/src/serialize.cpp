#include "wsee/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace wsee::serialize {

using nlohmann::json;

namespace {

json grid_to_json(const Grid& g) {
    json rows = json::array();
    for (int m = 0; m < g.num_bs(); ++m) {
        json row = json::array();
        for (int k = 0; k < g.users_per_bs(); ++k) row.push_back(g.at(m, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

Grid grid_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw InvalidInput("grid: expected nonempty 2-D array");
    Grid g(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
    for (int m = 0; m < g.num_bs(); ++m)
        for (int k = 0; k < g.users_per_bs(); ++k) g.at(m, k) = j.at(m).at(k).get<double>();
    return g;
}

json mat_to_json(const ad::Mat& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

ad::Mat mat_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw InvalidInput("matrix: expected nonempty 2-D array");
    ad::Mat m(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) m.at(r, c) = j.at(r).at(c).get<double>();
    return m;
}

json config_to_json_obj(const NetworkConfig& cfg) {
    json j;
    j["num_bs"] = cfg.num_bs;
    j["users_per_bs"] = cfg.users_per_bs;
    j["num_antennas"] = cfg.num_antennas;
    j["p_max"] = cfg.p_max;
    j["circuit_power"] = cfg.circuit_power;
    j["bandwidth"] = cfg.bandwidth;
    j["noise_power"] = cfg.noise_power;
    j["weights"] = grid_to_json(cfg.weights);
    j["path_loss_exponent"] = cfg.path_loss_exponent;
    j["cell_radius"] = cfg.cell_radius;
    j["rng_seed"] = cfg.rng_seed;
    return j;
}

NetworkConfig config_from_json_obj(const json& j) {
    NetworkConfig cfg;
    cfg.num_bs = j.at("num_bs").get<int>();
    cfg.users_per_bs = j.at("users_per_bs").get<int>();
    cfg.num_antennas = j.at("num_antennas").get<int>();
    cfg.p_max = j.at("p_max").get<double>();
    cfg.circuit_power = j.at("circuit_power").get<double>();
    cfg.bandwidth = j.at("bandwidth").get<double>();
    cfg.noise_power = j.at("noise_power").get<double>();
    if (j.contains("weights"))
        cfg.weights = grid_from_json(j.at("weights"));
    else
        cfg.weights = Grid(cfg.num_bs, cfg.users_per_bs, 1.0);
    cfg.path_loss_exponent = j.value("path_loss_exponent", 3.5);
    cfg.cell_radius = j.value("cell_radius", 500.0);
    cfg.rng_seed = j.value("rng_seed", static_cast<uint64_t>(0));
    cfg.validate(true);
    return cfg;
}

}  // namespace

std::string config_to_json(const NetworkConfig& cfg) { return config_to_json_obj(cfg).dump(2); }

NetworkConfig config_from_json(const std::string& text) {
    return config_from_json_obj(json::parse(text));
}

CliConfig cli_config_from_json(const std::string& text) {
    const json j = json::parse(text);
    CliConfig out;
    out.network = config_from_json_obj(j);
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        out.solver.epsilon = s.value("epsilon", out.solver.epsilon);
        out.solver.max_outer_iters = s.value("max_outer_iters", out.solver.max_outer_iters);
        out.solver.inner_step = s.value("inner_step", out.solver.inner_step);
        out.solver.inner_iters = s.value("inner_iters", out.solver.inner_iters);
        out.solver.inner_tol = s.value("inner_tol", out.solver.inner_tol);
        out.solver.accelerate = s.value("accelerate", out.solver.accelerate);
        out.solver.use_printed_rho_formula =
            s.value("use_printed_rho_formula", out.solver.use_printed_rho_formula);
    }
    if (j.contains("training")) {
        const json& t = j.at("training");
        out.fum_train.target_depth = t.value("fum_layers", out.fum_train.target_depth);
        out.fum_train.epochs_per_round = t.value("epochs_per_round", out.fum_train.epochs_per_round);
        out.fum_train.learning_rate = t.value("learning_rate", out.fum_train.learning_rate);
        out.fum_train.batch_size = t.value("fum_batch_size", 64);
        out.fum_train.lambda = t.value("lambda", out.fum_train.lambda);
        out.masum_train.num_stages = t.value("masum_stages", out.masum_train.num_stages);
        out.masum_train.num_attention = t.value("masum_attention", out.masum_train.num_attention);
        out.masum_train.channels = t.value("masum_channels", out.masum_train.channels);
        out.masum_train.epochs_per_round =
            t.value("epochs_per_round", out.masum_train.epochs_per_round);
        out.masum_train.learning_rate = t.value("learning_rate", out.masum_train.learning_rate);
        out.masum_train.batch_size = t.value("masum_batch_size", 128);
        out.masum_train.lambda = t.value("lambda", out.masum_train.lambda);
    }
    return out;
}

std::string channel_to_jsonl(const ChannelRealization& chan) {
    json j;
    j["seed"] = chan.seed;
    json outer = json::array();
    for (int m = 0; m < chan.gains.num_bs(); ++m) {
        json mid = json::array();
        for (int k = 0; k < chan.gains.users_per_bs(); ++k) {
            json inner = json::array();
            for (int n = 0; n < chan.gains.num_bs(); ++n) inner.push_back(chan.gains.at(m, k, n));
            mid.push_back(std::move(inner));
        }
        outer.push_back(std::move(mid));
    }
    j["gains"] = std::move(outer);
    return j.dump();
}

ChannelRealization channel_from_jsonl(const std::string& line) {
    const json j = json::parse(line);
    ChannelRealization chan;
    chan.seed = j.at("seed").get<uint64_t>();
    const json& g = j.at("gains");
    const int m_count = static_cast<int>(g.size());
    const int k_count = static_cast<int>(g.at(0).size());
    chan.gains = GainTensor(m_count, k_count);
    for (int m = 0; m < m_count; ++m)
        for (int k = 0; k < k_count; ++k)
            for (int n = 0; n < m_count; ++n)
                chan.gains.at(m, k, n) = g.at(m).at(k).at(n).get<double>();
    return chan;
}

std::string report_to_json(const fp_numerical::SolverReport& report, bool zero_wall_time,
                           bool include_degenerate) {
    json j;
    j["objective_trace"] = report.objective_trace;
    j["iterations"] = report.iterations;
    j["converged"] = report.converged;
    j["wall_time_s"] = zero_wall_time ? 0.0 : report.wall_time_s;
    j["rho"] = grid_to_json(report.rho_final.rho);
    if (include_degenerate) {
        json d = json::array();
        for (const auto& [m, k] : report.degenerate_entries) d.push_back(json::array({m, k}));
        j["degenerate_entries"] = std::move(d);
    }
    return j.dump(2);
}

std::string fum_to_json(const unfold_fum::FumModel& model) {
    json j;
    j["type"] = "fum";
    j["L"] = model.depth();
    json layers = json::array();
    for (const auto& layer : model.layers) {
        json l;
        l["alpha_rho"] = grid_to_json(layer.alpha_rho);
        l["theta_rho"] = grid_to_json(layer.theta_rho);
        l["alpha_gamma"] = grid_to_json(layer.alpha_gamma);
        l["theta_gamma"] = grid_to_json(layer.theta_gamma);
        layers.push_back(std::move(l));
    }
    j["layers"] = std::move(layers);
    j["cfg"] = config_to_json_obj(model.cfg);
    j["init_rho"] = grid_to_json(model.init_rho);
    j["init_gamma"] = model.init_gamma.empty() ? json(nullptr) : grid_to_json(model.init_gamma);
    j["trained"] = model.trained;
    return j.dump(2);
}

unfold_fum::FumModel fum_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("type", "") != "fum") throw InvalidInput("model file: expected type 'fum'");
    unfold_fum::FumModel model;
    model.cfg = config_from_json_obj(j.at("cfg"));
    for (const json& l : j.at("layers")) {
        unfold_fum::FumLayer layer;
        layer.alpha_rho = grid_from_json(l.at("alpha_rho"));
        layer.theta_rho = grid_from_json(l.at("theta_rho"));
        layer.alpha_gamma = grid_from_json(l.at("alpha_gamma"));
        layer.theta_gamma = grid_from_json(l.at("theta_gamma"));
        model.layers.push_back(std::move(layer));
    }
    model.init_rho = grid_from_json(j.at("init_rho"));
    if (!j.at("init_gamma").is_null()) model.init_gamma = grid_from_json(j.at("init_gamma"));
    model.trained = j.value("trained", false);
    return model;
}

std::string masum_to_json(const unfold_masum::MasumModel& model) {
    json j;
    j["type"] = "masum";
    j["channels"] = model.channels;
    j["hidden"] = model.hidden;
    json stages = json::array();
    for (const auto& s : model.stages) {
        json o;
        o["conv_kernel"] = mat_to_json(s.conv_kernel);
        o["conv_bias"] = mat_to_json(s.conv_bias);
        o["fc1"] = mat_to_json(s.fc1);
        o["fc1_b"] = mat_to_json(s.fc1_b);
        o["fc2"] = mat_to_json(s.fc2);
        o["fc2_b"] = mat_to_json(s.fc2_b);
        stages.push_back(std::move(o));
    }
    j["stages"] = std::move(stages);
    json blocks = json::array();
    for (const auto& b : model.attention) {
        json o;
        o["w1"] = mat_to_json(b.w1);
        o["w2"] = mat_to_json(b.w2);
        o["w3"] = mat_to_json(b.w3);
        o["w_out"] = mat_to_json(b.w_out);
        o["position"] = b.position;
        blocks.push_back(std::move(o));
    }
    j["attention"] = std::move(blocks);
    json slices = json::array();
    for (const auto& s : model.fuse1_slices) slices.push_back(mat_to_json(s));
    j["fusion"] = {{"fuse1_slices", std::move(slices)}, {"fuse2", mat_to_json(model.fuse2)}};
    j["fc_att"] = {{"w1", mat_to_json(model.fc_att1)},
                   {"b1", mat_to_json(model.fc_att1_b)},
                   {"w2", mat_to_json(model.fc_att2)},
                   {"b2", mat_to_json(model.fc_att2_b)}};
    j["layout"] = {{"rows", "user links in (m,k) order"}, {"cols", "source BS"},
                   {"channels", "gains,y,z"}};
    j["cfg"] = config_to_json_obj(model.cfg);
    j["init_rho"] = grid_to_json(model.init_rho);
    j["trained"] = model.trained;
    return j.dump(2);
}

unfold_masum::MasumModel masum_from_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.value("type", "") != "masum") throw InvalidInput("model file: expected type 'masum'");
    unfold_masum::MasumModel model;
    model.cfg = config_from_json_obj(j.at("cfg"));
    model.channels = j.at("channels").get<int>();
    model.hidden = j.at("hidden").get<int>();
    for (const json& s : j.at("stages")) {
        unfold_masum::MasumStage stage;
        stage.conv_kernel = mat_from_json(s.at("conv_kernel"));
        stage.conv_bias = mat_from_json(s.at("conv_bias"));
        stage.fc1 = mat_from_json(s.at("fc1"));
        stage.fc1_b = mat_from_json(s.at("fc1_b"));
        stage.fc2 = mat_from_json(s.at("fc2"));
        stage.fc2_b = mat_from_json(s.at("fc2_b"));
        model.stages.push_back(std::move(stage));
    }
    for (const json& b : j.at("attention")) {
        unfold_masum::AttentionBlockParams blk;
        blk.w1 = mat_from_json(b.at("w1"));
        blk.w2 = mat_from_json(b.at("w2"));
        blk.w3 = mat_from_json(b.at("w3"));
        blk.w_out = mat_from_json(b.at("w_out"));
        blk.position = b.at("position").get<int>();
        model.attention.push_back(std::move(blk));
    }
    for (const json& s : j.at("fusion").at("fuse1_slices"))
        model.fuse1_slices.push_back(mat_from_json(s));
    model.fuse2 = mat_from_json(j.at("fusion").at("fuse2"));
    model.fc_att1 = mat_from_json(j.at("fc_att").at("w1"));
    model.fc_att1_b = mat_from_json(j.at("fc_att").at("b1"));
    model.fc_att2 = mat_from_json(j.at("fc_att").at("w2"));
    model.fc_att2_b = mat_from_json(j.at("fc_att").at("b2"));
    model.init_rho = grid_from_json(j.at("init_rho"));
    model.trained = j.value("trained", false);
    return model;
}

std::string dataset_to_jsonl(const Dataset& ds) {
    std::ostringstream out;
    json meta;
    meta["type"] = "dataset";
    meta["cfg"] = config_to_json_obj(ds.cfg);
    meta["split"] = {{"train", ds.train_idx}, {"val", ds.val_idx}, {"test", ds.test_idx}};
    out << meta.dump() << "\n";
    for (const DatasetSample& s : ds.samples) {
        json j = json::parse(channel_to_jsonl(s.channel));
        j["target_rho"] = grid_to_json(s.target_rho);
        j["target_wsee"] = s.target_wsee;
        j["solver"] = s.solver;
        out << j.dump() << "\n";
    }
    return out.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput("dataset: empty file");
    const json meta = json::parse(line);
    if (meta.value("type", "") != "dataset") throw InvalidInput("dataset: missing meta line");
    Dataset ds;
    ds.cfg = config_from_json_obj(meta.at("cfg"));
    ds.train_idx = meta.at("split").at("train").get<std::vector<int>>();
    ds.val_idx = meta.at("split").at("val").get<std::vector<int>>();
    ds.test_idx = meta.at("split").at("test").get<std::vector<int>>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        DatasetSample s;
        s.channel = channel_from_jsonl(line);
        s.target_rho = grid_from_json(j.at("target_rho"));
        s.target_wsee = j.at("target_wsee").get<double>();
        s.solver = j.value("solver", "num");
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace {

std::string format_double(double x) {
    std::ostringstream os;
    os.precision(12);
    os << x;
    return os.str();
}

}  // namespace

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
    std::ostringstream out;
    out << kBenchCsvHeader << "\n";
    for (const BenchRow& r : rows)
        out << r.scheme << "," << format_double(r.p_max_dbw) << ","
            << format_double(r.wsee_bits_per_joule) << "," << format_double(r.wall_time_s)
            << "," << format_double(r.accuracy_pct) << "\n";
    return out.str();
}

std::string fum_log_to_csv(const std::vector<unfold_fum::TrainLogRow>& rows) {
    std::ostringstream out;
    out << kTrainLogCsvHeader << "\n";
    for (const auto& r : rows)
        out << r.round << "," << r.epoch << "," << format_double(r.loss) << ","
            << format_double(r.wsee_ratio) << "\n";
    return out.str();
}

std::string masum_log_to_csv(const std::vector<unfold_masum::TrainLogRow>& rows) {
    std::ostringstream out;
    out << kTrainLogCsvHeader << "\n";
    for (const auto& r : rows)
        out << r.round << "," << r.epoch << "," << format_double(r.loss) << ","
            << format_double(r.wsee_ratio) << "\n";
    return out.str();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write file: " + path);
    out << content;
}

}  // namespace wsee::serialize
