// moecast: generate streams, train/evaluate forecasters, and run the drift
// detector or residual profiler standalone.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 checkpoint error,
// 1 anything else.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "moecast/checkpoint.hpp"
#include "moecast/config.hpp"
#include "moecast/data.hpp"
#include "moecast/drift.hpp"
#include "moecast/error.hpp"
#include "moecast/manager.hpp"
#include "moecast/sha256.hpp"
#include "moecast/trainer.hpp"

namespace {

using json = nlohmann::json;
using namespace moecast;

namespace fs = std::filesystem;

// ---- gen ----

RegimeScript parse_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open script '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    json doc;
    try {
        doc = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("script is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("script root must be a JSON object");

    RegimeScript script;
    for (const auto& [key, v] : doc.items()) {
        if (key == "variables") script.variables = v.get<int>();
        else if (key == "seed") script.seed = v.get<std::uint64_t>();
        else if (key == "segments") {
            if (!v.is_array()) throw ConfigError("script 'segments' must be an array");
            for (const auto& sj : v) {
                RegimeSegment seg;
                for (const auto& [sk, sv] : sj.items()) {
                    if (sk == "kind") seg.kind = sv.get<std::string>();
                    else if (sk == "length") seg.length = sv.get<long>();
                    else if (sk == "level") seg.level = sv.get<double>();
                    else if (sk == "slope") seg.slope = sv.get<double>();
                    else if (sk == "amplitude") seg.amplitude = sv.get<double>();
                    else if (sk == "period") seg.period = sv.get<double>();
                    else if (sk == "phase") seg.phase = sv.get<double>();
                    else if (sk == "coef") seg.coef = sv.get<double>();
                    else if (sk == "noise_std") seg.noise_std = sv.get<double>();
                    else if (sk == "seed") seg.seed = sv.get<std::uint64_t>();
                    else throw ConfigError("unknown segment key '" + sk + "'");
                }
                script.segments.push_back(seg);
            }
        } else {
            throw ConfigError("unknown script key '" + key + "'");
        }
    }
    if (script.segments.empty()) throw ConfigError("script has no segments");
    return script;
}

int cmd_gen(const std::string& script_path, const std::string& out_csv) {
    RegimeScript script = parse_script(script_path);
    if (const char* env = std::getenv("MOECAST_SEED")) {
        std::ifstream in(script_path);
        std::stringstream ss;
        ss << in.rdbuf();
        if (!json::parse(ss.str()).contains("seed")) script.seed = std::stoull(env);
    }
    GeneratedStream stream;
    try {
        stream = generate_stream(script);
    } catch (const DataError& e) {
        // Script mistakes (bad kind, non-positive length) are config errors
        // on this surface.
        throw ConfigError(e.what());
    }
    write_csv(out_csv, stream.values, stream.v);
    json sidecar{{"shift_indices", stream.shift_indices},
                 {"rows", stream.rows},
                 {"variables", stream.v}};
    std::ofstream side(out_csv + ".shifts.json");
    if (!side) throw DataError("cannot write " + out_csv + ".shifts.json");
    side << sidecar.dump(2) << "\n";
    std::cout << "wrote " << stream.rows << " rows x " << stream.v << " vars to " << out_csv
              << "\n";
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string config_path;
    std::string data_path;
    std::string out_dir;
    std::string manifest_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    bool no_adapt = false;
};

RunConfig config_from_json_text(const std::string& text, const std::optional<std::uint64_t>& seed) {
    RunConfig cfg = parse_run_config(text);
    if (seed) {
        cfg.model.seed = *seed;
    } else if (const char* env = std::getenv("MOECAST_SEED")) {
        if (!json::parse(text).contains("seed")) cfg.model.seed = std::stoull(env);
    }
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json metrics_json(const std::string& dataset, int horizon, const MetricsReport& r, int pool_final,
                  long drift_events) {
    return json{{"dataset", dataset},   {"horizon", horizon},
                {"mse", r.mse},         {"mae", r.mae},
                {"n_windows", r.n_windows}, {"pool_final", pool_final},
                {"drift_events", drift_events}};
}

long count_drift_events(const std::vector<PoolEvent>& events) {
    long n = 0;
    for (const auto& ev : events) {
        if (ev.action != "pruned") ++n;
    }
    return n;
}

int cmd_train(const TrainArgs& args) {
    RunConfig cfg;
    std::string data_path = args.data_path;

    if (!args.manifest_path.empty()) {
        json m;
        try {
            m = json::parse(slurp(args.manifest_path));
        } catch (const json::exception& e) {
            throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
        }
        cfg = parse_run_config(m.at("config").dump());
        if (data_path.empty()) data_path = m.at("data_path").get<std::string>();
        const std::string want = m.at("data_sha256").get<std::string>();
        const std::string got = sha256_file(data_path);
        if (got != want) {
            throw DataError("data hash mismatch: manifest expects " + want + ", " + data_path +
                            " hashes to " + got);
        }
    } else {
        if (args.config_path.empty()) throw ConfigError("train needs --config or --manifest");
        if (data_path.empty()) throw ConfigError("train needs --data or --manifest");
        cfg = config_from_json_text(slurp(args.config_path), args.seed);
    }

    for (const auto& kv : args.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        }
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.no_adapt) cfg.adapt = false;
    cfg.validate();

    const SeriesDataset ds = load_csv(data_path, cfg.split);
    TrainOutput result = train_model(cfg, ds);

    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);

    {
        std::ofstream ck(out / "checkpoint.bin", std::ios::binary | std::ios::trunc);
        if (!ck) throw DataError("cannot write checkpoint.bin");
        ck.write(reinterpret_cast<const char*>(result.best_bytes.data()),
                 static_cast<std::streamsize>(result.best_bytes.size()));
    }
    {
        std::ofstream ev(out / "events.jsonl", std::ios::trunc);
        if (!ev) throw DataError("cannot write events.jsonl");
        for (const auto& e : result.events) ev << pool_event_json(e) << "\n";
    }
    {
        std::ofstream lc(out / "loss_curve.csv", std::ios::trunc);
        if (!lc) throw DataError("cannot write loss_curve.csv");
        lc.precision(17);
        lc << "epoch,train_mse,val_mse\n";
        for (const auto& st : result.curve) {
            lc << st.epoch << "," << st.train_mse << "," << st.val_mse << "\n";
        }
    }
    {
        json manifest{{"config", json::parse(run_config_json(cfg))},
                      {"data_path", data_path},
                      {"data_sha256", sha256_file(data_path)},
                      {"outputs", {"checkpoint.bin", "events.jsonl", "loss_curve.csv",
                                   "metrics.json"}}};
        std::ofstream mf(out / "manifest.json", std::ios::trunc);
        if (!mf) throw DataError("cannot write manifest.json");
        mf << manifest.dump(2) << "\n";
    }

    const MetricsReport test = evaluate_model(result.model, ds, Split::Test);
    const json metrics = metrics_json(ds.name, cfg.model.horizon, test,
                                      result.model.layer(0).pool.size(),
                                      count_drift_events(result.events));
    {
        std::ofstream mj(out / "metrics.json", std::ios::trunc);
        if (!mj) throw DataError("cannot write metrics.json");
        mj << metrics.dump(2) << "\n";
    }
    std::cout << metrics.dump() << "\n";
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string checkpoint_path;
    std::string data_path;
    std::string split = "test";
    std::string routing_csv;
    std::string predictions_csv;
    std::string experts_json;
};

int cmd_eval(const EvalArgs& args) {
    Checkpoint ck = load_checkpoint(args.checkpoint_path);
    const SeriesDataset ds = load_csv(args.data_path, ck.config.split);

    Split split = Split::Test;
    if (args.split == "train") split = Split::Train;
    else if (args.split == "val") split = Split::Val;
    else if (args.split != "test") throw ConfigError("--split must be train|val|test");

    const ModelConfig& mc = ck.model.config();
    const auto windows = make_windows(ds, mc.lookback, mc.horizon, split);

    std::ofstream routing, preds;
    if (!args.routing_csv.empty()) {
        routing.open(args.routing_csv, std::ios::trunc);
        if (!routing) throw DataError("cannot write " + args.routing_csv);
        routing.precision(17);
        routing << "sample,patch,expert_id,weight\n";
    }
    if (!args.predictions_csv.empty()) {
        preds.open(args.predictions_csv, std::ios::trunc);
        if (!preds) throw DataError("cannot write " + args.predictions_csv);
        preds.precision(17);
        preds << "origin,step,var,pred,truth\n";
    }

    EvalHook hook = nullptr;
    if (routing.is_open() || preds.is_open()) {
        hook = [&](std::size_t i, const ForecastWindow& w, const Tensor& pred,
                   const ForwardTrace& trace) {
            if (routing.is_open()) {
                // First-layer gates, averaged over variables.
                const auto& lt = trace.layers.front();
                const auto inv = ck.model.layer(0).pool.inventory();
                for (std::size_t p = 0; p < lt.gate_by_patch.size(); ++p) {
                    for (std::size_t e = 0; e < lt.gate_by_patch[p].size(); ++e) {
                        routing << i << "," << p << "," << inv[e].id << ","
                                << lt.gate_by_patch[p][e] << "\n";
                    }
                }
            }
            if (preds.is_open()) {
                const auto& pv = pred.data();
                for (int t = 0; t < mc.horizon; ++t) {
                    for (int var = 0; var < mc.vars; ++var) {
                        const std::size_t idx = static_cast<std::size_t>(t) * mc.vars + var;
                        preds << w.origin << "," << t << "," << var << "," << pv[idx] << ","
                              << w.target[idx] << "\n";
                    }
                }
            }
        };
    }

    const MetricsReport r = evaluate_windows(ck.model, windows, hook);

    if (!args.experts_json.empty()) {
        json layers = json::array();
        for (int li = 0; li < ck.model.layer_count(); ++li) {
            json experts = json::array();
            for (const auto& info : ck.model.layer(li).pool.inventory()) {
                experts.push_back(json{{"id", info.id},
                                       {"kind", to_string(info.kind)},
                                       {"protected", info.is_protected},
                                       {"created_at", info.created_at},
                                       {"param_count", info.param_count}});
            }
            layers.push_back(json{{"layer", li}, {"experts", experts}});
        }
        std::ofstream ej(args.experts_json, std::ios::trunc);
        if (!ej) throw DataError("cannot write " + args.experts_json);
        ej << layers.dump(2) << "\n";
    }

    std::cout << metrics_json(ds.name, mc.horizon, r, ck.model.layer(0).pool.size(),
                              count_drift_events(ck.events))
                     .dump()
              << "\n";
    return 0;
}

// ---- detect ----

struct DetectArgs {
    std::string data_path;
    DetectorConfig det;
};

int cmd_detect(const DetectArgs& args) {
    const RawCsv csv = load_csv_values(args.data_path);
    DriftDetector detector(args.det, csv.v);
    const long ref_n = args.det.ref_window;
    const long cur_n = args.det.cur_window;
    if (csv.rows < ref_n + cur_n) {
        throw DataError("stream has " + std::to_string(csv.rows) + " rows; need at least " +
                        std::to_string(ref_n + cur_n));
    }
    // The detector sees the file's raw values: standalone analysis has no
    // train split to take normalization stats from.
    detector.set_reference(std::vector<double>(
        csv.values.begin(), csv.values.begin() + ref_n * csv.v));
    long pos = ref_n;
    while (pos + cur_n <= csv.rows) {
        const std::vector<double> window(csv.values.begin() + pos * csv.v,
                                         csv.values.begin() + (pos + cur_n) * csv.v);
        pos += cur_n;
        const auto ev = detector.step(window, pos - 1);
        json line{{"t", pos - 1},
                  {"mmd2", detector.last_score()},
                  {"threshold", detector.last_threshold() ? json(*detector.last_threshold())
                                                          : json(nullptr)},
                  {"drift", ev.has_value()}};
        std::cout << line.dump() << "\n";
    }
    return 0;
}

// ---- profile ----

int cmd_profile(const std::string& data_path) {
    std::ifstream in(data_path);
    if (!in) throw DataError("cannot open '" + data_path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            const char* s = cell.c_str();
            char* end = nullptr;
            const double x = std::strtod(s, &end);
            if (end == s || *end != '\0') {
                throw DataError(data_path + ": line " + std::to_string(lineno) +
                                ": cannot parse '" + cell + "'");
            }
            row.push_back(x);
        }
        rows.push_back(std::move(row));
    }
    ProfilerReport rep;
    try {
        rep = profile_residuals(rows);
    } catch (const ParameterError& e) {
        throw DataError(e.what());
    }
    json o{{"s_trend", rep.s_trend},
           {"s_sea", rep.s_sea},
           {"s_fluc", rep.s_fluc},
           {"chosen", to_string(rep.chosen)},
           {"degenerate", rep.degenerate}};
    std::cout << o.dump() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"drift-aware mixture-of-experts time-series forecaster"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic regime stream CSV");
    std::string gen_script, gen_out;
    gen->add_option("--script", gen_script, "regime script JSON")->required();
    gen->add_option("--out", gen_out, "output CSV path")->required();

    // train
    auto* train = app.add_subcommand("train", "train a forecaster");
    TrainArgs targs;
    train->add_option("--config", targs.config_path, "run config JSON");
    train->add_option("--data", targs.data_path, "input CSV");
    train->add_option("--out", targs.out_dir, "output directory")->required();
    train->add_option("--manifest", targs.manifest_path, "rerun from a manifest");
    train->add_option("--set", targs.sets, "config override key=value (repeatable)");
    std::uint64_t seed_opt = 0;
    auto* seed_flag = train->add_option("--seed", seed_opt, "seed override");
    train->add_flag("--no-adapt", targs.no_adapt, "disable drift adaptation");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    EvalArgs eargs;
    eval->add_option("--checkpoint", eargs.checkpoint_path, "checkpoint.bin")->required();
    eval->add_option("--data", eargs.data_path, "input CSV")->required();
    eval->add_option("--split", eargs.split, "train|val|test (default test)");
    eval->add_option("--routing-csv", eargs.routing_csv, "dump per-patch routing weights");
    eval->add_option("--predictions-csv", eargs.predictions_csv, "dump predictions vs truth");
    eval->add_option("--experts-json", eargs.experts_json, "dump the expert inventory");

    // detect
    auto* detect = app.add_subcommand("detect", "run the drift detector over a CSV");
    DetectArgs dargs;
    detect->add_option("--data", dargs.data_path, "input CSV")->required();
    detect->add_option("--ref", dargs.det.ref_window, "reference window rows");
    detect->add_option("--cur", dargs.det.cur_window, "current window rows");
    detect->add_option("--lambda", dargs.det.lambda, "threshold sigma multiplier");
    detect->add_option("--history", dargs.det.history, "score history capacity");
    detect->add_option("--min-fill", dargs.det.min_fill, "scores needed before thresholding");

    // profile
    auto* profile = app.add_subcommand("profile", "profile residual rows");
    std::string profile_data;
    profile->add_option("--data", profile_data, "residual CSV, one sequence per row")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_gen(gen_script, gen_out);
        if (*train) {
            if (seed_flag->count() > 0) targs.seed = seed_opt;
            return cmd_train(targs);
        }
        if (*eval) return cmd_eval(eargs);
        if (*detect) return cmd_detect(dargs);
        if (*profile) return cmd_profile(profile_data);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
