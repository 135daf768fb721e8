#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int code = -1;
    std::string out; // stdout + stderr interleaved
};

std::string cli_path() {
    const char* p = std::getenv("MOECAST_CLI");
    REQUIRE_MESSAGE(p != nullptr, "MOECAST_CLI must point at the binary under test");
    return p;
}

CmdResult run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + cli_path() + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult r;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct Workspace {
    fs::path dir;
    Workspace() {
        dir = fs::temp_directory_path() / ("moecast_cli_test_" + std::to_string(::getpid()));
        fs::create_directories(dir);
    }
    ~Workspace() { std::error_code ec; fs::remove_all(dir, ec); }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    std::string write(const std::string& name, const std::string& body) const {
        const std::string p = path(name);
        std::ofstream out(p);
        out << body;
        return p;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

const char* kShiftScript = R"({
  "variables": 1,
  "seed": 11,
  "segments": [
    {"kind": "mean", "length": 300, "level": 0.0, "noise_std": 1.0},
    {"kind": "mean", "length": 300, "level": 4.0, "noise_std": 1.0}
  ]
})";

const char* kTrainConfig = R"({
  "lookback": 16, "horizon": 8, "vars": 1, "patch_len": 8, "stride": 4,
  "d_model": 4, "d_hidden": 6, "top_k": 2, "seed": 3,
  "epochs": 2, "batch_size": 16, "lr": 0.002,
  "detector_ref_window": 32, "detector_cur_window": 32,
  "detector_min_fill": 3, "detect_every": 1, "monitor_steps": 50,
  "train_frac": 0.6, "val_frac": 0.2
})";

} // namespace

TEST_CASE("help exits cleanly, bad invocations exit with the config code") {
    CHECK(run("--help").code == 0);
    CHECK(run("train --help").code == 0);
    CHECK(run("").code == 2);            // a subcommand is required
    CHECK(run("transmogrify").code == 2); // unknown subcommand
    CHECK(run("train --config x.json").code == 2); // missing required flags
}

TEST_CASE("gen writes the stream, its shift sidecar, and respects seeds") {
    Workspace ws;
    const std::string script = ws.write("script.json", kShiftScript);
    const std::string csv = ws.path("stream.csv");

    const auto r = run("gen --script " + script + " --out " + csv);
    CHECK(r.code == 0);
    REQUIRE(fs::exists(csv));
    REQUIRE(fs::exists(csv + ".shifts.json"));

    const json side = json::parse(slurp(csv + ".shifts.json"));
    CHECK(side["rows"] == 600);
    CHECK(side["variables"] == 1);
    CHECK(side["shift_indices"] == json::array({300}));

    // embedded seed: regeneration is byte-identical
    const std::string csv2 = ws.path("stream2.csv");
    run("gen --script " + script + " --out " + csv2);
    CHECK(slurp(csv) == slurp(csv2));

    // without an embedded seed the environment seed decides
    const std::string noseed = ws.write("noseed.json", R"({
      "variables": 1,
      "segments": [{"kind": "mean", "length": 50, "level": 0.0, "noise_std": 1.0}]
    })");
    const std::string a = ws.path("a.csv"), b = ws.path("b.csv"), c = ws.path("c.csv");
    CHECK(run("gen --script " + noseed + " --out " + a, "MOECAST_SEED=1").code == 0);
    CHECK(run("gen --script " + noseed + " --out " + b, "MOECAST_SEED=1").code == 0);
    CHECK(run("gen --script " + noseed + " --out " + c, "MOECAST_SEED=2").code == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a) != slurp(c));
}

TEST_CASE("gen rejects broken scripts with the config exit code") {
    Workspace ws;
    // an unreadable script file is an I/O failure, not a config problem
    CHECK(run("gen --script " + ws.path("absent.json") + " --out " + ws.path("x.csv")).code == 3);

    const std::string bad = ws.write("bad.json", "{nope");
    CHECK(run("gen --script " + bad + " --out " + ws.path("x.csv")).code == 2);

    const std::string empty = ws.write("empty.json", R"({"variables": 1, "segments": []})");
    CHECK(run("gen --script " + empty + " --out " + ws.path("x.csv")).code == 2);

    const std::string unknown = ws.write("unknown.json",
        R"({"variables": 1, "segments": [{"kind": "mean", "length": 5, "wobble": 2}]})");
    CHECK(run("gen --script " + unknown + " --out " + ws.path("x.csv")).code == 2);

    const std::string badkind = ws.write("badkind.json",
        R"({"variables": 1, "segments": [{"kind": "sawtooth", "length": 5}]})");
    CHECK(run("gen --script " + badkind + " --out " + ws.path("x.csv")).code == 2);
}

TEST_CASE("train produces the full artifact set and adapts to the shift") {
    Workspace ws;
    const std::string script = ws.write("script.json", kShiftScript);
    const std::string csv = ws.path("stream.csv");
    REQUIRE(run("gen --script " + script + " --out " + csv).code == 0);
    const std::string cfg = ws.write("train.json", kTrainConfig);

    const auto r = run("train --config " + cfg + " --data " + csv + " --out " + ws.path("run"));
    CHECK(r.code == 0);

    const json metrics = json::parse(r.out);
    CHECK(metrics["dataset"] == "stream");
    CHECK(metrics["horizon"] == 8);
    CHECK(metrics["mse"].is_number());
    CHECK(metrics["mae"].is_number());
    CHECK(metrics["n_windows"].is_number_integer());
    CHECK(metrics["pool_final"].get<int>() >= 4);
    CHECK(metrics["drift_events"].get<int>() >= 1);

    for (const char* name : {"checkpoint.bin", "events.jsonl", "loss_curve.csv",
                             "manifest.json", "metrics.json"}) {
        CHECK(fs::exists(ws.path("run/" + std::string(name))));
    }
    CHECK(json::parse(slurp(ws.path("run/metrics.json"))) == metrics);

    // events.jsonl: one valid JSON object per line, monotone event ids
    std::ifstream ev(ws.path("run/events.jsonl"));
    std::string line;
    int events = 0;
    while (std::getline(ev, line)) {
        const json e = json::parse(line);
        CHECK(e["event_id"] == events);
        CHECK(e["action"].is_string());
        ++events;
    }
    CHECK(events >= 1);

    // loss curve: header plus one row per epoch
    std::ifstream lc(ws.path("run/loss_curve.csv"));
    std::getline(lc, line);
    CHECK(line == "epoch,train_mse,val_mse");
    int rows = 0;
    while (std::getline(lc, line)) ++rows;
    CHECK(rows == 2);

    // --set overrides are recorded in the manifest snapshot
    const auto r2 = run("train --config " + cfg + " --data " + csv + " --out " + ws.path("run_b") +
                        " --set epochs=1 --set lr=0.001");
    CHECK(r2.code == 0);
    const json mani = json::parse(slurp(ws.path("run_b/manifest.json")));
    CHECK(mani["config"]["epochs"] == 1);
    CHECK(mani["config"]["lr"] == 0.001);
    CHECK(mani["data_sha256"].is_string());

    // --no-adapt freezes the pool
    const auto r3 = run("train --config " + cfg + " --data " + csv + " --out " + ws.path("run_c") +
                        " --no-adapt --set epochs=1");
    CHECK(r3.code == 0);
    const json m3 = json::parse(r3.out);
    CHECK(m3["drift_events"] == 0);
    CHECK(m3["pool_final"] == 4);
}

TEST_CASE("train maps error classes onto distinct exit codes") {
    Workspace ws;
    const std::string script = ws.write("script.json", kShiftScript);
    const std::string csv = ws.path("stream.csv");
    REQUIRE(run("gen --script " + script + " --out " + csv).code == 0);

    CHECK(run("train --config " + ws.path("none.json") + " --data " + csv + " --out " +
              ws.path("r1")).code == 3); // unreadable config file
    const std::string badjson = ws.write("bad.json", "{");
    CHECK(run("train --config " + badjson + " --data " + csv + " --out " + ws.path("r2")).code == 2);
    const std::string unknown = ws.write("unknown.json", R"({"lookahead": 2})");
    CHECK(run("train --config " + unknown + " --data " + csv + " --out " + ws.path("r3")).code == 2);
    const std::string vars2 = ws.write("vars2.json",
        R"({"lookback": 16, "horizon": 8, "vars": 2, "patch_len": 8, "stride": 4, "epochs": 1})");
    CHECK(run("train --config " + vars2 + " --data " + csv + " --out " + ws.path("r4")).code == 3);
    const std::string cfg = ws.write("ok.json", kTrainConfig);
    CHECK(run("train --config " + cfg + " --data " + ws.path("no.csv") + " --out " +
              ws.path("r5")).code == 3);
}

TEST_CASE("manifest reruns are byte-identical and hash-guarded") {
    Workspace ws;
    const std::string script = ws.write("script.json", kShiftScript);
    const std::string csv = ws.path("stream.csv");
    REQUIRE(run("gen --script " + script + " --out " + csv).code == 0);
    const std::string cfg = ws.write("train.json", kTrainConfig);
    REQUIRE(run("train --config " + cfg + " --data " + csv + " --out " + ws.path("run")).code == 0);

    const auto r = run("train --manifest " + ws.path("run/manifest.json") + " --out " +
                       ws.path("rerun"));
    CHECK(r.code == 0);
    CHECK(slurp(ws.path("rerun/metrics.json")) == slurp(ws.path("run/metrics.json")));
    CHECK(slurp(ws.path("rerun/checkpoint.bin")) == slurp(ws.path("run/checkpoint.bin")));
    CHECK(slurp(ws.path("rerun/events.jsonl")) == slurp(ws.path("run/events.jsonl")));

    // a modified dataset no longer matches the recorded digest
    {
        std::ofstream app(csv, std::ios::app);
        app << "t600,99.0\n";
    }
    CHECK(run("train --manifest " + ws.path("run/manifest.json") + " --out " +
              ws.path("rerun2")).code == 3);
}

TEST_CASE("eval reloads a checkpoint and emits inspection files") {
    Workspace ws;
    const std::string script = ws.write("script.json", kShiftScript);
    const std::string csv = ws.path("stream.csv");
    REQUIRE(run("gen --script " + script + " --out " + csv).code == 0);
    const std::string cfg = ws.write("train.json", kTrainConfig);
    REQUIRE(run("train --config " + cfg + " --data " + csv + " --out " + ws.path("run")).code == 0);
    const std::string ckpt = ws.path("run/checkpoint.bin");

    const auto r = run("eval --checkpoint " + ckpt + " --data " + csv + " --split val" +
                       " --routing-csv " + ws.path("routing.csv") +
                       " --predictions-csv " + ws.path("preds.csv") +
                       " --experts-json " + ws.path("experts.json"));
    CHECK(r.code == 0);
    const json metrics = json::parse(r.out);
    CHECK(metrics["mse"].is_number());

    std::ifstream routing(ws.path("routing.csv"));
    std::string line;
    std::getline(routing, line);
    CHECK(line == "sample,patch,expert_id,weight");
    int routing_rows = 0;
    while (std::getline(routing, line)) ++routing_rows;
    CHECK(routing_rows > 0);

    std::ifstream preds(ws.path("preds.csv"));
    std::getline(preds, line);
    CHECK(line == "origin,step,var,pred,truth");

    const json experts = json::parse(slurp(ws.path("experts.json")));
    REQUIRE(experts.is_array());
    REQUIRE(!experts.empty());
    CHECK(experts[0]["layer"] == 0);
    CHECK(experts[0]["experts"].size() >= 4);
    CHECK(experts[0]["experts"][0]["protected"] == true);
    CHECK(experts[0]["experts"][0]["param_count"].is_number_integer());

    // evaluation is repeatable
    const auto r2 = run("eval --checkpoint " + ckpt + " --data " + csv + " --split val");
    CHECK(json::parse(r2.out) == metrics);

    CHECK(run("eval --checkpoint " + ckpt + " --data " + csv + " --split sideways").code == 2);
    CHECK(run("eval --checkpoint " + ws.path("none.bin") + " --data " + csv).code == 4);

    // a truncated checkpoint is rejected as corrupt
    const std::string broken = ws.path("broken.bin");
    {
        const std::string full = slurp(ckpt);
        std::ofstream out(broken, std::ios::binary);
        out.write(full.data(), static_cast<long>(full.size() / 2));
    }
    CHECK(run("eval --checkpoint " + broken + " --data " + csv).code == 4);
}

TEST_CASE("detect streams scores and flags the injected shift") {
    Workspace ws;
    const std::string script = ws.write("script.json", kShiftScript);
    const std::string csv = ws.path("stream.csv");
    REQUIRE(run("gen --script " + script + " --out " + csv).code == 0);

    const auto r = run("detect --data " + csv + " --ref 48 --cur 48 --min-fill 3");
    CHECK(r.code == 0);

    long first_drift = -1;
    long evaluations = 0;
    std::istringstream lines(r.out);
    std::string line;
    bool saw_null_threshold = false;
    while (std::getline(lines, line)) {
        const json rec = json::parse(line);
        CHECK(rec["mmd2"].is_number());
        if (rec["threshold"].is_null()) saw_null_threshold = true;
        if (rec["drift"] == true && first_drift < 0) first_drift = rec["t"].get<long>();
        ++evaluations;
    }
    CHECK(evaluations > 5);
    CHECK(saw_null_threshold); // warm-up evaluations have no threshold yet
    REQUIRE(first_drift > 0);
    CHECK(first_drift >= 300);      // no false alarm before the shift
    CHECK(first_drift <= 300 + 96); // caught within two windows of it

    CHECK(run("detect --data " + csv + " --ref 400 --cur 400").code == 3); // not enough rows
    CHECK(run("detect --data " + ws.path("none.csv") + " --ref 8 --cur 8").code == 3);
}

TEST_CASE("profile classifies residual families from headerless csv rows") {
    Workspace ws;
    std::string trend_rows, sea_rows, fluc_rows;
    for (int t = 0; t < 64; ++t) {
        trend_rows += (t ? "," : "") + std::to_string(0.3 * t);
        sea_rows += (t ? "," : "") + std::to_string(std::sin(2.0 * M_PI * 4.0 * t / 64.0));
        fluc_rows += (t ? "," : "") + std::to_string((t % 2 ? -1.0 : 1.0) * (1.0 + 0.4 * std::sin(0.9 * t)));
    }
    const std::string expectations[3][2] = {
        {ws.write("trend.csv", trend_rows + "\n"), "trend"},
        {ws.write("sea.csv", sea_rows + "\n"), "seasonality"},
        {ws.write("fluc.csv", fluc_rows + "\n"), "fluctuation"},
    };
    for (const auto& [file, want] : expectations) {
        const auto r = run("profile --data " + file);
        CHECK(r.code == 0);
        const json rep = json::parse(r.out);
        CHECK(rep["chosen"] == want);
        CHECK(rep["degenerate"] == false);
    }

    const std::string shorty = ws.write("short.csv", "1,2,3,4\n");
    CHECK(run("profile --data " + shorty).code == 3);
    CHECK(run("profile --data " + ws.path("none.csv")).code == 3);
}
