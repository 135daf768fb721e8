#include "moecast/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "moecast/error.hpp"

namespace moecast {

using json = nlohmann::json;

namespace {

RouterKind router_kind_from_string(const std::string& s) {
    if (s == "gru") return RouterKind::Gru;
    if (s == "linear") return RouterKind::Linear;
    throw ConfigError("router must be 'gru' or 'linear', got '" + s + "'");
}

const char* to_string(RouterKind k) { return k == RouterKind::Gru ? "gru" : "linear"; }

template <typename T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type: " + v.dump());
    }
}

void apply_key(RunConfig& c, const std::string& key, const json& v) {
    auto as_int = [&] { return get_as<int>(v, key); };
    auto as_double = [&] { return get_as<double>(v, key); };
    auto as_bool = [&] { return get_as<bool>(v, key); };
    auto as_string = [&] { return get_as<std::string>(v, key); };

    if (key == "lookback") c.model.lookback = as_int();
    else if (key == "horizon") c.model.horizon = as_int();
    else if (key == "vars") c.model.vars = as_int();
    else if (key == "patch_len") c.model.patch_len = as_int();
    else if (key == "stride") c.model.stride = as_int();
    else if (key == "d_model") c.model.d_model = as_int();
    else if (key == "d_hidden") c.model.d_hidden = as_int();
    else if (key == "top_k") c.model.top_k = as_int();
    else if (key == "moe_layers") c.model.moe_layers = as_int();
    else if (key == "drift_cap") c.model.drift_cap = as_int();
    else if (key == "cycle_len") c.model.cycle_len = as_int();
    else if (key == "repo_capacity") c.model.repo_capacity = as_int();
    else if (key == "fusion_temperature") c.model.fusion_temperature = as_double();
    else if (key == "trend_window") c.model.expert_hyper.trend_window = as_int();
    else if (key == "conv_kernel") c.model.expert_hyper.conv_kernel = as_int();
    else if (key == "mlp_hidden") c.model.expert_hyper.mlp_hidden = as_int();
    else if (key == "seed") c.model.seed = get_as<std::uint64_t>(v, key);
    else if (key == "router") c.model.router_kind = router_kind_from_string(as_string());
    else if (key == "base_roster") {
        if (!v.is_array() || v.empty()) throw ConfigError("base_roster must be a non-empty array");
        std::vector<ExpertKind> roster;
        for (const auto& item : v) {
            try {
                roster.push_back(expert_kind_from_string(get_as<std::string>(item, key)));
            } catch (const ParameterError& e) {
                throw ConfigError(e.what());
            }
        }
        c.model.base_roster = std::move(roster);
    } else if (key == "expert_kind_override") {
        if (v.is_null()) {
            c.expert_kind_override.reset();
        } else {
            try {
                c.expert_kind_override = expert_kind_from_string(as_string());
            } catch (const ParameterError& e) {
                throw ConfigError(e.what());
            }
        }
    } else if (key == "detector_ref_window") c.detector.ref_window = as_int();
    else if (key == "detector_cur_window") c.detector.cur_window = as_int();
    else if (key == "detector_history") c.detector.history = as_int();
    else if (key == "detector_min_fill") c.detector.min_fill = as_int();
    else if (key == "detector_lambda") c.detector.lambda = as_double();
    else if (key == "detector_source") c.detector.source = as_string();
    else if (key == "tau") c.manager.tau = as_double();
    else if (key == "prune_patience") c.manager.patience = as_int();
    else if (key == "monitor_steps") c.manager.monitor_steps = as_int();
    else if (key == "align_steps") c.manager.align_steps = as_int();
    else if (key == "align_batch") c.manager.align_batch = as_int();
    else if (key == "lr") c.lr = as_double();
    else if (key == "weight_decay") c.weight_decay = as_double();
    else if (key == "epochs") c.epochs = as_int();
    else if (key == "batch_size") c.batch_size = as_int();
    else if (key == "early_stop_patience") c.early_stop_patience = as_int();
    else if (key == "max_steps_per_epoch") c.max_steps_per_epoch = as_int();
    else if (key == "adapt") c.adapt = as_bool();
    else if (key == "detect_every") c.detect_every = as_int();
    else if (key == "train_frac") c.split.train_frac = as_double();
    else if (key == "val_frac") c.split.val_frac = as_double();
    else if (key == "train_n") {
        if (v.is_null()) c.split.train_n.reset();
        else c.split.train_n = get_as<long>(v, key);
    } else if (key == "val_n") {
        if (v.is_null()) c.split.val_n.reset();
        else c.split.val_n = get_as<long>(v, key);
    } else if (key == "test_n") {
        if (v.is_null()) c.split.test_n.reset();
        else c.split.test_n = get_as<long>(v, key);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

} // namespace

void RunConfig::validate() const {
    effective_model().validate();
    if (detector.ref_window < 2) throw ConfigError("detector_ref_window must be >= 2");
    if (detector.cur_window < 1) throw ConfigError("detector_cur_window must be >= 1");
    if (detector.min_fill < 2) throw ConfigError("detector_min_fill must be >= 2");
    if (detector.history < detector.min_fill) {
        throw ConfigError("detector_history must be >= detector_min_fill");
    }
    if (detector.lambda < 0.0) throw ConfigError("detector_lambda must be non-negative");
    if (detector.source != "raw" && detector.source != "embedding") {
        throw ConfigError("detector_source must be 'raw' or 'embedding', got '" + detector.source +
                          "'");
    }
    if (manager.tau < 0.0) throw ConfigError("tau must be non-negative");
    if (manager.patience < 1) throw ConfigError("prune_patience must be positive");
    if (manager.monitor_steps < 1) throw ConfigError("monitor_steps must be positive");
    if (manager.align_steps < 0) throw ConfigError("align_steps must be non-negative");
    if (manager.align_batch < 1) throw ConfigError("align_batch must be positive");
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be positive");
    if (max_steps_per_epoch < 0) throw ConfigError("max_steps_per_epoch must be non-negative");
    if (detect_every < 1) throw ConfigError("detect_every must be positive");
    if (adapt && model.horizon < 8) {
        throw ConfigError("adaptive runs need horizon >= 8 (profiler floor); "
                          "set adapt=false or raise horizon");
    }
    const bool counts = split.train_n || split.val_n || split.test_n;
    if (counts && !(split.train_n && split.val_n && split.test_n)) {
        throw ConfigError("train_n, val_n, test_n must be given together");
    }
    if (!counts) {
        if (split.train_frac <= 0.0 || split.val_frac <= 0.0 ||
            split.train_frac + split.val_frac >= 1.0) {
            throw ConfigError("split fractions must be positive with train_frac + val_frac < 1");
        }
    }
}

ModelConfig RunConfig::effective_model() const {
    ModelConfig m = model;
    if (expert_kind_override) {
        m.base_roster.assign(m.base_roster.size(), *expert_kind_override);
    }
    return m;
}

ManagerConfig RunConfig::effective_manager() const {
    ManagerConfig m = manager;
    m.align_lr = lr;
    m.kind_override = expert_kind_override;
    return m;
}

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : doc.items()) apply_key(cfg, key, value);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    json v;
    try {
        v = json::parse(value);
    } catch (const json::exception&) {
        v = value; // bare strings are taken verbatim
    }
    apply_key(cfg, key, v);
}

std::string run_config_json(const RunConfig& cfg) {
    json roster = json::array();
    for (ExpertKind k : cfg.model.base_roster) roster.push_back(to_string(k));
    json o{
        {"lookback", cfg.model.lookback},
        {"horizon", cfg.model.horizon},
        {"vars", cfg.model.vars},
        {"patch_len", cfg.model.patch_len},
        {"stride", cfg.model.stride},
        {"d_model", cfg.model.d_model},
        {"d_hidden", cfg.model.d_hidden},
        {"top_k", cfg.model.top_k},
        {"moe_layers", cfg.model.moe_layers},
        {"base_roster", roster},
        {"drift_cap", cfg.model.drift_cap},
        {"cycle_len", cfg.model.cycle_len},
        {"router", to_string(cfg.model.router_kind)},
        {"repo_capacity", cfg.model.repo_capacity},
        {"fusion_temperature", cfg.model.fusion_temperature},
        {"trend_window", cfg.model.expert_hyper.trend_window},
        {"conv_kernel", cfg.model.expert_hyper.conv_kernel},
        {"mlp_hidden", cfg.model.expert_hyper.mlp_hidden},
        {"seed", cfg.model.seed},
        {"detector_ref_window", cfg.detector.ref_window},
        {"detector_cur_window", cfg.detector.cur_window},
        {"detector_history", cfg.detector.history},
        {"detector_min_fill", cfg.detector.min_fill},
        {"detector_lambda", cfg.detector.lambda},
        {"detector_source", cfg.detector.source},
        {"tau", cfg.manager.tau},
        {"prune_patience", cfg.manager.patience},
        {"monitor_steps", cfg.manager.monitor_steps},
        {"align_steps", cfg.manager.align_steps},
        {"align_batch", cfg.manager.align_batch},
        {"lr", cfg.lr},
        {"weight_decay", cfg.weight_decay},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"early_stop_patience", cfg.early_stop_patience},
        {"max_steps_per_epoch", cfg.max_steps_per_epoch},
        {"adapt", cfg.adapt},
        {"detect_every", cfg.detect_every},
        {"train_frac", cfg.split.train_frac},
        {"val_frac", cfg.split.val_frac},
    };
    o["expert_kind_override"] =
        cfg.expert_kind_override ? json(to_string(*cfg.expert_kind_override)) : json(nullptr);
    o["train_n"] = cfg.split.train_n ? json(*cfg.split.train_n) : json(nullptr);
    o["val_n"] = cfg.split.val_n ? json(*cfg.split.val_n) : json(nullptr);
    o["test_n"] = cfg.split.test_n ? json(*cfg.split.test_n) : json(nullptr);
    return o.dump(2);
}

} // namespace moecast
