#pragma once

#include <optional>
#include <string>

#include "moecast/data.hpp"
#include "moecast/drift.hpp"
#include "moecast/manager.hpp"
#include "moecast/model.hpp"

namespace moecast {

// Whole-run configuration: model structure, detector, lifecycle manager, and
// the optimization loop. One flat JSON object, every key optional, unknown
// keys rejected.
struct RunConfig {
    ModelConfig model;
    DetectorConfig detector;
    ManagerConfig manager;

    double lr = 1e-3;
    double weight_decay = 0.01;
    int epochs = 10;
    int batch_size = 32;
    int early_stop_patience = 10;
    int max_steps_per_epoch = 0; // 0: no cap
    bool adapt = true;           // drift detection + structural evolution
    int detect_every = 1;        // optimizer steps per detector evaluation
    // Forces every expert (base and dynamically added) to one kind.
    std::optional<ExpertKind> expert_kind_override;
    SplitSpec split;

    void validate() const; // throws ConfigError
    // Model config with the roster override applied.
    ModelConfig effective_model() const;
    // Manager config with align_lr and the kind override filled in.
    ManagerConfig effective_manager() const;
};

// Strict parse: defaults + overrides from the JSON object; any unknown key
// raises ConfigError naming it.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path); // DataError if unreadable

// One `--set key=value` override, same key names as the JSON schema.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

// Canonical (sorted-key) JSON snapshot containing every schema key.
std::string run_config_json(const RunConfig& cfg);

} // namespace moecast
