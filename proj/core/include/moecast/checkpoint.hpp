#pragma once

#include <string>
#include <vector>

#include "moecast/config.hpp"
#include "moecast/manager.hpp"
#include "moecast/model.hpp"

namespace moecast {

// Versioned binary snapshot: magic + JSON manifest (config, per-layer pool
// inventory, repository tags, event log) + raw little-endian f64 payload
// (parameters in model traversal order, then repository states per layer).
// Roundtrips are bit-exact.
struct Checkpoint {
    RunConfig config;
    ForecastModel model;
    std::vector<PoolEvent> events;
};

void save_checkpoint(const std::string& path, const RunConfig& cfg, const ForecastModel& model,
                     const std::vector<PoolEvent>& events);
// Throws CheckpointError on any structural or integrity problem.
Checkpoint load_checkpoint(const std::string& path);

// In-memory variants (best-epoch snapshots, tests).
std::vector<unsigned char> checkpoint_bytes(const RunConfig& cfg, const ForecastModel& model,
                                            const std::vector<PoolEvent>& events);
Checkpoint checkpoint_from_bytes(const std::vector<unsigned char>& bytes);

// SHA-256 over the raw bytes of the given tensors (freeze/purity checks).
std::string params_digest(const std::vector<Tensor>& params);

// One event as a single-line JSON object (the events.jsonl row format).
std::string pool_event_json(const PoolEvent& ev);
PoolEvent pool_event_from_json(const std::string& line);

} // namespace moecast
