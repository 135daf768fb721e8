#include "moecast/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "moecast/error.hpp"
#include "moecast/sha256.hpp"

namespace moecast {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

struct Reader {
    const unsigned char* p;
    std::size_t left;

    void need(std::size_t n) const {
        if (left < n) throw CheckpointError("checkpoint truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
    void doubles(double* dst, std::size_t n) {
        need(n * sizeof(double));
        std::memcpy(dst, p, n * sizeof(double));
        p += n * sizeof(double);
        left -= n * sizeof(double);
    }
};

json event_to_json(const PoolEvent& ev) {
    json o{{"event_id", ev.event_id}, {"t", ev.t},
           {"mmd2", ev.mmd2},         {"threshold", ev.threshold},
           {"s_trend", ev.s_trend},   {"s_sea", ev.s_sea},
           {"s_fluc", ev.s_fluc},     {"action", ev.action}};
    if (ev.expert_id) o["expert_id"] = *ev.expert_id;
    if (ev.kind) o["kind"] = to_string(*ev.kind);
    return o;
}

PoolEvent event_from_json(const json& o) {
    PoolEvent ev;
    ev.event_id = o.at("event_id").get<int>();
    ev.t = o.at("t").get<long>();
    ev.mmd2 = o.at("mmd2").get<double>();
    ev.threshold = o.at("threshold").get<double>();
    ev.s_trend = o.at("s_trend").get<double>();
    ev.s_sea = o.at("s_sea").get<double>();
    ev.s_fluc = o.at("s_fluc").get<double>();
    ev.action = o.at("action").get<std::string>();
    if (o.contains("expert_id")) ev.expert_id = o.at("expert_id").get<int>();
    if (o.contains("kind")) ev.kind = expert_kind_from_string(o.at("kind").get<std::string>());
    return ev;
}

} // namespace

std::string pool_event_json(const PoolEvent& ev) { return event_to_json(ev).dump(); }

PoolEvent pool_event_from_json(const std::string& line) {
    try {
        return event_from_json(json::parse(line));
    } catch (const json::exception& e) {
        throw DataError(std::string("bad event line: ") + e.what());
    }
}

std::string params_digest(const std::vector<Tensor>& params) {
    std::vector<unsigned char> bytes;
    for (const auto& p : params) {
        if (!p.defined()) continue;
        const auto& v = p.data();
        const std::size_t off = bytes.size();
        bytes.resize(off + v.size() * sizeof(double));
        std::memcpy(bytes.data() + off, v.data(), v.size() * sizeof(double));
    }
    return sha256_hex(bytes.data(), bytes.size());
}

std::vector<unsigned char> checkpoint_bytes(const RunConfig& cfg, const ForecastModel& model,
                                            const std::vector<PoolEvent>& events) {
    json manifest;
    manifest["config"] = json::parse(run_config_json(cfg));

    json layers = json::array();
    for (int li = 0; li < model.layer_count(); ++li) {
        const MoeLayer& layer = model.layer(li);
        json experts = json::array();
        for (const auto& info : layer.pool.inventory()) {
            experts.push_back(json{{"id", info.id},
                                   {"kind", to_string(info.kind)},
                                   {"protected", info.is_protected},
                                   {"created_at", info.created_at}});
        }
        layers.push_back(json{{"experts", experts},
                              {"head_size", layer.router.head_size()},
                              {"next_expert_id", layer.pool.next_expert_id()},
                              {"repo_event_ids", layer.router.repository().event_ids()}});
    }
    manifest["layers"] = layers;

    json evs = json::array();
    for (const auto& ev : events) evs.push_back(event_to_json(ev));
    manifest["events"] = evs;

    const auto params = model.params();
    std::size_t n_params = 0;
    for (const auto& p : params) n_params += p.numel();
    std::size_t n_repo = 0;
    for (int li = 0; li < model.layer_count(); ++li) {
        for (const auto& s : model.layer(li).router.repository().states()) n_repo += s.size();
    }
    manifest["n_values"] = n_params + n_repo;

    const std::string mtext = manifest.dump();
    std::vector<unsigned char> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, kVersion);
    put_u64(out, mtext.size());
    out.insert(out.end(), mtext.begin(), mtext.end());
    put_u64(out, n_params + n_repo);

    auto append_doubles = [&out](const std::vector<double>& v) {
        const std::size_t off = out.size();
        out.resize(off + v.size() * sizeof(double));
        std::memcpy(out.data() + off, v.data(), v.size() * sizeof(double));
    };
    for (const auto& p : params) append_doubles(p.data());
    for (int li = 0; li < model.layer_count(); ++li) {
        for (const auto& s : model.layer(li).router.repository().states()) append_doubles(s);
    }
    return out;
}

Checkpoint checkpoint_from_bytes(const std::vector<unsigned char>& bytes) {
    Reader r{bytes.data(), bytes.size()};
    const std::string magic = r.bytes(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw CheckpointError("bad checkpoint magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint64_t mlen = r.u64();
    json manifest;
    try {
        manifest = json::parse(r.bytes(mlen));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
    }

    RunConfig cfg;
    std::vector<PoolEvent> events;
    try {
        cfg = parse_run_config(manifest.at("config").dump());
        for (const auto& ev : manifest.at("events")) events.push_back(event_from_json(ev));
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
    } catch (const ParameterError& e) {
        throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
    }

    // Rebuild the structure, then overwrite every value from the payload.
    Rng rng(cfg.model.seed);
    const ModelConfig mc = cfg.effective_model();
    ForecastModel model(mc, rng);
    try {
        const json& layers = manifest.at("layers");
        if (static_cast<int>(layers.size()) != model.layer_count()) {
            throw CheckpointError("checkpoint layer count mismatch");
        }
        for (int li = 0; li < model.layer_count(); ++li) {
            const json& lj = layers.at(static_cast<std::size_t>(li));
            MoeLayer& layer = model.layer(li);
            const json& experts = lj.at("experts");
            const int base = layer.pool.size();
            if (static_cast<int>(experts.size()) < base) {
                throw CheckpointError("checkpoint pool smaller than the base roster");
            }
            for (int e = 0; e < static_cast<int>(experts.size()); ++e) {
                const json& ej = experts.at(static_cast<std::size_t>(e));
                const ExpertKind kind = expert_kind_from_string(ej.at("kind").get<std::string>());
                if (e < base) {
                    if (!ej.at("protected").get<bool>() || layer.pool.at(e).kind() != kind) {
                        throw CheckpointError("checkpoint base roster mismatch");
                    }
                } else {
                    layer.pool.restore_expert(kind, ej.at("id").get<int>(),
                                              ej.at("protected").get<bool>(),
                                              ej.at("created_at").get<int>(), rng);
                    layer.router.grow_head();
                }
            }
            layer.pool.set_next_expert_id(lj.at("next_expert_id").get<int>());
            if (layer.router.head_size() != lj.at("head_size").get<int>()) {
                throw CheckpointError("checkpoint head size mismatch");
            }
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
    } catch (const ParameterError& e) {
        throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
    }

    const std::uint64_t n_values = r.u64();
    std::uint64_t want = 0;
    for (const auto& p : model.params()) want += p.numel();
    std::vector<std::vector<std::vector<double>>> repo_states;
    try {
        const json& layers = manifest.at("layers");
        for (int li = 0; li < model.layer_count(); ++li) {
            const auto ids =
                layers.at(static_cast<std::size_t>(li)).at("repo_event_ids").get<std::vector<int>>();
            repo_states.emplace_back(ids.size(),
                                     std::vector<double>(static_cast<std::size_t>(
                                         model.config().d_hidden)));
            want += ids.size() * static_cast<std::size_t>(model.config().d_hidden);
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (n_values != want) throw CheckpointError("checkpoint payload size mismatch");

    for (Tensor p : model.params()) r.doubles(p.data().data(), p.numel());
    for (int li = 0; li < model.layer_count(); ++li) {
        const auto ids = manifest.at("layers")
                             .at(static_cast<std::size_t>(li))
                             .at("repo_event_ids")
                             .get<std::vector<int>>();
        auto& states = repo_states[static_cast<std::size_t>(li)];
        for (std::size_t s = 0; s < states.size(); ++s) {
            r.doubles(states[s].data(), states[s].size());
            model.layer(li).router.repository().archive(std::move(states[s]),
                                                        ids[s]);
        }
    }
    if (r.left != 0) throw CheckpointError("checkpoint has trailing bytes");

    return Checkpoint{std::move(cfg), std::move(model), std::move(events)};
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, const ForecastModel& model,
                     const std::vector<PoolEvent>& events) {
    const auto bytes = checkpoint_bytes(cfg, model, events);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return checkpoint_from_bytes(bytes);
}

} // namespace moecast
