#pragma once

#include <vector>

#include "moecast/nn.hpp"
#include "moecast/tensor.hpp"

namespace moecast {

// FIFO store of hidden-state snapshots taken at drift events. Entries are
// plain values (never trained); retrieval happens in TemporalRouter::fuse.
class AnomalyRepository {
public:
    explicit AnomalyRepository(int capacity = 16);

    void archive(std::vector<double> state, int event_id);
    void clear();
    int size() const { return static_cast<int>(states_.size()); }
    int capacity() const { return capacity_; }
    const std::vector<std::vector<double>>& states() const { return states_; }
    const std::vector<int>& event_ids() const { return event_ids_; }
    // All stored states as a constant [size, d] tensor.
    Tensor bank() const;

private:
    int capacity_;
    std::vector<std::vector<double>> states_;
    std::vector<int> event_ids_;
};

enum class RouterKind { Gru, Linear };

struct GateResult {
    Tensor gates;            // sparse weights over the full head, zeros off the kept set
    std::vector<int> active; // kept indices, ascending
    bool clamped = false;    // requested k exceeded the head size
};

// Per-patch routing state: input projection, recurrence (GRU or stateless
// linear), memory fusion against the anomaly repository, and a grow/shrinkable
// output head with one logit row per expert.
class TemporalRouter {
public:
    TemporalRouter(int in_dim, int hidden, int base_experts, RouterKind kind,
                   double fusion_temperature, int repo_capacity, Rng& rng);

    Tensor initial_hidden() const { return Tensor::zeros({hidden_}); }

    // One recurrence step on a [in_dim] feature vector.
    Tensor step(const Tensor& x, const Tensor& h_prev);

    // Retrieval + gated fusion; with an empty repository this returns h itself
    // (the same graph node, not a copy).
    Tensor fuse(const Tensor& h);

    GateResult route(const Tensor& h_fused, int k);

    void grow_head();            // appends a zero-initialized row
    void shrink_head(int index); // removes exactly one row
    int head_size() const { return static_cast<int>(head_.size()); }
    Tensor head_row(int i) { return head_[static_cast<std::size_t>(i)]; }

    AnomalyRepository& repository() { return repo_; }
    const AnomalyRepository& repository() const { return repo_; }

    std::vector<Tensor> params() const;      // every trainable tensor
    std::vector<Tensor> head_params() const; // just the head rows

    int hidden_dim() const { return hidden_; }
    int input_dim() const { return in_; }
    RouterKind kind() const { return kind_; }
    double fusion_temperature() const { return fusion_temp_; }
    long clamp_warnings() const { return clamp_warnings_; }

private:
    int in_;
    int hidden_;
    RouterKind kind_;
    double fusion_temp_;
    Dense phi_;             // in -> hidden
    Dense wz_, wr_, wn_;    // [2*hidden] -> hidden (GRU only)
    Dense fusion_;          // [2*hidden] -> 1
    std::vector<Tensor> head_;
    AnomalyRepository repo_;
    long clamp_warnings_ = 0;
};

// Deterministic top-k selection: values descending, ties to the lowest index.
// Returns the kept indices in ascending order.
std::vector<int> topk_indices(const std::vector<double>& values, int k);

} // namespace moecast
