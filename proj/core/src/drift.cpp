#include "moecast/drift.hpp"

#include <algorithm>
#include <cmath>

#include "moecast/error.hpp"

namespace moecast {

double rbf_kernel(const double* x, const double* y, int dim, double sigma) {
    double sq = 0.0;
    for (int i = 0; i < dim; ++i) {
        const double d = x[i] - y[i];
        sq += d * d;
    }
    return std::exp(-sq / (2.0 * sigma * sigma));
}

double median_bandwidth(const std::vector<double>& rows, int n, int dim) {
    if (n < 2) throw ParameterError("median_bandwidth needs at least 2 samples");
    std::vector<double> dists;
    dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double sq = 0.0;
            for (int c = 0; c < dim; ++c) {
                const double d = rows[static_cast<std::size_t>(i) * dim + c] -
                                 rows[static_cast<std::size_t>(j) * dim + c];
                sq += d * d;
            }
            dists.push_back(std::sqrt(sq));
        }
    }
    std::sort(dists.begin(), dists.end());
    const double med = dists[(dists.size() - 1) / 2]; // lower median for even counts
    if (med > 0.0) return med;
    for (double d : dists) {
        if (d > 0.0) return d; // sorted: first positive is the smallest
    }
    return 1.0; // all rows identical
}

namespace {

double kernel_block_sum(const std::vector<double>& a, int na, const std::vector<double>& b, int nb,
                        int dim, double sigma, bool skip_diagonal) {
    double s = 0.0;
    for (int i = 0; i < na; ++i) {
        for (int j = 0; j < nb; ++j) {
            if (skip_diagonal && i == j) continue;
            s += rbf_kernel(&a[static_cast<std::size_t>(i) * dim],
                            &b[static_cast<std::size_t>(j) * dim], dim, sigma);
        }
    }
    return s;
}

} // namespace

double mmd2_biased(const std::vector<double>& ref, int n_ref, const std::vector<double>& cur,
                   int n_cur, int dim, double sigma) {
    if (n_ref < 1 || n_cur < 1) throw ParameterError("mmd2 needs non-empty windows");
    const double rr = kernel_block_sum(ref, n_ref, ref, n_ref, dim, sigma, false);
    const double rc = kernel_block_sum(ref, n_ref, cur, n_cur, dim, sigma, false);
    const double cc = kernel_block_sum(cur, n_cur, cur, n_cur, dim, sigma, false);
    const double nr = static_cast<double>(n_ref);
    const double nc = static_cast<double>(n_cur);
    return rr / (nr * nr) - 2.0 * rc / (nr * nc) + cc / (nc * nc);
}

double mmd2_unbiased(const std::vector<double>& ref, int n_ref, const std::vector<double>& cur,
                     int n_cur, int dim, double sigma) {
    if (n_ref < 2 || n_cur < 2) throw ParameterError("unbiased mmd2 needs >= 2 samples per window");
    const double rr = kernel_block_sum(ref, n_ref, ref, n_ref, dim, sigma, true);
    const double rc = kernel_block_sum(ref, n_ref, cur, n_cur, dim, sigma, false);
    const double cc = kernel_block_sum(cur, n_cur, cur, n_cur, dim, sigma, true);
    const double nr = static_cast<double>(n_ref);
    const double nc = static_cast<double>(n_cur);
    return rr / (nr * (nr - 1.0)) - 2.0 * rc / (nr * nc) + cc / (nc * (nc - 1.0));
}

ScoreHistory::ScoreHistory(int capacity) {
    if (capacity < 1) throw ParameterError("score history capacity must be positive");
    buf_.assign(static_cast<std::size_t>(capacity), 0.0);
}

void ScoreHistory::push(double score) {
    buf_[head_] = score;
    head_ = (head_ + 1) % buf_.size();
    if (count_ < buf_.size()) ++count_;
}

void ScoreHistory::clear() {
    head_ = 0;
    count_ = 0;
}

double ScoreHistory::mean() const {
    double s = 0.0;
    for (std::size_t i = 0; i < count_; ++i) s += buf_[(head_ + buf_.size() - count_ + i) % buf_.size()];
    return count_ ? s / static_cast<double>(count_) : 0.0;
}

double ScoreHistory::std_pop() const {
    if (count_ == 0) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (std::size_t i = 0; i < count_; ++i) {
        const double d = buf_[(head_ + buf_.size() - count_ + i) % buf_.size()] - m;
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(count_));
}

std::vector<double> ScoreHistory::snapshot() const {
    std::vector<double> out;
    out.reserve(count_);
    for (std::size_t i = 0; i < count_; ++i) {
        out.push_back(buf_[(head_ + buf_.size() - count_ + i) % buf_.size()]);
    }
    return out;
}

std::optional<double> adaptive_threshold(const ScoreHistory& history, double lambda, int min_fill) {
    if (history.size() < min_fill) return std::nullopt;
    return history.mean() + lambda * history.std_pop();
}

DriftDetector::DriftDetector(DetectorConfig cfg, int dim)
    : cfg_(std::move(cfg)), dim_(dim), history_(cfg_.history) {
    if (dim_ < 1) throw ParameterError("detector dim must be positive");
    if (cfg_.ref_window < 2 || cfg_.cur_window < 1) {
        throw ParameterError("detector windows too small: ref " + std::to_string(cfg_.ref_window) +
                             ", cur " + std::to_string(cfg_.cur_window));
    }
    if (cfg_.min_fill < 1 || cfg_.min_fill > cfg_.history) {
        throw ParameterError("detector min_fill outside [1, history]");
    }
}

void DriftDetector::set_reference(std::vector<double> rows) {
    if (rows.size() != static_cast<std::size_t>(cfg_.ref_window) * dim_) {
        throw DimensionError("reference must be ref_window x dim = " +
                             std::to_string(cfg_.ref_window) + "x" + std::to_string(dim_));
    }
    reference_ = std::move(rows);
}

std::optional<DriftEvent> DriftDetector::step(const std::vector<double>& window, long t_end) {
    if (!has_reference()) throw ContractError("detector step() before set_reference()");
    if (window.size() != static_cast<std::size_t>(cfg_.cur_window) * dim_) {
        throw DimensionError("current window must be cur_window x dim = " +
                             std::to_string(cfg_.cur_window) + "x" + std::to_string(dim_));
    }
    const double sigma = median_bandwidth(reference_, cfg_.ref_window, dim_);
    const double score = mmd2_biased(reference_, cfg_.ref_window, window, cfg_.cur_window, dim_, sigma);
    // Threshold snapshot precedes the append: a score never thresholds itself.
    const std::optional<double> thr = adaptive_threshold(history_, cfg_.lambda, cfg_.min_fill);
    history_.push(score);
    last_score_ = score;
    last_threshold_ = thr;
    if (thr && score > *thr) {
        DriftEvent ev;
        ev.event_id = next_event_id_++;
        ev.t = t_end;
        ev.mmd2 = score;
        ev.threshold = *thr;
        if (cfg_.cur_window == cfg_.ref_window) {
            reference_ = window;
        } else {
            // Reference keeps its configured size: tile/truncate the current
            // window to ref_window rows (reachable only when sizes differ).
            reference_.assign(static_cast<std::size_t>(cfg_.ref_window) * dim_, 0.0);
            for (int i = 0; i < cfg_.ref_window; ++i) {
                const int src = i % cfg_.cur_window;
                for (int c = 0; c < dim_; ++c) {
                    reference_[static_cast<std::size_t>(i) * dim_ + c] =
                        window[static_cast<std::size_t>(src) * dim_ + c];
                }
            }
        }
        history_.clear();
        return ev;
    }
    return std::nullopt;
}

void DriftDetector::reset() {
    reference_.clear();
    history_.clear();
    last_score_ = 0.0;
    last_threshold_.reset();
}

} // namespace moecast
