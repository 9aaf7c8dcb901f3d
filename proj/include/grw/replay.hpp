#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <ostream>
#include <vector>

#include "grw/matrix.hpp"
#include "grw/rng.hpp"

namespace grw {

// Training data of one finished task, as handed to the buffer.
struct TaskData {
    Matrix features;                   // rows aligned with labels
    std::vector<std::size_t> labels;   // global class ids
    Matrix class_attrs;                // one row per entry of class_ids
    std::vector<std::size_t> class_ids;
};

// Callbacks for generative replay: synthesize candidates for a class and
// classify them with the current cosine classifier.
struct GenerativeReplayHooks {
    std::function<Matrix(std::size_t class_id, std::size_t count)> generate;
    std::function<std::vector<std::size_t>(const Matrix& features)> classify;
};

// Fixed-budget store of (feature, label) pairs plus the attributes of every
// class ever seen. Real mode keeps the per-class counts balanced within one
// sample; generative mode keeps whatever the classifier accepts.
class ReplayBuffer {
public:
    enum class Mode { Real, Generative };

    ReplayBuffer() = default;
    ReplayBuffer(std::size_t capacity, Mode mode, std::size_t generative_per_class = 200)
        : capacity_(capacity), mode_(mode), generative_per_class_(generative_per_class) {}

    std::size_t capacity() const { return capacity_; }
    Mode mode() const { return mode_; }

    std::size_t total_stored() const {
        std::size_t n = 0;
        for (const auto& [cls, rows] : store_) n += rows.size();
        return n;
    }

    bool empty() const { return total_stored() == 0; }

    std::map<std::size_t, std::size_t> per_class_counts() const {
        std::map<std::size_t, std::size_t> counts;
        for (const auto& [cls, rows] : store_) counts[cls] = rows.size();
        return counts;
    }

    // Attributes of all seen classes, rows in ascending class id order.
    Matrix attr_bank() const {
        Matrix bank(attrs_.size(), attr_width_);
        std::size_t i = 0;
        for (const auto& [cls, attr] : attrs_) {
            std::copy(attr.begin(), attr.end(), bank.row(i));
            ++i;
        }
        return bank;
    }

    std::vector<std::size_t> attr_class_ids() const {
        std::vector<std::size_t> ids;
        ids.reserve(attrs_.size());
        for (const auto& [cls, attr] : attrs_) ids.push_back(cls);
        return ids;
    }

    const std::vector<std::vector<double>>& stored_features(std::size_t cls) const {
        static const std::vector<std::vector<double>> kEmpty;
        auto it = store_.find(cls);
        return it == store_.end() ? kEmpty : it->second;
    }

    void end_of_task_update(const TaskData& task, Rng& rng,
                            const GenerativeReplayHooks* hooks = nullptr) {
        if (task.features.rows() == 0 || task.labels.empty())
            throw StateError("end_of_task_update: empty task data");
        if (task.class_ids.size() != task.class_attrs.rows())
            throw ShapeError("end_of_task_update: one attribute row per class id");
        feature_width_ = task.features.cols();
        attr_width_ = task.class_attrs.cols();
        for (std::size_t i = 0; i < task.class_ids.size(); ++i) {
            const double* row = task.class_attrs.row(i);
            attrs_[task.class_ids[i]].assign(row, row + attr_width_);
        }
        if (mode_ == Mode::Real)
            real_update(task, rng);
        else
            generative_update(task, rng, hooks);
    }

    // n uniform draws with replacement over all stored pairs. An empty
    // buffer (first task) yields an empty batch.
    void sample_batch(std::size_t n, Rng& rng, Matrix& features,
                      std::vector<std::size_t>& labels) const {
        std::vector<std::pair<std::size_t, std::size_t>> flat; // (class, row)
        for (const auto& [cls, rows] : store_)
            for (std::size_t r = 0; r < rows.size(); ++r) flat.emplace_back(cls, r);
        if (flat.empty()) {
            features = Matrix(0, feature_width_);
            labels.clear();
            return;
        }
        features = Matrix(n, feature_width_);
        labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto [cls, r] = flat[rng.index(flat.size())];
            const auto& src = store_.at(cls)[r];
            std::copy(src.begin(), src.end(), features.row(i));
            labels[i] = cls;
        }
    }

    // All stored pairs in deterministic order (ascending class id).
    void snapshot(Matrix& features, std::vector<std::size_t>& labels) const {
        features = Matrix(total_stored(), feature_width_);
        labels.clear();
        labels.reserve(features.rows());
        std::size_t i = 0;
        for (const auto& [cls, rows] : store_)
            for (const auto& row : rows) {
                std::copy(row.begin(), row.end(), features.row(i));
                labels.push_back(cls);
                ++i;
            }
    }

    // class_id,f0,...: one stored feature per line.
    void dump_csv(std::ostream& os) const {
        for (const auto& [cls, rows] : store_)
            for (const auto& row : rows) {
                os << cls;
                for (double v : row) {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%.17g", v);
                    os << ',' << buf;
                }
                os << '\n';
            }
    }

private:
    void real_update(const TaskData& task, Rng& rng) {
        // rows of the finished task grouped by class
        std::map<std::size_t, std::vector<std::size_t>> task_rows;
        for (std::size_t i = 0; i < task.labels.size(); ++i)
            task_rows[task.labels[i]].push_back(i);

        std::vector<std::size_t> all_classes;
        for (const auto& [cls, rows] : store_) all_classes.push_back(cls);
        for (const auto& [cls, rows] : task_rows)
            if (!store_.count(cls)) all_classes.push_back(cls);
        std::sort(all_classes.begin(), all_classes.end());

        // quota floor(B/N); the remainder goes one extra each to the lowest ids
        const std::size_t n_classes = all_classes.size();
        const std::size_t quota = capacity_ / n_classes;
        const std::size_t remainder = capacity_ % n_classes;
        for (std::size_t idx = 0; idx < n_classes; ++idx) {
            std::size_t cls = all_classes[idx];
            std::size_t limit = quota + (idx < remainder ? 1 : 0);
            auto task_it = task_rows.find(cls);
            if (task_it != task_rows.end()) {
                auto pick = sample_without_replacement(task_it->second, limit, rng);
                auto& slot = store_[cls];
                slot.clear();
                slot.reserve(pick.size());
                for (std::size_t row : pick) {
                    const double* src = task.features.row(row);
                    slot.emplace_back(src, src + feature_width_);
                }
            } else {
                auto& slot = store_[cls];
                if (slot.size() > limit) {
                    std::vector<std::size_t> keep(slot.size());
                    for (std::size_t i = 0; i < slot.size(); ++i) keep[i] = i;
                    auto pick = sample_without_replacement(keep, limit, rng);
                    std::sort(pick.begin(), pick.end());
                    std::vector<std::vector<double>> kept;
                    kept.reserve(pick.size());
                    for (std::size_t i : pick) kept.push_back(std::move(slot[i]));
                    slot = std::move(kept);
                }
            }
        }
    }

    void generative_update(const TaskData& task, Rng& rng,
                           const GenerativeReplayHooks* hooks) {
        (void)rng;
        if (!hooks || !hooks->generate || !hooks->classify)
            throw StateError("end_of_task_update: generative mode needs replay hooks");
        for (std::size_t cls : task.class_ids) {
            auto& slot = store_[cls];
            // bounded number of attempts; a class the classifier cannot
            // recognize simply ends up with few or zero stored features
            std::size_t attempts = 0;
            while (slot.size() < generative_per_class_ &&
                   attempts < 5 * generative_per_class_) {
                std::size_t want = generative_per_class_ - slot.size();
                Matrix candidates = hooks->generate(cls, want);
                std::vector<std::size_t> predicted = hooks->classify(candidates);
                for (std::size_t i = 0; i < candidates.rows(); ++i) {
                    if (predicted[i] == cls && slot.size() < generative_per_class_) {
                        const double* src = candidates.row(i);
                        slot.emplace_back(src, src + feature_width_);
                    }
                }
                attempts += candidates.rows();
            }
            if (slot.empty()) store_.erase(cls);
        }
    }

    std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool,
                                                        std::size_t count, Rng& rng) {
        if (count >= pool.size()) return pool;
        // partial Fisher-Yates
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t j = i + rng.index(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }
        pool.resize(count);
        return pool;
    }

    std::size_t capacity_ = 0;
    Mode mode_ = Mode::Real;
    std::size_t generative_per_class_ = 200;
    std::size_t feature_width_ = 0;
    std::size_t attr_width_ = 0;
    std::map<std::size_t, std::vector<std::vector<double>>> store_;
    std::map<std::size_t, std::vector<double>> attrs_;
};

} // namespace grw
