#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grw/matrix.hpp"
#include "grw/rng.hpp"

namespace grw {

enum class DataAccess { FeatureRow, AttrRow };

// Immutable labelled dataset. All feature/attribute reads go through the row
// accessors so a test probe can audit exactly which rows training touches.
class Dataset {
public:
    using AccessProbe = std::function<void(DataAccess, std::size_t)>;

    Dataset() = default;

    Dataset(Matrix features, std::vector<std::size_t> labels, Matrix class_attrs,
            std::optional<std::vector<std::string>> names = std::nullopt)
        : features_(std::move(features)), labels_(std::move(labels)),
          class_attrs_(std::move(class_attrs)), names_(std::move(names)) {
        if (features_.rows() != labels_.size())
            throw ShapeError("Dataset: one label per feature row required");
        std::vector<std::size_t> counts(class_attrs_.rows(), 0);
        for (std::size_t y : labels_) {
            if (y >= class_attrs_.rows())
                throw InvalidLabelError("Dataset: label " + std::to_string(y) +
                                        " has no attribute row");
            counts[y]++;
        }
        for (std::size_t c = 0; c < counts.size(); ++c)
            if (counts[c] == 0)
                throw InvalidInputError("Dataset: class " + std::to_string(c) +
                                        " has no samples");
        if (!features_.all_finite() || !class_attrs_.all_finite())
            throw InvalidInputError("Dataset: non-finite entry");
    }

    std::size_t n_samples() const { return labels_.size(); }
    std::size_t n_classes() const { return class_attrs_.rows(); }
    std::size_t feature_dim() const { return features_.cols(); }
    std::size_t attr_dim() const { return class_attrs_.cols(); }

    std::size_t label(std::size_t i) const { return labels_[i]; }

    const double* feature_row(std::size_t i) const {
        if (probe_) probe_(DataAccess::FeatureRow, i);
        return features_.row(i);
    }

    const double* attr_row(std::size_t cls) const {
        if (probe_) probe_(DataAccess::AttrRow, cls);
        return class_attrs_.row(cls);
    }

    Matrix features_of(const std::vector<std::size_t>& rows) const {
        Matrix out(rows.size(), feature_dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* src = feature_row(rows[i]);
            std::copy(src, src + feature_dim(), out.row(i));
        }
        return out;
    }

    Matrix attrs_of(const std::vector<std::size_t>& classes) const {
        Matrix out(classes.size(), attr_dim());
        for (std::size_t i = 0; i < classes.size(); ++i) {
            const double* src = attr_row(classes[i]);
            std::copy(src, src + attr_dim(), out.row(i));
        }
        return out;
    }

    const std::optional<std::vector<std::string>>& names() const { return names_; }

    void set_access_probe(AccessProbe probe) const { probe_ = std::move(probe); }
    void clear_access_probe() const { probe_ = nullptr; }

private:
    Matrix features_;
    std::vector<std::size_t> labels_;
    Matrix class_attrs_;
    std::optional<std::vector<std::string>> names_;
    mutable AccessProbe probe_;
};

// Static split of the class space into disjoint contiguous tasks. After task
// t the seen set is tasks 0..t and the unseen set is tasks t+1..T-1.
struct TaskSchedule {
    std::vector<std::vector<std::size_t>> task_classes;

    std::size_t n_tasks() const { return task_classes.size(); }

    std::vector<std::size_t> seen_through(std::size_t t) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i <= t && i < task_classes.size(); ++i)
            out.insert(out.end(), task_classes[i].begin(), task_classes[i].end());
        return out;
    }

    std::vector<std::size_t> unseen_after(std::size_t t) const {
        std::vector<std::size_t> out;
        for (std::size_t i = t + 1; i < task_classes.size(); ++i)
            out.insert(out.end(), task_classes[i].begin(), task_classes[i].end());
        return out;
    }
};

inline TaskSchedule build_static_schedule(std::size_t n_classes, std::size_t n_tasks,
                                          const std::vector<std::size_t>& sizes = {}) {
    if (n_tasks == 0) throw ConfigError("build_static_schedule: need at least one task");
    std::vector<std::size_t> resolved = sizes;
    if (resolved.empty()) {
        if (n_classes % n_tasks != 0)
            throw ConfigError("build_static_schedule: " + std::to_string(n_classes) +
                              " classes not divisible into " + std::to_string(n_tasks) +
                              " tasks");
        resolved.assign(n_tasks, n_classes / n_tasks);
    } else {
        if (resolved.size() != n_tasks)
            throw ConfigError("build_static_schedule: sizes list length != task count");
        std::size_t total = 0;
        for (std::size_t s : resolved) total += s;
        if (total != n_classes)
            throw ConfigError("build_static_schedule: sizes sum to " + std::to_string(total) +
                              ", expected " + std::to_string(n_classes));
    }
    TaskSchedule schedule;
    std::size_t next = 0;
    for (std::size_t s : resolved) {
        std::vector<std::size_t> block(s);
        for (std::size_t& c : block) c = next++;
        schedule.task_classes.push_back(std::move(block));
    }
    return schedule;
}

enum class AttrFamily { UnitSphere, SparseBinary };

struct SyntheticSpec {
    std::size_t n_classes = 20;
    std::size_t attr_dim = 16;
    std::size_t feature_dim = 32;
    std::size_t samples_per_class = 100;
    AttrFamily attr_family = AttrFamily::UnitSphere;
    double sparse_p = 0.3;
    double noise_sigma = 0.3;

    void validate() const {
        if (n_classes < 4) throw ConfigError("SyntheticSpec: need at least 4 classes");
        if (!(noise_sigma > 0.0)) throw ConfigError("SyntheticSpec: noise_sigma must be > 0");
        if (attr_dim == 0 || feature_dim == 0 || samples_per_class == 0)
            throw ConfigError("SyntheticSpec: dimensions and counts must be positive");
    }
};

struct SyntheticDataset {
    Dataset data;
    Matrix class_means; // exact means feature = mixing * attr, before noise
    Matrix mixing;      // feature_dim x attr_dim
};

// Linear ground truth: class mean = M * attr, samples = mean + N(0, sigma^2).
// Zero-shot transfer is achievable by construction because the map from
// attribute space to feature space is shared across all classes.
inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec, Rng& rng) {
    spec.validate();
    Matrix attrs(spec.n_classes, spec.attr_dim);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        if (spec.attr_family == AttrFamily::UnitSphere) {
            double norm = 0.0;
            do {
                norm = 0.0;
                for (std::size_t t = 0; t < spec.attr_dim; ++t) {
                    attrs(c, t) = rng.normal();
                    norm += attrs(c, t) * attrs(c, t);
                }
            } while (norm == 0.0);
            norm = std::sqrt(norm);
            for (std::size_t t = 0; t < spec.attr_dim; ++t) attrs(c, t) /= norm;
        } else {
            bool any = false;
            do {
                any = false;
                for (std::size_t t = 0; t < spec.attr_dim; ++t) {
                    attrs(c, t) = rng.uniform() < spec.sparse_p ? 1.0 : 0.0;
                    any = any || attrs(c, t) != 0.0;
                }
            } while (!any);
        }
    }

    Matrix mixing(spec.feature_dim, spec.attr_dim);
    for (double& v : mixing.data()) v = rng.normal();
    Matrix means = matmul(attrs, transpose(mixing)); // n_classes x feature_dim

    Matrix features(spec.n_classes * spec.samples_per_class, spec.feature_dim);
    std::vector<std::size_t> labels(features.rows());
    std::size_t row = 0;
    for (std::size_t c = 0; c < spec.n_classes; ++c)
        for (std::size_t s = 0; s < spec.samples_per_class; ++s, ++row) {
            labels[row] = c;
            for (std::size_t t = 0; t < spec.feature_dim; ++t)
                features(row, t) = means(c, t) + spec.noise_sigma * rng.normal();
        }

    SyntheticDataset out;
    out.data = Dataset(std::move(features), std::move(labels), std::move(attrs));
    out.class_means = std::move(means);
    out.mixing = std::move(mixing);
    return out;
}

// --- CSV / JSON interchange ------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

inline double parse_double(const std::string& s, const std::string& file, std::size_t line) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw ParseError(file + " line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

inline std::size_t parse_index(const std::string& s, const std::string& file,
                               std::size_t line) {
    char* end = nullptr;
    unsigned long v = std::strtoul(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0')
        throw ParseError(file + " line " + std::to_string(line) + ": bad id '" + s + "'");
    return static_cast<std::size_t>(v);
}

} // namespace detail

inline void save_dataset_csv(const Dataset& data, const std::string& features_path,
                             const std::string& attrs_path) {
    std::ofstream ff(features_path);
    if (!ff) throw StateError("save_dataset_csv: cannot open " + features_path);
    ff << "label";
    for (std::size_t t = 0; t < data.feature_dim(); ++t) ff << ",f" << t;
    ff << '\n';
    for (std::size_t i = 0; i < data.n_samples(); ++i) {
        ff << data.label(i);
        const double* row = data.feature_row(i);
        for (std::size_t t = 0; t < data.feature_dim(); ++t)
            ff << ',' << detail::format_double(row[t]);
        ff << '\n';
    }

    std::ofstream fa(attrs_path);
    if (!fa) throw StateError("save_dataset_csv: cannot open " + attrs_path);
    fa << "class_id";
    for (std::size_t t = 0; t < data.attr_dim(); ++t) fa << ",a" << t;
    fa << '\n';
    for (std::size_t c = 0; c < data.n_classes(); ++c) {
        fa << c;
        const double* row = data.attr_row(c);
        for (std::size_t t = 0; t < data.attr_dim(); ++t)
            fa << ',' << detail::format_double(row[t]);
        fa << '\n';
    }
}

inline Dataset load_dataset_csv(const std::string& features_path,
                                const std::string& attrs_path) {
    std::ifstream fa(attrs_path);
    if (!fa) throw ParseError("load_dataset_csv: cannot open " + attrs_path);
    std::string line;
    std::size_t line_no = 0;
    std::getline(fa, line);
    ++line_no;
    auto header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "class_id")
        throw ParseError(attrs_path + " line 1: expected 'class_id,a0,...' header");
    const std::size_t attr_dim = header.size() - 1;
    std::vector<std::vector<double>> attr_rows;
    std::vector<std::size_t> attr_ids;
    while (std::getline(fa, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != attr_dim + 1)
            throw ParseError(attrs_path + " line " + std::to_string(line_no) + ": expected " +
                             std::to_string(attr_dim + 1) + " columns, got " +
                             std::to_string(fields.size()));
        attr_ids.push_back(detail::parse_index(fields[0], attrs_path, line_no));
        std::vector<double> row(attr_dim);
        for (std::size_t t = 0; t < attr_dim; ++t)
            row[t] = detail::parse_double(fields[t + 1], attrs_path, line_no);
        attr_rows.push_back(std::move(row));
    }
    const std::size_t n_classes = attr_rows.size();
    Matrix attrs(n_classes, attr_dim);
    std::vector<bool> seen_id(n_classes, false);
    for (std::size_t i = 0; i < n_classes; ++i) {
        if (attr_ids[i] >= n_classes || seen_id[attr_ids[i]])
            throw ParseError(attrs_path + ": class ids must be 0-based and consecutive");
        seen_id[attr_ids[i]] = true;
        std::copy(attr_rows[i].begin(), attr_rows[i].end(), attrs.row(attr_ids[i]));
    }

    std::ifstream ff(features_path);
    if (!ff) throw ParseError("load_dataset_csv: cannot open " + features_path);
    line_no = 0;
    std::getline(ff, line);
    ++line_no;
    header = detail::split_csv_line(line);
    if (header.empty() || header[0] != "label")
        throw ParseError(features_path + " line 1: expected 'label,f0,...' header");
    const std::size_t feature_dim = header.size() - 1;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    while (std::getline(ff, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != feature_dim + 1)
            throw ParseError(features_path + " line " + std::to_string(line_no) +
                             ": expected " + std::to_string(feature_dim + 1) +
                             " columns, got " + std::to_string(fields.size()));
        std::size_t y = detail::parse_index(fields[0], features_path, line_no);
        if (y >= n_classes)
            throw ParseError(features_path + " line " + std::to_string(line_no) + ": label " +
                             std::to_string(y) + " has no attribute row");
        labels.push_back(y);
        std::vector<double> row(feature_dim);
        for (std::size_t t = 0; t < feature_dim; ++t)
            row[t] = detail::parse_double(fields[t + 1], features_path, line_no);
        rows.push_back(std::move(row));
    }
    Matrix features(rows.size(), feature_dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), features.row(i));
    return Dataset(std::move(features), std::move(labels), std::move(attrs));
}

inline void save_schedule_json(const TaskSchedule& schedule, const std::string& path) {
    nlohmann::json j;
    j["tasks"] = schedule.task_classes;
    std::ofstream os(path);
    if (!os) throw StateError("save_schedule_json: cannot open " + path);
    os << j.dump(2) << '\n';
}

inline TaskSchedule load_schedule_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ParseError("load_schedule_json: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("load_schedule_json: " + std::string(e.what()));
    }
    if (!j.contains("tasks") || !j["tasks"].is_array())
        throw ParseError("load_schedule_json: missing 'tasks' array");
    TaskSchedule schedule;
    for (const auto& task : j["tasks"]) {
        std::vector<std::size_t> ids;
        for (const auto& id : task) ids.push_back(id.get<std::size_t>());
        schedule.task_classes.push_back(std::move(ids));
    }
    return schedule;
}

} // namespace grw
