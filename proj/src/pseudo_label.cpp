#include "upl/pseudo_label.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "upl/parallel.hpp"

namespace upl {

namespace {

std::size_t count_placeholders(const std::string& s) {
    std::size_t count = 0;
    std::size_t pos = 0;
    const std::string needle = kClassPlaceholder;
    while ((pos = s.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

void check_no_control_chars(const std::string& field, const std::string& what) {
    if (field.find('\t') != std::string::npos || field.find('\n') != std::string::npos) {
        throw_input(what + " must not contain tabs or newlines: '" + field + "'");
    }
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    for (;;) {
        std::size_t tab = line.find('\t', begin);
        if (tab == std::string::npos) {
            out.push_back(line.substr(begin));
            return out;
        }
        out.push_back(line.substr(begin, tab - begin));
        begin = tab + 1;
    }
}

void fill_per_class_counts(PseudoLabelSet& set) {
    set.per_class_counts.clear();
    for (const auto& r : set.records) set.per_class_counts[r.pseudo_class]++;
}

} // namespace

void validate_prompt_template(const std::string& prompt_template) {
    std::size_t n = count_placeholders(prompt_template);
    if (n != 1) {
        throw_config("prompt template must contain exactly one " + std::string(kClassPlaceholder) +
                     " placeholder, found " + std::to_string(n) + " in '" + prompt_template + "'");
    }
}

std::string substitute_class_token(const std::string& prompt_template,
                                   const std::string& class_name) {
    validate_prompt_template(prompt_template);
    std::string out = prompt_template;
    out.replace(out.find(kClassPlaceholder), std::string(kClassPlaceholder).size(), class_name);
    return out;
}

std::vector<ProbabilityRow> zero_shot_probs(const FrozenEncoderPair& encoder,
                                            const std::string& prompt_template,
                                            const std::vector<std::string>& class_names,
                                            std::span<const ImageFeature> features,
                                            int jobs) {
    validate_prompt_template(prompt_template);
    if (class_names.empty()) throw_config("zero_shot_probs: class name list is empty");
    if (features.empty()) throw_input("zero_shot_probs: feature list is empty");

    // Class embeddings are built once and reused for every feature.
    std::vector<Vec> class_embeddings;
    class_embeddings.reserve(class_names.size());
    for (const auto& name : class_names) {
        class_embeddings.push_back(
            encoder.encode_prompt_text(substitute_class_token(prompt_template, name)));
    }

    double tau = encoder.temperature();
    std::vector<ProbabilityRow> rows(features.size());
    parallel_for(features.size(), jobs, [&](std::size_t i) {
        const ImageFeature& f = features[i];
        Vec logits(class_embeddings.size());
        for (std::size_t c = 0; c < class_embeddings.size(); ++c) {
            logits[c] = dot(class_embeddings[c], f.vector) / tau;
        }
        rows[i] = {f.image_id, softmax(logits)};
    });
    return rows;
}

std::vector<PseudoLabelRecord> assign_pseudo_labels(std::span<const ProbabilityRow> rows,
                                                    const std::string& source_tag) {
    std::vector<PseudoLabelRecord> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        if (row.probs.empty()) throw_input("probability row for '" + row.image_id + "' is empty");
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.probs.size(); ++c) {
            if (row.probs[c] > row.probs[best]) best = c; // strict: ties keep the lowest index
        }
        out.push_back({row.image_id, static_cast<int>(best) + 1, row.probs[best], source_tag});
    }
    return out;
}

PseudoLabelSet select_top_k(std::span<const PseudoLabelRecord> records, int k) {
    if (k <= 0) throw_config("top-K selection requires K > 0, got " + std::to_string(k));
    if (records.empty()) throw_input("top-K selection requires a nonempty record list");

    std::map<int, std::vector<PseudoLabelRecord>> by_class;
    std::set<std::string> seen_ids;
    for (const auto& r : records) {
        if (!seen_ids.insert(r.image_id).second) {
            throw_input("duplicate image id in record list: '" + r.image_id + "'");
        }
        by_class[r.pseudo_class].push_back(r);
    }

    PseudoLabelSet set;
    set.strategy = SelectionStrategy::top_k;
    set.top_k = k;
    for (auto& [cls, group] : by_class) {
        std::sort(group.begin(), group.end(), [](const auto& a, const auto& b) {
            if (a.confidence != b.confidence) return a.confidence > b.confidence;
            return a.image_id < b.image_id;
        });
        std::size_t keep = std::min<std::size_t>(group.size(), static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < keep; ++i) set.records.push_back(group[i]);
    }
    fill_per_class_counts(set);
    return set;
}

PseudoLabelSet select_threshold(std::span<const PseudoLabelRecord> records, double t) {
    if (!(t >= 0.0 && t < 1.0)) {
        throw_config("confidence threshold must lie in [0, 1), got " + std::to_string(t));
    }
    if (records.empty()) throw_input("threshold selection requires a nonempty record list");

    std::vector<PseudoLabelRecord> kept;
    std::set<std::string> seen_ids;
    for (const auto& r : records) {
        if (!seen_ids.insert(r.image_id).second) {
            throw_input("duplicate image id in record list: '" + r.image_id + "'");
        }
        if (r.confidence > t) kept.push_back(r);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.pseudo_class != b.pseudo_class) return a.pseudo_class < b.pseudo_class;
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.image_id < b.image_id;
    });

    PseudoLabelSet set;
    set.strategy = SelectionStrategy::threshold;
    set.threshold = t;
    set.records = std::move(kept);
    fill_per_class_counts(set);
    return set;
}

std::vector<ProbabilityRow> ensemble_probs(
    const std::vector<std::vector<ProbabilityRow>>& rows_per_model) {
    if (rows_per_model.empty()) throw_input("ensemble requires at least one model");
    const auto& first = rows_per_model[0];
    for (std::size_t m = 1; m < rows_per_model.size(); ++m) {
        if (rows_per_model[m].size() != first.size()) {
            throw_input("ensemble inputs have different row counts");
        }
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (rows_per_model[m][i].image_id != first[i].image_id) {
                throw_input("ensemble inputs disagree on image id order, first mismatch at '" +
                            first[i].image_id + "'");
            }
            if (rows_per_model[m][i].probs.size() != first[i].probs.size()) {
                throw_input("ensemble inputs have different class counts at '" +
                            first[i].image_id + "'");
            }
        }
    }

    double inv_m = 1.0 / static_cast<double>(rows_per_model.size());
    std::vector<ProbabilityRow> out(first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        Vec mean(first[i].probs.size(), 0.0);
        for (const auto& model_rows : rows_per_model) {
            for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += model_rows[i].probs[c];
        }
        for (double& p : mean) p *= inv_m;
        out[i] = {first[i].image_id, std::move(mean)};
    }
    return out;
}

StatsReport pseudo_label_stats(const PseudoLabelSet& set,
                               const std::optional<std::map<std::string, int>>& ground_truth) {
    StatsReport report;
    report.total_records = set.records.size();

    std::map<int, ClassStats> per_class;
    std::map<int, std::size_t> correct;
    std::size_t total_correct = 0;
    for (const auto& r : set.records) {
        auto& stats = per_class[r.pseudo_class];
        stats.class_index = r.pseudo_class;
        stats.count++;
        stats.mean_confidence += r.confidence;
        if (ground_truth) {
            auto it = ground_truth->find(r.image_id);
            if (it == ground_truth->end()) {
                throw_input("ground truth is missing image id '" + r.image_id + "'");
            }
            if (it->second < 1 || (set.class_count > 0 && it->second > set.class_count)) {
                throw_input("ground-truth class " + std::to_string(it->second) +
                            " out of range for image '" + r.image_id + "'");
            }
            if (it->second == r.pseudo_class) {
                correct[r.pseudo_class]++;
                total_correct++;
            }
        }
    }
    for (auto& [cls, stats] : per_class) {
        stats.mean_confidence /= static_cast<double>(stats.count);
        if (ground_truth) {
            stats.accuracy = static_cast<double>(correct[cls]) / static_cast<double>(stats.count);
        }
        report.per_class.push_back(stats);
    }
    if (ground_truth && report.total_records > 0) {
        report.overall_accuracy =
            static_cast<double>(total_correct) / static_cast<double>(report.total_records);
    }
    return report;
}

void save_pseudo_label_set(const PseudoLabelSet& set, const std::string& path) {
    if (set.class_count <= 0) throw_config("pseudo-label set has no class count, cannot save");
    check_no_control_chars(set.prompt_template, "prompt template");

    std::ostringstream out;
    out << "upl.pseudo.v1\tstrategy=";
    if (set.strategy == SelectionStrategy::top_k) {
        out << "top_k\tparam=" << set.top_k;
    } else {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", set.threshold);
        out << "threshold\tparam=" << buf;
    }
    out << "\tclasses=" << set.class_count << "\ttemplate=" << set.prompt_template << "\n";

    for (const auto& r : set.records) {
        check_no_control_chars(r.image_id, "image id");
        check_no_control_chars(r.source_tag, "source tag");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", r.confidence);
        out << r.image_id << '\t' << r.pseudo_class << '\t' << buf << '\t' << r.source_tag << "\n";
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw_input("cannot open '" + path + "' for writing");
    file << out.str();
    if (!file) throw_input("failed writing '" + path + "'");
}

PseudoLabelSet load_pseudo_label_set(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw_input("cannot open pseudo-label file '" + path + "'");

    std::string header;
    if (!std::getline(file, header)) throw_corruption("pseudo-label file '" + path + "' is empty");
    auto fields = split_tabs(header);
    if (fields.size() != 5 || fields[0] != "upl.pseudo.v1") {
        throw_corruption("unrecognized pseudo-label header in '" + path + "'");
    }
    auto expect_prefix = [&](const std::string& field, const std::string& prefix) {
        if (field.rfind(prefix, 0) != 0) {
            throw_corruption("malformed pseudo-label header field '" + field + "'");
        }
        return field.substr(prefix.size());
    };

    PseudoLabelSet set;
    std::string strategy = expect_prefix(fields[1], "strategy=");
    std::string param = expect_prefix(fields[2], "param=");
    if (strategy == "top_k") {
        set.strategy = SelectionStrategy::top_k;
        set.top_k = std::stoi(param);
    } else if (strategy == "threshold") {
        set.strategy = SelectionStrategy::threshold;
        set.threshold = std::stod(param);
    } else {
        throw_corruption("unknown selection strategy '" + strategy + "'");
    }
    set.class_count = std::stoi(expect_prefix(fields[3], "classes="));
    set.prompt_template = expect_prefix(fields[4], "template=");

    std::string line;
    while (std::getline(file, line)) {
        if (line.empty()) continue;
        auto cols = split_tabs(line);
        if (cols.size() != 4) throw_corruption("malformed pseudo-label record: '" + line + "'");
        PseudoLabelRecord r;
        r.image_id = cols[0];
        r.pseudo_class = std::stoi(cols[1]);
        r.confidence = std::stod(cols[2]);
        r.source_tag = cols[3];
        set.records.push_back(std::move(r));
    }
    fill_per_class_counts(set);
    return set;
}

} // namespace upl
