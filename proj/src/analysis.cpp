#include "upl/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace upl {

namespace {

std::ofstream open_for_write(const std::string& path) {
    namespace fs = std::filesystem;
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw_input("cannot open '" + path + "' for writing");
    return file;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

} // namespace

std::vector<PerClassCurveRow> per_class_curves(const PseudoLabelSet& set,
                                               const std::map<std::string, int>& ground_truth,
                                               const std::vector<std::string>& class_names) {
    if (ground_truth.empty()) throw_config("per-class curves require ground truth");
    if (class_names.empty()) throw_config("per-class curves require class names");

    StatsReport stats = pseudo_label_stats(set, ground_truth);
    std::vector<PerClassCurveRow> rows(class_names.size());
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        rows[c].class_index = static_cast<int>(c) + 1;
        rows[c].class_name = class_names[c];
    }
    for (const auto& s : stats.per_class) {
        if (s.class_index < 1 || s.class_index > static_cast<int>(class_names.size())) {
            throw_input("pseudo class " + std::to_string(s.class_index) + " out of range");
        }
        auto& row = rows[static_cast<std::size_t>(s.class_index) - 1];
        row.count = s.count;
        row.mean_confidence = s.mean_confidence;
        row.accuracy = s.accuracy.value_or(0.0);
    }
    return rows;
}

void save_per_class_curves_csv(const std::vector<PerClassCurveRow>& rows,
                               const std::string& path) {
    auto file = open_for_write(path);
    file << "class_index,class_name,count,mean_confidence,accuracy\n";
    for (const auto& r : rows) {
        file << r.class_index << ',' << r.class_name << ',' << r.count << ','
             << fmt(r.mean_confidence) << ',' << fmt(r.accuracy) << "\n";
    }
}

namespace {

// Per-class pseudo-label accuracy over [1, C]; classes without records get 0.
std::vector<double> per_class_accuracy(const PseudoLabelSet& set,
                                       const std::map<std::string, int>& ground_truth,
                                       std::size_t n_classes) {
    StatsReport stats = pseudo_label_stats(set, ground_truth);
    std::vector<double> acc(n_classes, 0.0);
    for (const auto& s : stats.per_class) {
        if (s.class_index >= 1 && s.class_index <= static_cast<int>(n_classes)) {
            acc[static_cast<std::size_t>(s.class_index) - 1] = s.accuracy.value_or(0.0);
        }
    }
    return acc;
}

} // namespace

ModelGapReport model_gap_report(
    const std::vector<std::pair<std::string, PseudoLabelSet>>& sets_by_tag,
    const std::map<std::string, int>& ground_truth, const std::string& baseline_tag) {
    if (sets_by_tag.size() < 2) throw_config("model gap report needs at least two model tags");

    std::size_t n_classes = 0;
    const PseudoLabelSet* baseline = nullptr;
    for (const auto& [tag, set] : sets_by_tag) {
        n_classes = std::max<std::size_t>(n_classes, static_cast<std::size_t>(set.class_count));
        if (tag == baseline_tag) baseline = &set;
    }
    if (!baseline) throw_config("baseline tag '" + baseline_tag + "' not among the model tags");
    if (n_classes == 0) throw_config("pseudo-label sets carry no class count");

    ModelGapReport report;
    report.baseline_tag = baseline_tag;
    auto base_acc = per_class_accuracy(*baseline, ground_truth, n_classes);

    std::vector<std::vector<double>> model_accs;
    for (const auto& [tag, set] : sets_by_tag) {
        if (tag == baseline_tag) continue;
        report.model_tags.push_back(tag);
        model_accs.push_back(per_class_accuracy(set, ground_truth, n_classes));
    }

    report.rows.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto& row = report.rows[c];
        row.class_index = static_cast<int>(c) + 1;
        row.baseline_accuracy = base_acc[c];
        for (const auto& acc : model_accs) {
            row.accuracies.push_back(acc[c]);
            row.gaps.push_back(acc[c] - base_acc[c]);
        }
    }
    return report;
}

void save_model_gap_csv(const ModelGapReport& report, const std::string& path) {
    auto file = open_for_write(path);
    file << "class_index,baseline(" << report.baseline_tag << ")";
    for (const auto& tag : report.model_tags) file << ',' << tag << ",gap(" << tag << ')';
    file << "\n";
    for (const auto& row : report.rows) {
        file << row.class_index << ',' << fmt(row.baseline_accuracy);
        for (std::size_t m = 0; m < row.accuracies.size(); ++m) {
            file << ',' << fmt(row.accuracies[m]) << ',' << fmt(row.gaps[m]);
        }
        file << "\n";
    }
}

std::vector<TransferImprovementRow> transfer_improvement_report(const EvalReport& trained_eval,
                                                                const EvalReport& zeroshot_eval,
                                                                const StatsReport& pseudo_stats) {
    if (trained_eval.per_class.size() != zeroshot_eval.per_class.size()) {
        throw_input("trained and zero-shot reports cover different class sets");
    }
    std::vector<TransferImprovementRow> rows;
    rows.reserve(trained_eval.per_class.size());
    for (std::size_t c = 0; c < trained_eval.per_class.size(); ++c) {
        const auto& trained = trained_eval.per_class[c];
        const auto& zeroshot = zeroshot_eval.per_class[c];
        if (trained.class_index != zeroshot.class_index ||
            trained.class_name != zeroshot.class_name) {
            throw_input("trained and zero-shot reports disagree at class index " +
                        std::to_string(trained.class_index));
        }
        TransferImprovementRow row;
        row.class_index = trained.class_index;
        row.class_name = trained.class_name;
        row.trained_accuracy = trained.accuracy;
        row.zeroshot_accuracy = zeroshot.accuracy;
        row.improvement = trained.accuracy - zeroshot.accuracy;
        for (const auto& s : pseudo_stats.per_class) {
            if (s.class_index == trained.class_index) {
                row.pseudo_accuracy = s.accuracy.value_or(0.0);
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void save_transfer_improvement_csv(const std::vector<TransferImprovementRow>& rows,
                                   const std::string& path) {
    auto file = open_for_write(path);
    file << "class_index,class_name,pseudo_accuracy,trained_accuracy,zeroshot_accuracy,"
            "improvement\n";
    for (const auto& r : rows) {
        file << r.class_index << ',' << r.class_name << ',' << fmt(r.pseudo_accuracy) << ','
             << fmt(r.trained_accuracy) << ',' << fmt(r.zeroshot_accuracy) << ','
             << fmt(r.improvement) << "\n";
    }
}

std::vector<NearestWord> nearest_words(const PromptRepresentation& prompt,
                                       const VocabularyTable& vocab) {
    if (vocab.size() == 0) throw_config("nearest-word search requires a nonempty vocabulary");
    std::vector<NearestWord> out;
    out.reserve(prompt.length());
    for (std::size_t l = 0; l < prompt.length(); ++l) {
        Vec v = prompt.vectors.col(l);
        std::size_t best = 0;
        double best_distance = 0.0;
        bool first = true;
        for (std::size_t i = 0; i < vocab.entries().size(); ++i) {
            const Vec& e = vocab.entries()[i].embedding;
            if (e.size() != v.size()) throw_input("vocabulary dimension mismatch");
            double d2 = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) {
                double diff = v[k] - e[k];
                d2 += diff * diff;
            }
            if (first || d2 < best_distance) { // strict <: ties keep the earlier entry
                best = i;
                best_distance = d2;
                first = false;
            }
        }
        out.push_back({l, vocab.entries()[best].token, std::sqrt(best_distance)});
    }
    return out;
}

void save_nearest_words_csv(const std::vector<NearestWord>& words, const std::string& path) {
    auto file = open_for_write(path);
    file << "context_index,token,distance\n";
    for (const auto& w : words) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", w.distance);
        file << w.context_index + 1 << ',' << w.token << ',' << buf << "\n";
    }
}

std::string format_nearest_words_table(const std::vector<NearestWord>& words) {
    std::ostringstream out;
    for (const auto& w : words) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", w.distance);
        out << w.context_index + 1 << "  " << w.token << "  " << buf << "\n";
    }
    return out.str();
}

void write_run_manifest(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& entries) {
    auto file = open_for_write(path);
    for (const auto& [key, value] : entries) {
        file << key << '=' << value << "\n";
    }
}

std::optional<double> zero_shot_reference_accuracy(const std::string& dataset_name) {
    static const std::map<std::string, double> kReference = {
        {"ImageNet", 60.34},  {"Caltech101", 86.09}, {"DTD", 41.61},
        {"EuroSAT", 38.23},   {"FGVCAircraft", 16.92}, {"Food101", 77.33},
        {"Flowers102", 66.06}, {"OxfordPets", 85.83}, {"SUN397", 60.18},
        {"StanfordCars", 55.64}, {"UCF101", 62.70},
    };
    auto it = kReference.find(dataset_name);
    if (it == kReference.end()) return std::nullopt;
    return it->second;
}

} // namespace upl
