#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "upl/encoder.hpp"
#include "upl/inference.hpp"
#include "upl/prompt.hpp"
#include "upl/pseudo_label.hpp"

namespace upl {

// Per-class pseudo-label quality: count, mean confidence and accuracy for
// every class in [1, C]. Requires ground truth.
struct PerClassCurveRow {
    int class_index = 0;
    std::string class_name;
    std::size_t count = 0;
    double mean_confidence = 0.0;
    double accuracy = 0.0; // 0 when the class has no selected records
};

std::vector<PerClassCurveRow> per_class_curves(const PseudoLabelSet& set,
                                               const std::map<std::string, int>& ground_truth,
                                               const std::vector<std::string>& class_names);

void save_per_class_curves_csv(const std::vector<PerClassCurveRow>& rows,
                               const std::string& path);

// Per-class pseudo-label accuracy difference of each model against a named
// baseline model.
struct ModelGapReport {
    std::string baseline_tag;
    std::vector<std::string> model_tags; // baseline excluded, input order
    struct Row {
        int class_index = 0;
        double baseline_accuracy = 0.0;
        std::vector<double> accuracies; // aligned with model_tags
        std::vector<double> gaps;       // accuracy - baseline_accuracy
    };
    std::vector<Row> rows;
};

ModelGapReport model_gap_report(
    const std::vector<std::pair<std::string, PseudoLabelSet>>& sets_by_tag,
    const std::map<std::string, int>& ground_truth, const std::string& baseline_tag);

void save_model_gap_csv(const ModelGapReport& report, const std::string& path);

// Per-class transfer improvement (trained minus zero-shot accuracy) next to
// the pseudo-label accuracy that produced the training set.
struct TransferImprovementRow {
    int class_index = 0;
    std::string class_name;
    double pseudo_accuracy = 0.0;
    double trained_accuracy = 0.0;
    double zeroshot_accuracy = 0.0;
    double improvement = 0.0;
};

std::vector<TransferImprovementRow> transfer_improvement_report(const EvalReport& trained_eval,
                                                                const EvalReport& zeroshot_eval,
                                                                const StatsReport& pseudo_stats);

void save_transfer_improvement_csv(const std::vector<TransferImprovementRow>& rows,
                                   const std::string& path);

// Nearest vocabulary word (Euclidean distance) for each of the L context
// vectors; ties break toward the earlier vocabulary entry.
struct NearestWord {
    std::size_t context_index = 0; // 0-based column of V
    std::string token;
    double distance = 0.0;
};

std::vector<NearestWord> nearest_words(const PromptRepresentation& prompt,
                                       const VocabularyTable& vocab);

void save_nearest_words_csv(const std::vector<NearestWord>& words, const std::string& path);

// Appendix-style rendering: one "token  distance" row per context vector,
// distances at 2 decimals.
std::string format_nearest_words_table(const std::vector<NearestWord>& words);

// Flat key=value run manifest (sorted writes happen in caller order).
void write_run_manifest(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& entries);

// Published zero-shot top-1 accuracy (percent, prompt-engineered) of the
// frozen RN50 two-tower baseline on the 11 benchmark datasets; reports quote
// deltas against these reference constants.
std::optional<double> zero_shot_reference_accuracy(const std::string& dataset_name);

} // namespace upl
