#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "upl/encoder.hpp"
#include "upl/vecmath.hpp"

namespace upl {

// Placeholder literal used by the registered pseudo-labeling templates,
// e.g. "a photo of a [CLASS].".
inline constexpr const char* kClassPlaceholder = "[CLASS]";

// Throws a config error unless the template contains exactly one placeholder.
void validate_prompt_template(const std::string& prompt_template);

std::string substitute_class_token(const std::string& prompt_template,
                                   const std::string& class_name);

// Softmax row over C classes for one image; probs[c-1] is the probability of
// class c (class indices are 1-based in every record and file).
struct ProbabilityRow {
    std::string image_id;
    Vec probs;
};

struct PseudoLabelRecord {
    std::string image_id;
    int pseudo_class = 0;    // argmax class, in [1, C]
    double confidence = 0.0; // probs[pseudo_class]
    std::string source_tag;  // model_tag or "ensemble(M=...)"
};

enum class SelectionStrategy { top_k, threshold };

// Selected training corpus. class_count and prompt_template are carried for
// the record-file header; selection ops leave them for the caller to fill.
struct PseudoLabelSet {
    std::vector<PseudoLabelRecord> records;
    SelectionStrategy strategy = SelectionStrategy::top_k;
    int top_k = 0;           // valid when strategy == top_k
    double threshold = 0.0;  // valid when strategy == threshold
    int class_count = 0;
    std::string prompt_template;
    std::map<int, std::size_t> per_class_counts;
};

struct ClassStats {
    int class_index = 0;
    std::size_t count = 0;
    double mean_confidence = 0.0;
    std::optional<double> accuracy; // present when ground truth was given
};

struct StatsReport {
    std::vector<ClassStats> per_class;
    std::size_t total_records = 0;
    std::optional<double> overall_accuracy;
};

// Zero-shot class probabilities from a hand-crafted prompt: one row per
// feature, row[c] = softmax_c(<f_c_text, f_image> / tau). Class embeddings
// are built once per call. `jobs` caps the worker threads; output order is
// always the input feature order.
std::vector<ProbabilityRow> zero_shot_probs(const FrozenEncoderPair& encoder,
                                            const std::string& prompt_template,
                                            const std::vector<std::string>& class_names,
                                            std::span<const ImageFeature> features,
                                            int jobs = 1);

// Argmax per row; ties go to the lowest class index.
std::vector<PseudoLabelRecord> assign_pseudo_labels(std::span<const ProbabilityRow> rows,
                                                    const std::string& source_tag);

// Keeps the K most confident records per class (all of them when a class has
// fewer). Output order: class index, confidence descending, image_id
// ascending.
PseudoLabelSet select_top_k(std::span<const PseudoLabelRecord> records, int k);

// Keeps records with confidence strictly greater than t. An empty result is
// legal here; the training layer rejects it.
PseudoLabelSet select_threshold(std::span<const PseudoLabelRecord> records, double t);

// Elementwise mean of per-model probability rows. All lists must cover the
// same image ids in the same order.
std::vector<ProbabilityRow> ensemble_probs(
    const std::vector<std::vector<ProbabilityRow>>& rows_per_model);

// Per-class counts and mean confidence; accuracy columns when ground truth
// (image_id -> 1-based class) is supplied.
StatsReport pseudo_label_stats(const PseudoLabelSet& set,
                               const std::optional<std::map<std::string, int>>& ground_truth);

// Line-delimited record file with a header carrying strategy, K or t, C and
// the template. Round-trips bit-exactly except confidence, which goes
// through decimal text at 9 significant digits.
void save_pseudo_label_set(const PseudoLabelSet& set, const std::string& path);
PseudoLabelSet load_pseudo_label_set(const std::string& path);

} // namespace upl
