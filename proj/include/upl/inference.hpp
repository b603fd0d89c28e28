#pragma once

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "upl/encoder.hpp"
#include "upl/prompt.hpp"
#include "upl/pseudo_label.hpp"

namespace upl {

// Class embeddings generated once from a trained prompt and reused for every
// test image (text-side cost is O(C), not O(C * images)).
struct ClassEmbeddingBank {
    std::string prompt_id;
    std::vector<Vec> embeddings; // one unit-norm vector per class, index order
    ClsPosition cls_position = ClsPosition::end;
};

ClassEmbeddingBank build_class_embeddings(const PromptRepresentation& prompt,
                                          const std::vector<std::string>& class_names,
                                          const FrozenEncoderPair& encoder);

// Bank of hand-crafted prompt embeddings, for the zero-shot baseline.
ClassEmbeddingBank build_zero_shot_embeddings(const std::string& prompt_template,
                                              const std::vector<std::string>& class_names,
                                              const FrozenEncoderPair& encoder);

// Softmax of scaled cosine similarities; argmax is the predicted class.
ProbabilityRow predict(const ClassEmbeddingBank& bank, const ImageFeature& feature, double tau);

// Mean of the per-bank probability rows (probabilities, not logits).
ProbabilityRow predict_ensemble(std::span<const ClassEmbeddingBank> banks,
                                const ImageFeature& feature, double tau);

struct EvalRow {
    int class_index = 0;
    std::string class_name;
    std::size_t n_test = 0;
    std::size_t n_correct = 0;
    double accuracy = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> per_class; // class index order, one row per class
    std::size_t total = 0;
    std::size_t correct = 0;
    double overall_accuracy = 0.0;
};

// Top-1 accuracy of the (possibly single-bank) ensemble over the test
// features. Ground truth must cover every feature id.
EvalReport evaluate(std::span<const ClassEmbeddingBank> banks,
                    std::span<const ImageFeature> test_features,
                    const std::map<std::string, int>& ground_truth,
                    const std::vector<std::string>& class_names, double tau, int jobs = 1);

// CSV with columns (class_index, class_name, n_test, n_correct, accuracy)
// plus a trailing summary row.
void save_eval_report_csv(const EvalReport& report, const std::string& path);
EvalReport load_eval_report_csv(const std::string& path);

void print_eval_report(const EvalReport& report, std::ostream& out);

} // namespace upl
