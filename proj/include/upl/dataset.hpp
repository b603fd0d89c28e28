#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "upl/encoder.hpp"

namespace upl {

enum class Split { train, test };

std::string to_string(Split split);
Split split_from_string(const std::string& name);

// Dataset registry entry plus (for loaded/synthetic datasets) the concrete
// id lists. Registered real datasets carry only metadata until a layout
// adapter resolves files under the data root; the core ships the synthetic
// dataset only. Ground truth covers test ids always and train ids when
// available; training never reads it.
struct DatasetSpec {
    std::string name;
    std::string pseudo_prompt_template;
    std::size_t class_count = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;

    std::vector<std::string> class_names;              // index c-1 -> class c
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::map<std::string, int> ground_truth;           // image id -> class in [1, C]

    const std::vector<std::string>& ids_for(Split split) const {
        return split == Split::train ? train_ids : test_ids;
    }
};

// The 11 benchmark datasets with class/split sizes and the hand-crafted
// pseudo-labeling prompt for each. Metadata only; file paths resolve lazily
// from a data root.
std::vector<DatasetSpec> register_builtin_datasets();

// Registry lookup by name (lookup error when unknown).
DatasetSpec builtin_dataset(const std::string& name);

// Seeded synthetic dataset aligned with a toy encoder pair. Class clusters
// sit on members of the shared-context prompt family the learner optimizes
// over, so a trained context can separate them cleanly; every feature also
// leans toward the first class's hand-crafted prompt embedding, giving the
// zero-shot teacher the biased class preference pretrained encoders show in
// transfer. Class-balanced top-K selection recovers accurate per-class cores
// from that skew, which is what lets training beat the teacher.
struct SyntheticDatasetConfig {
    std::uint64_t seed = 0;
    std::size_t class_count = 3;
    std::size_t train_per_class = 40;
    std::size_t test_per_class = 40;
    double feature_noise = 0.15;   // stddev of the per-coordinate cluster noise
    double template_weight = 0.35; // how much of the template's context sum survives
    double prompt_shift = 1.0;     // magnitude of the random context offset
    double dominant_lean = 2.0;    // pull of every feature toward class 1's prompt
    std::string prompt_template = "a photo of a [CLASS].";
};

struct SyntheticDataset {
    DatasetSpec spec;
    std::map<std::string, RawImage> images; // raw inputs for the toy vision encoder
};

// Class names the synthetic generator will use for a given class count;
// callers add these to the toy encoder vocabulary before generating.
std::vector<std::string> synthetic_class_names(std::size_t class_count);

SyntheticDataset make_synthetic_dataset(const ToyEncoder& encoder,
                                        const SyntheticDatasetConfig& config);

// Parses "toy:<seed>" or "toy:<seed>:c<classes>" dataset keys used by the
// CLI; returns false when the name does not look synthetic.
bool parse_synthetic_dataset_key(const std::string& name, SyntheticDatasetConfig& config);

} // namespace upl
