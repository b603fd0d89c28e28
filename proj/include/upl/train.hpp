#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "upl/encoder.hpp"
#include "upl/feature_cache.hpp"
#include "upl/prompt.hpp"
#include "upl/pseudo_label.hpp"

namespace upl {

// Plain SGD (no momentum, no weight decay) with a fixed warmup rate followed
// by per-epoch cosine decay.
struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double lr = 0.002;
    double warmup_lr = 1e-5;
    int warmup_epochs = 1;
    std::string schedule = "cosine";
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainState {
    int epoch = 0;
    int step = 0; // total batch updates
    double current_lr = 0.0;
    std::vector<double> loss_history; // per-epoch mean sample loss
};

// Closed-form learning rate for a 0-based epoch index:
//   epoch <  warmup_epochs:  warmup_lr
//   epoch >= warmup_epochs:  lr * 0.5 * (1 + cos(pi * t / T))
// with t = epoch - warmup_epochs and T = epochs - warmup_epochs.
double lr_at_epoch(const TrainConfig& config, int epoch);

struct TrainSample {
    Vec feature;   // unit-norm image feature
    int label = 0; // pseudo class in [1, C]
};

// Mean cross-entropy of class_probs against the labels over a batch, plus
// its analytic gradient with respect to V. Exposed so gradient checks can
// compare against central finite differences.
struct LossGrad {
    double loss = 0.0;
    Mat grad; // D x L
};
LossGrad loss_and_gradient(const PromptRepresentation& prompt, std::span<const Vec> class_tokens,
                           std::span<const TrainSample> batch, const FrozenEncoderPair& encoder);

struct TrainResult {
    PromptRepresentation prompt;
    TrainState state;
};

// Optimizes V on the selected pseudo-labeled samples; class_names (in class
// index order) resolve to the fixed w_c tokens. Only the prompt changes; the
// encoder is frozen. Batches are shuffled with config.seed and the last
// incomplete batch is kept, so the result is bit-reproducible for a fixed
// (seed, config, backend, data) tuple.
TrainResult train(PromptRepresentation prompt, const PseudoLabelSet& pseudo_set,
                  const FeatureCache& cache, const FrozenEncoderPair& encoder,
                  const TrainConfig& config, const std::vector<std::string>& class_names);

// N independent runs, one per seed (seed i initializes prompt i and drives
// its batch shuffling). Seeds must be distinct. Runs are independent and may
// execute concurrently; results keep seed order.
std::vector<TrainResult> train_prompt_bank(const std::vector<std::uint64_t>& seeds,
                                           std::size_t dim, std::size_t length,
                                           ClsPosition position, const PseudoLabelSet& pseudo_set,
                                           const FeatureCache& cache,
                                           const FrozenEncoderPair& encoder,
                                           const TrainConfig& config,
                                           const std::vector<std::string>& class_names,
                                           int jobs = 1);

} // namespace upl
