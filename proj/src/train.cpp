#include "upl/train.hpp"

#include <algorithm>
#include <cmath>

#include "upl/parallel.hpp"
#include "upl/rng.hpp"

namespace upl {

void TrainConfig::validate() const {
    if (epochs < 1) throw_config("epochs must be >= 1");
    if (batch_size < 1) throw_config("batch_size must be >= 1");
    if (lr < 0.0 || warmup_lr < 0.0) throw_config("learning rates must be nonnegative");
    if (warmup_epochs < 0) throw_config("warmup_epochs must be >= 0");
    if (warmup_epochs >= epochs) throw_config("warmup_epochs must be smaller than epochs");
    if (schedule != "cosine") throw_config("unknown schedule '" + schedule + "' (only cosine)");
}

double lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < config.warmup_epochs) return config.warmup_lr;
    double t = static_cast<double>(epoch - config.warmup_epochs);
    double total = static_cast<double>(config.epochs - config.warmup_epochs);
    return config.lr * 0.5 * (1.0 + std::cos(M_PI * t / total));
}

LossGrad loss_and_gradient(const PromptRepresentation& prompt, std::span<const Vec> class_tokens,
                           std::span<const TrainSample> batch, const FrozenEncoderPair& encoder) {
    if (class_tokens.empty()) throw_config("loss requires at least one class");
    if (batch.empty()) throw_input("loss requires a nonempty batch");

    std::size_t n_classes = class_tokens.size();
    double tau = encoder.temperature();

    // The composed sequences and class embeddings depend on V only, so build
    // them once per call and share across the batch.
    std::vector<ComposedPrompt> composed;
    std::vector<Vec> class_embeddings;
    composed.reserve(n_classes);
    class_embeddings.reserve(n_classes);
    for (const Vec& token : class_tokens) {
        composed.push_back(compose_class_prompt(prompt, token));
        class_embeddings.push_back(encoder.encode_text_from_embeddings(composed.back().sequence));
    }

    LossGrad result;
    result.grad = Mat(prompt.dim(), prompt.length());
    double inv_batch = 1.0 / static_cast<double>(batch.size());

    for (const TrainSample& sample : batch) {
        if (sample.label < 1 || sample.label > static_cast<int>(n_classes)) {
            throw_input("training label " + std::to_string(sample.label) + " out of range");
        }
        Vec logits(n_classes);
        for (std::size_t c = 0; c < n_classes; ++c) {
            logits[c] = dot(class_embeddings[c], sample.feature) / tau;
        }
        // log-sum-exp form keeps the loss finite even when softmax saturates
        double max_logit = *std::max_element(logits.begin(), logits.end());
        double sum_exp = 0.0;
        for (double l : logits) sum_exp += std::exp(l - max_logit);
        double log_z = max_logit + std::log(sum_exp);
        result.loss += (log_z - logits[sample.label - 1]) * inv_batch;

        for (std::size_t c = 0; c < n_classes; ++c) {
            double p = std::exp(logits[c] - log_z);
            double coeff = (p - (static_cast<int>(c) + 1 == sample.label ? 1.0 : 0.0)) * inv_batch / tau;
            if (coeff == 0.0) continue;
            Vec grad_embedding(prompt.dim());
            for (std::size_t i = 0; i < prompt.dim(); ++i) {
                grad_embedding[i] = coeff * sample.feature[i];
            }
            auto grad_sequence = encoder.encode_text_backward(composed[c].sequence, grad_embedding);
            for (std::size_t slot = 0; slot < grad_sequence.size(); ++slot) {
                int column = composed[c].column_of_slot[slot];
                if (column < 0) continue; // w_c is fixed
                for (std::size_t i = 0; i < prompt.dim(); ++i) {
                    result.grad.at(i, static_cast<std::size_t>(column)) += grad_sequence[slot][i];
                }
            }
        }
    }
    return result;
}

TrainResult train(PromptRepresentation prompt, const PseudoLabelSet& pseudo_set,
                  const FeatureCache& cache, const FrozenEncoderPair& encoder,
                  const TrainConfig& config, const std::vector<std::string>& class_names) {
    config.validate();
    if (pseudo_set.records.empty()) {
        throw_config("pseudo-label set is empty (threshold selection can produce zero samples); "
                     "nothing to train on");
    }
    if (class_names.empty()) throw_config("training requires the dataset's class names");
    if (pseudo_set.class_count > 0 &&
        pseudo_set.class_count != static_cast<int>(class_names.size())) {
        throw_config("class name list does not match the pseudo-label set's class count");
    }
    if (prompt.dim() != encoder.embed_dim()) {
        throw_config("prompt dimension does not match encoder embedding dimension");
    }

    std::vector<Vec> class_tokens;
    class_tokens.reserve(class_names.size());
    for (const auto& name : class_names) {
        class_tokens.push_back(encoder.class_token_embedding(name));
    }

    std::vector<TrainSample> samples;
    samples.reserve(pseudo_set.records.size());
    for (const auto& record : pseudo_set.records) {
        if (!cache.contains(record.image_id)) {
            throw_input("feature cache is missing image id '" + record.image_id + "'");
        }
        samples.push_back({cache.feature_of(record.image_id), record.pseudo_class});
    }

    TrainState state;
    Rng shuffle_rng(config.seed);
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double lr = lr_at_epoch(config, epoch);
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            // the last incomplete batch is kept: top-K sets are small and
            // dropping remainders could starve whole classes per epoch
            std::size_t end =
                std::min(order.size(), cursor + static_cast<std::size_t>(config.batch_size));
            std::vector<TrainSample> batch;
            batch.reserve(end - cursor);
            for (std::size_t i = cursor; i < end; ++i) batch.push_back(samples[order[i]]);

            LossGrad lg = loss_and_gradient(prompt, class_tokens, batch, encoder);
            epoch_loss += lg.loss * static_cast<double>(batch.size());
            for (std::size_t i = 0; i < prompt.vectors.data.size(); ++i) {
                prompt.vectors.data[i] -= lr * lg.grad.data[i];
            }
            state.step++;
            cursor = end;
        }
        state.epoch = epoch + 1;
        state.current_lr = lr;
        state.loss_history.push_back(epoch_loss / static_cast<double>(samples.size()));
    }
    return {std::move(prompt), std::move(state)};
}

std::vector<TrainResult> train_prompt_bank(const std::vector<std::uint64_t>& seeds,
                                           std::size_t dim, std::size_t length,
                                           ClsPosition position, const PseudoLabelSet& pseudo_set,
                                           const FeatureCache& cache,
                                           const FrozenEncoderPair& encoder,
                                           const TrainConfig& config,
                                           const std::vector<std::string>& class_names, int jobs) {
    if (seeds.empty()) throw_config("prompt bank requires at least one seed");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        for (std::size_t j = i + 1; j < seeds.size(); ++j) {
            if (seeds[i] == seeds[j]) {
                throw_config("duplicate prompt seed " + std::to_string(seeds[i]));
            }
        }
    }
    std::vector<TrainResult> results(seeds.size());
    parallel_for(seeds.size(), jobs, [&](std::size_t i) {
        TrainConfig run_config = config;
        run_config.seed = seeds[i];
        PromptRepresentation prompt = init_prompt(dim, length, position, seeds[i]);
        results[i] = train(std::move(prompt), pseudo_set, cache, encoder, run_config, class_names);
    });
    return results;
}

} // namespace upl
