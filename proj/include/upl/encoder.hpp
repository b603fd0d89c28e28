#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "upl/vecmath.hpp"

namespace upl {

// Unit-norm visual feature keyed by an opaque image id.
struct ImageFeature {
    std::string image_id;
    Vec vector; // length D, unit norm
};

// Image record handed to encode_image. Real adapters would carry pixels;
// the toy backend treats `data` as a raw pre-feature of length D.
struct RawImage {
    std::string id;
    Vec data;
};

// Ordered (token, embedding) table. Tokens are unique; order is the
// tie-break for nearest-word queries.
class VocabularyTable {
public:
    struct Entry {
        std::string token;
        Vec embedding;
    };

    void add(std::string token, Vec embedding);
    bool contains(const std::string& token) const;
    const Vec& embedding_of(const std::string& token) const; // throws lookup error
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    // Closest token strings by edit distance, for lookup-error messages.
    std::vector<std::string> nearest_tokens(const std::string& token, std::size_t count) const;

private:
    std::vector<Entry> entries_;
    std::size_t find(const std::string& token) const; // entries_ index or npos
};

// Frozen two-tower encoder pair. Implementations are immutable after
// construction: every operation is a pure function, safe for concurrent use.
//
// The differentiable surface is encode_text_from_embeddings together with
// encode_text_backward; prompt training relies on that pair and on nothing
// else about the backend.
class FrozenEncoderPair {
public:
    virtual ~FrozenEncoderPair() = default;

    virtual std::size_t embed_dim() const = 0;
    virtual double temperature() const = 0;
    virtual std::string model_tag() const = 0;

    virtual ImageFeature encode_image(const RawImage& image) const = 0;

    // Encodes a hand-crafted prompt string (class name already substituted)
    // into a unit-norm class embedding.
    virtual Vec encode_prompt_text(const std::string& prompt) const = 0;

    // Maps a sequence of word embeddings to a unit-norm class embedding.
    virtual Vec encode_text_from_embeddings(std::span<const Vec> sequence) const = 0;

    // Gradient of the map above: given dL/d(output), returns dL/d(input)
    // for every element of the sequence.
    virtual std::vector<Vec> encode_text_backward(std::span<const Vec> sequence,
                                                  const Vec& grad_output) const = 0;

    // Fixed word embedding of a class name (w_c). Never trainable.
    virtual const Vec& class_token_embedding(const std::string& class_name) const = 0;

    virtual const VocabularyTable& vocabulary() const = 0;

    // Digest of every parameter (weights, vocabulary, temperature). Training
    // must leave this value unchanged.
    virtual std::uint64_t parameter_hash() const = 0;
};

using EncoderPtr = std::shared_ptr<const FrozenEncoderPair>;

// Deterministic seeded toy backend:
//   vision:  f = normalize(W * x),        W a fixed seeded gaussian map
//   text:    g(seq) = normalize(Q * mean(seq)),  Q a fixed seeded orthogonal map
// Identity-map variants exist so tests can pin closed-form outputs.
struct ToyEncoderOptions {
    std::size_t dim = 16;
    std::uint64_t seed = 0;
    // At CLIP's 0.01 the toy softmax saturates (toy cosine gaps are ~10x
    // CLIP's), which starves training of gradient; 0.1 matches CLIP's
    // effective logit scale instead. Tests inject other values freely.
    double temperature = 0.1;
    bool identity_vision = false;
    bool identity_text = false;
    std::vector<std::string> extra_tokens;               // appended to the builtin word list
    std::vector<std::pair<std::string, Vec>> pinned_vocab; // exact embeddings, test setups
};

class ToyEncoder final : public FrozenEncoderPair {
public:
    explicit ToyEncoder(const ToyEncoderOptions& options);

    std::size_t embed_dim() const override { return dim_; }
    double temperature() const override { return temperature_; }
    std::string model_tag() const override { return tag_; }

    ImageFeature encode_image(const RawImage& image) const override;
    Vec encode_prompt_text(const std::string& prompt) const override;
    Vec encode_text_from_embeddings(std::span<const Vec> sequence) const override;
    std::vector<Vec> encode_text_backward(std::span<const Vec> sequence,
                                          const Vec& grad_output) const override;
    const Vec& class_token_embedding(const std::string& class_name) const override;
    const VocabularyTable& vocabulary() const override { return vocab_; }
    std::uint64_t parameter_hash() const override;

    // Inverse rendering helper for synthetic data: a raw image whose encoded
    // feature points along `feature_direction`.
    Vec raw_image_for_feature(const Vec& feature_direction) const;

    // Tokenization used for hand-crafted prompts: lowercase, strip edge
    // punctuation, split on whitespace.
    static std::vector<std::string> tokenize(const std::string& text);

private:
    Vec mean_of(std::span<const Vec> sequence) const;

    std::size_t dim_;
    double temperature_;
    std::uint64_t seed_;
    bool identity_vision_;
    bool identity_text_;
    std::string tag_;
    Mat vision_weights_;  // dim x dim (empty when identity)
    Mat text_weights_;    // dim x dim orthogonal (empty when identity)
    VocabularyTable vocab_;
};

// Builds an encoder from a registry key. Supported keys:
//   "toy:<seed>"          toy backend, D = 16
//   "toy:<seed>:d<dim>"   toy backend with explicit dimension
// `extra_tokens` are added to the backend vocabulary (datasets pass their
// class names so the toy vocabulary can resolve them). Unknown families
// raise a config error.
EncoderPtr make_encoder(const std::string& registry_key,
                        const std::vector<std::string>& extra_tokens = {});

} // namespace upl
