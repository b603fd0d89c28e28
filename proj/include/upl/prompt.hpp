#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "upl/encoder.hpp"
#include "upl/pseudo_label.hpp"
#include "upl/vecmath.hpp"

namespace upl {

// Where the fixed class-token embedding w_c is inserted into the context.
enum class ClsPosition { frontal, middle, end };

std::string to_string(ClsPosition position);
ClsPosition cls_position_from_string(const std::string& name);

// The learnable context V: a D x L matrix whose columns are context vectors
// in word-embedding space, shared by every class.
struct PromptRepresentation {
    Mat vectors; // D rows, L columns
    ClsPosition cls_position = ClsPosition::end;
    std::uint64_t seed = 0;

    std::size_t dim() const { return vectors.rows; }
    std::size_t length() const { return vectors.cols; }
};

// V entries drawn i.i.d. from N(0, 0.02^2); deterministic for a fixed seed.
PromptRepresentation init_prompt(std::size_t dim, std::size_t length, ClsPosition position,
                                 std::uint64_t seed);

// A composed per-class prompt sequence of length L+1. column_of_slot maps a
// sequence slot back to its V column (-1 marks the class-token slot, which
// receives no gradient).
struct ComposedPrompt {
    std::vector<Vec> sequence;
    std::vector<int> column_of_slot;
    std::size_t cls_slot = 0;
};

// end:     [v1 .. vL, w_c]
// frontal: [w_c, v1 .. vL]
// middle:  [v1 .. v_ceil(L/2), w_c, rest]
ComposedPrompt compose_class_prompt(const PromptRepresentation& prompt, const Vec& class_token);

// Class probabilities for one image feature:
// p_c = softmax_c(<g(V_c), f> / tau). Differentiable with respect to V only;
// class_tokens are the fixed w_c embeddings in class-index order.
ProbabilityRow class_probs(const PromptRepresentation& prompt, std::span<const Vec> class_tokens,
                           const ImageFeature& feature, const FrozenEncoderPair& encoder);

// Prompt file: text header (format version, D, L, cls_position, seed)
// followed by the V matrix as row-major little-endian 8-byte reals. Exact
// round-trip.
void save_prompt(const PromptRepresentation& prompt, const std::string& path);
PromptRepresentation load_prompt(const std::string& path);

} // namespace upl
