#include "upl/prompt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "upl/rng.hpp"

namespace upl {

namespace {

constexpr double kInitStddev = 0.02;

void write_u64_le(std::ostream& out, std::uint64_t v) {
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

} // namespace

std::string to_string(ClsPosition position) {
    switch (position) {
        case ClsPosition::frontal: return "frontal";
        case ClsPosition::middle: return "middle";
        case ClsPosition::end: return "end";
    }
    throw_config("invalid cls position value");
}

ClsPosition cls_position_from_string(const std::string& name) {
    if (name == "frontal") return ClsPosition::frontal;
    if (name == "middle") return ClsPosition::middle;
    if (name == "end") return ClsPosition::end;
    throw_config("unknown cls position '" + name + "' (expected frontal, middle or end)");
}

PromptRepresentation init_prompt(std::size_t dim, std::size_t length, ClsPosition position,
                                 std::uint64_t seed) {
    if (dim == 0 || length == 0) throw_config("prompt dimensions must be positive");
    PromptRepresentation prompt;
    prompt.vectors = Mat(dim, length);
    prompt.cls_position = position;
    prompt.seed = seed;
    Rng rng(seed);
    for (double& x : prompt.vectors.data) x = kInitStddev * rng.next_gaussian();
    return prompt;
}

ComposedPrompt compose_class_prompt(const PromptRepresentation& prompt, const Vec& class_token) {
    if (class_token.size() != prompt.dim()) {
        throw_input("class token embedding has dimension " + std::to_string(class_token.size()) +
                    ", prompt expects " + std::to_string(prompt.dim()));
    }
    std::size_t length = prompt.length();
    std::size_t cls_slot = 0;
    switch (prompt.cls_position) {
        case ClsPosition::end: cls_slot = length; break;
        case ClsPosition::frontal: cls_slot = 0; break;
        case ClsPosition::middle: cls_slot = (length + 1) / 2; break; // after ceil(L/2) vectors
    }

    ComposedPrompt out;
    out.cls_slot = cls_slot;
    out.sequence.reserve(length + 1);
    out.column_of_slot.reserve(length + 1);
    std::size_t column = 0;
    for (std::size_t slot = 0; slot <= length; ++slot) {
        if (slot == cls_slot) {
            out.sequence.push_back(class_token);
            out.column_of_slot.push_back(-1);
        } else {
            out.sequence.push_back(prompt.vectors.col(column));
            out.column_of_slot.push_back(static_cast<int>(column));
            ++column;
        }
    }
    return out;
}

ProbabilityRow class_probs(const PromptRepresentation& prompt, std::span<const Vec> class_tokens,
                           const ImageFeature& feature, const FrozenEncoderPair& encoder) {
    if (class_tokens.empty()) throw_config("class_probs requires at least one class");
    double tau = encoder.temperature();
    Vec logits(class_tokens.size());
    for (std::size_t c = 0; c < class_tokens.size(); ++c) {
        ComposedPrompt composed = compose_class_prompt(prompt, class_tokens[c]);
        Vec embedding = encoder.encode_text_from_embeddings(composed.sequence);
        logits[c] = dot(embedding, feature.vector) / tau;
    }
    return {feature.image_id, softmax(logits)};
}

void save_prompt(const PromptRepresentation& prompt, const std::string& path) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw_input("cannot open '" + path + "' for writing");
    file << "upl.prompt.v1\n"
         << "dim=" << prompt.dim() << "\n"
         << "length=" << prompt.length() << "\n"
         << "cls_position=" << to_string(prompt.cls_position) << "\n"
         << "seed=" << prompt.seed << "\n"
         << "data\n";
    for (double x : prompt.vectors.data) {
        write_u64_le(file, std::bit_cast<std::uint64_t>(x));
    }
    if (!file) throw_input("failed writing '" + path + "'");
}

PromptRepresentation load_prompt(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw_input("cannot open prompt file '" + path + "'");

    auto read_line = [&](const std::string& what) {
        std::string line;
        if (!std::getline(file, line)) throw_corruption("prompt file '" + path + "' truncated at " + what);
        return line;
    };
    auto value_of = [&](const std::string& line, const std::string& key) {
        if (line.rfind(key + "=", 0) != 0) {
            throw_corruption("prompt file '" + path + "': expected '" + key + "=', got '" + line + "'");
        }
        return line.substr(key.size() + 1);
    };

    if (read_line("magic") != "upl.prompt.v1") {
        throw_corruption("'" + path + "' is not a prompt file");
    }
    std::size_t dim = std::stoull(value_of(read_line("dim"), "dim"));
    std::size_t length = std::stoull(value_of(read_line("length"), "length"));
    ClsPosition position = cls_position_from_string(value_of(read_line("cls_position"), "cls_position"));
    std::uint64_t seed = std::stoull(value_of(read_line("seed"), "seed"));
    if (read_line("data marker") != "data") {
        throw_corruption("prompt file '" + path + "': missing data marker");
    }

    PromptRepresentation prompt;
    prompt.vectors = Mat(dim, length);
    prompt.cls_position = position;
    prompt.seed = seed;
    for (double& x : prompt.vectors.data) {
        x = std::bit_cast<double>(read_u64_le(file));
        if (!file) throw_corruption("prompt file '" + path + "': matrix payload truncated");
    }
    return prompt;
}

} // namespace upl
