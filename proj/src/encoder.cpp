#include "upl/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "upl/hash.hpp"
#include "upl/rng.hpp"

namespace upl {

namespace {

// Words appearing in the registered pseudo-labeling templates, plus filler so
// nearest-word tables and lookup suggestions have material to work with.
const char* kBuiltinTokens[] = {
    "a", "photo", "of", "person", "doing", "type", "pet", "flower", "food",
    "aircraft", "centered", "satellite", "texture", "the", "an", "on", "in",
    "with", "and", "or", "is", "at", "it", "this", "that", "small", "large",
    "bright", "dark", "close", "up", "view", "image", "picture", "shot",
    "scene", "object", "kind", "style", "pattern", "detail", "background",
    "new", "old", "red", "blue", "green", "round", "flat", "wild",
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix-style avalanche so token streams are independent of each other
    // and of the weight streams.
    std::uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

Vec token_embedding(std::uint64_t seed, const std::string& token, std::size_t dim) {
    Rng rng(mix_seed(seed, fnv1a(token)));
    Vec v = rng.gaussian_vec(dim);
    normalize(v);
    return v;
}

Mat random_gaussian_matrix(std::uint64_t seed, std::size_t dim) {
    Rng rng(mix_seed(seed, fnv1a("vision-weights")));
    Mat m(dim, dim);
    for (double& x : m.data) x = rng.next_gaussian() / std::sqrt(static_cast<double>(dim));
    return m;
}

// Random orthogonal map via Gram-Schmidt on a gaussian matrix. Rows are the
// orthonormal basis, so Q * x is computed with matvec.
Mat random_orthogonal_matrix(std::uint64_t seed, std::size_t dim) {
    Rng rng(mix_seed(seed, fnv1a("text-weights")));
    Mat q(dim, dim);
    for (std::size_t r = 0; r < dim; ++r) {
        Vec row = rng.gaussian_vec(dim);
        for (std::size_t prev = 0; prev < r; ++prev) {
            double proj = 0.0;
            for (std::size_t c = 0; c < dim; ++c) proj += row[c] * q.at(prev, c);
            for (std::size_t c = 0; c < dim; ++c) row[c] -= proj * q.at(prev, c);
        }
        normalize(row);
        for (std::size_t c = 0; c < dim; ++c) q.at(r, c) = row[c];
    }
    return q;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

} // namespace

void VocabularyTable::add(std::string token, Vec embedding) {
    if (contains(token)) throw_config("duplicate vocabulary token: " + token);
    entries_.push_back({std::move(token), std::move(embedding)});
}

std::size_t VocabularyTable::find(const std::string& token) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].token == token) return i;
    }
    return static_cast<std::size_t>(-1);
}

bool VocabularyTable::contains(const std::string& token) const {
    return find(token) != static_cast<std::size_t>(-1);
}

const Vec& VocabularyTable::embedding_of(const std::string& token) const {
    std::size_t i = find(token);
    if (i == static_cast<std::size_t>(-1)) {
        std::ostringstream msg;
        msg << "unknown vocabulary token '" << token << "'";
        auto near = nearest_tokens(token, 3);
        if (!near.empty()) {
            msg << "; nearest tokens:";
            for (const auto& t : near) msg << " '" << t << "'";
        }
        throw_lookup(msg.str());
    }
    return entries_[i].embedding;
}

std::vector<std::string> VocabularyTable::nearest_tokens(const std::string& token,
                                                         std::size_t count) const {
    std::vector<std::pair<std::size_t, std::size_t>> scored; // (distance, index)
    scored.reserve(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        scored.emplace_back(edit_distance(token, entries_[i].token), i);
    }
    std::sort(scored.begin(), scored.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < scored.size() && i < count; ++i) {
        out.push_back(entries_[scored[i].second].token);
    }
    return out;
}

ToyEncoder::ToyEncoder(const ToyEncoderOptions& options)
    : dim_(options.dim),
      temperature_(options.temperature),
      seed_(options.seed),
      identity_vision_(options.identity_vision),
      identity_text_(options.identity_text) {
    if (dim_ == 0) throw_config("toy encoder dimension must be positive");
    if (!(temperature_ > 0.0)) throw_config("encoder temperature must be positive");

    std::ostringstream tag;
    tag << "toy";
    if (identity_vision_) tag << "-idv";
    if (identity_text_) tag << "-idt";
    tag << ":" << seed_ << ":d" << dim_;
    tag_ = tag.str();

    if (!identity_vision_) vision_weights_ = random_gaussian_matrix(seed_, dim_);
    if (!identity_text_) text_weights_ = random_orthogonal_matrix(seed_, dim_);

    for (const char* token : kBuiltinTokens) {
        vocab_.add(token, token_embedding(seed_, token, dim_));
    }
    for (const std::string& token : options.extra_tokens) {
        if (!vocab_.contains(token)) {
            vocab_.add(token, token_embedding(seed_, token, dim_));
        }
    }
    for (const auto& [token, embedding] : options.pinned_vocab) {
        if (embedding.size() != dim_) {
            throw_config("pinned vocabulary embedding for '" + token + "' has wrong dimension");
        }
        if (vocab_.contains(token)) throw_config("pinned token collides with vocabulary: " + token);
        vocab_.add(token, embedding);
    }
}

ImageFeature ToyEncoder::encode_image(const RawImage& image) const {
    if (image.data.size() != dim_) {
        throw_config("image '" + image.id + "' has dimension " +
                     std::to_string(image.data.size()) + ", encoder expects " +
                     std::to_string(dim_));
    }
    Vec f = identity_vision_ ? image.data : matvec(vision_weights_, image.data);
    double n = norm2(f);
    if (!(n > 1e-300)) {
        throw_input("image '" + image.id + "': feature is a zero vector and cannot be normalized");
    }
    for (double& x : f) x /= n;
    return {image.id, std::move(f)};
}

std::vector<std::string> ToyEncoder::tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&] {
        // strip edge punctuation, keep interior characters (class names may
        // contain '_' or '-')
        std::size_t b = 0, e = cur.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
        if (e > b) tokens.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            flush();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    flush();
    return tokens;
}

Vec ToyEncoder::encode_prompt_text(const std::string& prompt) const {
    auto tokens = tokenize(prompt);
    if (tokens.empty()) throw_input("prompt '" + prompt + "' contains no tokens");
    std::vector<Vec> seq;
    seq.reserve(tokens.size());
    for (const auto& t : tokens) seq.push_back(vocab_.embedding_of(t));
    return encode_text_from_embeddings(seq);
}

Vec ToyEncoder::mean_of(std::span<const Vec> sequence) const {
    if (sequence.empty()) throw_input("text encoder requires a nonempty embedding sequence");
    Vec m(dim_, 0.0);
    for (const Vec& s : sequence) {
        if (s.size() != dim_) {
            throw_input("embedding sequence element has dimension " + std::to_string(s.size()) +
                        ", expected " + std::to_string(dim_));
        }
        for (std::size_t i = 0; i < dim_; ++i) m[i] += s[i];
    }
    for (double& x : m) x /= static_cast<double>(sequence.size());
    return m;
}

Vec ToyEncoder::encode_text_from_embeddings(std::span<const Vec> sequence) const {
    Vec m = mean_of(sequence);
    Vec z = identity_text_ ? std::move(m) : matvec(text_weights_, m);
    normalize(z);
    return z;
}

std::vector<Vec> ToyEncoder::encode_text_backward(std::span<const Vec> sequence,
                                                  const Vec& grad_output) const {
    if (grad_output.size() != dim_) throw_input("grad_output has wrong dimension");
    Vec m = mean_of(sequence);
    Vec z = identity_text_ ? m : matvec(text_weights_, m);
    double nz = norm2(z);
    if (!(nz > 1e-300)) throw_input("text encoder output is a zero vector");
    Vec out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = z[i] / nz;

    // d(normalize)/dz = (I - out out^T) / ||z||, then back through Q and mean.
    double proj = dot(out, grad_output);
    Vec gz(dim_);
    for (std::size_t i = 0; i < dim_; ++i) gz[i] = (grad_output[i] - proj * out[i]) / nz;
    Vec gm = identity_text_ ? std::move(gz) : matvec_transposed(text_weights_, gz);

    double inv_n = 1.0 / static_cast<double>(sequence.size());
    Vec per_element(dim_);
    for (std::size_t i = 0; i < dim_; ++i) per_element[i] = gm[i] * inv_n;
    return std::vector<Vec>(sequence.size(), per_element);
}

const Vec& ToyEncoder::class_token_embedding(const std::string& class_name) const {
    auto tokens = tokenize(class_name);
    if (tokens.size() != 1) {
        throw_config("toy backend requires single-token class names, got '" + class_name + "'");
    }
    return vocab_.embedding_of(tokens[0]);
}

std::uint64_t ToyEncoder::parameter_hash() const {
    Crc64 crc;
    auto add_u64 = [&](std::uint64_t v) { crc.update(&v, sizeof v); };
    auto add_doubles = [&](const std::vector<double>& v) {
        if (!v.empty()) crc.update(v.data(), v.size() * sizeof(double));
    };
    add_u64(dim_);
    add_u64(seed_);
    crc.update(&temperature_, sizeof temperature_);
    crc.update(tag_.data(), tag_.size());
    add_doubles(vision_weights_.data);
    add_doubles(text_weights_.data);
    for (const auto& entry : vocab_.entries()) {
        crc.update(entry.token.data(), entry.token.size());
        add_doubles(entry.embedding);
    }
    return crc.value();
}

Vec ToyEncoder::raw_image_for_feature(const Vec& feature_direction) const {
    if (feature_direction.size() != dim_) throw_input("feature direction has wrong dimension");
    if (identity_vision_) return feature_direction;

    // Solve W x = t by Gauss-Jordan with partial pivoting; W is a small dense
    // seeded gaussian matrix and comfortably nonsingular.
    std::size_t n = dim_;
    Mat a = vision_weights_;
    Vec x = feature_direction;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r) {
            if (std::abs(a.at(r, col)) > std::abs(a.at(pivot, col))) pivot = r;
        }
        if (std::abs(a.at(pivot, col)) < 1e-12) throw_input("vision map is numerically singular");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a.at(pivot, c), a.at(col, c));
            std::swap(x[pivot], x[col]);
        }
        double d = a.at(col, col);
        for (std::size_t c = 0; c < n; ++c) a.at(col, c) /= d;
        x[col] /= d;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            double f = a.at(r, col);
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) a.at(r, c) -= f * a.at(col, c);
            x[r] -= f * x[col];
        }
    }
    return x;
}

EncoderPtr make_encoder(const std::string& registry_key,
                        const std::vector<std::string>& extra_tokens) {
    auto fail = [&]() {
        throw_config("unknown encoder registry key '" + registry_key +
                     "' (supported: toy:<seed>, toy:<seed>:d<dim>)");
    };

    if (registry_key.rfind("toy:", 0) == 0) {
        std::string rest = registry_key.substr(4);
        std::string seed_part = rest;
        std::string dim_part;
        if (auto colon = rest.find(':'); colon != std::string::npos) {
            seed_part = rest.substr(0, colon);
            dim_part = rest.substr(colon + 1);
        }
        ToyEncoderOptions opt;
        opt.extra_tokens = extra_tokens;
        auto [p, ec] = std::from_chars(seed_part.data(), seed_part.data() + seed_part.size(), opt.seed);
        if (ec != std::errc() || p != seed_part.data() + seed_part.size()) fail();
        if (!dim_part.empty()) {
            if (dim_part[0] != 'd') fail();
            std::size_t dim = 0;
            auto [p2, ec2] =
                std::from_chars(dim_part.data() + 1, dim_part.data() + dim_part.size(), dim);
            if (ec2 != std::errc() || p2 != dim_part.data() + dim_part.size() || dim == 0) fail();
            opt.dim = dim;
        }
        return std::make_shared<ToyEncoder>(opt);
    }
    fail();
    return nullptr;
}

} // namespace upl
