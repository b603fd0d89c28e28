#include "upl/feature_cache.hpp"

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "upl/hash.hpp"
#include "upl/parallel.hpp"

namespace upl {

namespace {

void write_f32_le(std::ostream& out, float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, 4);
}

float read_f32_le(std::istream& in) {
    unsigned char bytes[4];
    in.read(reinterpret_cast<char*>(bytes), 4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return std::bit_cast<float>(bits);
}

std::uint64_t hash_payload(const std::vector<float>& payload) {
    Crc64 crc;
    for (float v : payload) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        std::uint8_t bytes[4];
        for (int i = 0; i < 4; ++i) bytes[i] = static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff);
        crc.update(bytes, 4);
    }
    return crc.value();
}

} // namespace

FeatureCache::FeatureCache(std::string backend_tag, std::size_t dim)
    : backend_tag_(std::move(backend_tag)), dim_(dim) {
    if (dim_ == 0) throw_config("feature cache dimension must be positive");
}

bool FeatureCache::contains(const std::string& image_id) const {
    return index_.count(image_id) != 0;
}

Vec FeatureCache::feature_of(const std::string& image_id) const {
    auto it = index_.find(image_id);
    if (it == index_.end()) throw_input("feature cache has no entry for image id '" + image_id + "'");
    Vec out(dim_);
    const float* row = payload_.data() + it->second * dim_;
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<double>(row[i]);
    return out;
}

ImageFeature FeatureCache::image_feature(const std::string& image_id) const {
    return {image_id, feature_of(image_id)};
}

void FeatureCache::add(const std::string& image_id, const Vec& feature) {
    if (feature.size() != dim_) {
        throw_input("feature for '" + image_id + "' has dimension " +
                    std::to_string(feature.size()) + ", cache expects " + std::to_string(dim_));
    }
    if (contains(image_id)) throw_input("duplicate cache entry for image id '" + image_id + "'");
    index_[image_id] = ids_.size();
    ids_.push_back(image_id);
    for (double v : feature) payload_.push_back(static_cast<float>(v));
}

std::uint64_t FeatureCache::payload_hash() const { return hash_payload(payload_); }

void save_cache(const FeatureCache& cache, const std::string& path) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());

    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
        if (!file) throw_input("cannot open '" + tmp.string() + "' for writing");
        file << "upl.featcache.v1\n"
             << "backend=" << cache.backend_tag() << "\n"
             << "dim=" << cache.dim() << "\n"
             << "count=" << cache.size() << "\n"
             << "hash=" << hex_u64(cache.payload_hash()) << "\n";
        for (const auto& id : cache.ids()) {
            if (id.find('\n') != std::string::npos) {
                throw_input("image id must not contain newlines: '" + id + "'");
            }
            file << id << "\n";
        }
        file << "data\n";
        for (const auto& id : cache.ids()) {
            Vec f = cache.feature_of(id);
            for (double v : f) write_f32_le(file, static_cast<float>(v));
        }
        if (!file) throw_input("failed writing '" + tmp.string() + "'");
    }
    fs::rename(tmp, target); // readers only ever see complete caches

    if (!cache.skipped_ids().empty()) {
        std::ofstream skip(path + ".skipped", std::ios::trunc);
        for (const auto& id : cache.skipped_ids()) skip << id << "\n";
    }
}

FeatureCache load_cache(const std::string& path, const std::string& expected_backend_tag) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw_input("cannot open feature cache '" + path + "'");

    auto read_line = [&](const std::string& what) {
        std::string line;
        if (!std::getline(file, line)) throw_corruption("cache '" + path + "' truncated at " + what);
        return line;
    };
    auto value_of = [&](const std::string& line, const std::string& key) {
        if (line.rfind(key + "=", 0) != 0) {
            throw_corruption("cache '" + path + "': expected '" + key + "=', got '" + line + "'");
        }
        return line.substr(key.size() + 1);
    };

    if (read_line("magic") != "upl.featcache.v1") {
        throw_corruption("'" + path + "' is not a feature cache");
    }
    std::string backend_tag = value_of(read_line("backend"), "backend");
    if (!expected_backend_tag.empty() && backend_tag != expected_backend_tag) {
        throw_config("cache '" + path + "' was built with backend '" + backend_tag +
                     "', expected '" + expected_backend_tag +
                     "' (features from different encoders are incomparable)");
    }
    std::size_t dim = std::stoull(value_of(read_line("dim"), "dim"));
    std::size_t count = std::stoull(value_of(read_line("count"), "count"));
    std::string stored_hash = value_of(read_line("hash"), "hash");

    FeatureCache cache(backend_tag, dim);
    std::vector<std::string> ids(count);
    for (std::size_t i = 0; i < count; ++i) ids[i] = read_line("id list");
    if (read_line("data marker") != "data") {
        throw_corruption("cache '" + path + "': missing data marker");
    }

    std::vector<float> payload(count * dim);
    for (float& v : payload) {
        v = read_f32_le(file);
        if (!file) throw_corruption("cache '" + path + "': payload truncated");
    }
    if (hex_u64(hash_payload(payload)) != stored_hash) {
        throw_corruption("cache '" + path + "': payload hash mismatch, file is corrupt");
    }

    for (std::size_t i = 0; i < count; ++i) {
        Vec f(dim);
        for (std::size_t d = 0; d < dim; ++d) f[d] = payload[i * dim + d];
        cache.add(ids[i], f);
    }
    return cache;
}

FeatureCache build_cache(const std::vector<std::string>& ids,
                         const std::function<RawImage(const std::string&)>& image_source,
                         const FrozenEncoderPair& encoder, const std::string& path, int jobs) {
    // Resume: reuse entries from an existing cache with the same backend tag.
    std::optional<FeatureCache> existing;
    if (!path.empty() && std::filesystem::exists(path)) {
        try {
            existing = load_cache(path, encoder.model_tag());
        } catch (const Error&) {
            existing.reset(); // unusable; rebuild from scratch
        }
    }

    std::vector<std::optional<Vec>> features(ids.size());
    std::vector<char> skipped(ids.size(), 0);
    parallel_for(ids.size(), jobs, [&](std::size_t i) {
        if (existing && existing->contains(ids[i])) {
            features[i] = existing->feature_of(ids[i]);
            return;
        }
        try {
            features[i] = encoder.encode_image(image_source(ids[i])).vector;
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::input) {
                skipped[i] = 1;
            } else {
                throw;
            }
        }
    });

    FeatureCache cache(encoder.model_tag(), encoder.embed_dim());
    std::size_t n_skipped = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (skipped[i]) {
            cache.add_skipped(ids[i]);
            ++n_skipped;
        } else {
            cache.add(ids[i], *features[i]);
        }
    }
    if (!ids.empty() && static_cast<double>(n_skipped) > 0.01 * static_cast<double>(ids.size())) {
        throw_input("feature cache build skipped " + std::to_string(n_skipped) + " of " +
                    std::to_string(ids.size()) + " images (more than 1%)");
    }

    if (!path.empty()) {
        // Identical content -> identical bytes; skip the rewrite when the
        // existing file already covers exactly these ids.
        bool up_to_date = existing && existing->ids() == cache.ids() &&
                          existing->payload_hash() == cache.payload_hash();
        if (!up_to_date) save_cache(cache, path);
    }
    return cache;
}

} // namespace upl
