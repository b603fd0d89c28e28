#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "upl/encoder.hpp"
#include "upl/vecmath.hpp"

namespace upl {

// Persisted unit-norm image features keyed by image id. Because encoders are
// frozen, every image is encoded exactly once; training and evaluation then
// never touch raw inputs. Payload is stored as little-endian 4-byte reals.
class FeatureCache {
public:
    FeatureCache() = default;
    FeatureCache(std::string backend_tag, std::size_t dim);

    const std::string& backend_tag() const { return backend_tag_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<std::string>& skipped_ids() const { return skipped_ids_; }

    bool contains(const std::string& image_id) const;
    // Feature as doubles (values are exactly the stored 4-byte reals).
    Vec feature_of(const std::string& image_id) const;
    ImageFeature image_feature(const std::string& image_id) const;

    void add(const std::string& image_id, const Vec& feature);
    void add_skipped(const std::string& image_id) { skipped_ids_.push_back(image_id); }

    std::uint64_t payload_hash() const;

private:
    friend FeatureCache load_cache(const std::string&, const std::string&);

    std::string backend_tag_;
    std::size_t dim_ = 0;
    std::vector<std::string> ids_;
    std::vector<float> payload_; // ids * dim, row-major
    std::vector<std::string> skipped_ids_;
    std::map<std::string, std::size_t> index_;
};

// Atomic write (temp file + rename); skip list goes to `path + ".skipped"`
// when nonempty.
void save_cache(const FeatureCache& cache, const std::string& path);

// Verifies the manifest hash (corruption error on mismatch) and the backend
// tag (config error: features from different encoders are incomparable).
FeatureCache load_cache(const std::string& path, const std::string& expected_backend_tag);

// Encodes every id in `ids` through the encoder, resuming from an existing
// cache file at `path` when one is present (matching entries are reused, not
// recomputed). Unreadable images land on the skip list; more than 1% skips is
// a hard error. Pass an empty path to stay in memory.
FeatureCache build_cache(const std::vector<std::string>& ids,
                         const std::function<RawImage(const std::string&)>& image_source,
                         const FrozenEncoderPair& encoder, const std::string& path, int jobs = 1);

} // namespace upl
