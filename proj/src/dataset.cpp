#include "upl/dataset.hpp"

#include <charconv>
#include <cstdio>

#include "upl/hash.hpp"
#include "upl/pseudo_label.hpp"
#include "upl/rng.hpp"

namespace upl {

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_string(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    throw_config("unknown split '" + name + "' (expected train or test)");
}

std::vector<DatasetSpec> register_builtin_datasets() {
    auto entry = [](const char* name, std::size_t classes, std::size_t train, std::size_t test,
                    const char* prompt) {
        DatasetSpec spec;
        spec.name = name;
        spec.pseudo_prompt_template = prompt;
        spec.class_count = classes;
        spec.train_count = train;
        spec.test_count = test;
        return spec;
    };
    return {
        entry("ImageNet", 1000, 1280000, 50000, "a photo of a [CLASS]."),
        entry("Caltech101", 100, 4128, 2465, "a photo of a [CLASS]."),
        entry("OxfordPets", 37, 2944, 3669, "a photo of a [CLASS], a type of pet."),
        entry("StanfordCars", 196, 6509, 8041, "a photo of a [CLASS]."),
        entry("Flowers102", 102, 4093, 2463, "a photo of a [CLASS], a type of flower."),
        entry("Food101", 101, 50500, 30300, "a photo of [CLASS], a type of food."),
        entry("FGVCAircraft", 100, 3334, 3333, "a photo of a [CLASS], a type of aircraft."),
        entry("SUN397", 397, 15880, 19850, "a photo of a [CLASS]."),
        entry("DTD", 47, 2820, 1692, "[CLASS] texture."),
        entry("EuroSAT", 10, 13500, 8100, "a centered satellite photo of [CLASS]."),
        entry("UCF101", 101, 7639, 3783, "a photo of a person doing [CLASS]."),
    };
}

DatasetSpec builtin_dataset(const std::string& name) {
    for (auto& spec : register_builtin_datasets()) {
        if (spec.name == name) return spec;
    }
    throw_lookup("unknown dataset '" + name + "'");
}

std::vector<std::string> synthetic_class_names(std::size_t class_count) {
    static const char* kPool[] = {"sphere", "cube",  "torus",  "prism", "cone",   "wedge",
                                  "helix",  "blade", "spiral", "knot",  "lattice", "ribbon"};
    std::vector<std::string> names;
    names.reserve(class_count);
    for (std::size_t i = 0; i < class_count; ++i) {
        if (i < std::size(kPool)) {
            names.emplace_back(kPool[i]);
        } else {
            names.push_back("shape" + std::to_string(i));
        }
    }
    return names;
}

SyntheticDataset make_synthetic_dataset(const ToyEncoder& encoder,
                                        const SyntheticDatasetConfig& config) {
    if (config.class_count < 2) throw_config("synthetic dataset needs at least 2 classes");
    validate_prompt_template(config.prompt_template);

    std::size_t dim = encoder.embed_dim();
    auto names = synthetic_class_names(config.class_count);
    for (const auto& name : names) {
        if (!encoder.vocabulary().contains(name)) {
            throw_config("toy encoder vocabulary is missing class name '" + name +
                         "'; build the encoder with the dataset's class names");
        }
    }

    // Sum of the template's word embeddings: the shared-context point the
    // hand-crafted prompt occupies in the {context_sum + w_c} family.
    Vec template_sum(dim, 0.0);
    for (const auto& token :
         ToyEncoder::tokenize(substitute_class_token(config.prompt_template, ""))) {
        const Vec& e = encoder.vocabulary().embedding_of(token);
        for (std::size_t i = 0; i < dim; ++i) template_sum[i] += e[i];
    }

    Rng rng(config.seed ^ fnv1a("upl-synthetic-dataset"));

    // The generating context sum is a damped template plus a random offset:
    // close enough that zero-shot is informative, far enough that a trained
    // context beats it. Keeping its norm small keeps the class-token
    // component (and with it the cluster separation) large.
    Vec shift = normalized(rng.gaussian_vec(dim));
    Vec true_sum(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        true_sum[i] = config.template_weight * template_sum[i] + config.prompt_shift * shift[i];
    }

    std::vector<Vec> centers;
    centers.reserve(config.class_count);
    for (const auto& name : names) {
        std::vector<Vec> pair = {true_sum, encoder.class_token_embedding(name)};
        centers.push_back(encoder.encode_text_from_embeddings(pair));
    }

    // Shared pull toward the first class's hand-crafted embedding: the
    // zero-shot teacher over-predicts that class, so its errors are a class
    // imbalance top-K selection can undo rather than noise it cannot.
    Vec lean = encoder.encode_prompt_text(
        substitute_class_token(config.prompt_template, names.front()));

    SyntheticDataset out;
    out.spec.name = "toy:" + std::to_string(config.seed);
    if (config.class_count != 3) out.spec.name += ":c" + std::to_string(config.class_count);
    out.spec.pseudo_prompt_template = config.prompt_template;
    out.spec.class_count = config.class_count;
    out.spec.train_count = config.class_count * config.train_per_class;
    out.spec.test_count = config.class_count * config.test_per_class;
    out.spec.class_names = names;

    auto emit = [&](Split split, std::size_t class_index, std::size_t sample_index) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_c%02zu_%04zu", split == Split::train ? "trn" : "tst",
                      class_index + 1, sample_index);
        Vec target = centers[class_index];
        for (std::size_t i = 0; i < dim; ++i) {
            target[i] += config.dominant_lean * lean[i] + config.feature_noise * rng.next_gaussian();
        }
        out.images[id] = {id, encoder.raw_image_for_feature(target)};
        out.spec.ground_truth[id] = static_cast<int>(class_index) + 1;
        (split == Split::train ? out.spec.train_ids : out.spec.test_ids).push_back(id);
    };
    for (std::size_t c = 0; c < config.class_count; ++c) {
        for (std::size_t i = 0; i < config.train_per_class; ++i) emit(Split::train, c, i);
    }
    for (std::size_t c = 0; c < config.class_count; ++c) {
        for (std::size_t i = 0; i < config.test_per_class; ++i) emit(Split::test, c, i);
    }
    return out;
}

bool parse_synthetic_dataset_key(const std::string& name, SyntheticDatasetConfig& config) {
    if (name.rfind("toy:", 0) != 0) return false;
    std::string rest = name.substr(4);
    std::string seed_part = rest;
    std::string class_part;
    if (auto colon = rest.find(':'); colon != std::string::npos) {
        seed_part = rest.substr(0, colon);
        class_part = rest.substr(colon + 1);
    }
    auto [p, ec] = std::from_chars(seed_part.data(), seed_part.data() + seed_part.size(), config.seed);
    if (ec != std::errc() || p != seed_part.data() + seed_part.size()) {
        throw_config("malformed synthetic dataset key '" + name + "' (expected toy:<seed>[:c<classes>])");
    }
    if (!class_part.empty()) {
        if (class_part[0] != 'c') {
            throw_config("malformed synthetic dataset key '" + name + "'");
        }
        std::size_t classes = 0;
        auto [p2, ec2] =
            std::from_chars(class_part.data() + 1, class_part.data() + class_part.size(), classes);
        if (ec2 != std::errc() || p2 != class_part.data() + class_part.size() || classes < 2) {
            throw_config("malformed synthetic dataset key '" + name + "'");
        }
        config.class_count = classes;
    }
    return true;
}

} // namespace upl
