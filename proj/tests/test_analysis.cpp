#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "upl/analysis.hpp"
#include "upl/dataset.hpp"
#include "upl/rng.hpp"

using namespace upl;

namespace {

// The standard toy pipeline up to pseudo-label records.
struct Fixture {
    std::shared_ptr<ToyEncoder> encoder;
    SyntheticDataset dataset;
    std::vector<PseudoLabelRecord> records;
};

Fixture make_fixture(std::uint64_t seed = 7) {
    Fixture f;
    SyntheticDatasetConfig cfg;
    cfg.seed = seed;
    ToyEncoderOptions opt;
    opt.seed = seed;
    opt.dim = 16;
    opt.extra_tokens = synthetic_class_names(cfg.class_count);
    f.encoder = std::make_shared<ToyEncoder>(opt);
    f.dataset = make_synthetic_dataset(*f.encoder, cfg);

    std::vector<ImageFeature> features;
    for (const auto& id : f.dataset.spec.train_ids) {
        features.push_back(f.encoder->encode_image(f.dataset.images.at(id)));
    }
    auto rows = zero_shot_probs(*f.encoder, f.dataset.spec.pseudo_prompt_template,
                                f.dataset.spec.class_names, features);
    f.records = assign_pseudo_labels(rows, f.encoder->model_tag());
    return f;
}

PseudoLabelSet finish(PseudoLabelSet set, const DatasetSpec& spec) {
    set.class_count = static_cast<int>(spec.class_names.size());
    set.prompt_template = spec.pseudo_prompt_template;
    return set;
}

} // namespace

TEST_CASE("per_class_curves on a perfect synthetic set is all ones") {
    PseudoLabelSet set;
    set.class_count = 2;
    set.records = {{"a", 1, 0.9, "t"}, {"b", 2, 0.8, "t"}};
    set.per_class_counts = {{1, 1}, {2, 1}};
    std::map<std::string, int> gt = {{"a", 1}, {"b", 2}};

    auto rows = per_class_curves(set, gt, {"one", "two"});
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.accuracy == doctest::Approx(1.0));
        CHECK(r.count == 1);
    }
    CHECK(rows[0].class_name == "one");
    CHECK(rows[0].mean_confidence == doctest::Approx(0.9));
}

TEST_CASE("per_class_curves requires ground truth") {
    PseudoLabelSet set;
    set.records = {{"a", 1, 0.9, "t"}};
    CHECK_THROWS_AS(per_class_curves(set, {}, {"one"}), Error);
}

TEST_CASE("threshold selection empties classes that top-16 keeps populated") {
    auto f = make_fixture(7);

    // the skewed corpus: the dominant-lean teacher is confident only on class 1
    auto thresholded = finish(select_threshold(f.records, 0.65), f.dataset.spec);
    auto topk = finish(select_top_k(f.records, 16), f.dataset.spec);
    REQUIRE(!thresholded.records.empty());

    auto threshold_rows =
        per_class_curves(thresholded, f.dataset.spec.ground_truth, f.dataset.spec.class_names);
    auto topk_rows = per_class_curves(topk, f.dataset.spec.ground_truth, f.dataset.spec.class_names);

    std::size_t empty_threshold = 0, empty_topk = 0;
    for (const auto& r : threshold_rows) {
        if (r.count == 0) ++empty_threshold;
    }
    for (const auto& r : topk_rows) {
        if (r.count == 0) ++empty_topk;
        CHECK(r.count <= 16);
    }
    CHECK(empty_threshold >= 1); // imbalanced: some classes vanish entirely
    CHECK(empty_topk == 0);      // top-K keeps every class populated
}

TEST_CASE("model_gap_report is zero for identical sets") {
    auto f = make_fixture(7);
    auto set = finish(select_top_k(f.records, 16), f.dataset.spec);

    std::vector<std::pair<std::string, PseudoLabelSet>> sets = {{"m0", set}, {"m1", set}};
    auto report = model_gap_report(sets, f.dataset.spec.ground_truth, "m0");
    CHECK(report.baseline_tag == "m0");
    REQUIRE(report.model_tags.size() == 1);
    for (const auto& row : report.rows) {
        for (double gap : row.gaps) CHECK(gap == doctest::Approx(0.0));
    }
}

TEST_CASE("model_gap_report shows nonzero gaps across different toy backends") {
    auto f = make_fixture(7);
    auto set_a = finish(select_top_k(f.records, 16), f.dataset.spec);

    // a second backend with a different seed labels the same images differently
    ToyEncoderOptions opt;
    opt.seed = 8;
    opt.dim = 16;
    opt.extra_tokens = synthetic_class_names(3);
    ToyEncoder other(opt);
    std::vector<ImageFeature> features;
    for (const auto& id : f.dataset.spec.train_ids) {
        features.push_back(other.encode_image(f.dataset.images.at(id)));
    }
    auto rows = zero_shot_probs(other, f.dataset.spec.pseudo_prompt_template,
                                f.dataset.spec.class_names, features);
    auto set_b =
        finish(select_top_k(assign_pseudo_labels(rows, other.model_tag()), 16), f.dataset.spec);

    std::vector<std::pair<std::string, PseudoLabelSet>> sets = {
        {f.encoder->model_tag(), set_a}, {other.model_tag(), set_b}};
    auto report = model_gap_report(sets, f.dataset.spec.ground_truth, f.encoder->model_tag());

    bool any_nonzero = false;
    for (const auto& row : report.rows) {
        for (double gap : row.gaps) any_nonzero = any_nonzero || std::abs(gap) > 1e-12;
    }
    CHECK(any_nonzero);

    CHECK_THROWS_AS(model_gap_report(sets, f.dataset.spec.ground_truth, "missing-tag"), Error);

    std::vector<std::pair<std::string, PseudoLabelSet>> one = {{"only", set_a}};
    CHECK_THROWS_AS(model_gap_report(one, f.dataset.spec.ground_truth, "only"), Error);
}

TEST_CASE("transfer_improvement_report deltas") {
    EvalReport trained;
    trained.per_class = {{1, "sphere", 40, 38, 0.95}, {2, "cube", 40, 28, 0.70}};
    EvalReport zeroshot;
    zeroshot.per_class = {{1, "sphere", 40, 30, 0.75}, {2, "cube", 40, 28, 0.70}};

    StatsReport stats;
    stats.per_class = {{1, 16, 0.8, 0.9}, {2, 16, 0.7, 0.6}};

    SUBCASE("identical reports give zero deltas") {
        auto rows = transfer_improvement_report(trained, trained, stats);
        for (const auto& r : rows) CHECK(r.improvement == doctest::Approx(0.0));
    }

    SUBCASE("constructed deltas are exact") {
        auto rows = transfer_improvement_report(trained, zeroshot, stats);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0].improvement == doctest::Approx(0.20));
        CHECK(rows[1].improvement == doctest::Approx(0.0));
        CHECK(rows[0].pseudo_accuracy == doctest::Approx(0.9));
        CHECK(rows[1].pseudo_accuracy == doctest::Approx(0.6));
    }

    SUBCASE("class mismatch is an input error") {
        EvalReport other = zeroshot;
        other.per_class[1].class_name = "pyramid";
        CHECK_THROWS_AS(transfer_improvement_report(trained, other, stats), Error);
        EvalReport shorter = zeroshot;
        shorter.per_class.pop_back();
        CHECK_THROWS_AS(transfer_improvement_report(trained, shorter, stats), Error);
    }
}

TEST_CASE("nearest_words finds exact matches at distance zero") {
    VocabularyTable vocab;
    vocab.add("left", {1.0, 0.0});
    vocab.add("right", {0.0, 1.0});

    PromptRepresentation prompt;
    prompt.vectors = Mat(2, 1);
    prompt.vectors.set_col(0, {1.0, 0.0});

    auto words = nearest_words(prompt, vocab);
    REQUIRE(words.size() == 1);
    CHECK(words[0].token == "left");
    CHECK(words[0].distance == doctest::Approx(0.0));
}

TEST_CASE("nearest_words on a 3-word vocabulary, verified by hand") {
    VocabularyTable vocab;
    vocab.add("aa", {1.0, 0.0});
    vocab.add("bb", {0.0, 1.0});
    vocab.add("cc", {-1.0, 0.0});

    PromptRepresentation prompt;
    prompt.vectors = Mat(2, 2);
    prompt.vectors.set_col(0, {0.9, 0.2}); // closest to aa
    prompt.vectors.set_col(1, {-0.2, 0.8}); // closest to bb

    auto words = nearest_words(prompt, vocab);
    REQUIRE(words.size() == 2);
    CHECK(words[0].token == "aa");
    CHECK(words[1].token == "bb");
    CHECK(words[0].distance == doctest::Approx(std::sqrt(0.01 + 0.04)));
}

TEST_CASE("nearest_words ties break toward the earlier vocabulary entry") {
    VocabularyTable vocab;
    vocab.add("first", {1.0, 0.0});
    vocab.add("second", {-1.0, 0.0}); // same distance from the origin probe

    PromptRepresentation prompt;
    prompt.vectors = Mat(2, 1); // zero column: equidistant
    auto words = nearest_words(prompt, vocab);
    CHECK(words[0].token == "first");
}

TEST_CASE("nearest_words equals an exhaustive scan on a 1000-entry vocabulary") {
    Rng rng(55);
    VocabularyTable vocab;
    for (int i = 0; i < 1000; ++i) {
        vocab.add("tok" + std::to_string(i), rng.gaussian_vec(8));
    }
    auto prompt = init_prompt(8, 16, ClsPosition::end, 5);
    // put one context vector exactly on a vocabulary entry
    prompt.vectors.set_col(3, vocab.entries()[123].embedding);

    auto words = nearest_words(prompt, vocab);
    REQUIRE(words.size() == 16);
    CHECK(words[3].token == "tok123");
    CHECK(words[3].distance == doctest::Approx(0.0));

    for (std::size_t l = 0; l < 16; ++l) {
        Vec v = prompt.vectors.col(l);
        std::string best;
        double best_d = 0.0;
        bool first = true;
        for (const auto& entry : vocab.entries()) {
            double d2 = 0.0;
            for (std::size_t i = 0; i < 8; ++i) {
                double diff = v[i] - entry.embedding[i];
                d2 += diff * diff;
            }
            if (first || d2 < best_d) {
                best = entry.token;
                best_d = d2;
                first = false;
            }
        }
        CHECK(words[l].token == best);
        CHECK(words[l].distance == doctest::Approx(std::sqrt(best_d)));
    }
}

TEST_CASE("nearest-word table renders distances at two decimals") {
    std::vector<NearestWord> words = {{0, "grp", 1.2013}, {1, "shows", 0.9449}};
    auto table = format_nearest_words_table(words);
    CHECK(table.find("grp  1.20") != std::string::npos);
    CHECK(table.find("shows  0.94") != std::string::npos);
}

TEST_CASE("zero-shot reference constants match the published table") {
    CHECK(*zero_shot_reference_accuracy("ImageNet") == doctest::Approx(60.34));
    CHECK(*zero_shot_reference_accuracy("Caltech101") == doctest::Approx(86.09));
    CHECK(*zero_shot_reference_accuracy("UCF101") == doctest::Approx(62.70));
    CHECK(*zero_shot_reference_accuracy("EuroSAT") == doctest::Approx(38.23));
    CHECK(!zero_shot_reference_accuracy("toy:7").has_value());

    // every registered dataset has a reference entry
    for (const auto& spec : register_builtin_datasets()) {
        CHECK(zero_shot_reference_accuracy(spec.name).has_value());
    }
}

TEST_CASE("report CSV files round-trip at printed precision") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "upl_analysis_csv";
    fs::create_directories(dir);

    std::vector<PerClassCurveRow> rows = {{1, "sphere", 16, 0.71128, 1.0},
                                          {2, "cube", 16, 0.55231, 0.9375}};
    auto path = (dir / "curves.csv").string();
    save_per_class_curves_csv(rows, path);

    std::ifstream in(path);
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "class_index,class_name,count,mean_confidence,accuracy");
    std::getline(in, line);
    CHECK(line.find("1,sphere,16,") == 0);
    CHECK(line.find("0.71128") != std::string::npos);

    std::vector<NearestWord> words = {{0, "grp", 1.2013}};
    save_nearest_words_csv(words, (dir / "words.csv").string());
    std::ifstream win((dir / "words.csv").string());
    std::getline(win, header);
    CHECK(header == "context_index,token,distance");
    std::getline(win, line);
    double reparsed = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(reparsed == doctest::Approx(1.2013).epsilon(1e-12)); // full precision in CSV

    write_run_manifest((dir / "manifest.txt").string(), {{"command", "test"}, {"seed", "7"}});
    std::ifstream min((dir / "manifest.txt").string());
    std::getline(min, line);
    CHECK(line == "command=test");

    fs::remove_all(dir);
}
