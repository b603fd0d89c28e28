// upl: unsupervised prompt learning pipeline over frozen two-tower encoders.
//
// Subcommands: cache-features, pseudo-label, train, eval, analyze.
// Exit codes: 0 success, 2 config/usage error, 3 empty-result error,
// 1 internal error.

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "upl/analysis.hpp"
#include "upl/config.hpp"
#include "upl/dataset.hpp"
#include "upl/encoder.hpp"
#include "upl/feature_cache.hpp"
#include "upl/hash.hpp"
#include "upl/inference.hpp"
#include "upl/prompt.hpp"
#include "upl/pseudo_label.hpp"
#include "upl/train.hpp"

namespace fs = std::filesystem;
using namespace upl;

namespace {

std::string sanitize(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t file_crc64(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw_input("cannot open '" + path + "' for hashing");
    Crc64 crc;
    char buf[1 << 16];
    while (file.read(buf, sizeof buf) || file.gcount() > 0) {
        crc.update(buf, static_cast<std::size_t>(file.gcount()));
    }
    return crc.value();
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw_config("invalid " + what + ": '" + s + "'");
    }
    return v;
}

int parse_int(const std::string& s, const std::string& what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw_config("invalid " + what + ": '" + s + "'");
    }
    return v;
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw_config("invalid " + what + ": '" + s + "'");
    }
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// A synthetic dataset together with the backends requested for the run. The
// generator encoder is seeded by the dataset key alone, so the raw images are
// identical no matter which backend later encodes them.
struct RunContext {
    SyntheticDataset dataset;
    std::vector<EncoderPtr> encoders; // one per requested backend key
};

RunContext load_context(const std::string& dataset_name, std::vector<std::string> backend_keys) {
    SyntheticDatasetConfig cfg;
    if (!parse_synthetic_dataset_key(dataset_name, cfg)) {
        // Registered real datasets need an on-disk layout adapter, which the
        // core does not ship; fail with the registry entry when it exists.
        DatasetSpec spec = builtin_dataset(dataset_name); // throws lookup error if unknown
        throw_config("dataset '" + spec.name +
                     "' is registered but no file-layout adapter is available in the core; "
                     "use a synthetic dataset (toy:<seed>[:c<classes>])");
    }
    if (backend_keys.empty()) throw_config("at least one --backend is required");

    // Duplicate backend tags add nothing to an ensemble (the mean of a model
    // with itself is the model), so they are collapsed.
    std::vector<std::string> unique_keys;
    for (const auto& key : backend_keys) {
        bool seen = false;
        for (const auto& u : unique_keys) seen = seen || u == key;
        if (!seen) unique_keys.push_back(key);
    }

    RunContext ctx;
    auto class_names = synthetic_class_names(cfg.class_count);
    for (const auto& key : unique_keys) {
        ctx.encoders.push_back(make_encoder(key, class_names));
    }

    ToyEncoderOptions gen_options;
    gen_options.seed = cfg.seed;
    gen_options.dim = ctx.encoders[0]->embed_dim();
    gen_options.extra_tokens = class_names;
    ToyEncoder generator(gen_options);
    ctx.dataset = make_synthetic_dataset(generator, cfg);
    return ctx;
}

std::string cache_path(const std::string& out_dir, const std::string& dataset, Split split,
                       const std::string& backend_tag) {
    return out_dir + "/cache/" + sanitize(dataset) + "/" + to_string(split) + "/" +
           sanitize(backend_tag) + ".featcache";
}

std::string pseudo_path(const std::string& out_dir, const std::string& dataset) {
    return out_dir + "/pseudo/" + sanitize(dataset) + "/labels.pseudo";
}

std::string prompts_dir(const std::string& out_dir, const std::string& dataset) {
    return out_dir + "/prompts/" + sanitize(dataset);
}

FeatureCache load_cache_or_explain(const std::string& path, const std::string& backend_tag) {
    if (!fs::exists(path)) {
        throw_config("feature cache '" + path + "' does not exist; run `upl cache-features` first");
    }
    return load_cache(path, backend_tag);
}

std::vector<ImageFeature> features_in_order(const FeatureCache& cache) {
    std::vector<ImageFeature> features;
    features.reserve(cache.size());
    for (const auto& id : cache.ids()) features.push_back(cache.image_feature(id));
    return features;
}

// ---------------------------------------------------------------- commands

struct CacheArgs {
    std::string dataset, backend, split = "train", data_root, out_dir;
    int jobs = 1;
};

int run_cache_features(const CacheArgs& args) {
    SyntheticDatasetConfig probe;
    if (!parse_synthetic_dataset_key(args.dataset, probe)) {
        if (args.data_root.empty() && !std::getenv("UPL_DATA_ROOT")) {
            throw_config("dataset '" + args.dataset +
                         "' needs a data root (--data-root or UPL_DATA_ROOT)");
        }
    }
    RunContext ctx = load_context(args.dataset, {args.backend});
    Split split = split_from_string(args.split);
    const auto& ids = ctx.dataset.spec.ids_for(split);

    std::string path = cache_path(args.out_dir, args.dataset, split, ctx.encoders[0]->model_tag());
    bool existed = fs::exists(path);
    FeatureCache cache = build_cache(
        ids, [&](const std::string& id) { return ctx.dataset.images.at(id); }, *ctx.encoders[0],
        path, args.jobs);

    std::vector<std::pair<std::string, std::string>> manifest;
    manifest.emplace_back("format", "upl.run.v1");
    manifest.emplace_back("command", "cache-features");
    manifest.emplace_back("dataset", ctx.dataset.spec.name);
    manifest.emplace_back("split", to_string(split));
    manifest.emplace_back("backend", ctx.encoders[0]->model_tag());
    manifest.emplace_back("features", std::to_string(cache.size()));
    manifest.emplace_back("skipped", std::to_string(cache.skipped_ids().size()));
    manifest.emplace_back("cache_file_crc64", hex_u64(file_crc64(path)));
    write_run_manifest(path + ".manifest.txt", manifest);

    std::cout << (existed ? "cache up to date: " : "cache written: ") << path << " ("
              << cache.size() << " features, dim " << cache.dim() << ")\n";
    if (!cache.skipped_ids().empty()) {
        std::cout << "skipped " << cache.skipped_ids().size() << " images (see " << path
                  << ".skipped)\n";
    }
    return 0;
}

struct PseudoArgs {
    std::string dataset, backends, strategy = "top_k:16", out_dir;
    std::size_t sample_cap = 0;
    int jobs = 1;
};

int run_pseudo_label(const PseudoArgs& args) {
    RunContext ctx = load_context(args.dataset, split_list(args.backends));
    const auto& spec = ctx.dataset.spec;

    auto strategy_parts = split_list(args.strategy, ':');
    if (strategy_parts.size() != 2) {
        throw_config("--strategy must look like top_k:16 or threshold:0.9");
    }

    // zero-shot probability rows per backend from its own cache, then the
    // pseudo-label ensemble mean when more than one backend is in play.
    std::vector<std::vector<ProbabilityRow>> rows_per_model;
    for (const auto& encoder : ctx.encoders) {
        FeatureCache cache = load_cache_or_explain(
            cache_path(args.out_dir, args.dataset, Split::train, encoder->model_tag()),
            encoder->model_tag());
        auto features = features_in_order(cache);
        if (args.sample_cap > 0 && features.size() > args.sample_cap) {
            features.resize(args.sample_cap); // cap in cache order, deterministic
        }
        rows_per_model.push_back(zero_shot_probs(*encoder, spec.pseudo_prompt_template,
                                                 spec.class_names, features, args.jobs));
    }
    std::vector<ProbabilityRow> rows = ensemble_probs(rows_per_model);
    std::string source_tag =
        ctx.encoders.size() == 1
            ? ctx.encoders[0]->model_tag()
            : "ensemble(M=" + std::to_string(ctx.encoders.size()) + ")";

    auto records = assign_pseudo_labels(rows, source_tag);
    PseudoLabelSet set;
    if (strategy_parts[0] == "top_k") {
        set = select_top_k(records, parse_int(strategy_parts[1], "top-K value"));
    } else if (strategy_parts[0] == "threshold") {
        set = select_threshold(records, parse_double(strategy_parts[1], "confidence threshold"));
    } else {
        throw_config("unknown selection strategy '" + strategy_parts[0] + "'");
    }
    if (set.records.empty()) {
        throw_empty("selection produced an empty pseudo-label set (strategy " + args.strategy + ")");
    }
    set.class_count = static_cast<int>(spec.class_names.size());
    set.prompt_template = spec.pseudo_prompt_template;

    std::string path = pseudo_path(args.out_dir, args.dataset);
    fs::create_directories(fs::path(path).parent_path());
    save_pseudo_label_set(set, path);

    std::vector<std::pair<std::string, std::string>> manifest;
    manifest.emplace_back("format", "upl.run.v1");
    manifest.emplace_back("command", "pseudo-label");
    manifest.emplace_back("dataset", spec.name);
    std::string backend_tags;
    for (const auto& encoder : ctx.encoders) {
        if (!backend_tags.empty()) backend_tags += ',';
        backend_tags += encoder->model_tag();
    }
    manifest.emplace_back("backends", backend_tags);
    manifest.emplace_back("strategy", args.strategy);
    manifest.emplace_back("sample_cap", std::to_string(args.sample_cap));
    manifest.emplace_back("template", spec.pseudo_prompt_template);
    manifest.emplace_back("records", std::to_string(set.records.size()));
    manifest.emplace_back("labels_file_crc64", hex_u64(file_crc64(path)));
    write_run_manifest(pseudo_path(args.out_dir, args.dataset) + ".manifest.txt", manifest);

    StatsReport stats = pseudo_label_stats(set, spec.ground_truth);
    std::cout << "pseudo labels written: " << path << " (" << set.records.size() << " records";
    if (stats.overall_accuracy) {
        std::cout << ", accuracy " << fmt_double(*stats.overall_accuracy);
    }
    std::cout << ")\n";
    return 0;
}

struct TrainArgs {
    std::string dataset, backend, out_dir, seeds_flag, config_file, cls_position = "end";
    int prompts = 16;
    std::size_t length = 16;
    TrainConfig config;
    bool prompts_set = false;
    bool lr_set = false, epochs_set = false, batch_set = false, warmup_lr_set = false,
         warmup_epochs_set = false, seed_set = false;
    int jobs = 1;
};

int run_train(TrainArgs& args) {
    // Precedence: flags > config file > defaults.
    if (!args.config_file.empty()) {
        TrainConfig file_config;
        apply_train_config_entries(file_config, parse_key_value_file(args.config_file));
        if (!args.lr_set) args.config.lr = file_config.lr;
        if (!args.epochs_set) args.config.epochs = file_config.epochs;
        if (!args.batch_set) args.config.batch_size = file_config.batch_size;
        if (!args.warmup_lr_set) args.config.warmup_lr = file_config.warmup_lr;
        if (!args.warmup_epochs_set) args.config.warmup_epochs = file_config.warmup_epochs;
        if (!args.seed_set) args.config.seed = file_config.seed;
        args.config.schedule = file_config.schedule;
    }
    args.config.validate();

    std::vector<std::uint64_t> seeds;
    if (!args.seeds_flag.empty()) {
        for (const auto& s : split_list(args.seeds_flag)) {
            seeds.push_back(parse_u64(s, "prompt seed"));
        }
        if (args.prompts_set && args.prompts != static_cast<int>(seeds.size())) {
            throw_config("--prompts disagrees with the number of --seeds");
        }
    } else {
        if (args.prompts < 1) throw_config("--prompts must be at least 1");
        for (int i = 1; i <= args.prompts; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
    }

    RunContext ctx = load_context(args.dataset, {args.backend});
    const auto& encoder = *ctx.encoders[0];
    const auto& spec = ctx.dataset.spec;

    std::string pseudo_file = pseudo_path(args.out_dir, args.dataset);
    if (!fs::exists(pseudo_file)) {
        throw_config("pseudo-label file '" + pseudo_file + "' does not exist; run `upl pseudo-label` first");
    }
    PseudoLabelSet pseudo_set = load_pseudo_label_set(pseudo_file);
    std::string train_cache_path =
        cache_path(args.out_dir, args.dataset, Split::train, encoder.model_tag());
    FeatureCache cache = load_cache_or_explain(train_cache_path, encoder.model_tag());

    ClsPosition position = cls_position_from_string(args.cls_position);
    auto results = train_prompt_bank(seeds, encoder.embed_dim(), args.length, position, pseudo_set,
                                     cache, encoder, args.config, spec.class_names, args.jobs);

    std::string dir = prompts_dir(args.out_dir, args.dataset);
    fs::create_directories(dir);
    std::vector<std::pair<std::string, std::string>> manifest;
    manifest.emplace_back("format", "upl.run.v1");
    manifest.emplace_back("command", "train");
    manifest.emplace_back("dataset", spec.name);
    manifest.emplace_back("backend", encoder.model_tag());
    manifest.emplace_back("encoder_param_hash", hex_u64(encoder.parameter_hash()));
    manifest.emplace_back("cls_position", to_string(position));
    manifest.emplace_back("prompt_length", std::to_string(args.length));
    manifest.emplace_back("embed_dim", std::to_string(encoder.embed_dim()));
    manifest.emplace_back("epochs", std::to_string(args.config.epochs));
    manifest.emplace_back("batch_size", std::to_string(args.config.batch_size));
    manifest.emplace_back("lr", fmt_double(args.config.lr));
    manifest.emplace_back("warmup_lr", fmt_double(args.config.warmup_lr));
    manifest.emplace_back("warmup_epochs", std::to_string(args.config.warmup_epochs));
    manifest.emplace_back("schedule", args.config.schedule);
    std::string seed_list;
    for (std::uint64_t s : seeds) {
        if (!seed_list.empty()) seed_list += ',';
        seed_list += std::to_string(s);
    }
    manifest.emplace_back("seeds", seed_list);
    // undocumented-by-the-recipe choices, recorded so sweeps can revisit them
    manifest.emplace_back("sgd_momentum", "0");
    manifest.emplace_back("sgd_weight_decay", "0");
    manifest.emplace_back("cosine_total_epochs",
                          std::to_string(args.config.epochs - args.config.warmup_epochs));
    manifest.emplace_back("pseudo_file_crc64", hex_u64(file_crc64(pseudo_file)));
    manifest.emplace_back("cache_file_crc64", hex_u64(file_crc64(train_cache_path)));

    for (std::size_t i = 0; i < results.size(); ++i) {
        std::string prompt_file = dir + "/prompt_" + std::to_string(seeds[i]) + ".prompt";
        save_prompt(results[i].prompt, prompt_file);
        std::ostringstream losses;
        for (std::size_t e = 0; e < results[i].state.loss_history.size(); ++e) {
            if (e) losses << ',';
            losses << fmt_double(results[i].state.loss_history[e]);
        }
        std::string key = "seed_" + std::to_string(seeds[i]);
        manifest.emplace_back(key + "_file", fs::path(prompt_file).filename().string());
        manifest.emplace_back(key + "_final_loss",
                              fmt_double(results[i].state.loss_history.back()));
        manifest.emplace_back(key + "_loss_history", losses.str());
    }
    write_run_manifest(dir + "/manifest.txt", manifest);

    std::cout << "trained " << results.size() << " prompt(s) into " << dir << "\n";
    return 0;
}

struct EvalArgs {
    std::string dataset, backend, out_dir, run_id;
    bool zeroshot = false;
    int jobs = 1;
};

int run_eval(const EvalArgs& args) {
    RunContext ctx = load_context(args.dataset, {args.backend});
    const auto& encoder = *ctx.encoders[0];
    const auto& spec = ctx.dataset.spec;

    FeatureCache cache = load_cache_or_explain(
        cache_path(args.out_dir, args.dataset, Split::test, encoder.model_tag()),
        encoder.model_tag());
    auto features = features_in_order(cache);

    std::vector<ClassEmbeddingBank> banks;
    if (args.zeroshot) {
        banks.push_back(
            build_zero_shot_embeddings(spec.pseudo_prompt_template, spec.class_names, encoder));
    } else {
        std::string dir = prompts_dir(args.out_dir, args.dataset);
        std::vector<std::string> prompt_files;
        if (fs::exists(dir)) {
            for (const auto& entry : fs::directory_iterator(dir)) {
                if (entry.path().extension() == ".prompt") {
                    prompt_files.push_back(entry.path().string());
                }
            }
        }
        std::sort(prompt_files.begin(), prompt_files.end());
        if (prompt_files.empty()) {
            throw_config("no trained prompts under '" + dir + "'; run `upl train` first");
        }
        for (const auto& file : prompt_files) {
            banks.push_back(build_class_embeddings(load_prompt(file), spec.class_names, encoder));
        }
    }

    EvalReport report = evaluate(banks, features, spec.ground_truth, spec.class_names,
                                 encoder.temperature(), args.jobs);

    std::string run_id = args.run_id.empty()
                             ? std::string(args.zeroshot ? "zeroshot-" : "eval-") +
                                   sanitize(args.dataset)
                             : args.run_id;
    std::string report_dir = args.out_dir + "/reports/" + sanitize(run_id);
    fs::create_directories(report_dir);
    std::string csv = report_dir + (args.zeroshot ? "/eval_zeroshot.csv" : "/eval.csv");
    save_eval_report_csv(report, csv);

    std::vector<std::pair<std::string, std::string>> manifest;
    manifest.emplace_back("format", "upl.run.v1");
    manifest.emplace_back("command", args.zeroshot ? "eval-zeroshot" : "eval");
    manifest.emplace_back("dataset", spec.name);
    manifest.emplace_back("backend", encoder.model_tag());
    manifest.emplace_back("banks", std::to_string(banks.size()));
    manifest.emplace_back("temperature", fmt_double(encoder.temperature()));
    manifest.emplace_back("overall_accuracy", fmt_double(report.overall_accuracy));
    write_run_manifest(report_dir + (args.zeroshot ? "/manifest_zeroshot.txt" : "/manifest.txt"),
                       manifest);

    print_eval_report(report, std::cout);
    std::cout << "report written: " << csv << "\n";
    return 0;
}

struct AnalyzeArgs {
    std::string dataset, backend, out_dir, report, run_id;
    std::string prompt_file, pseudo_file, trained_csv, zeroshot_csv, baseline;
    std::string pseudo_files; // comma list for model-gap
};

int run_analyze(const AnalyzeArgs& args) {
    static const char* kReports[] = {"nearest-words", "per-class", "model-gap",
                                     "transfer-improvement"};
    bool known = false;
    for (const char* r : kReports) known = known || args.report == r;
    if (!known) {
        std::ostringstream msg;
        msg << "unknown report '" << args.report << "'; valid reports:";
        for (const char* r : kReports) msg << " " << r;
        throw_config(msg.str());
    }

    RunContext ctx = load_context(args.dataset, {args.backend});
    const auto& spec = ctx.dataset.spec;
    std::string run_id =
        args.run_id.empty() ? "analyze-" + sanitize(args.dataset) : args.run_id;
    std::string report_dir = args.out_dir + "/reports/" + sanitize(run_id);

    auto write_analysis_manifest = [&](const std::string& report_file,
                                       const std::vector<std::string>& inputs) {
        std::vector<std::pair<std::string, std::string>> manifest;
        manifest.emplace_back("format", "upl.run.v1");
        manifest.emplace_back("command", "analyze");
        manifest.emplace_back("report", args.report);
        manifest.emplace_back("dataset", spec.name);
        manifest.emplace_back("backend", ctx.encoders[0]->model_tag());
        manifest.emplace_back("output", report_file);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            manifest.emplace_back("input_" + std::to_string(i), inputs[i]);
            manifest.emplace_back("input_" + std::to_string(i) + "_crc64",
                                  hex_u64(file_crc64(inputs[i])));
        }
        if (auto reference = zero_shot_reference_accuracy(spec.name)) {
            manifest.emplace_back("zero_shot_reference_pct", fmt_double(*reference));
        }
        write_run_manifest(report_dir + "/manifest_" + args.report + ".txt", manifest);
    };

    if (args.report == "nearest-words") {
        std::string file = args.prompt_file;
        if (file.empty()) {
            std::string dir = prompts_dir(args.out_dir, args.dataset);
            std::vector<std::string> candidates;
            if (fs::exists(dir)) {
                for (const auto& entry : fs::directory_iterator(dir)) {
                    if (entry.path().extension() == ".prompt") {
                        candidates.push_back(entry.path().string());
                    }
                }
            }
            std::sort(candidates.begin(), candidates.end());
            if (candidates.empty()) {
                throw_config("no prompt file found; pass --prompt-file or run `upl train`");
            }
            file = candidates.front();
        }
        auto words = nearest_words(load_prompt(file), ctx.encoders[0]->vocabulary());
        save_nearest_words_csv(words, report_dir + "/nearest_words.csv");
        write_analysis_manifest(report_dir + "/nearest_words.csv", {file});
        std::cout << format_nearest_words_table(words);
        std::cout << "report written: " << report_dir << "/nearest_words.csv\n";
        return 0;
    }

    if (args.report == "per-class") {
        std::string file = args.pseudo_file.empty() ? pseudo_path(args.out_dir, args.dataset)
                                                    : args.pseudo_file;
        auto rows = per_class_curves(load_pseudo_label_set(file), spec.ground_truth,
                                     spec.class_names);
        save_per_class_curves_csv(rows, report_dir + "/per_class.csv");
        write_analysis_manifest(report_dir + "/per_class.csv", {file});
        std::cout << "report written: " << report_dir << "/per_class.csv\n";
        return 0;
    }

    if (args.report == "model-gap") {
        auto files = split_list(args.pseudo_files);
        if (files.size() < 2) {
            throw_config("--report model-gap needs --pseudo-files with at least two paths");
        }
        std::vector<std::pair<std::string, PseudoLabelSet>> sets;
        for (const auto& file : files) {
            PseudoLabelSet set = load_pseudo_label_set(file);
            if (set.records.empty()) throw_empty("pseudo-label file '" + file + "' is empty");
            sets.emplace_back(set.records.front().source_tag, std::move(set));
        }
        std::string baseline = args.baseline.empty() ? sets.front().first : args.baseline;
        auto report = model_gap_report(sets, spec.ground_truth, baseline);
        save_model_gap_csv(report, report_dir + "/model_gap.csv");
        write_analysis_manifest(report_dir + "/model_gap.csv", files);
        std::cout << "report written: " << report_dir << "/model_gap.csv\n";
        return 0;
    }

    // transfer-improvement
    if (args.trained_csv.empty() || args.zeroshot_csv.empty()) {
        throw_config("--report transfer-improvement needs --trained-csv and --zeroshot-csv");
    }
    std::string pseudo_file =
        args.pseudo_file.empty() ? pseudo_path(args.out_dir, args.dataset) : args.pseudo_file;
    EvalReport trained = load_eval_report_csv(args.trained_csv);
    EvalReport zeroshot = load_eval_report_csv(args.zeroshot_csv);
    StatsReport stats = pseudo_label_stats(load_pseudo_label_set(pseudo_file), spec.ground_truth);
    auto rows = transfer_improvement_report(trained, zeroshot, stats);
    save_transfer_improvement_csv(rows, report_dir + "/transfer_improvement.csv");
    write_analysis_manifest(report_dir + "/transfer_improvement.csv",
                            {args.trained_csv, args.zeroshot_csv, pseudo_file});
    std::cout << "report written: " << report_dir << "/transfer_improvement.csv\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised prompt learning for frozen two-tower encoders"};
    app.require_subcommand(1);

    CacheArgs cache_args;
    auto* cache_cmd = app.add_subcommand("cache-features", "encode a split into a feature cache");
    cache_cmd->add_option("--dataset", cache_args.dataset, "dataset key, e.g. toy:7")->required();
    cache_cmd->add_option("--backend", cache_args.backend, "encoder registry key, e.g. toy:7")
        ->required();
    cache_cmd->add_option("--split", cache_args.split, "train or test")->capture_default_str();
    cache_cmd->add_option("--data-root", cache_args.data_root,
                          "root directory for real datasets (or UPL_DATA_ROOT)");
    cache_cmd->add_option("--out", cache_args.out_dir, "output directory")->required();
    cache_cmd->add_option("--jobs", cache_args.jobs, "worker thread cap")->capture_default_str();

    PseudoArgs pseudo_args;
    auto* pseudo_cmd =
        app.add_subcommand("pseudo-label", "generate and select pseudo labels on the train split");
    pseudo_cmd->add_option("--dataset", pseudo_args.dataset, "dataset key")->required();
    pseudo_cmd
        ->add_option("--backends", pseudo_args.backends,
                     "comma-separated encoder keys; more than one enables the pseudo-label "
                     "ensemble (duplicates collapse)")
        ->required();
    pseudo_cmd
        ->add_option("--strategy", pseudo_args.strategy, "top_k:<K> or threshold:<t>")
        ->capture_default_str();
    pseudo_cmd->add_option("--out", pseudo_args.out_dir, "output directory")->required();
    pseudo_cmd
        ->add_option("--sample-cap", pseudo_args.sample_cap,
                     "label at most this many train images (0 = full split)")
        ->capture_default_str();
    pseudo_cmd->add_option("--jobs", pseudo_args.jobs, "worker thread cap")->capture_default_str();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "optimize prompt representations on pseudo labels");
    train_cmd->add_option("--dataset", train_args.dataset, "dataset key")->required();
    train_cmd->add_option("--backend", train_args.backend, "encoder registry key")->required();
    train_cmd->add_option("--out", train_args.out_dir, "output directory")->required();
    auto* prompts_opt =
        train_cmd->add_option("--prompts", train_args.prompts, "number of prompt representations")
            ->capture_default_str();
    train_cmd->add_option("--seeds", train_args.seeds_flag,
                          "comma-separated seeds (default 1..N)");
    train_cmd->add_option("--config", train_args.config_file, "key=value training config file");
    train_cmd->add_option("--cls-position", train_args.cls_position, "frontal, middle or end")
        ->capture_default_str();
    train_cmd->add_option("--length", train_args.length, "context length L")->capture_default_str();
    auto* lr_opt =
        train_cmd->add_option("--lr", train_args.config.lr, "initial learning rate")
            ->capture_default_str();
    auto* epochs_opt = train_cmd->add_option("--epochs", train_args.config.epochs, "training epochs")
                           ->capture_default_str();
    auto* batch_opt =
        train_cmd->add_option("--batch-size", train_args.config.batch_size, "batch size")
            ->capture_default_str();
    auto* warmup_lr_opt =
        train_cmd->add_option("--warmup-lr", train_args.config.warmup_lr, "warmup learning rate")
            ->capture_default_str();
    auto* warmup_epochs_opt = train_cmd
                                  ->add_option("--warmup-epochs", train_args.config.warmup_epochs,
                                               "fixed-rate warmup epochs")
                                  ->capture_default_str();
    auto* seed_opt = train_cmd->add_option("--seed", train_args.config.seed,
                                           "shuffle seed for single-prompt runs")
                         ->capture_default_str();
    train_cmd->add_option("--jobs", train_args.jobs, "worker thread cap")->capture_default_str();

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate trained prompts (or --zeroshot) on the test split");
    eval_cmd->add_option("--dataset", eval_args.dataset, "dataset key")->required();
    eval_cmd->add_option("--backend", eval_args.backend, "encoder registry key")->required();
    eval_cmd->add_option("--out", eval_args.out_dir, "output directory")->required();
    eval_cmd->add_flag("--zeroshot", eval_args.zeroshot,
                       "evaluate the hand-crafted prompt baseline instead of trained prompts");
    eval_cmd->add_option("--run-id", eval_args.run_id, "report directory name");
    eval_cmd->add_option("--jobs", eval_args.jobs, "worker thread cap")->capture_default_str();

    AnalyzeArgs analyze_args;
    auto* analyze_cmd = app.add_subcommand("analyze", "diagnostic reports");
    analyze_cmd->add_option("--dataset", analyze_args.dataset, "dataset key")->required();
    analyze_cmd->add_option("--backend", analyze_args.backend, "encoder registry key")->required();
    analyze_cmd->add_option("--out", analyze_args.out_dir, "output directory")->required();
    analyze_cmd
        ->add_option("--report", analyze_args.report,
                     "nearest-words, per-class, model-gap or transfer-improvement")
        ->required();
    analyze_cmd->add_option("--run-id", analyze_args.run_id, "report directory name");
    analyze_cmd->add_option("--prompt-file", analyze_args.prompt_file,
                            "prompt file for nearest-words");
    analyze_cmd->add_option("--pseudo-file", analyze_args.pseudo_file, "pseudo-label record file");
    analyze_cmd->add_option("--pseudo-files", analyze_args.pseudo_files,
                            "comma-separated record files for model-gap");
    analyze_cmd->add_option("--trained-csv", analyze_args.trained_csv,
                            "trained eval CSV for transfer-improvement");
    analyze_cmd->add_option("--zeroshot-csv", analyze_args.zeroshot_csv,
                            "zero-shot eval CSV for transfer-improvement");
    analyze_cmd->add_option("--baseline", analyze_args.baseline, "baseline tag for model-gap");

    train_cmd->callback([&] {
        train_args.prompts_set = prompts_opt->count() > 0;
        train_args.lr_set = lr_opt->count() > 0;
        train_args.epochs_set = epochs_opt->count() > 0;
        train_args.batch_set = batch_opt->count() > 0;
        train_args.warmup_lr_set = warmup_lr_opt->count() > 0;
        train_args.warmup_epochs_set = warmup_epochs_opt->count() > 0;
        train_args.seed_set = seed_opt->count() > 0;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage problems are config errors
    }

    try {
        if (cache_cmd->parsed()) return run_cache_features(cache_args);
        if (pseudo_cmd->parsed()) return run_pseudo_label(pseudo_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (eval_cmd->parsed()) return run_eval(eval_args);
        if (analyze_cmd->parsed()) return run_analyze(analyze_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::config: return 2;
            case ErrorKind::lookup: return 2;
            case ErrorKind::empty_result: return 3;
            default: return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
