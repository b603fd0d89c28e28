#include "upl/inference.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "upl/parallel.hpp"

namespace upl {

ClassEmbeddingBank build_class_embeddings(const PromptRepresentation& prompt,
                                          const std::vector<std::string>& class_names,
                                          const FrozenEncoderPair& encoder) {
    if (class_names.empty()) throw_config("class embedding bank requires class names");
    if (prompt.dim() != encoder.embed_dim()) {
        throw_config("prompt dimension does not match encoder embedding dimension");
    }
    ClassEmbeddingBank bank;
    bank.prompt_id = "seed=" + std::to_string(prompt.seed);
    bank.cls_position = prompt.cls_position;
    bank.embeddings.reserve(class_names.size());
    for (const auto& name : class_names) {
        ComposedPrompt composed =
            compose_class_prompt(prompt, encoder.class_token_embedding(name));
        bank.embeddings.push_back(encoder.encode_text_from_embeddings(composed.sequence));
    }
    return bank;
}

ClassEmbeddingBank build_zero_shot_embeddings(const std::string& prompt_template,
                                              const std::vector<std::string>& class_names,
                                              const FrozenEncoderPair& encoder) {
    if (class_names.empty()) throw_config("class embedding bank requires class names");
    ClassEmbeddingBank bank;
    bank.prompt_id = "zeroshot";
    bank.embeddings.reserve(class_names.size());
    for (const auto& name : class_names) {
        bank.embeddings.push_back(
            encoder.encode_prompt_text(substitute_class_token(prompt_template, name)));
    }
    return bank;
}

ProbabilityRow predict(const ClassEmbeddingBank& bank, const ImageFeature& feature, double tau) {
    if (bank.embeddings.empty()) throw_config("class embedding bank is empty");
    if (!(tau > 0.0)) throw_config("temperature must be positive");
    Vec logits(bank.embeddings.size());
    for (std::size_t c = 0; c < bank.embeddings.size(); ++c) {
        if (bank.embeddings[c].size() != feature.vector.size()) {
            throw_input("bank embedding dimension does not match feature dimension");
        }
        logits[c] = dot(bank.embeddings[c], feature.vector) / tau;
    }
    return {feature.image_id, softmax(logits)};
}

ProbabilityRow predict_ensemble(std::span<const ClassEmbeddingBank> banks,
                                const ImageFeature& feature, double tau) {
    if (banks.empty()) throw_config("prediction requires at least one bank");
    std::size_t n_classes = banks[0].embeddings.size();
    for (const auto& bank : banks) {
        if (bank.embeddings.size() != n_classes) {
            throw_input("class embedding banks disagree on class count");
        }
    }
    Vec mean(n_classes, 0.0);
    for (const auto& bank : banks) {
        ProbabilityRow row = predict(bank, feature, tau);
        for (std::size_t c = 0; c < n_classes; ++c) mean[c] += row.probs[c];
    }
    double inv_n = 1.0 / static_cast<double>(banks.size());
    for (double& p : mean) p *= inv_n;
    return {feature.image_id, std::move(mean)};
}

EvalReport evaluate(std::span<const ClassEmbeddingBank> banks,
                    std::span<const ImageFeature> test_features,
                    const std::map<std::string, int>& ground_truth,
                    const std::vector<std::string>& class_names, double tau, int jobs) {
    if (test_features.empty()) throw_input("evaluation requires test features");
    std::size_t n_classes = class_names.size();
    if (n_classes == 0) throw_config("evaluation requires class names");

    std::vector<int> predicted(test_features.size());
    parallel_for(test_features.size(), jobs, [&](std::size_t i) {
        ProbabilityRow row = predict_ensemble(banks, test_features[i], tau);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.probs.size(); ++c) {
            if (row.probs[c] > row.probs[best]) best = c;
        }
        predicted[i] = static_cast<int>(best) + 1;
    });

    EvalReport report;
    report.per_class.resize(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        report.per_class[c].class_index = static_cast<int>(c) + 1;
        report.per_class[c].class_name = class_names[c];
    }
    for (std::size_t i = 0; i < test_features.size(); ++i) {
        auto it = ground_truth.find(test_features[i].image_id);
        if (it == ground_truth.end()) {
            throw_input("ground truth is missing image id '" + test_features[i].image_id + "'");
        }
        int truth = it->second;
        if (truth < 1 || truth > static_cast<int>(n_classes)) {
            throw_input("ground-truth class " + std::to_string(truth) + " out of range for '" +
                        test_features[i].image_id + "'");
        }
        auto& row = report.per_class[static_cast<std::size_t>(truth) - 1];
        row.n_test++;
        report.total++;
        if (predicted[i] == truth) {
            row.n_correct++;
            report.correct++;
        }
    }
    for (auto& row : report.per_class) {
        row.accuracy = row.n_test == 0
                           ? 0.0
                           : static_cast<double>(row.n_correct) / static_cast<double>(row.n_test);
    }
    report.overall_accuracy =
        static_cast<double>(report.correct) / static_cast<double>(report.total);
    return report;
}

namespace {

std::string format_accuracy(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", value);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    for (;;) {
        std::size_t comma = line.find(',', begin);
        if (comma == std::string::npos) {
            out.push_back(line.substr(begin));
            return out;
        }
        out.push_back(line.substr(begin, comma - begin));
        begin = comma + 1;
    }
}

} // namespace

void save_eval_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw_input("cannot open '" + path + "' for writing");
    file << "class_index,class_name,n_test,n_correct,accuracy\n";
    for (const auto& row : report.per_class) {
        if (row.class_name.find(',') != std::string::npos) {
            throw_input("class name must not contain commas: '" + row.class_name + "'");
        }
        file << row.class_index << ',' << row.class_name << ',' << row.n_test << ','
             << row.n_correct << ',' << format_accuracy(row.accuracy) << "\n";
    }
    file << "summary,overall," << report.total << ',' << report.correct << ','
         << format_accuracy(report.overall_accuracy) << "\n";
    if (!file) throw_input("failed writing '" + path + "'");
}

EvalReport load_eval_report_csv(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw_input("cannot open eval report '" + path + "'");
    std::string line;
    if (!std::getline(file, line) || line != "class_index,class_name,n_test,n_correct,accuracy") {
        throw_corruption("'" + path + "' is not an eval report CSV");
    }
    EvalReport report;
    bool saw_summary = false;
    while (std::getline(file, line)) {
        if (line.empty()) continue;
        auto cols = split_csv(line);
        if (cols.size() != 5) throw_corruption("malformed eval report row: '" + line + "'");
        if (cols[0] == "summary") {
            report.total = std::stoull(cols[2]);
            report.correct = std::stoull(cols[3]);
            report.overall_accuracy = std::stod(cols[4]);
            saw_summary = true;
            continue;
        }
        EvalRow row;
        row.class_index = std::stoi(cols[0]);
        row.class_name = cols[1];
        row.n_test = std::stoull(cols[2]);
        row.n_correct = std::stoull(cols[3]);
        row.accuracy = std::stod(cols[4]);
        report.per_class.push_back(std::move(row));
    }
    if (!saw_summary) throw_corruption("eval report '" + path + "' has no summary row");
    return report;
}

void print_eval_report(const EvalReport& report, std::ostream& out) {
    out << std::left << std::setw(8) << "class" << std::setw(20) << "name" << std::right
        << std::setw(8) << "n" << std::setw(10) << "correct" << std::setw(12) << "accuracy"
        << "\n";
    for (const auto& row : report.per_class) {
        out << std::left << std::setw(8) << row.class_index << std::setw(20) << row.class_name
            << std::right << std::setw(8) << row.n_test << std::setw(10) << row.n_correct
            << std::setw(12) << format_accuracy(row.accuracy) << "\n";
    }
    out << std::left << std::setw(28) << "overall" << std::right << std::setw(8) << report.total
        << std::setw(10) << report.correct << std::setw(12)
        << format_accuracy(report.overall_accuracy) << "\n";
}

} // namespace upl
