#include "upl/config.hpp"

#include <fstream>

#include "upl/errors.hpp"

namespace upl {

std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
    std::ifstream file(path);
    if (!file) throw_config("cannot open config file '" + path + "'");
    std::map<std::string, std::string> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(file, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
        std::size_t b = 0, e = line.size();
        while (b < e && is_space(line[b])) ++b;
        while (e > b && is_space(line[e - 1])) --e;
        if (b == e) continue;
        std::string trimmed = line.substr(b, e - b);
        auto eq = trimmed.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw_config("config '" + path + "' line " + std::to_string(line_no) +
                         ": expected key=value, got '" + trimmed + "'");
        }
        std::string key = trimmed.substr(0, eq);
        while (!key.empty() && is_space(key.back())) key.pop_back();
        std::string value = trimmed.substr(eq + 1);
        std::size_t vb = 0;
        while (vb < value.size() && is_space(value[vb])) ++vb;
        value = value.substr(vb);
        if (entries.count(key)) {
            throw_config("config '" + path + "': duplicate key '" + key + "'");
        }
        entries[key] = value;
    }
    return entries;
}

void apply_train_config_entries(TrainConfig& config,
                                const std::map<std::string, std::string>& entries) {
    for (const auto& [key, value] : entries) {
        try {
            if (key == "epochs") {
                config.epochs = std::stoi(value);
            } else if (key == "batch_size") {
                config.batch_size = std::stoi(value);
            } else if (key == "lr") {
                config.lr = std::stod(value);
            } else if (key == "warmup_lr") {
                config.warmup_lr = std::stod(value);
            } else if (key == "warmup_epochs") {
                config.warmup_epochs = std::stoi(value);
            } else if (key == "schedule") {
                config.schedule = value;
            } else if (key == "seed") {
                config.seed = std::stoull(value);
            } else {
                throw_config("unknown training config key '" + key + "'");
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw_config("invalid value '" + value + "' for training config key '" + key + "'");
        }
    }
}

TrainConfig train_config_from_file(const std::string& path) {
    TrainConfig config;
    apply_train_config_entries(config, parse_key_value_file(path));
    config.validate();
    return config;
}

} // namespace upl
