#pragma once

#include <map>
#include <string>

#include "upl/train.hpp"

namespace upl {

// Flat key=value file; '#' starts a comment, blank lines are ignored.
std::map<std::string, std::string> parse_key_value_file(const std::string& path);

// Training configuration from a key=value file. Recognized keys: epochs,
// batch_size, lr, warmup_lr, warmup_epochs, schedule, seed. Unknown keys are
// errors (silent typos in a training recipe are worse than a hard stop).
TrainConfig train_config_from_file(const std::string& path);

// Applies recognized keys onto an existing config (file layer of the
// flags > file > defaults precedence).
void apply_train_config_entries(TrainConfig& config,
                                const std::map<std::string, std::string>& entries);

} // namespace upl
