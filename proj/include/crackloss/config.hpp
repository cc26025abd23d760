// Copyright 2026 The crackloss Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "crackloss/bench.hpp"
#include "crackloss/data.hpp"
#include "crackloss/loss.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace crackloss::config {

// Flat key = value files: numbers, true/false, "strings" and [number arrays];
// '#' starts a comment. Section headers and nested values are rejected.

struct Value {
    enum class Kind { Number, Bool, String, Array };
    Kind kind = Kind::Number;
    std::string text; ///< raw token for numbers, unescaped contents for strings
    double number = 0.0;
    bool boolean = false;
    std::vector<double> items;
    std::size_t line = 0;
};

using Table = std::map<std::string, Value>;

/// Throws ParseError (offset = byte offset of the line) on malformed input.
Table parse_table(std::string_view text);

/// Everything the command-line tool can be configured with.
struct CliConfig {
    data::SynthConfig synth;
    std::size_t train_count = 200;
    std::size_t test_count = 50;
    /// When set, replace the synthetic split.
    std::string train_manifest;
    std::string test_manifest;
    double gt_threshold = 0.5;

    bench::TrainConfig train;
    /// Reference weighting for compare and sweep; always trained as plain WCE.
    loss::WeightSpec baseline{loss::Xie{}, 1.0};
    std::size_t n_seeds = 5;
    std::vector<double> betas = bench::default_sweep_betas();
    std::filesystem::path output_dir = "out";

    /// Runs every owning module's checks; ConfigError messages start with the
    /// key group at fault.
    void validate() const;
    bench::TrainConfig baseline_train() const;
};

struct DataSplit {
    std::vector<data::Sample> train;
    std::vector<data::Sample> test;
};

/// Manifests when configured; otherwise synthetic train samples from
/// synth.seed and test samples from synth.seed + 1.
DataSplit load_split(const CliConfig& cfg);

/// Unknown keys, wrong value types and keys that do not apply to the chosen
/// family are ConfigErrors naming the key and line.
CliConfig from_table(const Table& table);
CliConfig parse(std::string_view text);
/// IoError when unreadable, ConfigError otherwise.
CliConfig load(const std::filesystem::path& path);

} // namespace crackloss::config
