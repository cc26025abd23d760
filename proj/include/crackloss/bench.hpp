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

#include "crackloss/data.hpp"
#include "crackloss/loss.hpp"
#include "crackloss/metrics.hpp"
#include "crackloss/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crackloss::bench {

struct TrainConfig {
    loss::WeightSpec weight;
    loss::HolisticConfig holistic;
    loss::Reduction reduction = loss::Reduction::Sum;
    double lr = 3e-4;
    std::size_t batch_size = 2;
    std::size_t steps_per_epoch = 50;
    std::size_t epochs = 30;
    std::uint64_t seed = 1;
    model::UNetConfig unet;
    std::vector<double> eval_grid = metrics::default_grid();
    /// Random flips and right-angle rotations of training batches.
    bool augment = true;
    /// Leading training samples used for the per-epoch Jaccard probe.
    std::size_t probe_size = 8;
    double probe_lambda = 1.0;

    void validate() const;
    /// Row label such as "0.75_exp" or "0.75_exp_20_wj".
    std::string label() const;
};

struct EpochRecord {
    std::size_t epoch = 0; ///< 1-based
    double mean_train_loss = 0.0;
    double train_jaccard = 0.0;
    double test_ods_f1 = 0.0;
    double test_ois_f1 = 0.0;
    double wall_seconds = 0.0; ///< cumulative
};

struct RunHistory {
    std::string label;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
};

struct RunHooks {
    /// Called after each epoch's evaluation with the current network.
    std::function<void(const EpochRecord&, const model::UNet&)> on_epoch;
};

/// Trains from He initialisation for cfg.epochs x cfg.steps_per_epoch Adam
/// steps. Deterministic for a given seed, config and data (wall_seconds aside).
/// Throws NumericalError naming epoch and step on a non-finite loss.
RunHistory train_run(const TrainConfig& cfg, std::span<const data::Sample> train, std::span<const data::Sample> test,
                     const RunHooks& hooks = {}, model::UNetParams* final_params = nullptr);

/// Soft Jaccard index of the network's probabilities on a batch.
double probe_jaccard(const model::UNet& net, const data::Batch& probe, double lambda);

/// Dataset ODS/OIS of the network on samples.
metrics::EvalReport evaluate_model(const model::UNet& net, std::span<const data::Sample> samples,
                                   std::span<const double> grid);

/// First epoch (1-based) whose test ODS-F1 reaches target, if any.
std::optional<std::size_t> epochs_to_target(const RunHistory& history, double target_f1);

struct SeedRow {
    std::uint64_t seed = 0;
    double baseline_final_f1 = 0.0;
    double candidate_final_f1 = 0.0;
    std::optional<std::size_t> baseline_epochs_to_target;
    std::optional<std::size_t> candidate_epochs_to_target;
    std::optional<double> speedup_ratio;
    /// Candidate reached the target within half the baseline's epoch budget.
    bool success = false;
};

struct Summary {
    double mean = 0.0;
    double stddev = 0.0; ///< population standard deviation
    std::size_t n = 0;
};

Summary summarize(std::span<const double> values);

struct SpeedupReport {
    std::string baseline_id;
    std::string candidate_id;
    double target_f1 = 0.0; ///< mean final ODS-F1 of the baseline
    std::size_t baseline_epochs = 0;
    std::size_t candidate_epochs = 0;
    // Computed on the seed-averaged ODS-F1 curves.
    std::optional<std::size_t> baseline_epochs_to_target;
    std::optional<std::size_t> candidate_epochs_to_target;
    std::optional<double> speedup_ratio;
    std::vector<std::uint64_t> seeds;
    std::vector<SeedRow> rows;
    double success_fraction = 0.0;
    Summary baseline_final_f1;
    Summary candidate_final_f1;
    Summary baseline_final_ois;
    Summary candidate_final_ois;
    Summary candidate_epochs_to_target_stats; ///< over seeds that reached the target
};

/// Histories must be index-aligned by seed.
SpeedupReport make_speedup_report(const std::string& baseline_id, const std::string& candidate_id,
                                  std::span<const RunHistory> baseline, std::span<const RunHistory> candidate,
                                  std::size_t baseline_epoch_budget);

/// Target F1 from an external reference instead of the baseline runs given.
SpeedupReport make_speedup_report(const std::string& baseline_id, const std::string& candidate_id,
                                  std::span<const RunHistory> baseline, std::span<const RunHistory> candidate,
                                  std::size_t baseline_epoch_budget, double target_f1);

/// Seeds seed0, seed0 + 1, ...
std::vector<std::uint64_t> seed_list(std::uint64_t seed0, std::size_t n);

struct TrainJob {
    TrainConfig cfg;
};

/// Runs jobs on up to `threads` workers; results are index-aligned with jobs.
std::vector<RunHistory> run_jobs(std::span<const TrainJob> jobs, std::span<const data::Sample> train,
                                 std::span<const data::Sample> test, int threads);

/// Trains both configurations on every seed (seed overrides cfg.seed).
SpeedupReport compare(const TrainConfig& baseline, const TrainConfig& candidate, std::span<const std::uint64_t> seeds,
                      std::span<const data::Sample> train, std::span<const data::Sample> test, int threads = 1,
                      std::vector<RunHistory>* baseline_runs = nullptr,
                      std::vector<RunHistory>* candidate_runs = nullptr);

/// Penalty scale presets for the beta sweep.
std::vector<double> default_sweep_betas();

/// Copy of spec with beta replaced; ConfigError for families without beta.
loss::WeightSpec with_beta(const loss::WeightSpec& spec, double beta);

struct SweepResult {
    std::vector<RunHistory> baseline_runs;
    std::vector<SpeedupReport> reports; ///< one per beta
};

/// compare() for every beta, sharing the baseline runs.
SweepResult sweep(const TrainConfig& baseline, const TrainConfig& candidate, std::span<const double> betas,
                  std::span<const std::uint64_t> seeds, std::span<const data::Sample> train,
                  std::span<const data::Sample> test, int threads = 1);

/// CRACKLOSS_THREADS, default 1.
int threads_from_env();

// ---- serialization ----

/// epoch,loss,jaccard,ods_f1,ois_f1,seconds. Without timing the seconds
/// column is written as 0 so the file is reproducible byte for byte.
std::string history_csv(const RunHistory& history, bool include_timing = false);
std::string history_json(const RunHistory& history, bool include_timing = false);
std::string report_json(const SpeedupReport& report);
/// One row per seed.
std::string report_csv(const SpeedupReport& report);
std::string sweep_csv(const SweepResult& result, std::span<const double> betas);
std::string sweep_json(const SweepResult& result, std::span<const double> betas);

} // namespace crackloss::bench
