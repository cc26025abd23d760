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

#include "crackloss/bench.hpp"

#include "crackloss/errors.hpp"
#include "crackloss/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

namespace crackloss::bench {
namespace {

std::string fmt(double v)
{
    std::ostringstream os;
    os << v;
    return os.str();
}

std::string fixed(double v, int digits = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

constexpr std::size_t kEvalChunk = 10;

} // namespace

void TrainConfig::validate() const
{
    weight.validate();
    holistic.validate();
    unet.validate();
    if (!(lr > 0.0) || !std::isfinite(lr))
        throw ConfigError("lr must be > 0");
    if (batch_size == 0)
        throw ConfigError("batch_size must be >= 1");
    if (steps_per_epoch == 0)
        throw ConfigError("steps_per_epoch must be >= 1");
    if (eval_grid.empty())
        throw ConfigError("eval_grid must not be empty");
    for (double t : eval_grid)
        if (!(t > 0.0 && t < 1.0))
            throw ConfigError("eval_grid thresholds must lie in (0, 1)");
    if (!std::is_sorted(eval_grid.begin(), eval_grid.end()))
        throw ConfigError("eval_grid must be sorted ascending");
    if (probe_size == 0)
        throw ConfigError("probe_size must be >= 1");
    if (!(probe_lambda > 0.0))
        throw ConfigError("probe_lambda must be > 0");
}

std::string TrainConfig::label() const
{
    std::string s = weight.label();
    if (holistic.b > 0.0)
        s += "_" + fmt(holistic.a) + "_wj";
    else if (holistic.a != 1.0)
        s += "_a" + fmt(holistic.a);
    return s;
}

double probe_jaccard(const model::UNet& net, const data::Batch& probe, double lambda)
{
    const Tensor logits = net.predict(probe.images);
    if (!num::all_finite(logits.values()))
        throw NumericalError("non-finite network output on the Jaccard probe");
    return loss::soft_jaccard(loss::clamped_probs(logits), probe.masks, lambda);
}

metrics::EvalReport evaluate_model(const model::UNet& net, std::span<const data::Sample> samples,
                                   std::span<const double> grid)
{
    std::vector<Tensor> probs, masks;
    probs.reserve(samples.size());
    masks.reserve(samples.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
        idx.clear();
        for (std::size_t i = start; i < std::min(samples.size(), start + kEvalChunk); ++i)
            idx.push_back(i);
        const data::Batch b = data::stack_batch(samples, idx);
        const Tensor p = num::sigmoid(net.predict(b.images));
        if (!num::all_finite(p.values()))
            throw NumericalError("non-finite network output on evaluation sample " + std::to_string(start));
        const std::size_t H = p.dim(2), W = p.dim(3);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            Tensor plane({H, W});
            std::copy(p.data() + k * H * W, p.data() + (k + 1) * H * W, plane.data());
            probs.push_back(std::move(plane));
            masks.push_back(samples[idx[k]].mask);
        }
    }
    return metrics::evaluate(probs, masks, grid);
}

RunHistory train_run(const TrainConfig& cfg, std::span<const data::Sample> train, std::span<const data::Sample> test,
                     const RunHooks& hooks, model::UNetParams* final_params)
{
    cfg.validate();
    if (train.empty() || test.empty())
        throw ValidationError("train_run needs non-empty train and test sets");

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();

    const SeededRng root(cfg.seed);
    SeededRng init_rng = root.fork(0);
    SeededRng aug_rng = root.fork(2);
    model::UNet net(cfg.unet, model::he_init(cfg.unet, init_rng));
    model::AdamState adam = model::make_adam_state(net.params());
    data::BatchStream stream(train.size(), cfg.batch_size, root.fork(1));

    std::vector<std::size_t> probe_idx;
    for (std::size_t i = 0; i < std::min(cfg.probe_size, train.size()); ++i)
        probe_idx.push_back(i);
    const data::Batch probe = data::stack_batch(train, probe_idx);

    const bool square = train.front().mask.dim(0) == train.front().mask.dim(1);
    std::vector<data::Sample> batch_samples;
    std::vector<std::size_t> local;

    RunHistory history;
    history.label = cfg.label();
    history.seed = cfg.seed;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t step = 1; step <= cfg.steps_per_epoch; ++step) {
            const auto indices = stream.next();
            batch_samples.clear();
            local.clear();
            for (std::size_t i : indices) {
                if (cfg.augment) {
                    const std::uint64_t choice = aug_rng.uniform_int(square ? 6 : 3);
                    static constexpr data::GeomOp ops[] = {data::GeomOp::FlipH, data::GeomOp::FlipV,
                                                           data::GeomOp::Rot180, data::GeomOp::Rot90,
                                                           data::GeomOp::Rot270};
                    batch_samples.push_back(choice == 0 ? train[i]
                                                        : data::flip_rotate_augment(train[i], ops[choice - 1]));
                } else {
                    batch_samples.push_back(train[i]);
                }
                local.push_back(local.size());
            }
            const data::Batch batch = data::stack_batch(batch_samples, local);
            const Tensor logits = net.forward(batch.images);
            const bool finite_logits = num::all_finite(logits.values());
            const loss::LossOutput out =
                finite_logits ? loss::holistic(logits, batch.masks, cfg.weight, cfg.holistic, cfg.reduction)
                              : loss::LossOutput{};
            if (!finite_logits || !std::isfinite(out.value) || !num::all_finite(out.grad_logits.values()))
                throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                     std::to_string(step) + " (" + history.label + ", seed " +
                                     std::to_string(cfg.seed) + ")");
            loss_sum += out.value;
            const model::UNetParams& grads = net.backward(out.grad_logits);
            model::adam_step(net.params(), grads, adam, cfg.lr);
        }
        for (const auto& layer : net.params())
            if (!num::all_finite(layer.params.kernels.values()) || !num::all_finite(layer.params.biases.values()))
                throw NumericalError("non-finite parameters after epoch " + std::to_string(epoch) + " in layer " +
                                     layer.name);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_train_loss = loss_sum / static_cast<double>(cfg.steps_per_epoch);
        metrics::EvalReport report;
        try {
            rec.train_jaccard = probe_jaccard(net, probe, cfg.probe_lambda);
            report = evaluate_model(net, test, cfg.eval_grid);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " after epoch " + std::to_string(epoch) + " (" +
                                 history.label + ", seed " + std::to_string(cfg.seed) + ")");
        }
        rec.test_ods_f1 = report.ods.f1;
        rec.test_ois_f1 = report.ois.f1;
        rec.wall_seconds = std::chrono::duration<double>(clock::now() - t0).count();
        history.epochs.push_back(rec);
        if (hooks.on_epoch)
            hooks.on_epoch(rec, net);
    }
    if (final_params)
        *final_params = net.params();
    return history;
}

std::optional<std::size_t> epochs_to_target(const RunHistory& history, double target_f1)
{
    for (const auto& e : history.epochs)
        if (e.test_ods_f1 >= target_f1)
            return e.epoch;
    return std::nullopt;
}

Summary summarize(std::span<const double> values)
{
    Summary s;
    s.n = values.size();
    if (values.empty())
        return s;
    double acc = 0.0;
    for (double v : values)
        acc += v;
    s.mean = acc / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values)
        var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

namespace {

RunHistory mean_curve(std::span<const RunHistory> runs)
{
    RunHistory m;
    if (runs.empty())
        return m;
    std::size_t len = runs.front().epochs.size();
    for (const auto& r : runs)
        len = std::min(len, r.epochs.size());
    for (std::size_t e = 0; e < len; ++e) {
        EpochRecord rec;
        rec.epoch = e + 1;
        for (const auto& r : runs)
            rec.test_ods_f1 += r.epochs[e].test_ods_f1;
        rec.test_ods_f1 /= static_cast<double>(runs.size());
        m.epochs.push_back(rec);
    }
    return m;
}

double final_ods(const RunHistory& h) { return h.epochs.empty() ? 0.0 : h.epochs.back().test_ods_f1; }
double final_ois(const RunHistory& h) { return h.epochs.empty() ? 0.0 : h.epochs.back().test_ois_f1; }

} // namespace

SpeedupReport make_speedup_report(const std::string& baseline_id, const std::string& candidate_id,
                                  std::span<const RunHistory> baseline, std::span<const RunHistory> candidate,
                                  std::size_t baseline_epoch_budget)
{
    std::vector<double> finals;
    for (const auto& h : baseline)
        finals.push_back(final_ods(h));
    return make_speedup_report(baseline_id, candidate_id, baseline, candidate, baseline_epoch_budget,
                               summarize(finals).mean);
}

SpeedupReport make_speedup_report(const std::string& baseline_id, const std::string& candidate_id,
                                  std::span<const RunHistory> baseline, std::span<const RunHistory> candidate,
                                  std::size_t baseline_epoch_budget, double target_f1)
{
    if (baseline.size() != candidate.size() || baseline.empty())
        throw ValidationError("speedup report needs one baseline and one candidate run per seed");
    SpeedupReport r;
    r.baseline_id = baseline_id;
    r.candidate_id = candidate_id;
    r.target_f1 = target_f1;
    r.baseline_epochs = baseline.front().epochs.size();
    r.candidate_epochs = candidate.front().epochs.size();

    std::vector<double> bf, cf, bo, co, ce;
    std::size_t successes = 0;
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        SeedRow row;
        row.seed = candidate[i].seed;
        row.baseline_final_f1 = final_ods(baseline[i]);
        row.candidate_final_f1 = final_ods(candidate[i]);
        row.baseline_epochs_to_target = epochs_to_target(baseline[i], target_f1);
        row.candidate_epochs_to_target = epochs_to_target(candidate[i], target_f1);
        if (row.baseline_epochs_to_target && row.candidate_epochs_to_target)
            row.speedup_ratio = static_cast<double>(*row.baseline_epochs_to_target) /
                                static_cast<double>(*row.candidate_epochs_to_target);
        row.success = row.candidate_epochs_to_target && 2 * *row.candidate_epochs_to_target <= baseline_epoch_budget;
        successes += row.success ? 1 : 0;
        bf.push_back(row.baseline_final_f1);
        cf.push_back(row.candidate_final_f1);
        bo.push_back(final_ois(baseline[i]));
        co.push_back(final_ois(candidate[i]));
        if (row.candidate_epochs_to_target)
            ce.push_back(static_cast<double>(*row.candidate_epochs_to_target));
        r.seeds.push_back(row.seed);
        r.rows.push_back(row);
    }
    r.success_fraction = static_cast<double>(successes) / static_cast<double>(baseline.size());
    r.baseline_final_f1 = summarize(bf);
    r.candidate_final_f1 = summarize(cf);
    r.baseline_final_ois = summarize(bo);
    r.candidate_final_ois = summarize(co);
    r.candidate_epochs_to_target_stats = summarize(ce);
    r.baseline_epochs_to_target = epochs_to_target(mean_curve(baseline), target_f1);
    r.candidate_epochs_to_target = epochs_to_target(mean_curve(candidate), target_f1);
    if (r.baseline_epochs_to_target && r.candidate_epochs_to_target)
        r.speedup_ratio = static_cast<double>(*r.baseline_epochs_to_target) /
                          static_cast<double>(*r.candidate_epochs_to_target);
    return r;
}

std::vector<std::uint64_t> seed_list(std::uint64_t seed0, std::size_t n)
{
    std::vector<std::uint64_t> s(n);
    for (std::size_t i = 0; i < n; ++i)
        s[i] = seed0 + i;
    return s;
}

std::vector<RunHistory> run_jobs(std::span<const TrainJob> jobs, std::span<const data::Sample> train,
                                 std::span<const data::Sample> test, int threads)
{
    std::vector<RunHistory> out(jobs.size());
    const int total = std::max(1, threads);
    const int workers = std::min<int>(total, static_cast<int>(jobs.size()));
    if (workers <= 1) {
        const int saved = kernels::num_threads();
        kernels::set_num_threads(total);
        try {
            for (std::size_t i = 0; i < jobs.size(); ++i)
                out[i] = train_run(jobs[i].cfg, train, test);
        } catch (...) {
            kernels::set_num_threads(saved);
            throw;
        }
        kernels::set_num_threads(saved);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            kernels::set_num_threads(1);
            for (std::size_t i = next++; i < jobs.size(); i = next++) {
                try {
                    out[i] = train_run(jobs[i].cfg, train, test);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
    return out;
}

SpeedupReport compare(const TrainConfig& baseline, const TrainConfig& candidate, std::span<const std::uint64_t> seeds,
                      std::span<const data::Sample> train, std::span<const data::Sample> test, int threads,
                      std::vector<RunHistory>* baseline_runs, std::vector<RunHistory>* candidate_runs)
{
    if (seeds.empty())
        throw ConfigError("compare needs at least one seed");
    baseline.validate();
    candidate.validate();
    std::vector<TrainJob> jobs;
    for (auto s : seeds) {
        jobs.push_back({baseline});
        jobs.back().cfg.seed = s;
    }
    for (auto s : seeds) {
        jobs.push_back({candidate});
        jobs.back().cfg.seed = s;
    }
    auto runs = run_jobs(jobs, train, test, threads);
    std::vector<RunHistory> b(runs.begin(), runs.begin() + static_cast<std::ptrdiff_t>(seeds.size()));
    std::vector<RunHistory> c(runs.begin() + static_cast<std::ptrdiff_t>(seeds.size()), runs.end());
    SpeedupReport r = make_speedup_report(baseline.label(), candidate.label(), b, c, baseline.epochs);
    if (baseline_runs)
        *baseline_runs = std::move(b);
    if (candidate_runs)
        *candidate_runs = std::move(c);
    return r;
}

std::vector<double> default_sweep_betas() { return {0.25, 0.375, 0.5, 0.625, 0.75, 0.85, 0.875, 0.9, 0.95, 1.0}; }

loss::WeightSpec with_beta(const loss::WeightSpec& spec, double beta)
{
    loss::WeightSpec out = spec;
    if (auto* p = std::get_if<loss::Power>(&out.family))
        p->beta = beta;
    else if (auto* l = std::get_if<loss::Log>(&out.family))
        l->beta = beta;
    else if (auto* e = std::get_if<loss::Exp>(&out.family))
        e->beta = beta;
    else
        throw ConfigError("the " + spec.family_name() + " family has no beta to sweep");
    out.validate();
    return out;
}

SweepResult sweep(const TrainConfig& baseline, const TrainConfig& candidate, std::span<const double> betas,
                  std::span<const std::uint64_t> seeds, std::span<const data::Sample> train,
                  std::span<const data::Sample> test, int threads)
{
    if (betas.empty())
        throw ConfigError("sweep needs at least one beta");
    if (seeds.empty())
        throw ConfigError("sweep needs at least one seed");
    baseline.validate();
    std::vector<TrainJob> jobs;
    for (auto s : seeds) {
        jobs.push_back({baseline});
        jobs.back().cfg.seed = s;
    }
    for (double beta : betas)
        for (auto s : seeds) {
            TrainConfig c = candidate;
            c.weight = with_beta(candidate.weight, beta);
            c.seed = s;
            c.validate();
            jobs.push_back({c});
        }
    auto runs = run_jobs(jobs, train, test, threads);
    const auto n = static_cast<std::ptrdiff_t>(seeds.size());
    SweepResult result;
    result.baseline_runs.assign(runs.begin(), runs.begin() + n);
    for (std::size_t k = 0; k < betas.size(); ++k) {
        const auto first = runs.begin() + n * static_cast<std::ptrdiff_t>(k + 1);
        std::vector<RunHistory> cand(first, first + n);
        result.reports.push_back(make_speedup_report(baseline.label(), cand.front().label, result.baseline_runs,
                                                     cand, baseline.epochs));
    }
    return result;
}

int threads_from_env()
{
    const char* v = std::getenv("CRACKLOSS_THREADS");
    if (!v || !*v)
        return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1)
        return 1;
    return static_cast<int>(std::min<long>(n, 256));
}

// ---- serialization ----

std::string history_csv(const RunHistory& h, bool include_timing)
{
    std::string s = "epoch,loss,jaccard,ods_f1,ois_f1,seconds\n";
    for (const auto& e : h.epochs) {
        s += std::to_string(e.epoch) + "," + fixed(e.mean_train_loss, 9) + "," + fixed(e.train_jaccard, 9) + "," +
             fixed(e.test_ods_f1, 9) + "," + fixed(e.test_ois_f1, 9) + "," +
             fixed(include_timing ? e.wall_seconds : 0.0, 3) + "\n";
    }
    return s;
}

namespace {

nlohmann::ordered_json history_to_json(const RunHistory& h, bool include_timing)
{
    nlohmann::ordered_json j;
    j["label"] = h.label;
    j["seed"] = h.seed;
    auto& arr = j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : h.epochs)
        arr.push_back({{"epoch", e.epoch},
                       {"mean_train_loss", e.mean_train_loss},
                       {"train_jaccard", e.train_jaccard},
                       {"test_ods_f1", e.test_ods_f1},
                       {"test_ois_f1", e.test_ois_f1},
                       {"wall_seconds", include_timing ? e.wall_seconds : 0.0}});
    return j;
}

nlohmann::ordered_json opt(const std::optional<std::size_t>& v)
{
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json opt(const std::optional<double>& v)
{
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json summary_json(const Summary& s)
{
    return {{"mean", s.mean}, {"std", s.stddev}, {"n", s.n}};
}

nlohmann::ordered_json report_to_json(const SpeedupReport& r)
{
    nlohmann::ordered_json j;
    j["baseline_id"] = r.baseline_id;
    j["candidate_id"] = r.candidate_id;
    j["target_f1"] = r.target_f1;
    j["baseline_epochs"] = r.baseline_epochs;
    j["candidate_epochs"] = r.candidate_epochs;
    j["baseline_epochs_to_target"] = opt(r.baseline_epochs_to_target);
    j["candidate_epochs_to_target"] = opt(r.candidate_epochs_to_target);
    j["speedup_ratio"] = opt(r.speedup_ratio);
    j["seeds"] = r.seeds;
    j["success_fraction"] = r.success_fraction;
    j["baseline_final_ods_f1"] = summary_json(r.baseline_final_f1);
    j["candidate_final_ods_f1"] = summary_json(r.candidate_final_f1);
    j["baseline_final_ois_f1"] = summary_json(r.baseline_final_ois);
    j["candidate_final_ois_f1"] = summary_json(r.candidate_final_ois);
    j["candidate_epochs_to_target_stats"] = summary_json(r.candidate_epochs_to_target_stats);
    auto& rows = j["per_seed"] = nlohmann::ordered_json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"seed", row.seed},
                        {"baseline_final_f1", row.baseline_final_f1},
                        {"candidate_final_f1", row.candidate_final_f1},
                        {"baseline_epochs_to_target", opt(row.baseline_epochs_to_target)},
                        {"candidate_epochs_to_target", opt(row.candidate_epochs_to_target)},
                        {"speedup_ratio", opt(row.speedup_ratio)},
                        {"success", row.success}});
    return j;
}

std::string opt_str(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : ""; }
std::string opt_str(const std::optional<double>& v) { return v ? fixed(*v, 4) : ""; }

} // namespace

std::string history_json(const RunHistory& h, bool include_timing)
{
    return history_to_json(h, include_timing).dump(2) + "\n";
}

std::string report_json(const SpeedupReport& r) { return report_to_json(r).dump(2) + "\n"; }

std::string report_csv(const SpeedupReport& r)
{
    std::string s = "seed,baseline_final_f1,candidate_final_f1,baseline_epochs_to_target,candidate_epochs_to_target,"
                    "speedup_ratio,success\n";
    for (const auto& row : r.rows)
        s += std::to_string(row.seed) + "," + fixed(row.baseline_final_f1) + "," + fixed(row.candidate_final_f1) +
             "," + opt_str(row.baseline_epochs_to_target) + "," + opt_str(row.candidate_epochs_to_target) + "," +
             opt_str(row.speedup_ratio) + "," + (row.success ? "1" : "0") + "\n";
    return s;
}

std::string sweep_csv(const SweepResult& result, std::span<const double> betas)
{
    std::string s = "candidate,beta,target_f1,baseline_epochs_to_target,candidate_epochs_to_target,speedup_ratio,"
                    "success_fraction,baseline_f1_mean,baseline_f1_std,candidate_f1_mean,candidate_f1_std\n";
    for (std::size_t k = 0; k < result.reports.size(); ++k) {
        const auto& r = result.reports[k];
        s += r.candidate_id + "," + fmt(betas[k]) + "," + fixed(r.target_f1) + "," +
             opt_str(r.baseline_epochs_to_target) + "," + opt_str(r.candidate_epochs_to_target) + "," +
             opt_str(r.speedup_ratio) + "," + fixed(r.success_fraction, 4) + "," + fixed(r.baseline_final_f1.mean) +
             "," + fixed(r.baseline_final_f1.stddev) + "," + fixed(r.candidate_final_f1.mean) + "," +
             fixed(r.candidate_final_f1.stddev) + "\n";
    }
    return s;
}

std::string sweep_json(const SweepResult& result, std::span<const double> betas)
{
    nlohmann::ordered_json j;
    auto& arr = j["reports"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < result.reports.size(); ++k) {
        auto r = report_to_json(result.reports[k]);
        r["beta"] = betas[k];
        arr.push_back(std::move(r));
    }
    return j.dump(2) + "\n";
}

} // namespace crackloss::bench
