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

// crackloss command-line tool.
//
// Exit codes: 0 ok, 1 configuration or usage error, 2 I/O error, 3 numerical
// failure (non-finite loss or failed gradient check).

#include "crackloss/bench.hpp"
#include "crackloss/config.hpp"
#include "crackloss/errors.hpp"
#include "crackloss/gradcheck.hpp"
#include "crackloss/io.hpp"
#include "crackloss/metrics.hpp"
#include "crackloss/model.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace crackloss;

namespace {

enum Exit : int { kOk = 0, kConfig = 1, kIo = 2, kNumerical = 3 };

struct Globals {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> seeds;
};

config::CliConfig load_config(const Globals& g)
{
    config::CliConfig cfg = g.config_path.empty() ? config::CliConfig{} : config::load(g.config_path);
    if (!g.out_dir.empty())
        cfg.output_dir = g.out_dir;
    if (g.seed)
        cfg.train.seed = *g.seed;
    if (g.seeds)
        cfg.n_seeds = *g.seeds;
    cfg.validate();
    return cfg;
}

void make_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
}

int cmd_synth(const Globals& g)
{
    const auto cfg = load_config(g);
    const fs::path out = cfg.output_dir;
    make_dir(out / "images");
    make_dir(out / "masks");

    auto write_split = [&](const char* prefix, const std::vector<data::Sample>& samples, const char* manifest) {
        std::vector<data::ManifestEntry> entries;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "%s_%04zu.pgm", prefix, i);
            const auto& s = samples[i];
            data::write_pgm(out / "images" / name, s.image.reshaped({s.image.dim(1), s.image.dim(2)}));
            data::write_pgm(out / "masks" / name, s.mask);
            entries.push_back({std::string("images/") + name, std::string("masks/") + name});
        }
        data::write_manifest(out / manifest, entries);
    };
    const auto split = config::load_split(cfg);
    write_split("train", split.train, "manifest.json");
    write_split("test", split.test, "manifest_test.json");
    std::printf("train: %zu samples, positive rate %.5f (target %.5f)\n", split.train.size(),
                data::positive_rate(split.train), cfg.synth.target_pos_rate);
    std::printf("test: %zu samples, positive rate %.5f\n", split.test.size(), data::positive_rate(split.test));
    return kOk;
}

int cmd_train(const Globals& g)
{
    const auto cfg = load_config(g);
    const fs::path out = cfg.output_dir;
    make_dir(out);
    const auto split = config::load_split(cfg);

    bench::RunHooks hooks;
    hooks.on_epoch = [](const bench::EpochRecord& e, const model::UNet&) {
        std::fprintf(stderr, "epoch %zu loss %.4f probe_jaccard %.4f ods_f1 %.4f ois_f1 %.4f\n", e.epoch,
                     e.mean_train_loss, e.train_jaccard, e.test_ods_f1, e.test_ois_f1);
    };
    model::UNetParams params;
    const auto history = bench::train_run(cfg.train, split.train, split.test, hooks, &params);
    io::write_file_atomic(out / "history.csv", bench::history_csv(history));
    io::write_file_atomic(out / "history.json", bench::history_json(history));
    model::save_checkpoint(out / "model.ckpt", cfg.train.unet, params);
    const auto& last = history.epochs.back();
    std::printf("%s seed %llu: final ods_f1 %.4f ois_f1 %.4f\n", history.label.c_str(),
                static_cast<unsigned long long>(history.seed), last.test_ods_f1, last.test_ois_f1);
    return kOk;
}

std::vector<fs::path> pgm_files(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw IoError("not a directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm")
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

int cmd_eval(const Globals& g, const fs::path& probs_dir, const fs::path& masks_dir)
{
    const auto cfg = load_config(g);
    const auto files = pgm_files(probs_dir);
    if (files.empty())
        throw IoError("no .pgm files in " + probs_dir.string());
    std::vector<Tensor> probs, masks;
    for (const auto& f : files) {
        const fs::path m = masks_dir / f.filename();
        if (!fs::exists(m))
            throw IoError("missing mask " + m.string() + " for " + f.string());
        probs.push_back(data::load_pgm(f));
        masks.push_back(data::binarize_gt(data::load_pgm(m), cfg.gt_threshold));
        if (probs.back().shape() != masks.back().shape())
            throw ValidationError(f.filename().string() + ": probability map and mask differ in size");
    }
    const auto report = metrics::evaluate(probs, masks, cfg.train.eval_grid);
    const metrics::ReportTag tag{probs_dir.filename().string(), "", "", ""};
    const std::string csv = metrics::csv_header() + metrics::csv_row(report, tag);
    const fs::path out = cfg.output_dir;
    make_dir(out);
    io::write_file_atomic(out / "eval.csv", csv);
    io::write_file_atomic(out / "eval.json", metrics::to_json(report, tag));
    std::fputs(csv.c_str(), stdout);
    return kOk;
}

int cmd_sweep(const Globals& g, const std::vector<double>& betas_flag)
{
    auto cfg = load_config(g);
    if (!betas_flag.empty()) {
        cfg.betas = betas_flag;
        cfg.validate();
    }
    const fs::path out = cfg.output_dir;
    make_dir(out / "reports");
    const auto split = config::load_split(cfg);
    const auto seeds = bench::seed_list(cfg.train.seed, cfg.n_seeds);
    const auto result =
        bench::sweep(cfg.baseline_train(), cfg.train, cfg.betas, seeds, split.train, split.test, bench::threads_from_env());
    for (const auto& r : result.reports) {
        io::write_file_atomic(out / "reports" / (r.candidate_id + ".csv"), bench::report_csv(r));
        io::write_file_atomic(out / "reports" / (r.candidate_id + ".json"), bench::report_json(r));
    }
    const std::string csv = bench::sweep_csv(result, cfg.betas);
    io::write_file_atomic(out / "sweep.csv", csv);
    io::write_file_atomic(out / "sweep.json", bench::sweep_json(result, cfg.betas));
    std::fputs(csv.c_str(), stdout);
    return kOk;
}

int cmd_gradcheck(const Globals& g, std::size_t instances)
{
    gradcheck::Options opt;
    opt.instances = instances;
    if (g.seed)
        opt.seed = *g.seed;
    bool ok = true;
    for (const auto& r : gradcheck::run_all(opt)) {
        std::printf("%-22s instances %4zu  max_rel_error %.3e  tolerance %.0e  %s\n", r.name.c_str(), r.instances,
                    r.max_rel_error, r.tolerance, r.passed() ? "ok" : "FAILED");
        ok = ok && r.passed();
    }
    return ok ? kOk : kNumerical;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Training and evaluation tools for crack segmentation losses"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config_path, "configuration file (flat key = value)");
    app.add_option("--out", g.out_dir, "output directory (overrides output_dir)");
    app.add_option("--seed", g.seed, "base seed (overrides seed)");
    app.add_option("--seeds", g.seeds, "number of seeds for sweep (overrides n_seeds)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset as PGM files");
    auto* train = app.add_subcommand("train", "train one network and write its history and checkpoint");
    auto* eval = app.add_subcommand("eval", "score probability maps against masks (ODS and OIS)");
    std::string probs_dir, masks_dir;
    eval->add_option("probs_dir", probs_dir, "directory of probability maps (.pgm)")->required();
    eval->add_option("masks_dir", masks_dir, "directory of ground-truth masks with matching names")->required();
    auto* sweep = app.add_subcommand("sweep", "compare the baseline against the candidate for each beta");
    std::vector<double> betas;
    sweep->add_option("--betas", betas, "penalty scales to try")->delimiter(',');
    auto* grad = app.add_subcommand("gradcheck", "check every analytic gradient against finite differences");
    std::size_t instances = 100;
    grad->add_option("--instances", instances, "random instances per suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfig;
    }

    try {
        if (*synth)
            return cmd_synth(g);
        if (*train)
            return cmd_train(g);
        if (*eval)
            return cmd_eval(g, probs_dir, masks_dir);
        if (*sweep)
            return cmd_sweep(g, betas);
        if (*grad)
            return cmd_gradcheck(g, instances);
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << " (byte " << e.offset() << ")\n";
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfig;
    }
    return kConfig;
}
