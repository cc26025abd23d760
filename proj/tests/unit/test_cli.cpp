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

#include <doctest.h>

#include "crackloss/data.hpp"
#include "crackloss/io.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fs = std::filesystem;
using namespace crackloss;

namespace {

struct Sandbox {
    fs::path dir;

    Sandbox() : dir(fs::temp_directory_path() / ("crackloss_cli_" + std::to_string(::getpid())))
    {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Sandbox() { fs::remove_all(dir); }

    // Runs the tool with stdout and stderr captured; returns the exit code.
    int run(const std::string& args) const
    {
        const std::string cmd = std::string("\"") + CRACKLOSS_CLI + "\" " + args + " > \"" +
                                (dir / "stdout.txt").string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    std::string out() const { return io::read_file_text(dir / "stdout.txt"); }
    std::string err() const { return io::read_file_text(dir / "stderr.txt"); }

    fs::path write(const std::string& name, const std::string& text) const
    {
        io::write_file_atomic(dir / name, std::string_view(text));
        return dir / name;
    }
};

const char* kTinyConfig = "width = 16\nheight = 16\ntarget_pos_rate = 0.05\ntrain_count = 6\ntest_count = 3\n"
                          "depth = 1\nbase_channels = 2\nsteps_per_epoch = 3\nepochs = 2\nlr = 0.01\n"
                          "probe_size = 2\nfamily = \"exp\"\nbeta = 0.75\n";

} // namespace

TEST_CASE("gradcheck passes and prints each suite")
{
    Sandbox s;
    CHECK(s.run("gradcheck --instances 5") == 0);
    CHECK(s.out().find("unet_depth1") != std::string::npos);
    CHECK(s.out().find("max_rel_error") != std::string::npos);
    CHECK(s.out().find("FAILED") == std::string::npos);
}

TEST_CASE("synth writes a dataset and reports the rate")
{
    Sandbox s;
    const auto cfg = s.write("c.toml", "train_count = 20\ntest_count = 4\n");
    REQUIRE(s.run("--config " + cfg.string() + " --out " + (s.dir / "data").string() + " synth") == 0);
    const auto manifest = data::read_manifest(s.dir / "data" / "manifest.json");
    CHECK(manifest.size() == 20);
    CHECK(data::read_manifest(s.dir / "data" / "manifest_test.json").size() == 4);
    const auto loaded = data::load_dataset(s.dir / "data" / "manifest.json");
    CHECK(loaded.size() == 20);
    const std::string out = s.out();
    const auto at = out.find("positive rate ");
    REQUIRE(at != std::string::npos);
    const double rate = std::stod(out.substr(at + 14));
    CHECK(rate >= 0.0055);
    CHECK(rate <= 0.0165);
}

TEST_CASE("exit codes")
{
    Sandbox s;
    const auto blocker = s.write("file.txt", "x");
    CHECK(s.run("--out " + (blocker / "sub").string() + " synth") == 2);
    CHECK(!s.err().empty());
    CHECK(s.run("--config " + s.write("bad.toml", "epochs = \"ten\"\n").string() + " synth") == 1);
    CHECK(s.err().find("epochs") != std::string::npos);
    CHECK(s.run("--config " + (s.dir / "missing.toml").string() + " synth") == 2);
    CHECK(s.run("frobnicate") == 1);
    CHECK(s.run("") == 1);
    CHECK(s.run("eval " + (s.dir / "nope").string() + " " + (s.dir / "nope").string()) == 2);
}

TEST_CASE("eval on perfect maps scores 1")
{
    Sandbox s;
    fs::create_directories(s.dir / "probs");
    fs::create_directories(s.dir / "masks");
    const auto samples = data::synth_generate(data::SynthConfig{}, 3);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string name = "m" + std::to_string(i) + ".pgm";
        data::write_pgm(s.dir / "probs" / name, samples[i].mask);
        data::write_pgm(s.dir / "masks" / name, samples[i].mask);
    }
    REQUIRE(s.run("--out " + (s.dir / "ev").string() + " eval " + (s.dir / "probs").string() + " " +
                  (s.dir / "masks").string()) == 0);
    CHECK(s.out().find("1.000000,1.000000,1.000000,1.000000,1.000000,1.000000") != std::string::npos);
    const auto j = nlohmann::json::parse(io::read_file_text(s.dir / "ev" / "eval.json"));
    CHECK(j["ods"]["f1"] == 1.0);
    CHECK(j["ois"]["f1"] == 1.0);
    CHECK(io::read_file_text(s.dir / "ev" / "eval.csv") == s.out());

    // A corrupt probability map is an input error.
    s.write("probs/m0.pgm", "P5\n2 2\n999\n");
    CHECK(s.run("--out " + (s.dir / "ev").string() + " eval " + (s.dir / "probs").string() + " " +
                (s.dir / "masks").string()) == 2);
}

TEST_CASE("train writes history and checkpoint reproducibly")
{
    Sandbox s;
    const auto cfg = s.write("c.toml", kTinyConfig);
    REQUIRE(s.run("--config " + cfg.string() + " --out " + (s.dir / "a").string() + " train") == 0);
    REQUIRE(s.run("--config " + cfg.string() + " --out " + (s.dir / "b").string() + " train") == 0);
    const std::string csv = io::read_file_text(s.dir / "a" / "history.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv == io::read_file_text(s.dir / "b" / "history.csv"));
    CHECK(fs::file_size(s.dir / "a" / "model.ckpt") > 0);
    CHECK(fs::exists(s.dir / "a" / "history.json"));
    REQUIRE(s.run("--config " + cfg.string() + " --seed 9 --out " + (s.dir / "c").string() + " train") == 0);
    CHECK(csv != io::read_file_text(s.dir / "c" / "history.csv"));
}

TEST_CASE("sweep writes one row per beta")
{
    Sandbox s;
    const auto cfg = s.write("c.toml", std::string(kTinyConfig) + "epochs = 1\n");
    // Duplicate key.
    CHECK(s.run("--config " + cfg.string() + " sweep") == 1);
    const auto good = s.write("g.toml", std::string(kTinyConfig).replace(std::string(kTinyConfig).find("epochs = 2"),
                                                                        10, "epochs = 1"));
    const std::string args = "--config " + good.string() + " --seeds 2 sweep --betas 0.5,1 --out ";
    REQUIRE(s.run(args + (s.dir / "s1").string()) == 0);
    REQUIRE(s.run(args + (s.dir / "s2").string()) == 0);
    const std::string csv = io::read_file_text(s.dir / "s1" / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv == io::read_file_text(s.dir / "s2" / "sweep.csv"));
    CHECK(io::read_file_text(s.dir / "s1" / "reports" / "0.5_exp.csv") ==
          io::read_file_text(s.dir / "s2" / "reports" / "0.5_exp.csv"));
}
