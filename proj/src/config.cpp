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

#include "crackloss/config.hpp"

#include "crackloss/errors.hpp"
#include "crackloss/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <set>

namespace crackloss::config {
namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view k)
{
    if (k.empty())
        return false;
    for (const char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'))
            return false;
    return true;
}

bool parse_number(std::string_view tok, double& out)
{
    if (!tok.empty() && tok.front() == '+')
        tok.remove_prefix(1);
    std::string clean;
    for (const char c : tok)
        if (c != '_')
            clean.push_back(c);
    const char* end = clean.data() + clean.size();
    const auto [ptr, ec] = std::from_chars(clean.data(), end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

class LineParser {
public:
    LineParser(std::string_view s, std::size_t line, std::size_t offset) : s_(s), line_(line), offset_(offset) {}

    [[noreturn]] void fail(const std::string& msg) const
    {
        throw ParseError("config line " + std::to_string(line_) + ": " + msg, offset_ + pos_);
    }

    void skip_ws()
    {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r'))
            ++pos_;
    }

    bool at_end_or_comment()
    {
        skip_ws();
        return pos_ == s_.size() || s_[pos_] == '#';
    }

    std::string quoted()
    {
        ++pos_; // opening quote
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            char c = s_[pos_++];
            if (c == '\\') {
                if (pos_ == s_.size())
                    fail("unterminated escape");
                switch (const char e = s_[pos_++]) {
                case '"': c = '"'; break;
                case '\\': c = '\\'; break;
                case 'n': c = '\n'; break;
                case 't': c = '\t'; break;
                default: fail(std::string("unknown escape \\") + e);
                }
            }
            out.push_back(c);
        }
        if (pos_ == s_.size())
            fail("unterminated string");
        ++pos_;
        return out;
    }

    std::string_view bare_token()
    {
        const std::size_t b = pos_;
        while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
               s_[pos_] != '\t' && s_[pos_] != '\r')
            ++pos_;
        return s_.substr(b, pos_ - b);
    }

    Value value()
    {
        skip_ws();
        Value v;
        v.line = line_;
        if (pos_ == s_.size())
            fail("missing value");
        if (s_[pos_] == '"') {
            v.kind = Value::Kind::String;
            v.text = quoted();
        } else if (s_[pos_] == '[') {
            v.kind = Value::Kind::Array;
            ++pos_;
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == ']') {
                ++pos_;
                return v;
            }
            for (;;) {
                skip_ws();
                const auto tok = bare_token();
                double d = 0.0;
                if (!parse_number(tok, d))
                    fail("array items must be numbers, got '" + std::string(tok) + "'");
                v.items.push_back(d);
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    break;
                }
                fail("expected ',' or ']' in array");
            }
        } else {
            const auto tok = bare_token();
            v.text = std::string(tok);
            if (tok == "true" || tok == "false") {
                v.kind = Value::Kind::Bool;
                v.boolean = tok == "true";
            } else if (parse_number(tok, v.number)) {
                v.kind = Value::Kind::Number;
            } else {
                fail("cannot parse value '" + std::string(tok) + "'");
            }
        }
        return v;
    }

    std::size_t pos_ = 0;

private:
    std::string_view s_;
    std::size_t line_;
    std::size_t offset_;
};

class Reader {
public:
    explicit Reader(const Table& t) : t_(t) {}

    const Value* find(const std::string& key)
    {
        const auto it = t_.find(key);
        if (it == t_.end())
            return nullptr;
        used_.insert(key);
        return &it->second;
    }

    [[noreturn]] static void fail(const std::string& key, const Value& v, const std::string& msg)
    {
        throw ConfigError("config key '" + key + "' (line " + std::to_string(v.line) + "): " + msg);
    }

    void number(const std::string& key, double& out)
    {
        if (const Value* v = find(key)) {
            if (v->kind != Value::Kind::Number)
                fail(key, *v, "expected a number");
            out = v->number;
        }
    }

    template <class U>
    void integer(const std::string& key, U& out)
    {
        if (const Value* v = find(key)) {
            U parsed{};
            const char* end = v->text.data() + v->text.size();
            const auto [ptr, ec] = std::from_chars(v->text.data(), end, parsed);
            if (v->kind != Value::Kind::Number || ec != std::errc{} || ptr != end)
                fail(key, *v, "expected a non-negative integer");
            out = parsed;
        }
    }

    void boolean(const std::string& key, bool& out)
    {
        if (const Value* v = find(key)) {
            if (v->kind != Value::Kind::Bool)
                fail(key, *v, "expected true or false");
            out = v->boolean;
        }
    }

    void string(const std::string& key, std::string& out)
    {
        if (const Value* v = find(key)) {
            if (v->kind != Value::Kind::String)
                fail(key, *v, "expected a quoted string");
            out = v->text;
        }
    }

    void array(const std::string& key, std::vector<double>& out)
    {
        if (const Value* v = find(key)) {
            if (v->kind != Value::Kind::Array)
                fail(key, *v, "expected an array of numbers");
            out = v->items;
        }
    }

    void reject_unused() const
    {
        for (const auto& [k, v] : t_)
            if (!used_.count(k))
                fail(k, v, "unknown key");
    }

private:
    const Table& t_;
    std::set<std::string> used_;
};

// Reads `<prefix>family` and the parameters that apply to it.
loss::Family read_family(Reader& r, const std::string& prefix, const loss::Family& fallback)
{
    std::string name;
    r.string(prefix + "family", name);
    const char* params[] = {"beta", "gamma", "base", "q"};
    std::set<std::string> allowed;
    loss::Family fam = fallback;
    if (!name.empty()) {
        if (name == "xie")
            fam = loss::Xie{};
        else if (name == "power")
            fam = loss::Power{}, allowed = {"beta", "gamma"};
        else if (name == "log")
            fam = loss::Log{}, allowed = {"beta"};
        else if (name == "exp")
            fam = loss::Exp{}, allowed = {"beta", "base", "gamma"};
        else if (name == "const" || name == "constant")
            fam = loss::Constant{}, allowed = {"q"};
        else
            Reader::fail(prefix + "family", *r.find(prefix + "family"),
                         "unknown family '" + name + "' (xie, power, log, exp, const)");
    } else {
        allowed = std::visit(
            [](const auto& f) -> std::set<std::string> {
                using F = std::decay_t<decltype(f)>;
                if constexpr (std::is_same_v<F, loss::Power>)
                    return {"beta", "gamma"};
                else if constexpr (std::is_same_v<F, loss::Log>)
                    return {"beta"};
                else if constexpr (std::is_same_v<F, loss::Exp>)
                    return {"beta", "base", "gamma"};
                else if constexpr (std::is_same_v<F, loss::Constant>)
                    return {"q"};
                else
                    return {};
            },
            fam);
    }
    for (const char* p : params) {
        const std::string key = prefix + p;
        const Value* v = r.find(key);
        if (v && !allowed.count(p))
            Reader::fail(key, *v, "does not apply to the chosen family");
    }
    std::visit(
        [&](auto& f) {
            using F = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<F, loss::Power>) {
                r.number(prefix + "beta", f.beta);
                r.number(prefix + "gamma", f.gamma);
            } else if constexpr (std::is_same_v<F, loss::Log>) {
                r.number(prefix + "beta", f.beta);
            } else if constexpr (std::is_same_v<F, loss::Exp>) {
                r.number(prefix + "beta", f.beta);
                r.number(prefix + "base", f.base);
                r.number(prefix + "gamma", f.gamma);
            } else if constexpr (std::is_same_v<F, loss::Constant>) {
                r.number(prefix + "q", f.q);
            }
        },
        fam);
    return fam;
}

void with_group(const char* group, const std::function<void()>& check)
{
    try {
        check();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config ") + group + ": " + e.what());
    }
}

} // namespace

Table parse_table(std::string_view text)
{
    Table t;
    std::size_t offset = 0, line_no = 0;
    while (offset <= text.size()) {
        const auto nl = text.find('\n', offset);
        const std::string_view line = text.substr(offset, nl == std::string_view::npos ? text.npos : nl - offset);
        ++line_no;
        LineParser p(line, line_no, offset);
        if (!p.at_end_or_comment()) {
            if (line[p.pos_] == '[')
                p.fail("section headers are not supported; use flat keys");
            const auto eq = line.find('=');
            if (eq == std::string_view::npos)
                p.fail("expected key = value");
            const std::string key(trim(line.substr(0, eq)));
            if (!valid_key(key))
                p.fail("invalid key '" + key + "'");
            p.pos_ = eq + 1;
            Value v = p.value();
            if (!p.at_end_or_comment())
                p.fail("unexpected text after value");
            if (!t.emplace(key, std::move(v)).second)
                p.fail("duplicate key '" + key + "'");
        }
        if (nl == std::string_view::npos)
            break;
        offset = nl + 1;
    }
    return t;
}

CliConfig from_table(const Table& table)
{
    CliConfig c;
    Reader r(table);

    r.integer("width", c.synth.width);
    r.integer("height", c.synth.height);
    r.number("target_pos_rate", c.synth.target_pos_rate);
    r.integer("n_cracks_min", c.synth.n_cracks_min);
    r.integer("n_cracks_max", c.synth.n_cracks_max);
    r.number("noise_sigma", c.synth.noise_sigma);
    r.number("crack_intensity_delta", c.synth.crack_intensity_delta);
    r.number("background", c.synth.background);
    r.integer("synth_seed", c.synth.seed);
    r.integer("train_count", c.train_count);
    r.integer("test_count", c.test_count);
    r.string("train_manifest", c.train_manifest);
    r.string("test_manifest", c.test_manifest);
    r.number("gt_threshold", c.gt_threshold);

    auto& t = c.train;
    t.weight.family = read_family(r, "", loss::Xie{});
    r.number("count_smoothing", t.weight.count_smoothing);
    r.number("a", t.holistic.a);
    r.number("b", t.holistic.b);
    r.number("lambda", t.holistic.lambda);
    std::string reduction;
    r.string("reduction", reduction);
    if (reduction == "mean")
        t.reduction = loss::Reduction::MeanPerPixel;
    else if (!reduction.empty() && reduction != "sum")
        Reader::fail("reduction", *r.find("reduction"), "expected \"sum\" or \"mean\"");
    r.number("lr", t.lr);
    r.integer("batch_size", t.batch_size);
    r.integer("steps_per_epoch", t.steps_per_epoch);
    r.integer("epochs", t.epochs);
    r.integer("seed", t.seed);
    r.integer("depth", t.unet.depth);
    r.integer("base_channels", t.unet.base_channels);
    r.boolean("augment", t.augment);
    r.integer("probe_size", t.probe_size);
    std::size_t grid_steps = 0;
    r.integer("grid_steps", grid_steps);
    if (grid_steps)
        t.eval_grid = metrics::default_grid(grid_steps);

    c.baseline.family = read_family(r, "baseline_", loss::Xie{});
    c.baseline.count_smoothing = t.weight.count_smoothing;
    r.integer("n_seeds", c.n_seeds);
    r.array("betas", c.betas);
    std::string out;
    r.string("output_dir", out);
    if (!out.empty())
        c.output_dir = out;

    r.reject_unused();
    c.validate();
    return c;
}

void CliConfig::validate() const
{
    with_group("model", [&] { train.unet.validate(); });
    with_group("synth", [&] { synth.validate(train.unet.size_multiple()); });
    with_group("loss", [&] {
        train.weight.validate();
        train.holistic.validate();
        baseline.validate();
    });
    with_group("train", [&] { train.validate(); });
    with_group("data", [&] {
        if (train_count == 0 || test_count == 0)
            throw ConfigError("train_count and test_count must be >= 1");
        if (train_manifest.empty() != test_manifest.empty())
            throw ConfigError("train_manifest and test_manifest must be given together");
        if (!(gt_threshold >= 0.0 && gt_threshold < 1.0))
            throw ConfigError("gt_threshold must lie in [0, 1)");
    });
    with_group("sweep", [&] {
        if (n_seeds == 0)
            throw ConfigError("n_seeds must be >= 1");
        for (const double b : betas)
            if (!(b > 0.0 && b <= 1.0))
                throw ConfigError("betas must lie in (0, 1]");
    });
}

bench::TrainConfig CliConfig::baseline_train() const
{
    bench::TrainConfig b = train;
    b.weight = baseline;
    b.holistic = loss::HolisticConfig{};
    return b;
}

DataSplit load_split(const CliConfig& cfg)
{
    DataSplit split;
    if (!cfg.train_manifest.empty()) {
        split.train = data::load_dataset(cfg.train_manifest, cfg.gt_threshold);
        split.test = data::load_dataset(cfg.test_manifest, cfg.gt_threshold);
        return split;
    }
    split.train = data::synth_generate(cfg.synth, cfg.train_count);
    data::SynthConfig test_cfg = cfg.synth;
    test_cfg.seed = cfg.synth.seed + 1;
    split.test = data::synth_generate(test_cfg, cfg.test_count);
    return split;
}

CliConfig parse(std::string_view text)
{
    try {
        return from_table(parse_table(text));
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

CliConfig load(const std::filesystem::path& path) { return parse(io::read_file_text(path)); }

} // namespace crackloss::config
