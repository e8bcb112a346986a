#include "absaforge/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "absaforge/corpus.hpp"
#include "absaforge/llm_gateway.hpp"
#include "absaforge/log.hpp"
#include "absaforge/metrics.hpp"
#include "absaforge/pipeline.hpp"
#include "absaforge/text.hpp"

namespace absaforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

const std::vector<std::pair<std::string, std::string>> kEnvOptions = {
    {"ABSA_FORGE_ENDPOINT", "--endpoint"},
    {"ABSA_FORGE_MODEL", "--model"},
    {"ABSA_FORGE_TIMEOUT_MS", "--timeout-ms"},
};

struct BackendFlags {
    std::string backend = "ollama";
    std::string endpoint = "http://localhost:11434";
    std::string model = "qwen2.5:14b";
    int timeout_ms = 120'000;
    int max_retries = 3;
    std::string script;
    std::string script_mode = "sequence";
    std::string record;

    BackendConfig build() const {
        BackendConfig c;
        c.api_flavor = parse_api_flavor(backend);
        c.model = model;
        c.timeout_ms = timeout_ms;
        c.max_retries = max_retries;
        c.script_mode = script_mode == "fingerprint" ? ScriptMode::fingerprint : ScriptMode::sequence;
        if (c.api_flavor == ApiFlavor::scripted) {
            if (script.empty()) throw UsageError("--backend scripted requires --script");
            if (!record.empty()) throw UsageError("--record cannot be combined with --backend scripted");
            c.script_path = script;
        } else {
            c.endpoint_url = endpoint;
        }
        try {
            c.validate();
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
        if (!record.empty()) c = record_transcript(c, record);
        return c;
    }
};

void add_backend_flags(CLI::App* sub, BackendFlags& f) {
    sub->add_option("--backend", f.backend, "Chat backend")
        ->check(CLI::IsMember({"ollama", "openai", "scripted"}))
        ->capture_default_str();
    sub->add_option("--endpoint", f.endpoint, "Base URL of the chat server (env ABSA_FORGE_ENDPOINT)")
        ->capture_default_str();
    sub->add_option("--model", f.model, "Model name sent with each request (env ABSA_FORGE_MODEL)")
        ->capture_default_str();
    sub->add_option("--timeout-ms", f.timeout_ms, "Per-request timeout (env ABSA_FORGE_TIMEOUT_MS)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--max-retries", f.max_retries, "Retries on transport errors, 429 and 5xx")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--script", f.script, "Transcript replayed by the scripted backend");
    sub->add_option("--script-mode", f.script_mode, "How scripted replies are matched to requests")
        ->check(CLI::IsMember({"sequence", "fingerprint"}))
        ->capture_default_str();
    sub->add_option("--record", f.record, "Append every live exchange to this transcript");
}

void add_common(CLI::App* sub, std::string& config, std::uint64_t& seed) {
    sub->add_option("--config", config, "key=value file; flags override it, it overrides env");
    sub->add_option("--seed", seed, "Random seed")->capture_default_str();
}

std::vector<Task> parse_tasks(const std::vector<std::string>& words) {
    std::vector<Task> out;
    for (const auto& w : words) out.push_back(parse_task(w));
    return out;
}

void write_text(const std::string& path, const std::string& content, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << content;
        return;
    }
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + path + "'");
    f << content;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// Config and environment overlay

std::map<std::string, std::string> read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path.string() + "'");
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = text::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';' || t[0] == '[') continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos) {
            throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
        }
        std::string key(text::trim(t.substr(0, eq)));
        std::string value(text::trim(t.substr(eq + 1)));
        std::replace(key.begin(), key.end(), '_', '-');
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        kv[key] = value;
    }
    return kv;
}

bool given(const std::vector<std::string>& args, const std::string& flag) {
    for (const auto& a : args) {
        if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
}

std::optional<std::string> flag_value(const std::vector<std::string>& args, const std::string& flag) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == flag && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind(flag + "=", 0) == 0) return args[i].substr(flag.size() + 1);
    }
    return std::nullopt;
}

/// Appends config and environment values for options absent from `args`.
std::vector<std::string> overlay(CLI::App& app, std::vector<std::string> args, const EnvLookup& env) {
    CLI::App* sub = nullptr;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            ++i;
            continue;
        }
        if (!args[i].empty() && args[i][0] != '-') {
            sub = app.get_subcommand_no_throw(args[i]);
            break;
        }
    }
    if (!sub) return args;

    const auto original = args;
    std::set<std::string> from_config;
    if (auto path = flag_value(original, "--config")) {
        for (const auto& [key, value] : read_config(*path)) {
            const std::string flag = "--" + key;
            const CLI::Option* opt = sub->get_option_no_throw(flag);
            if (!opt) {
                bool known = false;
                for (const auto* other : app.get_subcommands([](CLI::App*) { return true; })) {
                    known = known || other->get_option_no_throw(flag) != nullptr;
                }
                if (!known) throw UsageError("unknown key '" + key + "' in config file");
                continue;
            }
            if (given(original, flag)) continue;
            from_config.insert(flag);
            if (opt->get_expected_min() == 0) {
                if (value == "true" || value == "1" || value == "yes") args.push_back(flag);
            } else {
                args.push_back(flag);
                args.push_back(value);
            }
        }
    }
    for (const auto& [var, flag] : kEnvOptions) {
        if (!sub->get_option_no_throw(flag) || given(original, flag) || from_config.count(flag)) continue;
        if (auto v = env(var)) {
            args.push_back(flag);
            args.push_back(*v);
        }
    }
    return args;
}

// ---------------------------------------------------------------------------

struct AugmentFlags {
    std::string method;
    std::string train;
    std::string out;
    std::optional<double> ratio;
    std::optional<std::size_t> count;
    std::string task = "aspe";
    std::uint64_t seed = 0;
    int max_attempts = kDefaultMaxAttempts;
    std::size_t workers = 1;
    std::string domain;
    std::string evaluator = "fixed";
    std::size_t style_sentences = kDefaultStyleSentences;
    std::string sampling = "uniform";
    std::string stats;
    std::string trace_dir;
    bool fresh = false;
    std::string prompt_dir;
    std::uint64_t call_budget = 0;
    BackendFlags backend;
};

std::string default_stats_path(const std::string& out) {
    fs::path p(out);
    return (p.parent_path() / (p.stem().string() + ".stats.json")).string();
}

int cmd_augment(const AugmentFlags& f, std::ostream& out, std::ostream& err) {
    if (f.ratio.has_value() == f.count.has_value()) throw UsageError("exactly one of --ratio and --count is required");
    RunConfig c;
    c.method = parse_method(f.method);
    c.task = parse_task(f.task);
    c.train_path = f.train;
    c.ratio = f.ratio;
    c.count = f.count;
    c.seed = f.seed;
    c.max_attempts_per_sample = f.max_attempts;
    c.workers = f.workers;
    c.domain = f.domain;
    c.evaluator_mode = f.evaluator == "react" ? EvaluatorMode::react : EvaluatorMode::fixed;
    c.style_sentences = f.style_sentences;
    c.sampling = f.sampling == "frequency" ? SamplingMode::frequency_weighted : SamplingMode::uniform;
    c.output_path = f.out;
    c.stats_path = f.stats.empty() ? default_stats_path(f.out) : f.stats;
    if (!f.trace_dir.empty()) c.trace_dir = f.trace_dir;
    if (!f.prompt_dir.empty()) c.prompt_dir = f.prompt_dir;
    c.resume = !f.fresh;
    c.call_budget = f.call_budget;
    c.backend = f.backend.build();
    try {
        c.validate();
    } catch (const InvalidArgument& e) {
        throw UsageError(e.what());
    }

    try {
        Gateway gateway(c.backend);
        const auto result = absaforge::run(c, gateway);
        out << result.stats.to_table();
        return result.stats.accepted < result.stats.requested ? kExitPartial : kExitOk;
    } catch (const RunError& e) {
        out << e.stats().to_table();
        err << "error: " << e.what() << "\n";
        return kExitFatal;
    }
}

struct MixFlags {
    std::string original, synthetic, out;
    double ratio = 1.0;
    std::uint64_t seed = 0;
    bool allow_truncate = false;
};

int cmd_mix(const MixFlags& f, std::ostream& out) {
    const auto original = load_semeval(f.original);
    const auto synthetic = load_semeval(f.synthetic);
    auto mixed = mix(original, synthetic, f.ratio, f.seed, !f.allow_truncate);
    save_dataset(mixed, f.out);
    std::size_t orig = 0;
    for (const auto& ex : mixed.examples) orig += ex.provenance == Provenance::original;
    out << "wrote " << mixed.size() << " records (" << orig << " original, " << mixed.size() - orig
        << " synthetic) to " << f.out << "\n";
    return kExitOk;
}

struct ScoreFlags {
    std::string task, gold, manifest, format = "table";
    std::vector<std::string> preds;
    std::uint64_t seed = 0;
};

int cmd_score(const ScoreFlags& f, std::ostream& out) {
    const auto task = parse_task(f.task);
    const auto gold = load_semeval(f.gold);
    if (!f.manifest.empty()) check_alignment(gold, task, read_lines(f.manifest));
    std::vector<F1Report> reports;
    for (const auto& p : f.preds) reports.push_back(score(gold, read_lines(p), task));
    if (f.format == "json") {
        ordered_json j;
        auto runs = ordered_json::array();
        for (const auto& r : reports) runs.push_back(r.to_json());
        j["runs"] = std::move(runs);
        if (reports.size() > 1) j["summary"] = average_runs(reports).to_json();
        out << j.dump(2) << "\n";
        return kExitOk;
    }
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (reports.size() > 1) out << f.preds[i] << "\n";
        out << format_f1(reports[i]);
    }
    if (reports.size() > 1) out << "average\n" << format_summary(average_runs(reports));
    return kExitOk;
}

struct ConsistencyFlags {
    std::string synthetic, judge = "verifier", judge_script, judge_endpoint, prompt_dir, format = "table";
    std::vector<std::string> tasks{"ate", "atsc", "aspe"};
    std::uint64_t seed = 0;
    BackendFlags backend;
};

int cmd_consistency(const ConsistencyFlags& f, std::ostream& out) {
    const auto data = load_semeval(f.synthetic);
    const auto tasks = parse_tasks(f.tasks);
    std::unique_ptr<Judge> judge;
    std::unique_ptr<Gateway> gateway;
    if (f.judge == "echo") {
        judge = std::make_unique<EchoJudge>();
    } else if (f.judge == "scripted") {
        if (f.judge_script.empty()) throw UsageError("--judge scripted requires --judge-script");
        judge = std::make_unique<ScriptedJudge>(ScriptedJudge::from_file(f.judge_script));
    } else if (f.judge == "seq2seq") {
        if (f.judge_endpoint.empty()) throw UsageError("--judge seq2seq requires --judge-endpoint");
        judge = std::make_unique<Seq2SeqJudge>(f.judge_endpoint, f.backend.timeout_ms);
    } else {
        gateway = std::make_unique<Gateway>(f.backend.build());
        judge = std::make_unique<VerifierJudge>(
            *gateway, f.prompt_dir.empty() ? PromptSet::defaults() : PromptSet::load(f.prompt_dir));
    }
    const auto report = measure_consistency(data, *judge, tasks);
    if (f.format == "json") {
        out << report.to_json().dump(2) << "\n";
    } else {
        out << format_consistency(report);
    }
    return kExitOk;
}

struct DistributionFlags {
    std::vector<std::string> datasets;
    std::string lexicon, format = "table";
    std::size_t top = 0;
    std::uint64_t seed = 0;
};

int cmd_distribution(const DistributionFlags& f, std::ostream& out) {
    TermFilter filter;
    if (!f.lexicon.empty()) filter = load_lexicon(f.lexicon);
    ordered_json all = ordered_json::object();
    for (const auto& path : f.datasets) {
        const auto data = load_semeval(path);
        const auto report = distribution_report(data, filter);
        if (f.format == "json") {
            all[data.name] = report.to_json();
        } else {
            out << data.name << " (" << report.examples << " examples, " << report.annotations
                << " annotations)\n"
                << format_distribution(report, f.top);
        }
    }
    if (f.format == "json") out << all.dump(2) << "\n";
    return kExitOk;
}

struct PlanFlags {
    std::vector<std::string> methods, tasks, datasets;
    std::vector<double> ratios;
    std::string data_dir = "data", out_dir = "runs", manifest;
    std::uint64_t seed = 0;
};

int cmd_plan(const PlanFlags& f, std::ostream& out) {
    ExperimentGrid grid;
    for (const auto& m : f.methods) grid.methods.push_back(parse_method(m));
    grid.ratios = f.ratios;
    grid.tasks = parse_tasks(f.tasks);
    grid.datasets = f.datasets;
    grid.data_dir = f.data_dir;
    grid.out_dir = f.out_dir;
    grid.base_seed = f.seed;
    const auto configs = plan_experiment(grid);
    write_text(f.manifest, plan_manifest(configs), out);
    if (!f.manifest.empty()) out << "wrote " << configs.size() << " runs to " << f.manifest << "\n";
    return kExitOk;
}

struct ReplayFlags {
    std::string stats, transcript, expected, train, prompt_dir, script_mode = "fingerprint";
    std::uint64_t seed = 0;
};

int cmd_replay(const ReplayFlags& f, CLI::App* sub, std::ostream& out, std::ostream& err) {
    const auto record = json::parse(read_file(f.stats), nullptr, false);
    if (!record.is_object() || !record.contains("config")) {
        throw FormatError("'" + f.stats + "' is not a run stats file");
    }
    auto c = RunConfig::from_json(record["config"]);
    if (sub->count("--seed")) c.seed = f.seed;
    if (!f.train.empty()) c.train_path = f.train;
    if (!f.prompt_dir.empty()) c.prompt_dir = f.prompt_dir;
    fs::path expected = f.expected.empty() ? (c.output_path ? *c.output_path : fs::path()) : fs::path(f.expected);
    if (expected.empty()) throw UsageError("no expected dataset: pass --expected");

    const auto scratch = fs::temp_directory_path() /
                         ("absa_forge_replay_" + text::hex64(text::fnv1a64(f.stats + f.transcript)));
    fs::create_directories(scratch);
    c.output_path = scratch / "replay.jsonl";
    c.stats_path.reset();
    c.trace_dir.reset();
    c.resume = false;
    c.backend = BackendConfig{};
    c.backend.api_flavor = ApiFlavor::scripted;
    c.backend.script_path = f.transcript;
    c.backend.script_mode = f.script_mode == "sequence" ? ScriptMode::sequence : ScriptMode::fingerprint;

    Gateway gateway(c.backend);
    try {
        absaforge::run(c, gateway);
    } catch (const RunError& e) {
        err << "replay run failed: " << e.what() << "\n";
    }
    const auto got = read_file(*c.output_path);
    const auto want = read_file(expected);
    fs::remove_all(scratch);
    if (got == want) {
        out << "replay identical: " << want.size() << " bytes\n";
        return kExitOk;
    }
    std::size_t at = 0;
    while (at < got.size() && at < want.size() && got[at] == want[at]) ++at;
    out << "replay differs from " << expected.string() << " at byte " << at << " (" << got.size() << " vs "
        << want.size() << " bytes)\n";
    return kExitMismatch;
}

struct RenderFlags {
    std::string dataset, task, instances, targets, manifest;
    std::uint64_t seed = 0;
};

int cmd_render(const RenderFlags& f, std::ostream& out) {
    const auto data = load_semeval(f.dataset);
    const auto task = parse_task(f.task);
    const auto instances = expand_instances(data, task);
    std::string jsonl, targets, ids;
    for (const auto& inst : instances) {
        ordered_json j{{"id", inst.instance_id}, {"input", inst.input_text}, {"target", inst.target_text}};
        jsonl += j.dump() + "\n";
        targets += inst.target_text + "\n";
        ids += inst.instance_id + "\n";
    }
    if (!f.targets.empty()) write_text(f.targets, targets, out);
    if (!f.manifest.empty()) write_text(f.manifest, ids, out);
    if (!f.instances.empty() || (f.targets.empty() && f.manifest.empty())) write_text(f.instances, jsonl, out);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    CLI::App app{"Synthetic data generation and evaluation for aspect-based sentiment analysis", "absa_forge"};
    app.set_version_flag("--version", "absa_forge 0.1.0");
    app.require_subcommand(1);
    app.fallthrough(false);
    // Read by the overlay pass before parsing; kept here so --help lists it.
    std::string config_path;

    AugmentFlags aug;
    auto* augment = app.add_subcommand("augment", "Generate a synthetic dataset (agentic or prompting)");
    augment->add_option("--method", aug.method, "Generation method")
        ->required()
        ->check(CLI::IsMember({"agentic", "prompting"}));
    augment->add_option("--train", aug.train, "Original training dataset")->required();
    augment->add_option("--out", aug.out, "Synthetic dataset to write (resumed if it exists)")->required();
    auto* ratio_opt = augment->add_option("--ratio", aug.ratio, "Target = ceil(ratio * |train|)");
    auto* count_opt = augment->add_option("--count", aug.count, "Absolute target sample count");
    ratio_opt->excludes(count_opt);
    augment->add_option("--task", aug.task, "Task recorded with the run")
        ->check(CLI::IsMember({"ate", "atsc", "aspe"}))
        ->capture_default_str();
    augment->add_option("--max-attempts", aug.max_attempts, "Attempts per sample before it is skipped")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    augment->add_option("--workers", aug.workers, "Concurrent sample workers (deterministic only with 1)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    augment->add_option("--domain", aug.domain, "Review domain (default: from the training file name)");
    augment->add_option("--evaluator", aug.evaluator, "Evaluator: fixed two-stage check or a free agent loop")
        ->check(CLI::IsMember({"fixed", "react"}))
        ->capture_default_str();
    augment->add_option("--style-sentences", aug.style_sentences, "Real sentences shown to the style extractor")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    augment->add_option("--sampling", aug.sampling, "Label sampling over distinct pairs")
        ->check(CLI::IsMember({"uniform", "frequency"}))
        ->capture_default_str();
    augment->add_option("--stats", aug.stats, "Run statistics file (default: <out stem>.stats.json)");
    augment->add_option("--trace-dir", aug.trace_dir, "Write one trace file per attempt here");
    augment->add_flag("--fresh", aug.fresh, "Truncate the output instead of resuming");
    augment->add_option("--prompt-dir", aug.prompt_dir, "Directory overriding the built-in prompt templates");
    augment->add_option("--call-budget", aug.call_budget, "Total chat calls allowed (0: 50 per sample)")
        ->capture_default_str();
    add_backend_flags(augment, aug.backend);
    add_common(augment, config_path, aug.seed);

    MixFlags mx;
    auto* mixc = app.add_subcommand("mix", "Combine original and synthetic data at a ratio");
    mixc->add_option("--original", mx.original, "Original dataset")->required();
    mixc->add_option("--synthetic", mx.synthetic, "Synthetic dataset")->required();
    mixc->add_option("--ratio", mx.ratio, "Synthetic examples per original example")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    mixc->add_option("--out", mx.out, "Mixed dataset to write")->required();
    mixc->add_flag("--allow-truncate", mx.allow_truncate, "Use fewer synthetic examples if not enough exist");
    add_common(mixc, config_path, mx.seed);

    ScoreFlags sc;
    auto* scorec = app.add_subcommand("score", "Micro-F1 of predictions against a gold dataset");
    scorec->add_option("--task", sc.task, "Task")->required()->check(CLI::IsMember({"ate", "atsc", "aspe"}));
    scorec->add_option("--gold", sc.gold, "Gold dataset")->required();
    scorec->add_option("--pred", sc.preds, "Predictions file, one line per instance (repeat to average runs)")
        ->required();
    scorec->add_option("--manifest", sc.manifest, "Instance ids the predictions were made for");
    scorec->add_option("--format", sc.format, "Output format")
        ->check(CLI::IsMember({"table", "json"}))
        ->capture_default_str();
    add_common(scorec, config_path, sc.seed);

    ConsistencyFlags cf;
    auto* consc = app.add_subcommand("consistency", "Share of synthetic examples whose judged labels match");
    consc->add_option("--synthetic", cf.synthetic, "Synthetic dataset")->required();
    consc->add_option("--tasks", cf.tasks, "Tasks to judge")
        ->delimiter(',')
        ->check(CLI::IsMember({"ate", "atsc", "aspe"}))
        ->capture_default_str();
    consc->add_option("--judge", cf.judge, "Judge")
        ->check(CLI::IsMember({"echo", "scripted", "verifier", "seq2seq"}))
        ->capture_default_str();
    consc->add_option("--judge-script", cf.judge_script, "Predictions for the scripted judge");
    consc->add_option("--judge-endpoint", cf.judge_endpoint, "URL of a text-to-text judge model");
    consc->add_option("--prompt-dir", cf.prompt_dir, "Directory overriding the built-in prompt templates");
    consc->add_option("--format", cf.format, "Output format")
        ->check(CLI::IsMember({"table", "json"}))
        ->capture_default_str();
    add_backend_flags(consc, cf.backend);
    add_common(consc, config_path, cf.seed);

    DistributionFlags df;
    auto* distc = app.add_subcommand("distribution", "Term and polarity frequency tables");
    distc->add_option("--dataset", df.datasets, "Dataset (repeat to compare)")->required();
    distc->add_option("--lexicon", df.lexicon, "Only count terms listed in this file");
    distc->add_option("--top", df.top, "Show only the most frequent terms (0: all)")->capture_default_str();
    distc->add_option("--format", df.format, "Output format")
        ->check(CLI::IsMember({"table", "json"}))
        ->capture_default_str();
    add_common(distc, config_path, df.seed);

    PlanFlags pf;
    auto* planc = app.add_subcommand("plan", "Expand an experiment grid into a run manifest");
    planc->add_option("--methods", pf.methods, "Methods")
        ->required()
        ->delimiter(',')
        ->check(CLI::IsMember({"agentic", "prompting"}));
    planc->add_option("--ratios", pf.ratios, "Augmentation ratios")
        ->required()
        ->delimiter(',')
        ->check(CLI::NonNegativeNumber);
    planc->add_option("--tasks", pf.tasks, "Tasks")
        ->required()
        ->delimiter(',')
        ->check(CLI::IsMember({"ate", "atsc", "aspe"}));
    planc->add_option("--datasets", pf.datasets, "Dataset names")->required()->delimiter(',');
    planc->add_option("--data-dir", pf.data_dir, "Where <dataset>_train.jsonl files live")->capture_default_str();
    planc->add_option("--out-dir", pf.out_dir, "Root of the run outputs")->capture_default_str();
    planc->add_option("--manifest", pf.manifest, "Manifest file (default: stdout)");
    add_common(planc, config_path, pf.seed);

    ReplayFlags rf;
    auto* replayc = app.add_subcommand("replay", "Re-run a recorded augment run and compare its output bytes");
    replayc->add_option("--stats", rf.stats, "Stats file written by the recorded run")->required();
    replayc->add_option("--transcript", rf.transcript, "Transcript written with --record")->required();
    replayc->add_option("--expected", rf.expected, "Dataset to compare against (default: the run's output)");
    replayc->add_option("--train", rf.train, "Override the training file path");
    replayc->add_option("--prompt-dir", rf.prompt_dir, "Directory overriding the built-in prompt templates");
    replayc->add_option("--script-mode", rf.script_mode, "How transcript replies are matched to requests")
        ->check(CLI::IsMember({"sequence", "fingerprint"}))
        ->capture_default_str();
    add_common(replayc, config_path, rf.seed);

    RenderFlags rd;
    auto* renderc = app.add_subcommand("render", "Write task instances, targets and an id manifest");
    renderc->add_option("--dataset", rd.dataset, "Dataset")->required();
    renderc->add_option("--task", rd.task, "Task")->required()->check(CLI::IsMember({"ate", "atsc", "aspe"}));
    renderc->add_option("--instances", rd.instances, "JSON lines of {id, input, target} (default: stdout)");
    renderc->add_option("--targets", rd.targets, "Target texts, one per line");
    renderc->add_option("--manifest", rd.manifest, "Instance ids, one per line");
    add_common(renderc, config_path, rd.seed);

    auto old_sink = log::set_sink([&err](std::string_view level, std::string_view msg) {
        err << level << ": " << msg << "\n";
    });
    struct Restore {
        log::Sink sink;
        ~Restore() { log::set_sink(std::move(sink)); }
    } restore{std::move(old_sink)};

    try {
        auto full = overlay(app, args, env);
        std::vector<std::string> reversed(full.rbegin(), full.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*augment) return cmd_augment(aug, out, err);
        if (*mixc) return cmd_mix(mx, out);
        if (*scorec) return cmd_score(sc, out);
        if (*consc) return cmd_consistency(cf, out);
        if (*distc) return cmd_distribution(df, out);
        if (*planc) return cmd_plan(pf, out);
        if (*replayc) return cmd_replay(rf, replayc, out, err);
        if (*renderc) return cmd_render(rd, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFatal;
    }
    return kExitUsage;
}

}  // namespace absaforge::cli
