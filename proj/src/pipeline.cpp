#include "absaforge/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "absaforge/log.hpp"
#include "absaforge/text.hpp"

namespace absaforge {

using nlohmann::json;
using nlohmann::ordered_json;

Method parse_method(std::string_view word) {
    const auto w = text::to_lower(text::trim(word));
    if (w == "agentic") return Method::agentic;
    if (w == "prompting") return Method::prompting;
    throw InvalidArgument("unknown method '" + std::string(word) + "' (expected agentic or prompting)");
}

std::string_view to_string(Method m) { return m == Method::agentic ? "agentic" : "prompting"; }

namespace {

std::string_view to_string(EvaluatorMode m) { return m == EvaluatorMode::fixed ? "fixed" : "react"; }
std::string_view to_string(SamplingMode m) { return m == SamplingMode::uniform ? "uniform" : "frequency"; }

EvaluatorMode parse_evaluator_mode(std::string_view w) {
    if (w == "fixed") return EvaluatorMode::fixed;
    if (w == "react") return EvaluatorMode::react;
    throw InvalidArgument("unknown evaluator mode '" + std::string(w) + "'");
}

SamplingMode parse_sampling_mode(std::string_view w) {
    if (w == "uniform") return SamplingMode::uniform;
    if (w == "frequency") return SamplingMode::frequency_weighted;
    throw InvalidArgument("unknown sampling mode '" + std::string(w) + "'");
}

}  // namespace

void RunConfig::validate() const {
    if (ratio.has_value() == count.has_value()) throw InvalidArgument("exactly one of ratio and count must be set");
    if (ratio && (!std::isfinite(*ratio) || *ratio < 0)) throw InvalidArgument("ratio must be a finite value >= 0");
    if (max_attempts_per_sample < 1) throw InvalidArgument("max_attempts_per_sample must be >= 1");
    if (workers < 1) throw InvalidArgument("workers must be >= 1");
    if (style_sentences < 1) throw InvalidArgument("style_sentences must be >= 1");
    if (train_path.empty()) throw InvalidArgument("a training file is required");
}

std::size_t RunConfig::target(std::size_t train_size) const {
    if (count) return *count;
    // Ceiling in millionths, mirroring scaled_count's floor.
    const auto micro = static_cast<unsigned long long>(std::llround(*ratio * 1e6));
    const auto n = static_cast<unsigned long long>(train_size);
    return static_cast<std::size_t>((micro * n + 999'999ULL) / 1'000'000ULL);
}

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["method"] = to_string(method);
    j["task"] = to_string(task);
    j["train"] = train_path.generic_string();
    if (ratio) j["ratio"] = *ratio;
    if (count) j["count"] = *count;
    j["seed"] = seed;
    j["max_attempts_per_sample"] = max_attempts_per_sample;
    j["workers"] = workers;
    j["domain"] = domain;
    j["evaluator"] = to_string(evaluator_mode);
    j["style_sentences"] = style_sentences;
    j["sampling"] = to_string(sampling);
    if (output_path) j["output"] = output_path->generic_string();
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    try {
        RunConfig c;
        c.method = parse_method(j.at("method").get<std::string>());
        c.task = parse_task(j.at("task").get<std::string>());
        c.train_path = j.at("train").get<std::string>();
        if (j.contains("ratio")) c.ratio = j["ratio"].get<double>();
        if (j.contains("count")) c.count = j["count"].get<std::size_t>();
        c.seed = j.value("seed", std::uint64_t{0});
        c.max_attempts_per_sample = j.value("max_attempts_per_sample", kDefaultMaxAttempts);
        c.workers = j.value("workers", std::size_t{1});
        c.domain = j.value("domain", std::string());
        c.evaluator_mode = parse_evaluator_mode(j.value("evaluator", std::string("fixed")));
        c.style_sentences = j.value("style_sentences", kDefaultStyleSentences);
        c.sampling = parse_sampling_mode(j.value("sampling", std::string("uniform")));
        if (j.contains("output")) c.output_path = j["output"].get<std::string>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad run config record: ") + e.what());
    }
}

ordered_json RunStats::to_json() const {
    ordered_json j;
    j["requested"] = requested;
    j["accepted"] = accepted;
    j["rejected_inclusion"] = rejected_inclusion;
    j["rejected_semantic"] = rejected_semantic;
    j["failed_parse"] = failed_parse;
    j["failed_agent"] = failed_agent;
    j["failed_transport"] = failed_transport;
    j["skipped"] = skipped;
    j["resumed"] = resumed;
    j["attempts"] = attempts();
    j["total_chat_calls"] = total_chat_calls;
    j["wall_ms"] = wall_ms;
    return j;
}

std::string RunStats::to_table() const {
    std::ostringstream out;
    const auto j = to_json();
    for (const auto& [key, value] : j.items()) {
        char line[96];
        std::snprintf(line, sizeof line, "%-20s %12s\n", key.c_str(), value.dump().c_str());
        out << line;
    }
    return out.str();
}

// ---------------------------------------------------------------------------

namespace {

bool is_fatal(GatewayError::Kind kind) {
    switch (kind) {
        case GatewayError::Kind::budget_exhausted:
        case GatewayError::Kind::script_exhausted:
        case GatewayError::Kind::fingerprint_miss:
        case GatewayError::Kind::http_status:
            return true;
        default:
            return false;
    }
}

struct Attempt {
    Candidate candidate;
    std::optional<AbsaExample> example;  // id filled in under the lock
    std::optional<GatewayError::Kind> gateway_error;
};

class Runner {
public:
    Runner(const RunConfig& config, Gateway& gateway)
        : config_(config),
          gateway_(gateway),
          prompts_(config.prompt_dir ? PromptSet::load(*config.prompt_dir) : PromptSet::defaults()),
          train_(load_semeval(config.train_path)),
          domain_(config.domain.empty() ? infer_domain(train_.name) : config.domain),
          pool_(build_pool(train_, config.seed, config.sampling)) {}

    RunResult run() {
        const auto started = std::chrono::steady_clock::now();
        const auto calls_before = gateway_.calls();

        result_.dataset.name = config_.output_path ? config_.output_path->stem().string()
                                                   : std::string(to_string(config_.method));
        prepare_output();
        const std::size_t target = config_.target(train_.size());
        needed_ = target > result_.dataset.size() ? target - result_.dataset.size() : 0;
        stats_.requested = needed_;
        stats_.resumed = result_.dataset.size();
        if (config_.trace_dir) std::filesystem::create_directories(*config_.trace_dir);

        if (needed_ > 0) {
            const auto budget = config_.call_budget ? config_.call_budget : kCallsPerSampleBudget * needed_;
            gateway_.set_call_budget(gateway_.calls() + budget);
            if (config_.workers == 1) {
                worker(0);
            } else {
                std::vector<std::thread> threads;
                for (std::size_t w = 0; w < config_.workers; ++w) threads.emplace_back([this, w] { worker(w); });
                for (auto& t : threads) t.join();
            }
            gateway_.set_call_budget(0);
        }
        if (error_) std::rethrow_exception(error_);

        stats_.total_chat_calls = gateway_.calls() - calls_before;
        stats_.wall_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
        write_stats();

        if (needed_ > 0 && stats_.accepted == 0) {
            throw RunError(abort_reason_.empty() ? "no candidate was accepted" : abort_reason_, stats_);
        }
        if (!abort_reason_.empty()) log::warn("run stopped early: " + abort_reason_);
        if (stats_.accepted < needed_) {
            log::warn("shortfall: accepted " + std::to_string(stats_.accepted) + " of " + std::to_string(needed_) +
                      " requested samples");
        }
        result_.stats = stats_;
        return std::move(result_);
    }

private:
    void prepare_output() {
        if (!config_.output_path) return;
        const auto& path = *config_.output_path;
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        if (config_.resume && std::filesystem::exists(path)) {
            auto existing = load_semeval(path);
            result_.dataset.examples = std::move(existing.examples);
            for (const auto& ex : result_.dataset.examples) ids_.insert(ex.id);
            return;
        }
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path.string() + "'");
    }

    std::string next_id() {
        for (;;) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s-%06zu", std::string(to_string(config_.method)).c_str(), ++id_counter_);
            if (ids_.insert(buf).second) return buf;
        }
    }

    void worker(std::size_t w) {
        try {
            Rng label_rng = pool_.label_rng(w);
            Rng style_rng = pool_.style_rng(w);
            for (;;) {
                std::size_t sample = 0;
                {
                    std::lock_guard lock(mutex_);
                    if (aborted_ || next_sample_ >= needed_) return;
                    sample = next_sample_++;
                }
                bool done = false;
                for (int attempt = 1; attempt <= config_.max_attempts_per_sample && !done; ++attempt) {
                    {
                        std::lock_guard lock(mutex_);
                        if (aborted_) return;
                    }
                    auto a = config_.method == Method::agentic ? attempt_agentic(label_rng, style_rng)
                                                               : attempt_prompting(label_rng, style_rng);
                    if (config_.trace_dir) {
                        char name[96];
                        std::snprintf(name, sizeof name, "%s-%06zu-%d.jsonl",
                                      std::string(to_string(config_.method)).c_str(), sample + 1, attempt);
                        write_candidate_trace(a.candidate, *config_.trace_dir / name);
                    }
                    done = record(std::move(a));
                }
                if (!done) {
                    std::lock_guard lock(mutex_);
                    if (aborted_) return;
                    ++stats_.skipped;
                    log::warn("sample " + std::to_string(sample + 1) + " skipped after " +
                              std::to_string(config_.max_attempts_per_sample) + " attempts");
                }
            }
        } catch (...) {
            std::lock_guard lock(mutex_);
            if (!error_) error_ = std::current_exception();
            aborted_ = true;
        }
    }

    /// Books one attempt; returns true when it was accepted.
    bool record(Attempt a) {
        std::lock_guard lock(mutex_);
        switch (a.candidate.status) {
            case CandidateStatus::accepted: ++stats_.accepted; break;
            case CandidateStatus::rejected_inclusion: ++stats_.rejected_inclusion; break;
            case CandidateStatus::rejected_semantic: ++stats_.rejected_semantic; break;
            case CandidateStatus::failed_parse: ++stats_.failed_parse; break;
            case CandidateStatus::failed_transport: ++stats_.failed_transport; break;
            case CandidateStatus::failed_agent:
            case CandidateStatus::pending: ++stats_.failed_agent; break;
        }
        if (a.gateway_error) {
            ++consecutive_transport_;
            if (is_fatal(*a.gateway_error)) {
                aborted_ = true;
                abort_reason_ = a.candidate.failure;
            } else if (consecutive_transport_ >= static_cast<std::size_t>(config_.max_attempts_per_sample)) {
                aborted_ = true;
                abort_reason_ = "backend unavailable: " + a.candidate.failure;
            }
        } else {
            consecutive_transport_ = 0;
        }
        if (!a.candidate.accepted()) return false;
        a.example->id = next_id();
        if (config_.output_path) append_example(*a.example, *config_.output_path);
        result_.dataset.examples.push_back(std::move(*a.example));
        return true;
    }

    Attempt attempt_agentic(Rng& label_rng, Rng& style_rng) {
        Attempt a;
        GeneratorOptions gen;
        gen.domain = domain_;
        gen.style_sentences = config_.style_sentences;
        a.candidate = generator_agent(gateway_, prompts_, pool_, train_, label_rng, style_rng, gen);
        if (a.candidate.status == CandidateStatus::pending) {
            EvaluatorOptions eval;
            eval.mode = config_.evaluator_mode;
            evaluator_agent(gateway_, prompts_, a.candidate, eval);
        }
        a.gateway_error = a.candidate.generator_trace.gateway_error;
        if (a.candidate.evaluator_trace && a.candidate.evaluator_trace->gateway_error) {
            a.gateway_error = a.candidate.evaluator_trace->gateway_error;
        }
        if (a.candidate.accepted()) a.example = to_example(a.candidate, "", Provenance::agentic);
        return a;
    }

    Attempt attempt_prompting(Rng& label_rng, Rng& style_rng) {
        Attempt a;
        auto labels = sample_labels(pool_, label_rng);
        const auto& source = train_.examples[static_cast<std::size_t>(uniform_index(style_rng, train_.size()))];

        Policy policy;
        policy.terms = labels.terms;
        policy.polarities = labels.polarities;
        policy.domain = domain_;
        policy.source_sentence_ids = {source.id};
        a.candidate.policy = policy;

        ChatRequest request;
        request.temperature = kGenerationTemperature;
        request.messages.push_back(
            {Role::user, render_baseline_prompt(prompts_, labels.terms, labels.polarities, source.raw_text, domain_)});

        auto& trace = a.candidate.generator_trace;
        trace.agent_name = "prompting";
        trace.input = request.messages.front().content;
        try {
            trace.chat_calls = 1;
            const auto reply = gateway_.chat(request);
            a.candidate.raw_generation = reply.content;
            trace.steps.push_back({StepKind::final_answer, reply.content, std::nullopt, nullptr, reply.latency_ms});
        } catch (const GatewayError& e) {
            trace.outcome = AgentOutcome::failed;
            trace.failure = std::string("gateway: ") + e.what();
            trace.gateway_error = e.kind();
            a.gateway_error = e.kind();
            a.candidate.status = CandidateStatus::failed_transport;
            a.candidate.failure = trace.failure;
            return a;
        }
        try {
            a.candidate.parsed = parse_generation(a.candidate.raw_generation);
        } catch (const GenerationParseError& e) {
            trace.outcome = AgentOutcome::failed;
            trace.failure = e.what();
            a.candidate.status = CandidateStatus::failed_parse;
            a.candidate.failure = e.what();
            return a;
        }
        // The baseline keeps every parseable output, with the labels it claims.
        trace.outcome = AgentOutcome::accepted;
        a.candidate.status = CandidateStatus::accepted;
        AbsaExample ex;
        ex.raw_text = a.candidate.parsed->sentence;
        ex.provenance = Provenance::prompting;
        for (std::size_t i = 0; i < a.candidate.parsed->terms.size(); ++i) {
            AspectAnnotation ann{a.candidate.parsed->terms[i], a.candidate.parsed->polarities[i]};
            if (std::find(ex.annotations.begin(), ex.annotations.end(), ann) == ex.annotations.end()) {
                ex.annotations.push_back(std::move(ann));
            }
        }
        a.example = std::move(ex);
        return a;
    }

    void write_stats() const {
        if (!config_.stats_path) return;
        ordered_json j;
        j["config"] = config_.to_json();
        j["config"]["domain"] = domain_;
        j["stats"] = stats_.to_json();
        std::ofstream out(*config_.stats_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write stats file '" + config_.stats_path->string() + "'");
        out << j.dump(2) << '\n';
    }

    const RunConfig& config_;
    Gateway& gateway_;
    PromptSet prompts_;
    Dataset train_;
    std::string domain_;
    SamplingPool pool_;

    std::mutex mutex_;
    std::size_t needed_ = 0;
    std::size_t next_sample_ = 0;
    std::size_t id_counter_ = 0;
    std::size_t consecutive_transport_ = 0;
    bool aborted_ = false;
    std::string abort_reason_;
    std::exception_ptr error_;
    std::set<std::string> ids_;
    RunStats stats_;
    RunResult result_;
};

}  // namespace

RunResult run(const RunConfig& config, Gateway& gateway) {
    config.validate();
    Runner runner(config, gateway);
    return runner.run();
}

RunResult run_agentic(const RunConfig& config) {
    RunConfig c = config;
    c.method = Method::agentic;
    Gateway gateway(c.backend);
    return run(c, gateway);
}

RunResult run_prompting(const RunConfig& config) {
    RunConfig c = config;
    c.method = Method::prompting;
    Gateway gateway(c.backend);
    return run(c, gateway);
}

// ---------------------------------------------------------------------------

std::string format_ratio(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", ratio);
    return buf;
}

std::vector<RunConfig> plan_experiment(const ExperimentGrid& grid) {
    if (grid.methods.empty() || grid.ratios.empty() || grid.tasks.empty() || grid.datasets.empty()) {
        throw InvalidArgument("experiment grid needs at least one method, ratio, task and dataset");
    }
    std::vector<RunConfig> out;
    std::set<std::string> outputs;
    std::uint64_t index = 0;
    for (auto method : grid.methods) {
        for (double ratio : grid.ratios) {
            for (auto task : grid.tasks) {
                for (const auto& dataset : grid.datasets) {
                    RunConfig c = grid.base;
                    c.method = method;
                    c.ratio = ratio;
                    c.count.reset();
                    c.task = task;
                    c.seed = grid.base_seed + index++;
                    c.train_path = grid.data_dir / (dataset + "_train.jsonl");
                    const auto stem = std::string(to_string(method)) + "_x" + format_ratio(ratio) + "_" +
                                      std::string(to_string(task));
                    c.output_path = grid.out_dir / dataset / (stem + ".jsonl");
                    c.stats_path = grid.out_dir / dataset / (stem + ".stats.json");
                    c.validate();
                    if (!outputs.insert(c.output_path->generic_string()).second) {
                        throw InvalidArgument("experiment grid maps two runs to '" + c.output_path->generic_string() +
                                              "'");
                    }
                    out.push_back(std::move(c));
                }
            }
        }
    }
    return out;
}

std::string plan_manifest(const std::vector<RunConfig>& configs) {
    std::ostringstream out;
    out << "index\tmethod\tratio\ttask\tdataset\tseed\ttrain\toutput\n";
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto& c = configs[i];
        out << i << '\t' << to_string(c.method) << '\t' << (c.ratio ? format_ratio(*c.ratio) : "") << '\t'
            << to_string(c.task) << '\t'
            << (c.output_path ? c.output_path->parent_path().filename().generic_string() : "") << '\t' << c.seed << '\t' << c.train_path.generic_string() << '\t'
            << (c.output_path ? c.output_path->generic_string() : "") << '\n';
    }
    return out.str();
}

}  // namespace absaforge
