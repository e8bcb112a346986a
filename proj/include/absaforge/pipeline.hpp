#pragma once

// Augmentation runs (agentic and prompting baseline) and experiment grids.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absaforge/agents.hpp"
#include "absaforge/corpus.hpp"
#include "absaforge/error.hpp"
#include "absaforge/llm_gateway.hpp"
#include "absaforge/policy.hpp"
#include "absaforge/prompts.hpp"
#include "json.hpp"

namespace absaforge {

enum class Method { agentic, prompting };

Method parse_method(std::string_view word);
std::string_view to_string(Method m);

inline constexpr int kDefaultMaxAttempts = 5;
/// Global chat-call budget per requested sample when none is configured.
inline constexpr std::uint64_t kCallsPerSampleBudget = 50;

struct RunConfig {
    Method method = Method::agentic;
    /// Recorded in outputs; every method generates full term/polarity pairs.
    Task task = Task::ASPE;
    std::filesystem::path train_path;
    std::optional<double> ratio;
    std::optional<std::size_t> count;
    std::uint64_t seed = 0;
    int max_attempts_per_sample = kDefaultMaxAttempts;
    BackendConfig backend;
    std::optional<std::filesystem::path> output_path;
    std::optional<std::filesystem::path> stats_path;
    std::optional<std::filesystem::path> trace_dir;
    std::optional<std::filesystem::path> prompt_dir;
    std::size_t workers = 1;
    /// Empty: inferred from the training file name.
    std::string domain;
    EvaluatorMode evaluator_mode = EvaluatorMode::fixed;
    std::size_t style_sentences = kDefaultStyleSentences;
    SamplingMode sampling = SamplingMode::uniform;
    /// Keep records already in the output file and only generate the rest.
    bool resume = true;
    /// 0: kCallsPerSampleBudget per requested sample.
    std::uint64_t call_budget = 0;

    /// Throws InvalidArgument.
    void validate() const;
    /// ceil(ratio * train_size) or the absolute count.
    std::size_t target(std::size_t train_size) const;

    nlohmann::ordered_json to_json() const;
    /// Inverse of to_json for the run-defining fields (backend excluded).
    static RunConfig from_json(const nlohmann::json& j);
};

struct RunStats {
    std::size_t requested = 0;
    std::size_t accepted = 0;
    std::size_t rejected_inclusion = 0;
    std::size_t rejected_semantic = 0;
    std::size_t failed_parse = 0;
    /// Generator agent never produced a usable candidate.
    std::size_t failed_agent = 0;
    std::size_t failed_transport = 0;
    /// Samples whose attempt budget ran out.
    std::size_t skipped = 0;
    /// Records found in the output file before the run.
    std::size_t resumed = 0;
    std::uint64_t total_chat_calls = 0;
    std::int64_t wall_ms = 0;

    std::size_t attempts() const {
        return accepted + rejected_inclusion + rejected_semantic + failed_parse + failed_agent + failed_transport;
    }
    nlohmann::ordered_json to_json() const;
    /// Two aligned columns, one counter per row.
    std::string to_table() const;
};

struct RunResult {
    /// Resumed records followed by the new ones, in acceptance order.
    Dataset dataset;
    RunStats stats;
};

/// Fatal run failure; carries the statistics gathered so far.
class RunError : public Error {
public:
    RunError(const std::string& what, RunStats stats) : Error(what), stats_(stats) {}
    const RunStats& stats() const { return stats_; }

private:
    RunStats stats_;
};

/// Both entry points build a Gateway from `config.backend`.
RunResult run_agentic(const RunConfig& config);
RunResult run_prompting(const RunConfig& config);

/// Runs `config.method` through an existing gateway.
RunResult run(const RunConfig& config, Gateway& gateway);

struct ExperimentGrid {
    std::vector<Method> methods;
    std::vector<double> ratios;
    std::vector<Task> tasks;
    std::vector<std::string> datasets;
    /// Training files are read from `<data_dir>/<dataset>_train.jsonl`.
    std::filesystem::path data_dir = "data";
    std::filesystem::path out_dir = "runs";
    std::uint64_t base_seed = 0;
    /// Shared settings copied into every config.
    RunConfig base;
};

/// Cartesian product in methods, ratios, tasks, datasets order. Run i gets
/// seed base_seed + i and output `<out_dir>/<dataset>/<method>_x<ratio>_<task>.jsonl`.
std::vector<RunConfig> plan_experiment(const ExperimentGrid& grid);

/// "1", "2", "0.5": shortest decimal form used in output names.
std::string format_ratio(double ratio);

/// Tab-separated manifest with a header row.
std::string plan_manifest(const std::vector<RunConfig>& configs);

}  // namespace absaforge
