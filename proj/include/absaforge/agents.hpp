#pragma once

// Textual ReAct runtime and the two agents of the augmentation workflow.
//
// The model drives a conversation by replying with lines of the form
//
//   Thought: <free text>
//   Tool Call: <name>(<args>)
//   Final Answer: <text>
//
// Tool results are fed back as user messages "Tool Response: <output>".

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absaforge/corpus.hpp"
#include "absaforge/error.hpp"
#include "absaforge/llm_gateway.hpp"
#include "absaforge/policy.hpp"
#include "absaforge/prompts.hpp"
#include "json.hpp"

namespace absaforge {

/// Thrown by tool handlers; the message becomes an "ERROR: ..." observation.
class ToolError : public Error {
public:
    using Error::Error;
};

enum class ArgType { string, object, any };

struct ArgSpec {
    std::string name;
    ArgType type = ArgType::any;
    bool required = false;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ArgSpec> args;
    std::function<std::string(const nlohmann::json& args)> handler;
};

class ToolRegistry {
public:
    /// Throws InvalidArgument on duplicate names or a missing handler.
    void add(ToolSpec tool);
    const ToolSpec* find(std::string_view name) const;
    bool empty() const { return tools_.empty(); }
    std::vector<std::string> names() const;

    /// One "- name(args): description" line per tool.
    std::string describe() const;

    /// Binds raw call arguments to the tool's schema. Throws ToolError on
    /// unknown, missing or mistyped arguments.
    nlohmann::json bind_arguments(const ToolSpec& tool, std::string_view raw_args) const;

    /// Validates, binds and runs a call; errors become "ERROR: ..." text.
    std::string invoke(std::string_view name, std::string_view raw_args, nlohmann::json* bound = nullptr) const;

private:
    std::vector<ToolSpec> tools_;
};

enum class StepKind { thought, tool_call, tool_response, final_answer };

std::string_view to_string(StepKind k);

struct AgentStep {
    StepKind kind = StepKind::thought;
    std::string payload;
    std::optional<std::string> tool_name;
    /// Bound arguments of a tool call.
    nlohmann::json arguments;
    /// Milliseconds since the run started.
    std::int64_t timestamp_ms = 0;
};

enum class AgentOutcome { accepted, rejected, failed };

std::string_view to_string(AgentOutcome o);

struct AgentTrace {
    std::string agent_name;
    std::string input;
    std::vector<AgentStep> steps;
    AgentOutcome outcome = AgentOutcome::failed;
    std::uint64_t chat_calls = 0;
    std::string failure;
    /// Set when the run was cut short by the gateway.
    std::optional<GatewayError::Kind> gateway_error;

    const AgentStep* final_step() const;
    std::size_t tool_call_count() const;
};

/// Parsed form of one model turn.
struct AgentAction {
    std::vector<std::string> thoughts;
    std::optional<std::string> tool_name;
    std::string tool_args;
    std::optional<std::string> final_answer;
};

AgentAction parse_agent_reply(std::string_view reply);

inline constexpr int kDefaultMaxSteps = 6;
inline constexpr double kAgentTemperature = 0.0;

/// Runs the thought / tool-call / observation loop until a final answer or
/// `max_steps` model turns. `gateway` must be the client the tools use if
/// their calls are to be counted in `chat_calls`; see CallScope.
AgentTrace run_agent(ChatClient& gateway, const std::string& system_prompt, const ToolRegistry& tools,
                     const std::string& goal, int max_steps, std::string agent_name = "agent");

/// Pure structural check: every term occurs in the sentence at word
/// boundaries, case-insensitively, with no stemming.
Verdict label_inclusion(std::string_view sentence, const std::vector<std::string>& terms);

enum class CandidateStatus {
    pending,
    accepted,
    rejected_inclusion,
    rejected_semantic,
    failed_parse,
    failed_agent,
    failed_transport,
};

std::string_view to_string(CandidateStatus s);

struct Candidate {
    std::optional<ParsedGeneration> parsed;
    std::string raw_generation;
    std::optional<Policy> policy;
    std::optional<Verdict> inclusion_verdict;
    std::optional<Verdict> semantic_verdict;
    CandidateStatus status = CandidateStatus::pending;
    std::string failure;
    AgentTrace generator_trace;
    std::optional<AgentTrace> evaluator_trace;

    bool accepted() const { return status == CandidateStatus::accepted; }
};

struct GeneratorOptions {
    std::string domain = "Restaurants";
    std::size_t style_sentences = kDefaultStyleSentences;
    int max_steps = kDefaultMaxSteps;
};

inline constexpr std::string_view kGeneratorGoal = "generate a sentence with dataset information in mind.";

/// Runs the generator agent with tools get_info and generate_sentences and
/// parses the generated text. Failures are reported through the status.
Candidate generator_agent(ChatClient& gateway, const PromptSet& prompts, const SamplingPool& pool,
                          const Dataset& train, Rng& label_rng, Rng& style_rng, const GeneratorOptions& options = {});

enum class EvaluatorMode { fixed, react };

struct EvaluatorOptions {
    EvaluatorMode mode = EvaluatorMode::fixed;
    int max_steps = kDefaultMaxSteps;
};

/// Two gates: label_inclusion, then the model verifier. The verifier is
/// never called for a candidate that fails inclusion.
void evaluator_agent(ChatClient& gateway, const PromptSet& prompts, Candidate& candidate,
                     const EvaluatorOptions& options = {});

/// Synthetic example for an accepted candidate. Terms take their surface form
/// from the sentence.
AbsaExample to_example(const Candidate& candidate, std::string id, Provenance provenance);

/// Newline-delimited records: input, steps and the final decision.
void write_candidate_trace(const Candidate& candidate, const std::filesystem::path& path);
nlohmann::ordered_json trace_to_json(const AgentTrace& trace);

}  // namespace absaforge
