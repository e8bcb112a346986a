#include "absaforge/agents.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "absaforge/text.hpp"

namespace absaforge {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(StepKind k) {
    switch (k) {
        case StepKind::thought: return "thought";
        case StepKind::tool_call: return "tool_call";
        case StepKind::tool_response: return "tool_response";
        case StepKind::final_answer: return "final";
    }
    return "thought";
}

std::string_view to_string(AgentOutcome o) {
    switch (o) {
        case AgentOutcome::accepted: return "accepted";
        case AgentOutcome::rejected: return "rejected";
        case AgentOutcome::failed: return "failed";
    }
    return "failed";
}

std::string_view to_string(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::pending: return "pending";
        case CandidateStatus::accepted: return "accepted";
        case CandidateStatus::rejected_inclusion: return "rejected_inclusion";
        case CandidateStatus::rejected_semantic: return "rejected_semantic";
        case CandidateStatus::failed_parse: return "failed_parse";
        case CandidateStatus::failed_agent: return "failed_agent";
        case CandidateStatus::failed_transport: return "failed_transport";
    }
    return "pending";
}

const AgentStep* AgentTrace::final_step() const {
    if (!steps.empty() && steps.back().kind == StepKind::final_answer) return &steps.back();
    return nullptr;
}

std::size_t AgentTrace::tool_call_count() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const AgentStep& s) { return s.kind == StepKind::tool_call; }));
}

// ---------------------------------------------------------------------------
// Argument parsing

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Splits on commas that are outside brackets and quotes.
std::vector<std::string> split_top_level(std::string_view s) {
    std::vector<std::string> out;
    int depth = 0;
    char quote = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (quote) {
            if (c == '\\') {
                ++i;
            } else if (c == quote) {
                quote = 0;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == '{' || c == '[' || c == '(') {
            ++depth;
        } else if (c == '}' || c == ']' || c == ')') {
            --depth;
        } else if (c == ',' && depth == 0) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    out.emplace_back(s.substr(start));
    return out;
}

json parse_value(std::string_view raw) {
    const auto v = text::trim(raw);
    auto j = json::parse(v, nullptr, false);
    if (!j.is_discarded()) return j;
    if (!v.empty() && (v.front() == '{' || v.front() == '[')) {
        std::string swapped(v);
        std::replace(swapped.begin(), swapped.end(), '\'', '"');
        j = json::parse(swapped, nullptr, false);
        if (!j.is_discarded()) return j;
    }
    if (v.size() >= 2 && (v.front() == '\'' || v.front() == '"') && v.back() == v.front()) {
        return json(std::string(v.substr(1, v.size() - 2)));
    }
    return json(std::string(v));
}

bool type_matches(ArgType type, const json& value) {
    switch (type) {
        case ArgType::string: return value.is_string();
        case ArgType::object: return value.is_object();
        case ArgType::any: return true;
    }
    return true;
}

std::string_view type_name(ArgType type) {
    switch (type) {
        case ArgType::string: return "string";
        case ArgType::object: return "object";
        case ArgType::any: return "value";
    }
    return "value";
}

}  // namespace

void ToolRegistry::add(ToolSpec tool) {
    if (tool.name.empty() || !tool.handler) throw InvalidArgument("tool needs a name and a handler");
    if (find(tool.name)) throw InvalidArgument("duplicate tool name '" + tool.name + "'");
    tools_.push_back(std::move(tool));
}

const ToolSpec* ToolRegistry::find(std::string_view name) const {
    for (const auto& t : tools_) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& t : tools_) out.push_back(t.name);
    return out;
}

std::string ToolRegistry::describe() const {
    std::string out;
    for (const auto& t : tools_) {
        out += "- " + t.name + "(";
        for (std::size_t i = 0; i < t.args.size(); ++i) {
            if (i) out += ", ";
            out += t.args[i].name + ": " + std::string(type_name(t.args[i].type));
            if (!t.args[i].required) out += " (optional)";
        }
        out += "): " + t.description + "\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

json ToolRegistry::bind_arguments(const ToolSpec& tool, std::string_view raw_args) const {
    json bound = json::object();
    if (!text::trim(raw_args).empty()) {
        std::size_t positional = 0;
        for (const auto& piece : split_top_level(raw_args)) {
            const auto item = text::trim(piece);
            if (item.empty()) continue;
            std::size_t k = 0;
            std::string name;
            if (is_ident_start(item[0])) {
                while (k < item.size() && is_ident(item[k])) ++k;
                std::size_t eq = k;
                while (eq < item.size() && item[eq] == ' ') ++eq;
                if (eq < item.size() && item[eq] == '=' && (eq + 1 >= item.size() || item[eq + 1] != '=')) {
                    name = std::string(item.substr(0, k));
                    k = eq + 1;
                } else {
                    k = 0;
                }
            }
            const auto value = parse_value(item.substr(k));
            if (name.empty()) {
                if (positional >= tool.args.size()) {
                    throw ToolError("too many arguments for " + tool.name);
                }
                name = tool.args[positional++].name;
            }
            auto spec = std::find_if(tool.args.begin(), tool.args.end(), [&](const ArgSpec& a) { return a.name == name; });
            if (spec == tool.args.end()) throw ToolError("unknown argument '" + name + "' for " + tool.name);
            if (bound.contains(name)) throw ToolError("argument '" + name + "' given twice");
            if (!type_matches(spec->type, value)) {
                throw ToolError("argument '" + name + "' must be a " + std::string(type_name(spec->type)));
            }
            bound[name] = value;
        }
    }
    for (const auto& a : tool.args) {
        if (a.required && !bound.contains(a.name)) throw ToolError("missing required argument '" + a.name + "'");
    }
    return bound;
}

std::string ToolRegistry::invoke(std::string_view name, std::string_view raw_args, json* bound_out) const {
    const auto* tool = find(name);
    if (!tool) return "ERROR: unknown tool '" + std::string(name) + "'";
    json bound;
    try {
        bound = bind_arguments(*tool, raw_args);
    } catch (const ToolError& e) {
        return "ERROR: invalid arguments for " + tool->name + ": " + e.what();
    }
    if (bound_out) *bound_out = bound;
    try {
        return tool->handler(bound);
    } catch (const GatewayError&) {
        throw;
    } catch (const Error& e) {
        return std::string("ERROR: ") + e.what();
    }
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

/// Removes bullets and markdown emphasis so labels can be matched.
std::string clean_line(std::string_view line) {
    std::string out;
    for (char c : text::trim(line)) {
        if (c != '*' && c != '`') out.push_back(c);
    }
    std::string_view v = text::trim(out);
    if (v.size() >= 2 && (v[0] == '-' || v[0] == '>') && v[1] == ' ') v = text::trim(v.substr(2));
    return std::string(v);
}

std::size_t matching_paren(std::string_view s, std::size_t open) {
    int depth = 0;
    char quote = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (quote) {
            if (c == '\\') {
                ++i;
            } else if (c == quote) {
                quote = 0;
            }
            continue;
        }
        if (c == '"') {
            quote = c;
        } else if (c == '(') {
            ++depth;
        } else if (c == ')') {
            if (--depth == 0) return i;
        }
    }
    return std::string_view::npos;
}

std::string_view after_label(std::string_view line, std::initializer_list<std::string_view> labels) {
    for (auto l : labels) {
        if (text::starts_with_icase(line, l)) return text::trim(line.substr(l.size()));
    }
    return {};
}

bool has_label(std::string_view line, std::initializer_list<std::string_view> labels) {
    for (auto l : labels) {
        if (text::starts_with_icase(line, l)) return true;
    }
    return false;
}

}  // namespace

AgentAction parse_agent_reply(std::string_view reply) {
    AgentAction action;
    std::vector<std::string> lines;
    for (const auto& l : text::split_lines(reply)) lines.push_back(clean_line(l));

    std::string thought;
    auto flush_thought = [&] {
        if (!text::trim(thought).empty()) action.thoughts.emplace_back(text::trim(thought));
        thought.clear();
    };

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (has_label(line, {"tool call:", "action:"})) {
            flush_thought();
            std::string rest(after_label(line, {"tool call:", "action:"}));
            for (std::size_t j = i + 1; j < lines.size(); ++j) rest += "\n" + lines[j];
            // Markdown-escaped underscores, e.g. get\_info.
            for (std::size_t p; (p = rest.find("\\_")) != std::string::npos;) rest.erase(p, 1);
            std::string_view r = text::trim(rest);
            std::size_t k = 0;
            while (k < r.size() && is_ident(r[k])) ++k;
            action.tool_name = std::string(r.substr(0, k));
            std::size_t p = k;
            while (p < r.size() && r[p] == ' ') ++p;
            if (p < r.size() && r[p] == '(') {
                const auto close = matching_paren(r, p);
                action.tool_args = std::string(
                    text::trim(close == std::string_view::npos ? r.substr(p + 1) : r.substr(p + 1, close - p - 1)));
            }
            return action;
        }
        if (has_label(line, {"final answer:", "final decision:"})) {
            flush_thought();
            std::string rest(after_label(line, {"final answer:", "final decision:"}));
            for (std::size_t j = i + 1; j < lines.size(); ++j) rest += "\n" + lines[j];
            action.final_answer = std::string(text::trim(rest));
            return action;
        }
        if (has_label(line, {"thought:"})) {
            flush_thought();
            thought = std::string(after_label(line, {"thought:"}));
        } else if (!line.empty()) {
            if (!thought.empty()) thought += "\n";
            thought += line;
        }
    }
    flush_thought();
    return action;
}

// ---------------------------------------------------------------------------

AgentTrace run_agent(ChatClient& gateway, const std::string& system_prompt, const ToolRegistry& tools,
                     const std::string& goal, int max_steps, std::string agent_name) {
    if (max_steps < 1) throw InvalidArgument("max_steps must be >= 1");
    if (tools.empty()) throw InvalidArgument("agent needs at least one tool");

    const auto started = std::chrono::steady_clock::now();
    auto now_ms = [&] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
            .count();
    };

    AgentTrace trace;
    trace.agent_name = std::move(agent_name);
    trace.input = goal;

    auto push = [&](StepKind kind, std::string payload, std::optional<std::string> tool = std::nullopt,
                    json args = nullptr) {
        trace.steps.push_back({kind, std::move(payload), std::move(tool), std::move(args), now_ms()});
    };

    ChatRequest request;
    request.system = system_prompt;
    request.temperature = kAgentTemperature;
    request.messages.push_back({Role::user, goal});

    for (int turn = 0; turn < max_steps; ++turn) {
        ChatResponse reply;
        try {
            ++trace.chat_calls;
            reply = gateway.chat(request);
        } catch (const GatewayError& e) {
            trace.outcome = AgentOutcome::failed;
            trace.failure = std::string("gateway: ") + e.what();
            trace.gateway_error = e.kind();
            return trace;
        }
        request.messages.push_back({Role::assistant, reply.content});
        const auto action = parse_agent_reply(reply.content);
        for (const auto& t : action.thoughts) push(StepKind::thought, t);

        if (action.tool_name && !tools.find(*action.tool_name)) {
            const std::string observation = "ERROR: unknown tool '" + *action.tool_name + "'";
            push(StepKind::tool_response, observation);
            request.messages.push_back({Role::user, "Tool Response: " + observation});
            continue;
        }
        if (action.tool_name) {
            push(StepKind::tool_call, *action.tool_name + "(" + action.tool_args + ")", *action.tool_name);
            std::string observation;
            json bound;
            try {
                observation = tools.invoke(*action.tool_name, action.tool_args, &bound);
            } catch (const GatewayError& e) {
                trace.outcome = AgentOutcome::failed;
                trace.failure = std::string("gateway: ") + e.what();
                trace.gateway_error = e.kind();
                return trace;
            }
            trace.steps.back().arguments = bound;
            push(StepKind::tool_response, observation, *action.tool_name);
            request.messages.push_back({Role::user, "Tool Response: " + observation});
            continue;
        }
        if (action.final_answer) {
            push(StepKind::final_answer, *action.final_answer);
            trace.outcome = AgentOutcome::accepted;
            return trace;
        }
        const std::string observation = "ERROR: reply must contain a 'Tool Call:' line or a 'Final Answer:' line";
        push(StepKind::tool_response, observation);
        request.messages.push_back({Role::user, "Tool Response: " + observation});
    }
    trace.outcome = AgentOutcome::failed;
    trace.failure = "step budget of " + std::to_string(max_steps) + " exhausted";
    return trace;
}

Verdict label_inclusion(std::string_view sentence, const std::vector<std::string>& terms) {
    if (terms.empty()) throw InvalidArgument("label_inclusion needs at least one term");
    for (const auto& t : terms) {
        if (!text::find_word_bounded(sentence, t)) return {VerdictKind::not_ok, "NOT_OK"};
    }
    return {VerdictKind::ok, "OK"};
}

// ---------------------------------------------------------------------------
// Generator

namespace {

ordered_json policy_observation(const Policy& p) {
    ordered_json j;
    j["writing_style"] = p.style.writing_style;
    j["grammar_structure"] = p.style.grammar_structure;
    j["length"] = to_string(p.style.sentence_length);
    j["Terms"] = p.terms;
    auto pols = ordered_json::array();
    for (auto pol : p.polarities) pols.push_back(to_string(pol));
    j["Polarity"] = std::move(pols);
    return j;
}

void apply_style_override(Policy& policy, const json& style_info) {
    auto field = [&](const char* key) -> std::string {
        auto it = style_info.find(key);
        return (it != style_info.end() && it->is_string()) ? std::string(text::trim(it->get<std::string>())) : "";
    };
    if (auto w = field("writing_style"); !w.empty()) policy.style.writing_style = w;
    if (auto g = field("grammar_structure"); !g.empty()) policy.style.grammar_structure = g;
    if (auto l = field("length"); !l.empty()) {
        if (auto mapped = map_sentence_length(l)) policy.style.sentence_length = *mapped;
    }
}

}  // namespace

Candidate generator_agent(ChatClient& gateway, const PromptSet& prompts, const SamplingPool& pool,
                          const Dataset& train, Rng& label_rng, Rng& style_rng, const GeneratorOptions& options) {
    CallScope scope(gateway);
    std::optional<Policy> policy;
    std::optional<std::string> generation;

    ToolRegistry tools;
    tools.add({"get_info",
               "samples aspect terms with polarities from the real training data and extracts the writing style "
               "of real sentences; returns the style and the labels to use",
               {},
               [&](const json&) {
                   policy = get_policy(scope, prompts, pool, train, label_rng, style_rng, options.domain,
                                       options.style_sentences);
                   return policy_observation(*policy).dump();
               }});
    tools.add({"generate_sentences",
               "writes one review sentence for the labels from get_info in the given style; returns the sentence "
               "followed by Terms= and Polarity= lines",
               {{"style_info", ArgType::object, false}},
               [&](const json& args) {
                   if (!policy) throw ToolError("call get_info first");
                   Policy p = *policy;
                   if (args.contains("style_info")) apply_style_override(p, args["style_info"]);
                   ChatRequest request;
                   request.temperature = kGenerationTemperature;
                   request.messages.push_back({Role::user, render_generation_prompt(prompts, p)});
                   auto reply = scope.chat(request);
                   policy = std::move(p);
                   generation = reply.content;
                   return reply.content;
               }});

    const auto system = prompts.generator_agent.render({{"tools", tools.describe()}, {"domain", options.domain}});

    Candidate candidate;
    candidate.generator_trace =
        run_agent(scope, system, tools, std::string(kGeneratorGoal), options.max_steps, "generator");
    candidate.generator_trace.chat_calls = scope.calls();
    candidate.policy = policy;

    const auto& trace = candidate.generator_trace;
    if (trace.gateway_error) {
        candidate.status = CandidateStatus::failed_transport;
        candidate.failure = trace.failure;
        return candidate;
    }
    if (trace.outcome != AgentOutcome::accepted) {
        candidate.status = CandidateStatus::failed_agent;
        candidate.failure = trace.failure;
        return candidate;
    }
    if (!generation || !policy) {
        candidate.status = CandidateStatus::failed_agent;
        candidate.failure = "agent finished without generating a sentence";
        return candidate;
    }
    candidate.raw_generation = *generation;
    try {
        candidate.parsed = parse_generation(*generation);
    } catch (const GenerationParseError& e) {
        candidate.status = CandidateStatus::failed_parse;
        candidate.failure = e.what();
    }
    return candidate;
}

// ---------------------------------------------------------------------------
// Evaluator

namespace {

Verdict ask_verifier(ChatClient& client, const PromptSet& prompts, const std::string& sentence, const Policy& policy) {
    ChatRequest request;
    request.temperature = kVerifierTemperature;
    request.messages.push_back({Role::user, render_verifier_prompt(prompts, sentence, policy.terms, policy.polarities)});
    auto reply = client.chat(request);
    try {
        return parse_verdict(reply.content);
    } catch (const VerdictParseError&) {
        request.messages.push_back({Role::assistant, reply.content});
        request.messages.push_back({Role::user, "Respond only with OK or NOT_OK."});
        reply = client.chat(request);
        try {
            return parse_verdict(reply.content);
        } catch (const VerdictParseError&) {
            return {VerdictKind::not_ok, reply.content};
        }
    }
}

std::string candidate_input(const Candidate& c) {
    return c.parsed->sentence + "\nTerms= " + text::python_list(c.policy->terms) +
           ", Polarity= " + polarity_list(c.policy->polarities);
}

void evaluate_fixed(ChatClient& gateway, const PromptSet& prompts, Candidate& candidate) {
    CallScope scope(gateway);
    AgentTrace trace;
    trace.agent_name = "evaluator";
    trace.input = candidate_input(candidate);
    auto push = [&](StepKind kind, std::string payload, std::optional<std::string> tool = std::nullopt) {
        trace.steps.push_back({kind, std::move(payload), std::move(tool), json::object(), 0});
    };

    push(StepKind::tool_call, "label_inclusion()", "label_inclusion");
    candidate.inclusion_verdict = label_inclusion(candidate.parsed->sentence, candidate.policy->terms);
    push(StepKind::tool_response, std::string(to_string(candidate.inclusion_verdict->kind)), "label_inclusion");
    if (!candidate.inclusion_verdict->ok()) {
        push(StepKind::final_answer, "NOT_OK");
        trace.outcome = AgentOutcome::rejected;
        candidate.status = CandidateStatus::rejected_inclusion;
        candidate.evaluator_trace = std::move(trace);
        return;
    }

    push(StepKind::tool_call, "evaluate_sentence()", "evaluate_sentence");
    try {
        candidate.semantic_verdict = ask_verifier(scope, prompts, candidate.parsed->sentence, *candidate.policy);
    } catch (const GatewayError& e) {
        trace.outcome = AgentOutcome::failed;
        trace.failure = std::string("gateway: ") + e.what();
        trace.gateway_error = e.kind();
        trace.chat_calls = scope.calls();
        candidate.status = CandidateStatus::failed_transport;
        candidate.failure = trace.failure;
        candidate.evaluator_trace = std::move(trace);
        return;
    }
    push(StepKind::tool_response, std::string(to_string(candidate.semantic_verdict->kind)), "evaluate_sentence");
    const bool ok = candidate.semantic_verdict->ok();
    push(StepKind::final_answer, ok ? "OK" : "NOT_OK");
    trace.outcome = ok ? AgentOutcome::accepted : AgentOutcome::rejected;
    trace.chat_calls = scope.calls();
    candidate.status = ok ? CandidateStatus::accepted : CandidateStatus::rejected_semantic;
    candidate.evaluator_trace = std::move(trace);
}

void evaluate_react(ChatClient& gateway, const PromptSet& prompts, Candidate& candidate, int max_steps) {
    CallScope scope(gateway);
    ToolRegistry tools;
    tools.add({"label_inclusion", "checks that every aspect term appears in the sentence exactly; returns OK or NOT_OK",
               {},
               [&](const json&) {
                   candidate.inclusion_verdict = label_inclusion(candidate.parsed->sentence, candidate.policy->terms);
                   return std::string(to_string(candidate.inclusion_verdict->kind));
               }});
    tools.add({"evaluate_sentence",
               "asks a language model whether each aspect term carries its intended polarity; returns OK or NOT_OK",
               {},
               [&](const json&) -> std::string {
                   if (!candidate.inclusion_verdict) throw ToolError("call label_inclusion first");
                   if (!candidate.inclusion_verdict->ok()) return "NOT_OK";
                   candidate.semantic_verdict =
                       ask_verifier(scope, prompts, candidate.parsed->sentence, *candidate.policy);
                   return std::string(to_string(candidate.semantic_verdict->kind));
               }});
    const auto system =
        prompts.evaluator_agent.render({{"tools", tools.describe()}, {"domain", candidate.policy->domain}});
    auto trace = run_agent(scope, system, tools, candidate_input(candidate), max_steps, "evaluator");
    trace.chat_calls = scope.calls();

    if (trace.gateway_error) {
        candidate.status = CandidateStatus::failed_transport;
        candidate.failure = trace.failure;
        candidate.evaluator_trace = std::move(trace);
        return;
    }
    // The structural gate is enforced even if the agent skipped it.
    if (!candidate.inclusion_verdict) {
        candidate.inclusion_verdict = label_inclusion(candidate.parsed->sentence, candidate.policy->terms);
    }
    bool final_ok = false;
    if (const auto* f = trace.final_step()) {
        try {
            final_ok = parse_verdict(f->payload).ok();
        } catch (const VerdictParseError&) {
            final_ok = false;
        }
    }
    if (!candidate.inclusion_verdict->ok()) {
        candidate.status = CandidateStatus::rejected_inclusion;
    } else if (final_ok && candidate.semantic_verdict && candidate.semantic_verdict->ok()) {
        candidate.status = CandidateStatus::accepted;
    } else {
        candidate.status = CandidateStatus::rejected_semantic;
    }
    if (trace.outcome == AgentOutcome::accepted && !candidate.accepted()) trace.outcome = AgentOutcome::rejected;
    candidate.evaluator_trace = std::move(trace);
}

}  // namespace

void evaluator_agent(ChatClient& gateway, const PromptSet& prompts, Candidate& candidate,
                     const EvaluatorOptions& options) {
    if (!candidate.parsed || !candidate.policy) {
        throw InvalidArgument("evaluator needs a successfully parsed candidate with its policy");
    }
    if (options.mode == EvaluatorMode::fixed) {
        evaluate_fixed(gateway, prompts, candidate);
    } else {
        evaluate_react(gateway, prompts, candidate, options.max_steps);
    }
}

AbsaExample to_example(const Candidate& candidate, std::string id, Provenance provenance) {
    if (!candidate.parsed || !candidate.policy) throw InvalidArgument("candidate has no parsed generation");
    AbsaExample ex;
    ex.id = std::move(id);
    ex.raw_text = candidate.parsed->sentence;
    ex.provenance = provenance;
    const auto& policy = *candidate.policy;
    for (std::size_t i = 0; i < policy.terms.size(); ++i) {
        std::string term = policy.terms[i];
        if (auto span = text::find_word_bounded(ex.raw_text, term)) {
            term = ex.raw_text.substr(span->begin, span->end - span->begin);
        }
        AspectAnnotation ann{std::move(term), policy.polarities[i]};
        if (std::find(ex.annotations.begin(), ex.annotations.end(), ann) == ex.annotations.end()) {
            ex.annotations.push_back(std::move(ann));
        }
    }
    return ex;
}

ordered_json trace_to_json(const AgentTrace& trace) {
    ordered_json j;
    j["agent"] = trace.agent_name;
    j["input"] = trace.input;
    auto steps = ordered_json::array();
    for (const auto& s : trace.steps) {
        ordered_json step;
        step["kind"] = to_string(s.kind);
        if (s.tool_name) step["tool"] = *s.tool_name;
        if (s.kind == StepKind::tool_call && !s.arguments.is_null()) step["arguments"] = s.arguments;
        step["payload"] = s.payload;
        step["t_ms"] = s.timestamp_ms;
        steps.push_back(std::move(step));
    }
    j["steps"] = std::move(steps);
    j["outcome"] = to_string(trace.outcome);
    j["chat_calls"] = trace.chat_calls;
    if (!trace.failure.empty()) j["failure"] = trace.failure;
    return j;
}

void write_candidate_trace(const Candidate& candidate, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write trace file '" + path.string() + "'");
    auto emit_trace = [&](const AgentTrace& trace) {
        const auto j = trace_to_json(trace);
        out << ordered_json{{"type", "input"}, {"agent", j["agent"]}, {"input", j["input"]}}.dump() << '\n';
        for (const auto& step : j["steps"]) {
            ordered_json rec{{"type", "step"}, {"agent", j["agent"]}};
            for (const auto& [k, v] : step.items()) rec[k] = v;
            out << rec.dump() << '\n';
        }
        ordered_json outcome{{"type", "outcome"}, {"agent", j["agent"]}, {"outcome", j["outcome"]},
                             {"chat_calls", j["chat_calls"]}};
        if (j.contains("failure")) outcome["failure"] = j["failure"];
        out << outcome.dump() << '\n';
    };
    emit_trace(candidate.generator_trace);
    if (candidate.policy) {
        const auto& p = *candidate.policy;
        ordered_json rec{{"type", "policy"}, {"terms", p.terms}};
        auto pols = ordered_json::array();
        for (auto pol : p.polarities) pols.push_back(to_string(pol));
        rec["polarities"] = std::move(pols);
        if (!p.style.writing_style.empty()) {
            rec["style"] = {{"writing_style", p.style.writing_style},
                            {"grammar_structure", p.style.grammar_structure},
                            {"length", to_string(p.style.sentence_length)}};
        }
        rec["sources"] = p.source_sentence_ids;
        out << rec.dump() << '\n';
    }
    if (candidate.evaluator_trace) emit_trace(*candidate.evaluator_trace);
    ordered_json decision{{"type", "decision"},
                          {"status", to_string(candidate.status)},
                          {"final", candidate.accepted() ? "OK" : "NOT_OK"}};
    if (candidate.parsed) decision["sentence"] = candidate.parsed->sentence;
    if (!candidate.failure.empty()) decision["failure"] = candidate.failure;
    out << decision.dump() << '\n';
}

}  // namespace absaforge
