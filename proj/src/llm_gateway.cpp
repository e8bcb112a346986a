#include "absaforge/llm_gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "absaforge/log.hpp"
#include "absaforge/text.hpp"
#include "httplib.h"

namespace absaforge {

using nlohmann::ordered_json;

Role parse_role(std::string_view word) {
    const auto w = text::to_lower(text::trim(word));
    if (w == "system") return Role::system;
    if (w == "user") return Role::user;
    if (w == "assistant") return Role::assistant;
    if (w == "tool") return Role::tool;
    throw InvalidArgument("unknown chat role '" + std::string(word) + "'");
}

std::string_view to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

std::string_view to_string(FinishReason f) {
    switch (f) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

FinishReason parse_finish_reason(std::string_view word) {
    const auto w = text::to_lower(text::trim(word));
    if (w == "length") return FinishReason::length;
    if (w == "error") return FinishReason::error;
    return FinishReason::stop;
}

ApiFlavor parse_api_flavor(std::string_view word) {
    const auto w = text::to_lower(text::trim(word));
    if (w == "ollama" || w == "ollama_chat") return ApiFlavor::ollama_chat;
    if (w == "openai" || w == "openai_compatible") return ApiFlavor::openai_compatible;
    if (w == "scripted") return ApiFlavor::scripted;
    throw InvalidArgument("unknown backend '" + std::string(word) + "' (expected ollama, openai or scripted)");
}

std::string_view to_string(ApiFlavor f) {
    switch (f) {
        case ApiFlavor::ollama_chat: return "ollama";
        case ApiFlavor::openai_compatible: return "openai";
        case ApiFlavor::scripted: return "scripted";
    }
    return "ollama";
}

void ChatRequest::validate() const {
    if (messages.empty()) throw InvalidArgument("chat request has no messages");
    if (temperature < 0.0) throw InvalidArgument("temperature must be >= 0");
    if (max_tokens && *max_tokens <= 0) throw InvalidArgument("max_tokens must be positive");
}

std::string fingerprint(const ChatRequest& request) {
    ordered_json doc = ordered_json::array();
    doc.push_back(request.system ? ordered_json(*request.system) : ordered_json(nullptr));
    for (const auto& m : request.messages) doc.push_back({to_string(m.role), m.content});
    return text::hex64(text::fnv1a64(doc.dump()));
}

ordered_json to_json(const ChatRequest& request) {
    ordered_json j;
    j["model"] = request.model;
    if (request.system) j["system"] = *request.system;
    auto msgs = ordered_json::array();
    for (const auto& m : request.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    j["messages"] = std::move(msgs);
    j["temperature"] = request.temperature;
    if (request.seed) j["seed"] = *request.seed;
    if (request.max_tokens) j["max_tokens"] = *request.max_tokens;
    return j;
}

namespace {

ordered_json response_json(const ChatResponse& r) {
    ordered_json j;
    j["content"] = r.content;
    j["finish_reason"] = to_string(r.finish_reason);
    j["latency_ms"] = r.latency_ms;
    if (r.token_counts) j["token_counts"] = {{"prompt", r.token_counts->prompt}, {"completion", r.token_counts->completion}};
    return j;
}

ChatResponse response_from_json(const ordered_json& j) {
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    if (auto f = j.find("finish_reason"); f != j.end() && f->is_string()) {
        r.finish_reason = parse_finish_reason(f->get<std::string>());
    }
    if (auto l = j.find("latency_ms"); l != j.end() && l->is_number_integer()) r.latency_ms = l->get<std::int64_t>();
    if (auto t = j.find("token_counts"); t != j.end() && t->is_object()) {
        r.token_counts = TokenCounts{t->value("prompt", std::int64_t{0}), t->value("completion", std::int64_t{0})};
    }
    return r;
}

// ---------------------------------------------------------------------------
// HTTP

struct ParsedUrl {
    std::string origin;  // scheme://host:port
    std::string path;    // without trailing slash
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw InvalidArgument("endpoint URL needs a scheme: '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    out.origin = url.substr(0, path_start);
    out.path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

class HttpBackend final : public ChatBackend {
public:
    explicit HttpBackend(BackendConfig config) : config_(std::move(config)) {
        auto url = split_url(config_.endpoint_url);
        origin_ = url.origin;
        const std::string_view api = config_.api_flavor == ApiFlavor::ollama_chat ? "/api/chat" : "/v1/chat/completions";
        if (ends_with(url.path, api)) {
            path_ = url.path;
        } else if (config_.api_flavor != ApiFlavor::ollama_chat && ends_with(url.path, "/v1")) {
            // OpenAI-style base URLs usually carry the version already.
            path_ = url.path + "/chat/completions";
        } else {
            path_ = url.path + std::string(api);
        }
    }

    ChatResponse complete(const ChatRequest& request) override {
        const std::string body = encode(request).dump();
        const auto started = std::chrono::steady_clock::now();
        std::string last_error;
        const int max_attempts = 1 + std::max(0, config_.max_retries);

        for (int attempt = 1; attempt <= max_attempts; ++attempt) {
            if (attempt > 1) {
                const auto delay = static_cast<long long>(config_.backoff_base_ms) << (attempt - 2);
                std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            }
            // One client per attempt: calls never share a connection.
            httplib::Client client(origin_);
            const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
            client.set_connection_timeout(timeout);
            client.set_read_timeout(timeout);
            client.set_write_timeout(timeout);
            if (!config_.bearer_token.empty()) client.set_bearer_token_auth(config_.bearer_token);

            auto res = client.Post(path_, body, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500 || res->status == 429) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw GatewayError(GatewayError::Kind::http_status,
                                   "endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
            }
            ChatResponse out = decode(res->body);
            out.attempts = attempt;
            out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - started)
                                 .count();
            return out;
        }
        throw GatewayError(GatewayError::Kind::retries_exhausted,
                           "gave up after " + std::to_string(max_attempts) + " attempts (" + last_error + ")");
    }

private:
    ordered_json encode(const ChatRequest& request) const {
        auto msgs = ordered_json::array();
        if (request.system) msgs.push_back({{"role", "system"}, {"content", *request.system}});
        for (const auto& m : request.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});

        ordered_json j;
        j["model"] = request.model;
        j["messages"] = std::move(msgs);
        if (config_.api_flavor == ApiFlavor::ollama_chat) {
            j["stream"] = false;
            ordered_json options;
            options["temperature"] = request.temperature;
            if (request.seed) options["seed"] = *request.seed;
            if (request.max_tokens) options["num_predict"] = *request.max_tokens;
            j["options"] = std::move(options);
        } else {
            j["temperature"] = request.temperature;
            if (request.seed) j["seed"] = *request.seed;
            if (request.max_tokens) j["max_tokens"] = *request.max_tokens;
            j["stream"] = false;
        }
        return j;
    }

    ChatResponse decode(const std::string& body) const {
        ChatResponse out;
        try {
            const auto j = nlohmann::json::parse(body);
            if (config_.api_flavor == ApiFlavor::ollama_chat) {
                out.content = j.at("message").at("content").get<std::string>();
                out.finish_reason = parse_finish_reason(j.value("done_reason", std::string("stop")));
                if (j.contains("prompt_eval_count") || j.contains("eval_count")) {
                    out.token_counts = TokenCounts{j.value("prompt_eval_count", std::int64_t{0}),
                                                   j.value("eval_count", std::int64_t{0})};
                }
            } else {
                const auto& choice = j.at("choices").at(0);
                out.content = choice.at("message").at("content").get<std::string>();
                if (choice.contains("finish_reason") && choice["finish_reason"].is_string()) {
                    out.finish_reason = parse_finish_reason(choice["finish_reason"].get<std::string>());
                }
                if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
                    out.token_counts = TokenCounts{u->value("prompt_tokens", std::int64_t{0}),
                                                   u->value("completion_tokens", std::int64_t{0})};
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw GatewayError(GatewayError::Kind::malformed_reply, std::string("malformed endpoint reply: ") + e.what());
        }
        return out;
    }

    BackendConfig config_;
    std::string origin_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Recording

class RecordingBackend final : public ChatBackend {
public:
    RecordingBackend(std::unique_ptr<ChatBackend> inner, const std::filesystem::path& sink)
        : inner_(std::move(inner)), out_(sink, std::ios::binary | std::ios::app), sink_(sink) {
        if (!out_) throw IoError("cannot open transcript sink '" + sink.string() + "'");
    }

    ChatResponse complete(const ChatRequest& request) override {
        auto response = inner_->complete(request);
        ordered_json rec;
        rec["fingerprint"] = fingerprint(request);
        rec["request"] = to_json(request);
        rec["response"] = response_json(response);
        std::lock_guard lock(mutex_);
        out_ << rec.dump() << '\n';
        out_.flush();
        if (!out_) throw IoError("transcript write failed for '" + sink_.string() + "'");
        return response;
    }

private:
    std::unique_ptr<ChatBackend> inner_;
    std::mutex mutex_;
    std::ofstream out_;
    std::filesystem::path sink_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Scripted

struct ScriptedBackend::State {
    std::mutex mutex;
    ScriptMode mode;
    std::deque<Entry> sequence;
    std::map<std::string, std::deque<ChatResponse>> by_fingerprint;
    std::size_t remaining = 0;
};

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries, ScriptMode mode) : state_(std::make_shared<State>()) {
    state_->mode = mode;
    state_->remaining = entries.size();
    for (auto& e : entries) {
        if (mode == ScriptMode::fingerprint) {
            if (e.fingerprint.empty()) {
                throw InvalidArgument("fingerprint-mode transcripts need a fingerprint on every entry");
            }
            state_->by_fingerprint[e.fingerprint].push_back(e.response);
        } else {
            state_->sequence.push_back(std::move(e));
        }
    }
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path, ScriptMode mode) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open transcript '" + path.string() + "'");
    std::vector<Entry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const auto j = ordered_json::parse(line);
            Entry e;
            e.fingerprint = j.value("fingerprint", std::string());
            e.response = j.contains("response") ? response_from_json(j.at("response")) : response_from_json(j);
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return ScriptedBackend(std::move(entries), mode);
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    std::lock_guard lock(state_->mutex);
    if (state_->remaining == 0) {
        throw GatewayError(GatewayError::Kind::script_exhausted, "scripted transcript exhausted");
    }
    if (state_->mode == ScriptMode::sequence) {
        auto e = std::move(state_->sequence.front());
        state_->sequence.pop_front();
        --state_->remaining;
        return e.response;
    }
    const auto fp = fingerprint(request);
    auto it = state_->by_fingerprint.find(fp);
    if (it == state_->by_fingerprint.end() || it->second.empty()) {
        throw GatewayError(GatewayError::Kind::fingerprint_miss, "no scripted reply for request fingerprint " + fp);
    }
    auto r = std::move(it->second.front());
    it->second.pop_front();
    --state_->remaining;
    return r;
}

std::size_t ScriptedBackend::remaining() const {
    std::lock_guard lock(state_->mutex);
    return state_->remaining;
}

// ---------------------------------------------------------------------------

void BackendConfig::validate() const {
    if (api_flavor == ApiFlavor::scripted) {
        if (!script_path) throw InvalidArgument("scripted backend requires a script path");
        if (record_path) throw InvalidArgument("transcript recording needs a live backend");
    } else {
        if (endpoint_url.empty()) throw InvalidArgument("live backend requires an endpoint URL");
        if (endpoint_url.rfind("http://", 0) != 0) {
            throw InvalidArgument("only http:// endpoints are supported: '" + endpoint_url + "'");
        }
    }
    if (timeout_ms <= 0) throw InvalidArgument("timeout must be positive");
    if (max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
    if (backoff_base_ms < 0) throw InvalidArgument("backoff must be >= 0");
}

BackendConfig BackendConfig::from_env() {
    BackendConfig c;
    c.endpoint_url = "http://localhost:11434";
    if (const char* v = std::getenv("ABSA_FORGE_ENDPOINT"); v && *v) c.endpoint_url = v;
    if (const char* v = std::getenv("ABSA_FORGE_MODEL"); v && *v) c.model = v;
    if (const char* v = std::getenv("ABSA_FORGE_TIMEOUT_MS"); v && *v) {
        try {
            c.timeout_ms = std::stoi(v);
        } catch (const std::exception&) {
            throw InvalidArgument(std::string("ABSA_FORGE_TIMEOUT_MS is not an integer: ") + v);
        }
    }
    return c;
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
    config.validate();
    if (config.api_flavor == ApiFlavor::scripted) {
        return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(*config.script_path, config.script_mode));
    }
    std::unique_ptr<ChatBackend> backend = std::make_unique<HttpBackend>(config);
    if (config.record_path) backend = std::make_unique<RecordingBackend>(std::move(backend), *config.record_path);
    return backend;
}

BackendConfig record_transcript(BackendConfig config, const std::filesystem::path& sink) {
    if (config.api_flavor == ApiFlavor::scripted) {
        throw InvalidArgument("transcript recording needs a live backend");
    }
    {
        std::ofstream probe(sink, std::ios::binary | std::ios::app);
        if (!probe) throw IoError("cannot open transcript sink '" + sink.string() + "'");
    }
    config.record_path = sink;
    return config;
}

Gateway::Gateway(const BackendConfig& config) : backend_(make_backend(config)), default_model_(config.model) {}

Gateway::Gateway(std::unique_ptr<ChatBackend> backend, std::string default_model)
    : backend_(std::move(backend)), default_model_(std::move(default_model)) {}

ChatResponse Gateway::chat(ChatRequest request) {
    if (request.model.empty()) request.model = default_model_;
    request.validate();
    const auto n = ++calls_;
    const auto budget = budget_.load();
    if (budget != 0 && n > budget) {
        throw GatewayError(GatewayError::Kind::budget_exhausted,
                           "request budget of " + std::to_string(budget) + " chat calls exhausted");
    }
    return backend_->complete(request);
}

}  // namespace absaforge
