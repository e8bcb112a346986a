#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absaforge/error.hpp"
#include "json.hpp"

namespace absaforge {

enum class Role { system, user, assistant, tool };

Role parse_role(std::string_view word);
std::string_view to_string(Role r);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

inline constexpr double kGenerationTemperature = 0.8;
inline constexpr double kVerifierTemperature = 0.0;

struct ChatRequest {
    std::string model;  // empty: use the backend's configured model
    std::optional<std::string> system;
    std::vector<ChatMessage> messages;
    double temperature = kGenerationTemperature;
    std::optional<std::int64_t> seed;
    std::optional<int> max_tokens;

    /// Throws InvalidArgument on empty message lists or negative temperature.
    void validate() const;
};

/// Stable hash of the system prompt and message list, hex encoded.
std::string fingerprint(const ChatRequest& request);

nlohmann::ordered_json to_json(const ChatRequest& request);

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason f);
FinishReason parse_finish_reason(std::string_view word);

struct TokenCounts {
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
};

struct ChatResponse {
    std::string content;
    FinishReason finish_reason = FinishReason::stop;
    std::int64_t latency_ms = 0;
    std::optional<TokenCounts> token_counts;
    /// Transport attempts spent on this call (1 + retries used).
    int attempts = 1;
};

enum class ApiFlavor { ollama_chat, openai_compatible, scripted };

ApiFlavor parse_api_flavor(std::string_view word);
std::string_view to_string(ApiFlavor f);

/// How the scripted backend picks the reply for a request.
enum class ScriptMode { sequence, fingerprint };

struct BackendConfig {
    std::string endpoint_url;
    ApiFlavor api_flavor = ApiFlavor::ollama_chat;
    std::string model = "qwen2.5:14b";
    int timeout_ms = 120'000;
    int max_retries = 3;
    int backoff_base_ms = 500;
    std::optional<std::filesystem::path> script_path;
    ScriptMode script_mode = ScriptMode::sequence;
    std::string bearer_token;
    /// When set, every live exchange is appended to this transcript.
    std::optional<std::filesystem::path> record_path;

    void validate() const;

    /// Defaults overlaid with ABSA_FORGE_ENDPOINT, ABSA_FORGE_MODEL and
    /// ABSA_FORGE_TIMEOUT_MS.
    static BackendConfig from_env();
};

class GatewayError : public Error {
public:
    enum class Kind {
        transport,
        http_status,
        retries_exhausted,
        script_exhausted,
        fingerprint_miss,
        malformed_reply,
        budget_exhausted,
    };

    GatewayError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// One chat-completion transport. Implementations are safe to call
/// concurrently.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

/// Replays a newline-delimited transcript. Each line is a JSON object with a
/// `response` object (or a top-level `content` string) and, optionally, the
/// `fingerprint` of the request that produced it.
class ScriptedBackend final : public ChatBackend {
public:
    struct Entry {
        std::string fingerprint;
        ChatResponse response;
    };

    ScriptedBackend(std::vector<Entry> entries, ScriptMode mode);
    static ScriptedBackend from_file(const std::filesystem::path& path, ScriptMode mode);

    ChatResponse complete(const ChatRequest& request) override;

    std::size_t remaining() const;

private:
    struct State;
    std::shared_ptr<State> state_;
};

/// Anything that answers chat requests.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual ChatResponse chat(ChatRequest request) = 0;
};

/// Issues requests through a backend, fills in the default model, counts
/// calls and enforces an optional call budget.
class Gateway final : public ChatClient {
public:
    explicit Gateway(const BackendConfig& config);
    Gateway(std::unique_ptr<ChatBackend> backend, std::string default_model);

    ChatResponse chat(ChatRequest request) override;

    std::uint64_t calls() const noexcept { return calls_.load(); }
    /// 0 disables the budget.
    void set_call_budget(std::uint64_t max_calls) noexcept { budget_ = max_calls; }

private:
    std::unique_ptr<ChatBackend> backend_;
    std::string default_model_;
    std::atomic<std::uint64_t> calls_{0};
    std::atomic<std::uint64_t> budget_{0};
};

/// Forwards to another client and counts the calls made through it. Used to
/// attribute chat calls to a single agent run.
class CallScope final : public ChatClient {
public:
    explicit CallScope(ChatClient& inner) : inner_(inner) {}

    ChatResponse chat(ChatRequest request) override {
        ++calls_;
        return inner_.chat(std::move(request));
    }
    std::uint64_t calls() const noexcept { return calls_; }

private:
    ChatClient& inner_;
    std::uint64_t calls_ = 0;
};

/// Returns `config` with transcript recording to `sink` enabled. The sink is
/// opened immediately so an unwritable path fails before any live call.
BackendConfig record_transcript(BackendConfig config, const std::filesystem::path& sink);

}  // namespace absaforge
