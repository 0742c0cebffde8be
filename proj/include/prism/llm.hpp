#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "prism/exec.hpp"

// OpenAI-compatible chat-completions client with retrying transport, the
// role/review/synthesis prompt templates, and a deterministic mock
// transport driven by a JSONL transcript for offline runs.

namespace prism::llm {

struct EndpointConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string model_name = "local-model";
    std::string api_key_env = "PRISM_API_KEY";  // key read from env, never config
    double timeout_seconds = 120.0;
    int max_retries = 3;
    double backoff_base_seconds = 0.25;
};

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

struct ChatUsage {
    long long input_tokens = 0;
    long long output_tokens = 0;
};

struct ChatExchange {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<long long> seed;
    std::string response_text;
    ChatUsage usage;
};

class ExhaustedRetriesError : public std::runtime_error {
public:
    ExhaustedRetriesError(const std::string& what, int last_status)
        : std::runtime_error(what), last_status(last_status) {}
    int last_status;
};

class MalformedResponseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TransportReply {
    int status = 0;       // HTTP status; 0 = transport-level failure
    std::string body;     // response body or error description
};

/// Wire-level POST of a chat-completions JSON body.
class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportReply post_chat(const std::string& json_body) = 0;
};

/// Real HTTP transport (cpp-httplib).
std::unique_ptr<Transport> make_http_transport(const EndpointConfig& endpoint);

/// Deterministic transport serving an ordered transcript. Each JSONL
/// entry is {"match": {"contains": "..."}?, "status": int?,
/// "content": "...", "usage": {"in": n, "out": n}?}. Entries are consumed
/// in order; a "match.contains" mismatch raises, keeping fixtures honest.
class MockTransport : public Transport {
public:
    explicit MockTransport(const std::string& transcript_path);
    TransportReply post_chat(const std::string& json_body) override;
    std::size_t remaining() const { return entries_.size() - cursor_; }

private:
    struct Entry {
        std::optional<std::string> must_contain;
        int status = 200;
        std::string content;
        long long usage_in = 0;
        long long usage_out = 0;
    };
    std::vector<Entry> entries_;
    std::size_t cursor_ = 0;
};

class ChatClient {
public:
    ChatClient(EndpointConfig endpoint, std::shared_ptr<Transport> transport);

    /// Sends the exchange, retrying transient failures (HTTP 429/5xx,
    /// transport errors) with exponential backoff, and returns it with
    /// response_text and usage filled in.
    ChatExchange complete(ChatExchange request) const;

    const EndpointConfig& endpoint() const { return endpoint_; }

private:
    EndpointConfig endpoint_;
    std::shared_ptr<Transport> transport_;
};

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

struct RoleSpec {
    std::string label;
    std::string instruction;
};

/// The three stock proposer roles.
std::vector<RoleSpec> default_roles();

/// Embedded report/review text above this many characters is cut with an
/// explicit "[truncated N chars]" marker.
constexpr std::size_t kPromptFieldCap = 16384;

std::vector<ChatMessage> render_role_prompt(const RoleSpec& role,
                                            const std::string& task_statement);

std::vector<ChatMessage> render_review_prompt(const std::string& candidate_text,
                                              const exec::ExecutionReport& report);

struct SynthesisContext {
    std::string task_statement;
    std::vector<std::string> candidate_texts;
    std::vector<exec::ExecutionReport> reports;
    // reviews[k] holds the rendered verdict lines for candidate k.
    std::vector<std::vector<std::string>> reviews;
    std::optional<std::string> prior_attempt;
    std::optional<std::string> prior_error;
};

std::vector<ChatMessage> render_synthesis_prompt(const SynthesisContext& ctx);

/// Extracts the fenced machine-readable verdict block from a review
/// response. Tolerates surrounding prose; returns nullopt (abstention)
/// when no parseable block exists.
std::optional<exec::VerifierVerdict> parse_review_verdict(
    const std::string& response_text);

/// Serializes a chat request to the OpenAI wire format.
std::string build_request_body(const std::string& model,
                               const ChatExchange& exchange);

}  // namespace prism::llm
