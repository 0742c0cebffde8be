#include "prism/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace prism::llm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

namespace {

class HttpTransport : public Transport {
public:
    explicit HttpTransport(const EndpointConfig& endpoint) : endpoint_(endpoint) {
        // Split "http://host:port/prefix" into client base and path prefix.
        const auto& url = endpoint_.base_url;
        auto scheme_end = url.find("://");
        std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto path_start = url.find('/', host_start);
        if (path_start == std::string::npos) {
            base_ = url;
            prefix_ = "";
        } else {
            base_ = url.substr(0, path_start);
            prefix_ = url.substr(path_start);
        }
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    TransportReply post_chat(const std::string& body) override {
        httplib::Client client(base_);
        client.set_connection_timeout(std::chrono::duration<double>(
            endpoint_.timeout_seconds));
        client.set_read_timeout(
            std::chrono::duration<double>(endpoint_.timeout_seconds));
        httplib::Headers headers;
        if (const char* key = std::getenv(endpoint_.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto res = client.Post(prefix_ + "/chat/completions", headers, body,
                               "application/json");
        if (!res) {
            return TransportReply{0, "transport error: " + httplib::to_string(res.error())};
        }
        return TransportReply{res->status, res->body};
    }

private:
    EndpointConfig endpoint_;
    std::string base_;
    std::string prefix_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(const EndpointConfig& endpoint) {
    return std::make_unique<HttpTransport>(endpoint);
}

MockTransport::MockTransport(const std::string& transcript_path) {
    std::ifstream file(transcript_path);
    if (!file) {
        throw std::runtime_error("MockTransport: cannot open " + transcript_path);
    }
    std::string line;
    while (std::getline(file, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        Entry entry;
        if (j.contains("match") && j["match"].contains("contains")) {
            entry.must_contain = j["match"]["contains"].get<std::string>();
        }
        entry.status = j.value("status", 200);
        entry.content = j.value("content", "");
        if (j.contains("usage")) {
            entry.usage_in = j["usage"].value("in", 0);
            entry.usage_out = j["usage"].value("out", 0);
        }
        entries_.push_back(std::move(entry));
    }
}

TransportReply MockTransport::post_chat(const std::string& body) {
    if (cursor_ >= entries_.size()) {
        throw std::runtime_error("MockTransport: transcript exhausted");
    }
    const Entry& entry = entries_[cursor_++];
    if (entry.must_contain && body.find(*entry.must_contain) == std::string::npos) {
        throw std::runtime_error(
            "MockTransport: request does not contain expected text '" +
            *entry.must_contain + "'");
    }
    if (entry.status != 200) {
        return TransportReply{entry.status, "canned failure"};
    }
    json j;
    j["choices"] = json::array(
        {{{"message", {{"role", "assistant"}, {"content", entry.content}}}}});
    j["usage"] = {{"prompt_tokens", entry.usage_in},
                  {"completion_tokens", entry.usage_out}};
    return TransportReply{200, j.dump()};
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

std::string build_request_body(const std::string& model,
                               const ChatExchange& exchange) {
    json j;
    j["model"] = model;
    j["temperature"] = exchange.temperature;
    if (exchange.seed) j["seed"] = *exchange.seed;
    j["messages"] = json::array();
    for (const auto& m : exchange.messages) {
        j["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }
    return j.dump();
}

ChatClient::ChatClient(EndpointConfig endpoint, std::shared_ptr<Transport> transport)
    : endpoint_(std::move(endpoint)), transport_(std::move(transport)) {
    if (endpoint_.max_retries < 0) {
        throw std::domain_error("EndpointConfig: max_retries must be >= 0");
    }
}

ChatExchange ChatClient::complete(ChatExchange request) const {
    const std::string body = build_request_body(endpoint_.model_name, request);

    TransportReply reply;
    int attempt = 0;
    while (true) {
        reply = transport_->post_chat(body);
        const bool transient = reply.status == 0 || reply.status == 429 ||
                               reply.status >= 500;
        if (!transient) break;
        if (attempt >= endpoint_.max_retries) {
            throw ExhaustedRetriesError(
                "chat completion failed after " + std::to_string(attempt + 1) +
                    " attempts (last status " + std::to_string(reply.status) + ")",
                reply.status);
        }
        const double delay =
            endpoint_.backoff_base_seconds * static_cast<double>(1 << attempt);
        std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        ++attempt;
    }

    if (reply.status != 200) {
        throw MalformedResponseError("chat completion returned status " +
                                     std::to_string(reply.status) + ": " +
                                     reply.body);
    }

    try {
        const json j = json::parse(reply.body);
        request.response_text =
            j.at("choices").at(0).at("message").at("content").get<std::string>();
        if (j.contains("usage")) {
            request.usage.input_tokens = j["usage"].value("prompt_tokens", 0);
            request.usage.output_tokens = j["usage"].value("completion_tokens", 0);
        }
    } catch (const json::exception& e) {
        throw MalformedResponseError(std::string("unparseable completion: ") +
                                     e.what());
    }
    return request;
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

std::vector<RoleSpec> default_roles() {
    return {
        {"Minimalist", "Solve with fewest steps. Prioritize simplicity."},
        {"Skeptic", "Verify each step. Prioritize correctness."},
        {"Explorer", "Avoid the obvious. Try unconventional methods."},
    };
}

namespace {

std::string capped(const std::string& text) {
    if (text.size() <= kPromptFieldCap) return text;
    return text.substr(0, kPromptFieldCap) + "\n...[truncated " +
           std::to_string(text.size() - kPromptFieldCap) + " chars]";
}

std::string render_report(const exec::ExecutionReport& report) {
    std::ostringstream os;
    os << "success: " << report.success << "\n";
    os << "tests:";
    for (auto bit : report.tests) os << ' ' << int(bit);
    if (report.tests.empty()) os << " (none)";
    os << "\n";
    if (exec::quality_from_report(report) == 1) {
        os << "verdict: all tests passed\n";
    }
    if (!report.output.empty()) os << "output:\n" << capped(report.output) << "\n";
    if (!report.error.empty()) os << "error:\n" << capped(report.error) << "\n";
    return os.str();
}

}  // namespace

std::vector<ChatMessage> render_role_prompt(const RoleSpec& role,
                                            const std::string& task_statement) {
    std::vector<ChatMessage> messages;
    messages.push_back(
        {"system", "You are the " + role.label + " proposer in a multi-agent "
                   "reasoning team. " + role.instruction +
                   " Produce a complete, self-contained solution."});
    messages.push_back({"user", task_statement});
    return messages;
}

std::vector<ChatMessage> render_review_prompt(const std::string& candidate_text,
                                              const exec::ExecutionReport& report) {
    std::ostringstream user;
    user << "Review the candidate solution below against the execution "
            "evidence. Analyze failure causes, identify validated components, "
            "and suggest improvements.\n\n";
    user << "=== candidate ===\n" << capped(candidate_text) << "\n\n";
    user << "=== execution report ===\n" << render_report(report) << "\n";
    user << "Finish with a fenced verdict block:\n"
            "```verdict\n"
            "{\"verdict\": 0 or 1, \"confidence\": 0.0-1.0, \"analysis\": \"...\"}\n"
            "```\n";

    std::vector<ChatMessage> messages;
    messages.push_back({"system",
                        "You are a rigorous reviewer. Ground every judgment in "
                        "the execution evidence, not in stylistic preference."});
    messages.push_back({"user", user.str()});
    return messages;
}

std::vector<ChatMessage> render_synthesis_prompt(const SynthesisContext& ctx) {
    std::ostringstream user;
    user << "Task:\n" << ctx.task_statement << "\n\n";
    user << "Integrate the candidates below into one final solution. Combine "
            "validated components from different candidates when useful, and "
            "fix the documented failures.\n";
    for (std::size_t k = 0; k < ctx.candidate_texts.size(); ++k) {
        user << "\n=== candidate " << k + 1 << " ===\n"
             << capped(ctx.candidate_texts[k]) << "\n";
        if (k < ctx.reports.size()) {
            user << "--- execution report ---\n" << render_report(ctx.reports[k]);
        }
        if (k < ctx.reviews.size()) {
            for (const auto& review : ctx.reviews[k]) {
                user << "--- review ---\n" << capped(review) << "\n";
            }
        }
    }
    if (ctx.prior_attempt) {
        user << "\n=== previous synthesis attempt (failed validation) ===\n"
             << capped(*ctx.prior_attempt) << "\n";
        user << "--- its error trace ---\n"
             << capped(ctx.prior_error.value_or("")) << "\n";
        user << "Refine the attempt to fix exactly these failures.\n";
    }
    user << "\nReturn only the final solution.\n";

    std::vector<ChatMessage> messages;
    messages.push_back({"system",
                        "You are the synthesis agent. Work deterministically "
                        "and justify nothing; output the solution itself."});
    messages.push_back({"user", user.str()});
    return messages;
}

std::optional<exec::VerifierVerdict> parse_review_verdict(
    const std::string& response_text) {
    // Look for a fenced block whose body parses as JSON with a "verdict"
    // field; fall back to the first bare JSON object carrying one.
    auto try_parse = [](const std::string& text)
        -> std::optional<exec::VerifierVerdict> {
        try {
            const json j = json::parse(text);
            if (!j.contains("verdict")) return std::nullopt;
            exec::VerifierVerdict v;
            if (j["verdict"].is_boolean()) {
                v.is_correct = j["verdict"].get<bool>() ? 1 : 0;
            } else if (j["verdict"].is_number()) {
                v.is_correct = j["verdict"].get<double>() >= 0.5 ? 1 : 0;
            } else {
                return std::nullopt;
            }
            v.confidence = j.value("confidence", 0.5);
            if (v.confidence < 0.0 || v.confidence > 1.0) v.confidence = 0.5;
            v.errors_text = j.value("analysis", "");
            return v;
        } catch (const json::exception&) {
            return std::nullopt;
        }
    };

    std::size_t pos = 0;
    while ((pos = response_text.find("```", pos)) != std::string::npos) {
        const std::size_t body_start = response_text.find('\n', pos);
        if (body_start == std::string::npos) break;
        const std::size_t fence_end = response_text.find("```", body_start);
        if (fence_end == std::string::npos) break;
        const std::string body =
            response_text.substr(body_start + 1, fence_end - body_start - 1);
        if (auto v = try_parse(body)) return v;
        pos = fence_end + 3;
    }

    // Bare object somewhere in the prose.
    const std::size_t brace = response_text.find('{');
    if (brace != std::string::npos) {
        const std::size_t close = response_text.rfind('}');
        if (close != std::string::npos && close > brace) {
            if (auto v = try_parse(response_text.substr(brace, close - brace + 1))) {
                return v;
            }
        }
    }
    return std::nullopt;
}

}  // namespace prism::llm
