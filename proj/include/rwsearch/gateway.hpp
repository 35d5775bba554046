#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rwsearch/error.hpp"
#include "rwsearch/event_log.hpp"
#include "rwsearch/tokens.hpp"

namespace rws {

struct ChatRequest {
    std::string system_text;
    std::string user_text;
    int completions_requested = 1;
    int max_output_tokens = 1024;
    double temperature = 0.0;
    std::int64_t seed = 0;
    std::string request_id; // assigned by the gateway when empty
};

inline void validate_request(const ChatRequest& r) {
    if (r.completions_requested < 1) throw ValidationError("completions_requested must be >= 1");
    if (r.max_output_tokens < 1) throw ValidationError("max_output_tokens must be >= 1");
    if (!(r.temperature >= 0.0 && r.temperature <= 2.0)) throw ValidationError("temperature must lie in [0,2]");
}

struct Usage {
    std::uint64_t input = 0;
    std::vector<std::uint64_t> output;
};

struct ChatResponse {
    std::vector<std::string> choices;
    Usage usage;
    std::string provider_id;
    std::string request_id;
    std::vector<std::string> warnings;
};

/// Network-level failure; the gateway retries these.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Provider answered but the answer is unusable; not retried.
class ProviderError : public Error {
public:
    using Error::Error;
};

struct ProviderReply {
    std::vector<std::string> choices;
    std::optional<Usage> usage;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string id() const = 0;
    /// Must be safe to call from several threads.
    virtual ProviderReply send(const ChatRequest& request) = 0;
};

using SleepFn = std::function<void(std::chrono::milliseconds)>;

inline SleepFn real_sleep() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{250};
    std::chrono::milliseconds max_backoff{4000};

    std::chrono::milliseconds backoff(int failed_attempt) const {
        auto d = initial_backoff;
        for (int i = 1; i < failed_attempt && d < max_backoff; ++i) d *= 2;
        return std::min(d, max_backoff);
    }
};

/// Spaces calls at least 60/rpm seconds apart. rpm <= 0 disables it.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute = 0) {
        if (requests_per_minute > 0)
            interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(60.0 / requests_per_minute));
    }

    void acquire() {
        if (interval_ == Clock::duration::zero()) return;
        Clock::time_point slot;
        {
            std::lock_guard lock(mu_);
            const auto now = Clock::now();
            slot = std::max(now, next_);
            next_ = slot + interval_;
        }
        std::this_thread::sleep_until(slot);
    }

private:
    using Clock = std::chrono::steady_clock;
    Clock::duration interval_ = Clock::duration::zero();
    Clock::time_point next_{};
    std::mutex mu_;
};

struct GatewayOptions {
    RetryPolicy retry;
    double requests_per_minute = 0;
    SleepFn sleep = real_sleep();
    std::string request_id_prefix = "req";
};

inline nlohmann::json request_to_json(const ChatRequest& r) {
    return {{"system_text", r.system_text},
            {"user_text", r.user_text},
            {"completions_requested", r.completions_requested},
            {"max_output_tokens", r.max_output_tokens},
            {"temperature", r.temperature},
            {"seed", r.seed},
            {"request_id", r.request_id}};
}

/// Fronts one provider. Every complete() call, failed or not, leaves exactly
/// one "chat" record in the event log before it returns or throws.
class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, std::shared_ptr<EventLog> log, GatewayOptions opts = {})
        : provider_(std::move(provider)), log_(std::move(log)), opts_(std::move(opts)),
          limiter_(opts_.requests_per_minute) {
        if (!provider_) throw ValidationError("gateway needs a provider");
        if (!log_) log_ = std::make_shared<EventLog>();
        if (opts_.retry.max_attempts < 1) throw ValidationError("retry.max_attempts must be >= 1");
    }

    ChatResponse complete(ChatRequest request, const nlohmann::json& tags = nlohmann::json::object()) {
        const auto started = utc_timestamp();
        if (request.request_id.empty()) request.request_id = opts_.request_id_prefix + "-" + std::to_string(counter_++);

        nlohmann::json rec{{"type", "chat"}, {"ts_start", started}, {"provider_id", provider_->id()},
                           {"request_id", request.request_id}, {"tags", tags}, {"request", request_to_json(request)}};
        int attempts = 0;
        try {
            validate_request(request);
            auto reply = send_with_retry(request, attempts);
            if (static_cast<int>(reply.choices.size()) != request.completions_requested)
                throw ProviderError("provider returned " + std::to_string(reply.choices.size()) + " choices, expected " +
                                    std::to_string(request.completions_requested));
            ChatResponse resp;
            resp.provider_id = provider_->id();
            resp.request_id = request.request_id;
            resp.choices = std::move(reply.choices);
            if (reply.usage && reply.usage->output.size() == resp.choices.size()) {
                resp.usage = *reply.usage;
            } else {
                resp.usage.input = token_count(request.system_text) + token_count(request.user_text);
                for (const auto& c : resp.choices) resp.usage.output.push_back(token_count(c));
            }
            for (std::size_t i = 0; i < resp.choices.size(); ++i) {
                const auto est = token_count(resp.choices[i]);
                if (est > static_cast<std::uint64_t>(request.max_output_tokens))
                    resp.warnings.push_back("choice " + std::to_string(i) + " estimated at " + std::to_string(est) +
                                            " tokens exceeds max_output_tokens " +
                                            std::to_string(request.max_output_tokens) + " (possible truncation)");
            }
            rec["attempts"] = attempts;
            rec["ts_end"] = utc_timestamp();
            rec["response"] = {{"choices", resp.choices},
                               {"usage", {{"input", resp.usage.input}, {"output", resp.usage.output}}}};
            rec["warnings"] = resp.warnings;
            rec["error"] = nullptr;
            log_->append(std::move(rec));
            return resp;
        } catch (const std::exception& e) {
            rec["attempts"] = attempts;
            rec["ts_end"] = utc_timestamp();
            rec["response"] = nullptr;
            rec["warnings"] = nlohmann::json::array();
            rec["error"] = e.what();
            log_->append(std::move(rec));
            throw;
        }
    }

    const std::shared_ptr<Provider>& provider() const { return provider_; }
    const std::shared_ptr<EventLog>& log() const { return log_; }

private:
    ProviderReply send_with_retry(const ChatRequest& request, int& attempts) {
        for (;;) {
            ++attempts;
            limiter_.acquire();
            try {
                return provider_->send(request);
            } catch (const TransportError& e) {
                if (attempts >= opts_.retry.max_attempts)
                    throw TransportError(std::string(e.what()) + " (after " + std::to_string(attempts) + " attempts)");
                opts_.sleep(opts_.retry.backoff(attempts));
            }
        }
    }

    std::shared_ptr<Provider> provider_;
    std::shared_ptr<EventLog> log_;
    GatewayOptions opts_;
    RateLimiter limiter_;
    std::atomic<std::uint64_t> counter_{0};
};

} // namespace rws
