#pragma once

// OpenAI-compatible chat-completions client. The API key is taken from the
// environment variable named in the config at construction time.

#include <cstdlib>
#include <regex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "rwsearch/gateway.hpp"

namespace rws {

struct HttpProviderConfig {
    std::string endpoint;        // e.g. https://api.example.com/v1
    std::string model;
    std::string api_key_env;     // name of the variable, never the key
    int timeout_seconds = 120;
};

class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
        static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
        std::smatch m;
        if (!std::regex_match(cfg_.endpoint, m, url)) throw ValidationError("unsupported endpoint URL: " + cfg_.endpoint);
        origin_ = m[1];
        base_path_ = m[2].matched ? std::string(m[2]) : std::string();
        while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
        if (cfg_.model.empty()) throw ValidationError("http provider needs a model name");
        if (cfg_.api_key_env.empty()) throw ValidationError("http provider needs api_key_env");
        const char* key = std::getenv(cfg_.api_key_env.c_str());
        if (!key || !*key) throw ValidationError("environment variable " + cfg_.api_key_env + " is not set");
        key_ = key;
    }

    std::string id() const override { return "http:" + cfg_.model; }

    ProviderReply send(const ChatRequest& r) override {
        nlohmann::json body{{"model", cfg_.model},
                            {"messages",
                             {{{"role", "system"}, {"content", r.system_text}}, {{"role", "user"}, {"content", r.user_text}}}},
                            {"n", r.completions_requested},
                            {"max_tokens", r.max_output_tokens},
                            {"temperature", r.temperature},
                            {"seed", r.seed}};
        httplib::Client cli(origin_);
        cli.set_connection_timeout(cfg_.timeout_seconds);
        cli.set_read_timeout(cfg_.timeout_seconds);
        httplib::Headers headers{{"Authorization", "Bearer " + key_}, {"X-Request-Id", r.request_id}};
        auto res = cli.Post(base_path_ + "/chat/completions", headers, body.dump(), "application/json");
        if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw TransportError("provider returned HTTP " + std::to_string(res->status));
        if (res->status != 200) throw ProviderError("provider returned HTTP " + std::to_string(res->status) + ": " + res->body);

        nlohmann::json j;
        try {
            j = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            throw ProviderError(std::string("malformed provider reply: ") + e.what());
        }
        ProviderReply out;
        if (!j.contains("choices") || !j["choices"].is_array()) throw ProviderError("provider reply lacks choices");
        for (const auto& c : j["choices"]) out.choices.push_back(c.at("message").value("content", ""));
        if (j.contains("usage") && j["usage"].is_object()) {
            Usage u;
            u.input = j["usage"].value("prompt_tokens", 0ull);
            // Providers report total completion tokens only; split evenly.
            const auto total = j["usage"].value("completion_tokens", 0ull);
            if (!out.choices.empty())
                for (std::size_t i = 0; i < out.choices.size(); ++i) u.output.push_back(total / out.choices.size());
            out.usage = u;
        }
        return out;
    }

private:
    HttpProviderConfig cfg_;
    std::string origin_;
    std::string base_path_;
    std::string key_;
};

} // namespace rws
