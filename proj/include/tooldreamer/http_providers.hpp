#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>

#include "tooldreamer/embedding.hpp"
#include "tooldreamer/errors.hpp"
#include "tooldreamer/hypothesizer.hpp"

namespace tooldreamer {

namespace detail {

inline std::string auth_token(const std::string& token_env) {
    if (token_env.empty()) return "";
    const char* value = std::getenv(token_env.c_str());
    return value ? std::string(value) : std::string();
}

} // namespace detail

/// Embedding service client. POST {base_url}{path} with
/// {"input": [texts], "model": model} and expects
/// {"data": [{"embedding": [...]}, ...]} in input order.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    RemoteEmbeddingProvider(std::string base_url, std::string model, std::size_t dim,
                            std::string token_env, std::string path = "/v1/embeddings")
        : base_url_(std::move(base_url)), model_(std::move(model)), dim_(dim),
          token_env_(std::move(token_env)), path_(std::move(path)) {
        if (dim_ == 0) throw usage_error("remote embedding provider needs a positive dim");
    }

    std::size_t dim() const override { return dim_; }

    std::string fingerprint() const override {
        return "remote_http:" + model_ + ":d" + std::to_string(dim_);
    }

    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override {
        httplib::Client client(base_url_);
        client.set_read_timeout(120, 0);
        httplib::Headers headers;
        std::string token = detail::auth_token(token_env_);
        if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

        json body{{"input", texts}, {"model", model_}};
        auto response = client.Post(path_, headers, body.dump(), "application/json");
        if (!response) {
            throw provider_error("embedding service unreachable: " + base_url_);
        }
        if (response->status != 200) {
            throw provider_error("embedding service returned HTTP " + std::to_string(response->status));
        }
        json parsed = json::parse(response->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array()) {
            throw provider_error("embedding service returned an unexpected body");
        }
        std::vector<EmbeddingVector> out;
        for (const auto& entry : parsed["data"]) {
            EmbeddingVector v = entry.at("embedding").get<EmbeddingVector>();
            if (v.size() != dim_) {
                throw provider_error("embedding service returned dim " + std::to_string(v.size()) +
                                     ", expected " + std::to_string(dim_));
            }
            out.push_back(std::move(v));
        }
        if (out.size() != texts.size()) {
            throw provider_error("embedding service returned " + std::to_string(out.size()) +
                                 " vectors for " + std::to_string(texts.size()) + " inputs");
        }
        return out;
    }

private:
    std::string base_url_;
    std::string model_;
    std::size_t dim_;
    std::string token_env_;
    std::string path_;
};

/// Chat-completion client. POST {base_url}{path} with
/// {"model", "messages": [{"role","content"}], "temperature"} and returns the
/// first choice's message content.
class HttpLlmProvider final : public LlmProvider {
public:
    HttpLlmProvider(std::string base_url, std::string model, double temperature, std::string token_env,
                    std::string path = "/v1/chat/completions")
        : base_url_(std::move(base_url)), model_(std::move(model)), temperature_(temperature),
          token_env_(std::move(token_env)), path_(std::move(path)) {}

    std::string complete(const std::string&, const std::string& prompt) override {
        httplib::Client client(base_url_);
        client.set_read_timeout(300, 0);
        httplib::Headers headers;
        std::string token = detail::auth_token(token_env_);
        if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);

        json body{{"model", model_},
                  {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                  {"temperature", temperature_}};
        auto response = client.Post(path_, headers, body.dump(), "application/json");
        if (!response) {
            throw provider_error("LLM service unreachable: " + base_url_);
        }
        if (response->status != 200) {
            throw provider_error("LLM service returned HTTP " + std::to_string(response->status));
        }
        json parsed = json::parse(response->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty()) {
            throw provider_error("LLM service returned an unexpected body");
        }
        return parsed["choices"][0].at("message").at("content").get<std::string>();
    }

private:
    std::string base_url_;
    std::string model_;
    double temperature_;
    std::string token_env_;
    std::string path_;
};

} // namespace tooldreamer
