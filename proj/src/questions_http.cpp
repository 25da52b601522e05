#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "veil/questions.hpp"
#include "veil/util.hpp"

namespace veil {

namespace {

// http://host[:port]/path -> (host:port base, path)
std::pair<std::string, std::string> split_url(const std::string& url) {
    const std::string scheme = "http://";
    if (url.rfind(scheme, 0) != 0)
        throw QuestionError("LLM endpoint must be an http:// URL: " + url);
    const size_t host_begin = scheme.size();
    const size_t slash = url.find('/', host_begin);
    if (slash == std::string::npos)
        return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

std::string post_json(const LlmEndpoint& ep, const std::string& body) {
    const auto [base, path] = split_url(ep.url);
    httplib::Client cli(base);
    cli.set_connection_timeout(0, ep.timeout_ms * 1000);
    cli.set_read_timeout(ep.timeout_ms / 1000, (ep.timeout_ms % 1000) * 1000);

    int last_status = 0;
    std::string last_error;
    for (int attempt = 0; attempt <= ep.max_retries; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(200LL << (attempt - 1)));
        auto res = cli.Post(path, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        last_status = res->status;
        if (res->status >= 500) continue;
        if (res->status != 200)
            throw QuestionError("LLM endpoint returned HTTP status " +
                                std::to_string(res->status));
        return res->body;
    }
    if (last_status >= 500)
        throw QuestionError("LLM endpoint returned HTTP status " +
                            std::to_string(last_status) + " after retries");
    throw QuestionError("LLM endpoint unreachable: " + last_error);
}

}  // namespace

std::vector<std::string> llm_request_list(const LlmEndpoint& ep,
                                          const std::string& prompt, int n) {
    nlohmann::json body;
    body["prompt"] = prompt;
    body["n"] = n;
    const char* key = std::getenv(ep.api_key_env.c_str());
    body["api_key"] = key ? key : "";
    if (ep.temperature) body["temperature"] = *ep.temperature;

    const std::string resp = post_json(ep, body.dump());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(resp);
    } catch (const nlohmann::json::exception& e) {
        throw QuestionError(std::string("LLM response is not valid JSON: ") +
                            e.what());
    }
    if (!j.is_array())
        throw QuestionError("LLM response must be a JSON list of strings");
    std::vector<std::string> out;
    for (const auto& item : j) {
        if (!item.is_string())
            throw QuestionError("LLM response must be a JSON list of strings");
        const std::string q = trim(item.get<std::string>());
        if (q.empty()) continue;
        if (std::find(out.begin(), out.end(), q) == out.end()) out.push_back(q);
    }
    return out;
}

namespace {

ShadowQuestionSet from_external(ShadowKind kind, std::vector<std::string> qs,
                                int n) {
    ShadowQuestionSet set;
    set.kind = kind;
    set.provenance = QuestionSource::ExternalLlm;
    if (static_cast<int>(qs.size()) > n) qs.resize(static_cast<size_t>(n));
    set.truncated = static_cast<int>(qs.size()) < n;
    set.questions = std::move(qs);
    if (set.questions.empty())
        throw QuestionError("LLM endpoint returned no usable questions");
    return set;
}

}  // namespace

ShadowQuestionSet build_similar_external(const std::string& example, int n,
                                         const LlmEndpoint& ep) {
    if (n < 1) throw QuestionError("similar question count must be >= 1");
    if (trim(example).empty())
        throw QuestionError("example question must be non-empty");
    auto qs = llm_request_list(ep, similar_questions_prompt(example, n), n);
    qs.erase(std::remove(qs.begin(), qs.end(), example), qs.end());
    return from_external(ShadowKind::Similar, std::move(qs), n);
}

ShadowQuestionSet build_general_external(int n, const LlmEndpoint& ep) {
    if (n < 1) throw QuestionError("general question count must be >= 1");
    auto qs = llm_request_list(ep, general_questions_prompt(n), n);
    return from_external(ShadowKind::General, std::move(qs), n);
}

bool llm_judge_refusal(const LlmEndpoint& ep, const std::string& response) {
    auto ans = llm_request_list(ep, refusal_judge_prompt(response), 1);
    if (ans.empty()) throw QuestionError("LLM judge returned no answer");
    const std::string a = to_lower(trim(ans[0]));
    return !a.empty() && a[0] == 'y';
}

}  // namespace veil
