#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace veil {

struct QuestionError : std::runtime_error {
    explicit QuestionError(const std::string& what)
        : std::runtime_error(what) {}
};

enum class ShadowKind { Exact, Similar, General };
enum class QuestionSource { Template, ExternalLlm };

const char* shadow_kind_name(ShadowKind k);
ShadowKind parse_shadow_kind(const std::string& s);

// Deduplicated shadow question set Q_S. truncated flags a template run that
// could not reach n distinct outputs and returned the max achievable.
struct ShadowQuestionSet {
    ShadowKind kind = ShadowKind::Exact;
    std::vector<std::string> questions;
    QuestionSource provenance = QuestionSource::Template;
    uint64_t seed = 0;
    bool truncated = false;

    size_t size() const { return questions.size(); }
};

ShadowQuestionSet build_exact(const std::string& question);

// Seeded rule-based paraphrases: interrogative swaps, synonym substitution,
// and clause-reordering wrappers, combined and deduplicated.
ShadowQuestionSet build_similar(const std::string& example, int n,
                                uint64_t seed);

// Draws from the bundled bank: the ten canonical entries first, then the
// parameterized template extensions, both in seeded order.
ShadowQuestionSet build_general(int n, uint64_t seed);

const std::vector<std::string>& general_question_bank();  // >= 64 entries
const std::vector<std::string>& privacy_question_bank();  // 10 entries

std::vector<std::string> load_question_bank(const std::string& path);
void write_question_bank(const std::vector<std::string>& bank,
                         const std::string& path);

// Optional external LLM endpoint. POST {prompt, n, api_key}, the key read
// from the environment; the response must be a JSON list of strings.
// Temperature is a pass-through: included in the body only when set.
struct LlmEndpoint {
    std::string url;  // http://host[:port]/path
    std::string api_key_env = "VEIL_LLM_API_KEY";
    std::optional<double> temperature;
    int timeout_ms = 10000;
    int max_retries = 2;  // on connection failure or 5xx
};

std::vector<std::string> llm_request_list(const LlmEndpoint& ep,
                                          const std::string& prompt, int n);
ShadowQuestionSet build_similar_external(const std::string& example, int n,
                                         const LlmEndpoint& ep);
ShadowQuestionSet build_general_external(int n, const LlmEndpoint& ep);
// Asks the endpoint to judge a response with the refusal-judge prompt;
// expects a yes/no answer.
bool llm_judge_refusal(const LlmEndpoint& ep, const std::string& response);

std::string similar_questions_prompt(const std::string& example, int n);
std::string general_questions_prompt(int n);
std::string refusal_judge_prompt(const std::string& response);

}  // namespace veil
