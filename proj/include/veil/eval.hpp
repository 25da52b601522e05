#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "veil/corpus.hpp"
#include "veil/model.hpp"
#include "veil/protect.hpp"
#include "veil/questions.hpp"

namespace veil {

struct EvalError : std::runtime_error {
    explicit EvalError(const std::string& what) : std::runtime_error(what) {}
};

// Keyword refusal judge. The phrase set is frozen and versioned so reports
// can cite the judge they used.
constexpr const char* kJudgeVersion = "kw-1";
const std::vector<std::string>& judge_phrases();
bool judge_refusal(const std::string& response);

struct EvalPair {
    std::string image_id;
    ImageTensor image;
    std::string question;
    std::optional<std::string> answer;  // ground truth, when known
};

struct PairOutcome {
    std::string image_id;
    std::string question;
    std::vector<std::string> responses;
    std::vector<bool> verdicts;
    bool failed = false;
    std::string fail_reason;
};

struct EvalOptions {
    int queries_per_pair = 3;
    double temperature = 0.0;
    int max_tokens = 64;
    uint64_t seed = 0;
    // when set, each keyword verdict is double-checked against the endpoint
    // and disagreements are counted in the report
    const LlmEndpoint* external_judge = nullptr;
};

struct EvalReport {
    std::string judge_version = kJudgeVersion;
    uint64_t model_fingerprint = 0;
    int queries_per_pair = 3;
    double temperature = 0.0;
    uint64_t seed = 0;
    std::vector<PairOutcome> pairs;
    int excluded_pairs = 0;
    double refusal_rate = 0.0;
    std::optional<double> accuracy;
    int judge_disagreements = 0;

    nlohmann::json to_json() const;
    std::string to_json_string() const;
};

// Queries the model queries_per_pair times per pair with seeds derived from
// the pair content (not its position), judges each response, and reports
// count(true)/(pairs x queries) over the pairs that generated successfully.
EvalReport refusal_rate_eval(const ModelBundle& model,
                             const std::vector<EvalPair>& pairs,
                             const EvalOptions& opts);

// Greedy decoding; counts normalized exact matches against ground truth.
double accuracy_eval(const ModelBundle& model,
                     const std::vector<EvalPair>& pairs);

struct MultiRoundResult {
    std::vector<std::string> responses;  // one per round
    std::vector<bool> verdicts;
    std::vector<bool> truncated;  // history dropped to fit the context
};

// Re-asks the same probing question each round with the running
// (question, response) history in the prompt.
MultiRoundResult multi_round_eval(const ModelBundle& model,
                                  const ImageTensor& image,
                                  const std::string& question, int rounds,
                                  double temperature, uint64_t seed);

// ---- ablation sweeps ----

struct SweepAxis {
    std::string name;  // alpha | max_iter | epsilon | minibatch_size |
                       // shadow_set_size | temperature
    std::vector<double> values;
};

struct SweepConfig {
    ShadowKind kind = ShadowKind::General;
    int n_images = 4;
    OptimConfig base_optim;
    EvalOptions base_eval;
    int shadow_set_size = 50;
    uint64_t seed = 0;
    int jobs = 1;
};

struct SweepRow {
    std::vector<double> axis_values;  // canonical axis order
    double refusal_rate = 0.0;
    double accuracy = 0.0;
};

// Cartesian product over the axes; each cell runs protect + evaluate on the
// leading corpus scenes with cell-derived seeds.
std::vector<SweepRow> run_sweep(const ModelBundle& model,
                                const ToyCorpus& corpus,
                                std::vector<SweepAxis> axes,
                                const SweepConfig& config);

// One header row; axis columns in canonical order, then refusal_rate, then
// accuracy.
std::string sweep_to_csv(const std::vector<SweepAxis>& axes,
                         const std::vector<SweepRow>& rows,
                         const std::vector<std::pair<std::string, double>>&
                             extra_columns = {});

std::vector<EvalPair> corpus_probing_pairs(const ToyCorpus& corpus);
std::vector<EvalPair> corpus_all_pairs(const ToyCorpus& corpus);

}  // namespace veil
