#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "veil/image.hpp"
#include "veil/model.hpp"
#include "veil/questions.hpp"

namespace veil {

struct OptimError : std::runtime_error {
    explicit OptimError(const std::string& what) : std::runtime_error(what) {}
};

// The optimized delta plus its budget and provenance. After every update
// max|delta| <= epsilon and base+delta stays inside [0,1].
struct Perturbation {
    size_t height = 0;
    size_t width = 0;
    size_t channels = 3;
    std::vector<double> delta;
    double epsilon = 8.0 / 255.0;
    uint64_t base_image_fingerprint = 0;
    std::vector<double> trace;  // per-iteration mini-batch loss

    double max_abs() const;
};

struct RefusalTarget {
    std::string text;
    TokenSequence ids;  // target token sequence t_1..t_r: text bytes + EOS
    int source_index = -1;
};

// The ten bundled refusal responses; sampling is uniform per image.
const std::vector<std::string>& refusal_bank();
RefusalTarget make_refusal_target(const std::string& text,
                                  int source_index = -1);
RefusalTarget sample_refusal(const std::vector<std::string>& bank,
                             uint64_t seed);

enum class Method { Bim, Pgd, EmptyShadow, TokenSequential };
const char* method_name(Method m);
Method parse_method(const std::string& s);

struct OptimConfig {
    Method method = Method::Bim;
    double alpha = 0.007;  // sign-step size, or raw learning rate for pgd
    int max_iter = 1500;
    int minibatch_size = 1;
    double epsilon = 8.0 / 255.0;
    double early_stop_threshold = 0.001;
    int early_stop_window = 30;
    uint64_t seed = 0;
    // asserts the budget and pixel-box constraints after every update
    bool check_invariants = false;
};

// Defaults per method and shadow kind: sign steps use alpha 0.007 for exact
// and 0.005 for similar/general; pgd uses 0.3/1500 and 0.4/2000.
OptimConfig default_optim_config(Method m, ShadowKind kind);

struct IterInfo {
    int iteration;  // 1-based
    const std::vector<size_t>& batch;
    double loss;
    const std::vector<double>& delta;
};
using IterCallback = std::function<void(const IterInfo&)>;

// Clamp into [-eps, eps] intersected with [-base, 1-base], elementwise.
void project_delta(std::vector<double>& delta, double epsilon,
                   const ImageTensor& base);

// Mini-batch signed-gradient descent on the average refusal cross-entropy
// over models and sampled shadow questions, projected every iteration.
// Similar/general shadow kinds early-stop once the loss stays below the
// threshold for a full window.
Perturbation optimize_bim(const std::vector<const ModelBundle*>& models,
                          const ImageTensor& image,
                          const RefusalTarget& refusal,
                          const ShadowQuestionSet& shadow,
                          const OptimConfig& config,
                          const IterCallback& cb = {});

// Same loop with raw-gradient steps.
Perturbation optimize_pgd(const std::vector<const ModelBundle*>& models,
                          const ImageTensor& image,
                          const RefusalTarget& refusal,
                          const ShadowQuestionSet& shadow,
                          const OptimConfig& config,
                          const IterCallback& cb = {});

// Baseline: no shadow questions; the prompt carries image tokens and the
// target only.
Perturbation optimize_empty_shadow(const std::vector<const ModelBundle*>& models,
                                   const ImageTensor& image,
                                   const RefusalTarget& refusal,
                                   const OptimConfig& config,
                                   const IterCallback& cb = {});

// Baseline: r sequential phases, phase k minimizing the cross-entropy of
// token t_k under the teacher-forced prefix; max_iter/r iterations per phase
// with the remainder on the last phase.
Perturbation optimize_token_sequential(
    const std::vector<const ModelBundle*>& models, const ImageTensor& image,
    const RefusalTarget& refusal, const ShadowQuestionSet& shadow,
    const OptimConfig& config, const IterCallback& cb = {});

// Average sequence cross-entropy over models x questions at base+delta.
// Matches the in-loop objective, so traces can be re-checked independently.
double refusal_cross_entropy(const std::vector<const ModelBundle*>& models,
                             const ImageTensor& image,
                             const std::vector<double>& delta,
                             const RefusalTarget& refusal,
                             const std::vector<std::string>& questions);

void save_perturbation(const Perturbation& p, const std::string& path);
Perturbation load_perturbation(const std::string& path);

}  // namespace veil
