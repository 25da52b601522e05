#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "veil/image.hpp"
#include "veil/tensor.hpp"

namespace veil {

struct ModelError : std::runtime_error {
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

constexpr int kTokBos = 256;
constexpr int kTokEos = 257;
constexpr int kTokPad = 258;
constexpr int kVocabSize = 259;
// Byte separating a question from its answer in the canonical prompt.
constexpr int kTokSep = '\n';

struct ModelConfig {
    int image_size = 32;
    int patch_size = 8;
    int channels = 3;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int vocab_size = kVocabSize;
    int max_seq_len = 160;
    uint64_t seed = 0;

    int n_patches() const {
        const int g = image_size / patch_size;
        return g * g;
    }
    int patch_dim() const { return patch_size * patch_size * channels; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct TokenSequence {
    std::vector<int> ids;
    std::string text;
};

TokenSequence tokenize(const std::string& text);
std::string detokenize(const std::vector<int>& ids);

// Byte tokenizer, patch vision encoder, linear projector, and a small causal
// LM over the combined sequence. Weights live in a name-keyed map whose
// iteration order fixes both the fingerprint and the init draw order.
struct ModelBundle {
    ModelConfig config;
    std::map<std::string, TensorPtr> weights;

    uint64_t fingerprint() const;
    size_t parameter_count() const;
    TensorPtr weight(const std::string& name) const;
    void set_weights_requires_grad(bool rg);
    void zero_weight_grads();
};

// Canonical prompt layout: image patch tokens first, then
// [BOS] question-bytes [SEP], then the target bytes ending in [EOS].
struct PromptIds {
    std::vector<int> text_ids;     // BOS + question bytes + SEP (+ history)
    std::vector<int> target_ids;   // target bytes + EOS
};
PromptIds build_prompt(const std::string& question, const std::string& target);

struct SequenceLogprob {
    double total = 0.0;              // sum over target tokens of log T_k
    std::vector<double> per_token;   // log T_k, length r
};

// Fresh randomly initialized weights (Gaussian std 0.02 for matrices and
// embeddings, zero biases, identity layer-norm affine). Not yet trained.
ModelBundle init_model_raw(const ModelConfig& config);

// Raw init followed by the bundled pre-training recipe so the model answers
// the toy corpus above chance. Same seed, bit-identical fingerprint.
struct PretrainRecipe {
    int steps = 5000;
    int batch_size = 16;
    double lr = 3e-4;        // Adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
};
ModelBundle init_model(const ModelConfig& config,
                       const PretrainRecipe& recipe = {});

// Teacher-forced log-probability of the target sequence given the image and
// question; total equals the sum of the per-token factors.
SequenceLogprob sequence_logprob(const ModelBundle& model,
                                 const ImageTensor& image,
                                 const std::string& question,
                                 const std::string& target);

// Gradient of the sequence cross-entropy (negative total log-prob) with
// respect to the image pixels, shaped like the image.
std::vector<double> input_gradient(const ModelBundle& model,
                                   const ImageTensor& image,
                                   const std::string& question,
                                   const std::string& target);

// Internal building block shared by the optimizers: cross-entropy summed
// over target tokens (optionally a single token index), plus d/d(pixels).
struct CrossEntropyResult {
    double loss = 0.0;
    std::vector<double> loss_per_token;
    std::vector<double> pixel_grad;  // empty unless want_grad
};
CrossEntropyResult sequence_cross_entropy(const ModelBundle& model,
                                          const std::vector<double>& pixels,
                                          const std::string& question,
                                          const std::vector<int>& target_ids,
                                          bool want_grad,
                                          int only_token = -1);

struct GenerateOptions {
    double temperature = 0.0;  // 0 = greedy argmax
    int max_tokens = 64;
    uint64_t seed = 0;
};
std::string generate(const ModelBundle& model, const ImageTensor& image,
                     const std::string& question, const GenerateOptions& opts);
// History-aware variant for multi-round probing: prior (question, response)
// rounds are prepended to the prompt in order.
std::string generate_with_history(
    const ModelBundle& model, const ImageTensor& image,
    const std::vector<std::pair<std::string, std::string>>& history,
    const std::string& question, const GenerateOptions& opts,
    bool* truncated = nullptr);

struct TrainExample {
    ImageTensor image;
    std::string question;
    std::string answer;
};

// One plain SGD step on the mean per-token cross-entropy of the batch.
// Returns the pre-step loss.
double train_step(ModelBundle& model, const std::vector<TrainExample>& batch,
                  double lr);

// Adam used by the pre-training recipe; state is keyed by weight name.
struct AdamState {
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
    long t = 0;
};
double adam_train_step(ModelBundle& model,
                       const std::vector<TrainExample>& batch, AdamState& state,
                       const PretrainRecipe& recipe);

void save_model(const ModelBundle& model, const std::string& path);
ModelBundle load_model(const std::string& path);

}  // namespace veil
