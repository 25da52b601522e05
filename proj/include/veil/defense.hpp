#pragma once

#include <cstdint>
#include <vector>

#include "veil/eval.hpp"
#include "veil/image.hpp"
#include "veil/model.hpp"

namespace veil {

// Per-pixel seeded N(0, sigma) noise, clamped back into [0,1].
ImageTensor add_gaussian_noise(const ImageTensor& image, double sigma,
                               uint64_t seed);

// Input-purification stand-in: `passes` rounds of a 3x3 Gaussian blur
// (kernel [1,2,1] x [1,2,1] / 16, edge-replicate padding). This is a
// structural proxy for diffusion-based purification; it exercises the same
// interface and tradeoff shape, not the same mechanism.
ImageTensor purify_blur(const ImageTensor& image, int passes);

struct AdvTrainConfig {
    int epochs = 3;
    double lr = 0.02;  // SGD step used by train_step
    uint64_t split_seed = 0;
};

struct AdvTrainReport {
    // index 0 is the pre-training baseline, index e the state after epoch e
    std::vector<double> heldout_refusal_rate;
    std::vector<double> clean_accuracy;
};

// Splits the protected pairs 50/50 by split_seed, fine-tunes on the training
// half (protected image, question -> correct answer), and tracks the refusal
// rate on the held-out protected half plus accuracy on the clean corpus.
AdvTrainReport adversarial_train(ModelBundle& model,
                                 const std::vector<EvalPair>& protected_pairs,
                                 const std::vector<EvalPair>& clean_pairs,
                                 const AdvTrainConfig& config);

}  // namespace veil
