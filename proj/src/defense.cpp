#include "veil/defense.hpp"

#include <algorithm>
#include <cmath>

#include "veil/rng.hpp"

namespace veil {

ImageTensor add_gaussian_noise(const ImageTensor& image, double sigma,
                               uint64_t seed) {
    if (sigma < 0.0) throw EvalError("sigma must be non-negative");
    validate_image(image);
    ImageTensor out = image;
    if (sigma == 0.0) return out;
    Rng rng(mix_seed(seed, fnv1a(std::string("gaussian-noise"))));
    for (double& v : out.pixels)
        v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
    return out;
}

ImageTensor purify_blur(const ImageTensor& image, int passes) {
    if (passes < 0) throw EvalError("blur passes must be non-negative");
    validate_image(image);
    ImageTensor cur = image;
    const int h = static_cast<int>(image.height);
    const int w = static_cast<int>(image.width);
    ImageTensor tmp = image;
    for (int p = 0; p < passes; ++p) {
        // horizontal [1,2,1]/4 with replicated edges
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (size_t c = 0; c < 3; ++c) {
                    const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
                    tmp.at(y, x, c) = (cur.at(y, xl, c) + 2.0 * cur.at(y, x, c) +
                                       cur.at(y, xr, c)) /
                                      4.0;
                }
        // vertical
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (size_t c = 0; c < 3; ++c) {
                    const int yu = std::max(0, y - 1), yd = std::min(h - 1, y + 1);
                    cur.at(y, x, c) = (tmp.at(yu, x, c) + 2.0 * tmp.at(y, x, c) +
                                       tmp.at(yd, x, c)) /
                                      4.0;
                }
    }
    return cur;
}

AdvTrainReport adversarial_train(ModelBundle& model,
                                 const std::vector<EvalPair>& protected_pairs,
                                 const std::vector<EvalPair>& clean_pairs,
                                 const AdvTrainConfig& config) {
    if (protected_pairs.size() < 2)
        throw EvalError("adversarial training needs at least 2 protected pairs");
    if (config.epochs < 1) throw EvalError("epochs must be >= 1");
    for (const auto& p : protected_pairs)
        if (!p.answer)
            throw EvalError("protected pair '" + p.question +
                            "' is missing its correct answer");

    std::vector<size_t> order(protected_pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng split_rng(mix_seed(config.split_seed, fnv1a(std::string("adv-split"))));
    split_rng.shuffle(order);
    const size_t n_train = order.size() / 2;

    std::vector<TrainExample> train;
    std::vector<EvalPair> heldout;
    for (size_t i = 0; i < order.size(); ++i) {
        const auto& p = protected_pairs[order[i]];
        if (i < n_train)
            train.push_back({p.image, p.question, *p.answer});
        else
            heldout.push_back(p);
    }

    EvalOptions eval_opts;
    eval_opts.queries_per_pair = 1;
    eval_opts.temperature = 0.0;
    eval_opts.seed = config.split_seed;

    AdvTrainReport rep;
    auto measure = [&] {
        rep.heldout_refusal_rate.push_back(
            refusal_rate_eval(model, heldout, eval_opts).refusal_rate);
        rep.clean_accuracy.push_back(accuracy_eval(model, clean_pairs));
    };
    measure();  // epoch 0 baseline

    Rng epoch_rng(mix_seed(config.split_seed, fnv1a(std::string("adv-epochs"))));
    for (int e = 0; e < config.epochs; ++e) {
        std::vector<size_t> idx(train.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        epoch_rng.shuffle(idx);
        for (size_t i : idx) train_step(model, {train[i]}, config.lr);
        measure();
    }
    return rep;
}

}  // namespace veil
