#include "veil/protect.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "veil/rng.hpp"

namespace veil {

double Perturbation::max_abs() const {
    double m = 0.0;
    for (double d : delta) m = std::max(m, std::abs(d));
    return m;
}

const std::vector<std::string>& refusal_bank() {
    static const std::vector<std::string> bank = {
        "I'm sorry, I can't assist with that request.",
        "Sorry, I can't assist with that request.",
        "I'm sorry, I cannot assist with this request.",
        "Sorry, I can't assist with this request.",
        "I'm sorry, but I can't assist with that request.",
        "I'm sorry, but I cannot assist with that request.",
        "Sorry, I cannot assist with that request.",
        "I'm sorry, but I cannot assist with that request.",
        "Unfortunately, I can't assist with that request.",
        "Sorry, I can't provide that information.",
    };
    return bank;
}

RefusalTarget make_refusal_target(const std::string& text, int source_index) {
    if (text.empty()) throw OptimError("refusal text must be non-empty");
    RefusalTarget t;
    t.text = text;
    t.ids.text = text;
    for (unsigned char c : text) t.ids.ids.push_back(static_cast<int>(c));
    t.ids.ids.push_back(kTokEos);
    t.source_index = source_index;
    return t;
}

RefusalTarget sample_refusal(const std::vector<std::string>& bank,
                             uint64_t seed) {
    if (bank.empty()) throw OptimError("refusal bank must be non-empty");
    Rng rng(mix_seed(seed, fnv1a(std::string("refusal"))));
    const auto idx = static_cast<int>(rng.below(bank.size()));
    return make_refusal_target(bank[static_cast<size_t>(idx)], idx);
}

const char* method_name(Method m) {
    switch (m) {
        case Method::Bim: return "bim";
        case Method::Pgd: return "pgd";
        case Method::EmptyShadow: return "empty_shadow";
        case Method::TokenSequential: return "token_sequential";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "bim") return Method::Bim;
    if (s == "pgd") return Method::Pgd;
    if (s == "empty" || s == "empty_shadow") return Method::EmptyShadow;
    if (s == "seq" || s == "token_sequential") return Method::TokenSequential;
    throw OptimError("unknown optimization method: " + s);
}

OptimConfig default_optim_config(Method m, ShadowKind kind) {
    OptimConfig c;
    c.method = m;
    const bool exactish = kind == ShadowKind::Exact;
    if (m == Method::Pgd) {
        c.alpha = exactish ? 0.3 : 0.4;
        c.max_iter = exactish ? 1500 : 2000;
    } else {
        c.alpha = exactish ? 0.007 : 0.005;
        c.max_iter = 1500;
    }
    c.minibatch_size = exactish ? 1 : 3;
    return c;
}

void project_delta(std::vector<double>& delta, double epsilon,
                   const ImageTensor& base) {
    if (delta.size() != base.pixels.size())
        throw OptimError("delta shape does not match image");
    for (size_t i = 0; i < delta.size(); ++i) {
        double d = std::clamp(delta[i], -epsilon, epsilon);
        const double px = base.pixels[i];
        d = std::clamp(d, -px, 1.0 - px);
        delta[i] = d;
    }
}

namespace {

void validate_setup(const std::vector<const ModelBundle*>& models,
                    const ImageTensor& image, const RefusalTarget& refusal,
                    const OptimConfig& config, size_t n_questions) {
    if (models.empty()) throw OptimError("need at least one target model");
    const int res = models[0]->config.image_size;
    for (const auto* m : models)
        if (m->config.image_size != res)
            throw OptimError(
                "all target models must share image_size; got " +
                std::to_string(res) + " and " +
                std::to_string(m->config.image_size));
    if (image.height != static_cast<size_t>(res) ||
        image.width != static_cast<size_t>(res))
        throw OptimError("image resolution does not match target models");
    if (refusal.ids.ids.empty()) throw OptimError("empty refusal target");
    if (config.alpha <= 0.0) throw OptimError("alpha must be positive");
    if (config.max_iter < 1) throw OptimError("max_iter must be >= 1");
    if (config.epsilon < 0.0 || config.epsilon > 1.0)
        throw OptimError("epsilon must lie in [0,1]");
    if (n_questions == 0) throw OptimError("shadow question set is empty");
    if (config.minibatch_size < 1 ||
        static_cast<size_t>(config.minibatch_size) > n_questions)
        throw OptimError("minibatch_size " +
                         std::to_string(config.minibatch_size) +
                         " must lie in [1," + std::to_string(n_questions) + "]");
}

struct LoopState {
    std::vector<double> delta;
    std::vector<double> trace;
    Rng batch_rng;
    int consecutive_below = 0;

    explicit LoopState(size_t n, uint64_t seed)
        : delta(n, 0.0), batch_rng(mix_seed(seed, fnv1a(std::string("batch")))) {}
};

void check_invariants_now(const std::vector<double>& delta,
                          const ImageTensor& base, double eps, int iter) {
    for (size_t i = 0; i < delta.size(); ++i) {
        if (std::abs(delta[i]) > eps)
            throw OptimError("constraint violated at iteration " +
                             std::to_string(iter) + ": |delta| " +
                             std::to_string(std::abs(delta[i])) + " > eps");
        const double v = base.pixels[i] + delta[i];
        if (v < 0.0 || v > 1.0)
            throw OptimError("constraint violated at iteration " +
                             std::to_string(iter) + ": pixel " +
                             std::to_string(v) + " outside [0,1]");
    }
}

// Runs `iters` iterations of the shared projected-descent loop. only_token
// restricts the objective to a single target token (token-sequential
// phases); -1 means the full sequence. Returns true if early-stopped.
bool run_iterations(LoopState& st, const std::vector<const ModelBundle*>& models,
                    const ImageTensor& image,
                    const std::vector<std::string>& questions,
                    const std::vector<int>& target_ids, int only_token,
                    const OptimConfig& config, bool sign_step, bool early_stop,
                    int iters, int iter_offset, const IterCallback& cb) {
    const size_t npix = image.pixels.size();
    std::vector<double> pixels(npix);
    std::vector<double> grad(npix);

    for (int it = 1; it <= iters; ++it) {
        const int iteration = iter_offset + it;
        const auto batch = st.batch_rng.sample_indices(
            questions.size(),
            static_cast<size_t>(config.minibatch_size));

        for (size_t i = 0; i < npix; ++i) pixels[i] = image.pixels[i] + st.delta[i];
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        const double inv =
            1.0 / (static_cast<double>(models.size()) *
                   static_cast<double>(batch.size()));
        try {
            for (const auto* m : models)
                for (size_t qi : batch) {
                    auto res = sequence_cross_entropy(*m, pixels, questions[qi],
                                                      target_ids, true,
                                                      only_token);
                    loss += res.loss;
                    for (size_t i = 0; i < npix; ++i)
                        grad[i] += res.pixel_grad[i];
                }
        } catch (const TensorError& e) {
            throw OptimError("aborted at iteration " + std::to_string(iteration) +
                             ": " + e.what());
        }
        loss *= inv;
        for (size_t i = 0; i < npix; ++i) grad[i] *= inv;
        if (!std::isfinite(loss))
            throw OptimError("aborted at iteration " + std::to_string(iteration) +
                             ": non-finite loss");

        if (sign_step) {
            for (size_t i = 0; i < npix; ++i)
                st.delta[i] -= config.alpha * sign0(grad[i]);
        } else {
            for (size_t i = 0; i < npix; ++i)
                st.delta[i] -= config.alpha * grad[i];
        }
        project_delta(st.delta, config.epsilon, image);
        st.trace.push_back(loss);
        if (config.check_invariants)
            check_invariants_now(st.delta, image, config.epsilon, iteration);
        if (cb) cb(IterInfo{iteration, batch, loss, st.delta});

        if (early_stop) {
            if (loss < config.early_stop_threshold) {
                if (++st.consecutive_below >= config.early_stop_window)
                    return true;
            } else {
                st.consecutive_below = 0;
            }
        }
    }
    return false;
}

Perturbation finish(LoopState&& st, const ImageTensor& image, double eps) {
    Perturbation p;
    p.height = image.height;
    p.width = image.width;
    p.channels = image.channels;
    p.delta = std::move(st.delta);
    p.epsilon = eps;
    p.base_image_fingerprint = image.fingerprint();
    p.trace = std::move(st.trace);
    return p;
}

Perturbation run_flat(const std::vector<const ModelBundle*>& models,
                      const ImageTensor& image, const RefusalTarget& refusal,
                      const std::vector<std::string>& questions,
                      ShadowKind kind, const OptimConfig& config,
                      bool sign_step, const IterCallback& cb) {
    validate_setup(models, image, refusal, config, questions.size());
    const bool early_stop =
        kind == ShadowKind::Similar || kind == ShadowKind::General;
    LoopState st(image.pixels.size(), config.seed);
    run_iterations(st, models, image, questions, refusal.ids.ids, -1, config,
                   sign_step, early_stop, config.max_iter, 0, cb);
    return finish(std::move(st), image, config.epsilon);
}

}  // namespace

Perturbation optimize_bim(const std::vector<const ModelBundle*>& models,
                          const ImageTensor& image,
                          const RefusalTarget& refusal,
                          const ShadowQuestionSet& shadow,
                          const OptimConfig& config, const IterCallback& cb) {
    return run_flat(models, image, refusal, shadow.questions, shadow.kind,
                    config, true, cb);
}

Perturbation optimize_pgd(const std::vector<const ModelBundle*>& models,
                          const ImageTensor& image,
                          const RefusalTarget& refusal,
                          const ShadowQuestionSet& shadow,
                          const OptimConfig& config, const IterCallback& cb) {
    return run_flat(models, image, refusal, shadow.questions, shadow.kind,
                    config, false, cb);
}

Perturbation optimize_empty_shadow(const std::vector<const ModelBundle*>& models,
                                   const ImageTensor& image,
                                   const RefusalTarget& refusal,
                                   const OptimConfig& config,
                                   const IterCallback& cb) {
    // single empty question slot: prompt reduces to image tokens + target
    const std::vector<std::string> empty_slot = {""};
    OptimConfig c = config;
    c.minibatch_size = 1;
    validate_setup(models, image, refusal, c, 1);
    LoopState st(image.pixels.size(), c.seed);
    run_iterations(st, models, image, empty_slot, refusal.ids.ids, -1, c, true,
                   false, c.max_iter, 0, cb);
    return finish(std::move(st), image, c.epsilon);
}

Perturbation optimize_token_sequential(
    const std::vector<const ModelBundle*>& models, const ImageTensor& image,
    const RefusalTarget& refusal, const ShadowQuestionSet& shadow,
    const OptimConfig& config, const IterCallback& cb) {
    validate_setup(models, image, refusal, config, shadow.questions.size());
    const int r = static_cast<int>(refusal.ids.ids.size());
    const int per_phase = config.max_iter / r;
    LoopState st(image.pixels.size(), config.seed);
    int offset = 0;
    for (int k = 0; k < r; ++k) {
        int budget = per_phase;
        if (k == r - 1) budget = config.max_iter - per_phase * (r - 1);
        if (budget <= 0) continue;
        run_iterations(st, models, image, shadow.questions, refusal.ids.ids, k,
                       config, true, false, budget, offset, cb);
        offset += budget;
    }
    return finish(std::move(st), image, config.epsilon);
}

double refusal_cross_entropy(const std::vector<const ModelBundle*>& models,
                             const ImageTensor& image,
                             const std::vector<double>& delta,
                             const RefusalTarget& refusal,
                             const std::vector<std::string>& questions) {
    if (models.empty() || questions.empty())
        throw OptimError("need at least one model and one question");
    std::vector<double> pixels(image.pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = image.pixels[i] + delta[i];
    double loss = 0.0;
    for (const auto* m : models)
        for (const auto& q : questions)
            loss += sequence_cross_entropy(*m, pixels, q, refusal.ids.ids, false)
                        .loss;
    return loss / (static_cast<double>(models.size()) *
                   static_cast<double>(questions.size()));
}

namespace {

constexpr char kPertMagic[8] = {'V', 'E', 'I', 'L', 'P', 'R', 'T', '\0'};
constexpr uint32_t kPertVersion = 1;

template <typename T>
void put(std::vector<uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<uint8_t>& in, size_t& pos) {
    if (pos + sizeof(T) > in.size())
        throw OptimError("perturbation file truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

void save_perturbation(const Perturbation& p, const std::string& path) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kPertMagic, kPertMagic + 8);
    put(out, kPertVersion);
    put(out, p.epsilon);
    put(out, static_cast<uint32_t>(p.height));
    put(out, static_cast<uint32_t>(p.width));
    put(out, static_cast<uint32_t>(p.channels));
    put(out, p.base_image_fingerprint);
    for (double d : p.delta) put(out, static_cast<float>(d));
    write_file_atomic(path, out.data(), out.size());
}

Perturbation load_perturbation(const std::string& path) {
    const auto in = read_file(path);
    if (in.size() < 8 || std::memcmp(in.data(), kPertMagic, 8) != 0)
        throw OptimError(path + ": not a perturbation file (bad magic)");
    size_t pos = 8;
    const auto version = take<uint32_t>(in, pos);
    if (version != kPertVersion)
        throw OptimError(path + ": unsupported perturbation file version " +
                         std::to_string(version));
    Perturbation p;
    p.epsilon = take<double>(in, pos);
    p.height = take<uint32_t>(in, pos);
    p.width = take<uint32_t>(in, pos);
    p.channels = take<uint32_t>(in, pos);
    p.base_image_fingerprint = take<uint64_t>(in, pos);
    const size_t n = p.height * p.width * p.channels;
    p.delta.resize(n);
    for (size_t i = 0; i < n; ++i) {
        // float storage can round a value just past the budget
        p.delta[i] = std::clamp(static_cast<double>(take<float>(in, pos)),
                                -p.epsilon, p.epsilon);
    }
    return p;
}

}  // namespace veil
