#include "veil/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "veil/corpus.hpp"
#include "veil/rng.hpp"

namespace veil {

void ModelConfig::validate() const {
    if (image_size <= 0 || patch_size <= 0 || channels != 3 || d_model <= 0 ||
        n_layers <= 0 || n_heads <= 0 || max_seq_len <= 0)
        throw ModelError("invalid model config: non-positive dimension");
    if (image_size % patch_size != 0)
        throw ModelError("invalid model config: image_size " +
                         std::to_string(image_size) +
                         " not divisible by patch_size " +
                         std::to_string(patch_size));
    if (d_model % n_heads != 0)
        throw ModelError("invalid model config: d_model " +
                         std::to_string(d_model) + " not divisible by n_heads " +
                         std::to_string(n_heads));
    if (vocab_size != kVocabSize)
        throw ModelError("invalid model config: vocab_size must be " +
                         std::to_string(kVocabSize));
    if (n_patches() + 8 > max_seq_len)
        throw ModelError("invalid model config: max_seq_len too small for " +
                         std::to_string(n_patches()) + " image tokens");
}

TokenSequence tokenize(const std::string& text) {
    TokenSequence seq;
    seq.text = text;
    seq.ids.reserve(text.size() + 2);
    seq.ids.push_back(kTokBos);
    for (unsigned char c : text) seq.ids.push_back(static_cast<int>(c));
    seq.ids.push_back(kTokEos);
    return seq;
}

std::string detokenize(const std::vector<int>& ids) {
    std::string out;
    for (int id : ids)
        if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
    return out;
}

PromptIds build_prompt(const std::string& question, const std::string& target) {
    PromptIds p;
    p.text_ids.push_back(kTokBos);
    for (unsigned char c : question) p.text_ids.push_back(static_cast<int>(c));
    p.text_ids.push_back(kTokSep);
    for (unsigned char c : target) p.target_ids.push_back(static_cast<int>(c));
    p.target_ids.push_back(kTokEos);
    return p;
}

uint64_t ModelBundle::fingerprint() const {
    uint64_t h = fnv1a(&config.image_size, sizeof(int));
    h = fnv1a(&config.patch_size, sizeof(int), h);
    h = fnv1a(&config.channels, sizeof(int), h);
    h = fnv1a(&config.d_model, sizeof(int), h);
    h = fnv1a(&config.n_layers, sizeof(int), h);
    h = fnv1a(&config.n_heads, sizeof(int), h);
    h = fnv1a(&config.vocab_size, sizeof(int), h);
    h = fnv1a(&config.max_seq_len, sizeof(int), h);
    h = fnv1a(&config.seed, sizeof(uint64_t), h);
    for (const auto& [name, t] : weights) {
        h = fnv1a(name, h);
        h = fnv1a(t->shape.data(), t->shape.size() * sizeof(size_t), h);
        h = fnv1a(t->value.data(), t->value.size() * sizeof(double), h);
    }
    return h;
}

size_t ModelBundle::parameter_count() const {
    size_t n = 0;
    for (const auto& [name, t] : weights) n += t->value.size();
    return n;
}

TensorPtr ModelBundle::weight(const std::string& name) const {
    auto it = weights.find(name);
    if (it == weights.end()) throw ModelError("missing weight: " + name);
    return it->second;
}

void ModelBundle::set_weights_requires_grad(bool rg) {
    for (auto& [name, t] : weights) t->requires_grad = rg;
}

void ModelBundle::zero_weight_grads() {
    for (auto& [name, t] : weights) t->zero_grad();
}

namespace {

enum class Init { Gauss, Zero, One };

struct WeightSpec {
    std::string name;
    std::vector<size_t> shape;
    Init init;
};

std::vector<WeightSpec> weight_specs(const ModelConfig& c) {
    const auto d = static_cast<size_t>(c.d_model);
    const auto pd = static_cast<size_t>(c.patch_dim());
    const auto np = static_cast<size_t>(c.n_patches());
    const auto v = static_cast<size_t>(c.vocab_size);
    const auto ms = static_cast<size_t>(c.max_seq_len);
    std::vector<WeightSpec> specs = {
        {"vision.patch.W", {pd, d}, Init::Gauss},
        {"vision.patch.b", {d}, Init::Zero},
        {"vision.pos", {np, d}, Init::Gauss},
        {"vision.ln.g", {d}, Init::One},
        {"vision.ln.b", {d}, Init::Zero},
        {"proj.W", {d, d}, Init::Gauss},
        {"proj.b", {d}, Init::Zero},
        {"lm.tok", {v, d}, Init::Gauss},
        {"lm.pos", {ms, d}, Init::Gauss},
    };
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = "lm.l" + std::to_string(l) + ".";
        specs.push_back({p + "ln1.g", {d}, Init::One});
        specs.push_back({p + "ln1.b", {d}, Init::Zero});
        for (const char* w : {"Wq", "Wk", "Wv", "Wo"})
            specs.push_back({p + "attn." + w, {d, d}, Init::Gauss});
        for (const char* b : {"bq", "bk", "bv", "bo"})
            specs.push_back({p + "attn." + b, {d}, Init::Zero});
        specs.push_back({p + "ln2.g", {d}, Init::One});
        specs.push_back({p + "ln2.b", {d}, Init::Zero});
        specs.push_back({p + "mlp.W1", {d, 4 * d}, Init::Gauss});
        specs.push_back({p + "mlp.b1", {4 * d}, Init::Zero});
        specs.push_back({p + "mlp.W2", {4 * d, d}, Init::Gauss});
        specs.push_back({p + "mlp.b2", {d}, Init::Zero});
    }
    specs.push_back({"lm.lnf.g", {d}, Init::One});
    specs.push_back({"lm.lnf.b", {d}, Init::Zero});
    specs.push_back({"lm.head.W", {d, v}, Init::Gauss});
    specs.push_back({"lm.head.b", {v}, Init::Zero});
    return specs;
}

// Builds the logits for sequence positions [pos_begin, pos_end) given the
// flat image pixels (leaf tensor, [H, W*C]) and the text token ids.
TensorPtr forward_range(Tape& tape, const ModelBundle& m,
                        const TensorPtr& img2d, const std::vector<int>& text_ids,
                        size_t pos_begin, size_t pos_end) {
    const auto& c = m.config;
    const size_t ps = static_cast<size_t>(c.patch_size);
    const size_t grid = static_cast<size_t>(c.image_size) / ps;
    const size_t np = grid * grid;
    const size_t pd = static_cast<size_t>(c.patch_dim());
    const size_t d = static_cast<size_t>(c.d_model);
    const size_t seq = np + text_ids.size();
    if (seq > static_cast<size_t>(c.max_seq_len))
        throw ModelError("prompt too long: requires " + std::to_string(seq) +
                         " tokens, max_seq_len is " +
                         std::to_string(c.max_seq_len));

    // patchify through slices so pixel gradients flow back unpermuted
    std::vector<TensorPtr> patches;
    patches.reserve(np);
    for (size_t py = 0; py < grid; ++py)
        for (size_t px = 0; px < grid; ++px) {
            auto rows = tape.slice_rows(img2d, py * ps, (py + 1) * ps);
            auto cols = tape.slice_cols(rows, px * ps * 3, (px + 1) * ps * 3);
            patches.push_back(tape.reshape(cols, {1, pd}));
        }
    auto patch_mat = tape.concat_rows(patches);

    auto venc = tape.add(tape.matmul(patch_mat, m.weight("vision.patch.W")),
                         m.weight("vision.patch.b"));
    venc = tape.add(venc, m.weight("vision.pos"));
    venc = tape.layer_norm(venc, m.weight("vision.ln.g"), m.weight("vision.ln.b"));
    auto proj = tape.add(tape.matmul(venc, m.weight("proj.W")), m.weight("proj.b"));

    auto tok = tape.gather_rows(m.weight("lm.tok"), text_ids);
    auto x = tape.concat_rows({proj, tok});
    x = tape.add(x, tape.slice_rows(m.weight("lm.pos"), 0, seq));

    // causal mask: 0 at or below diagonal, large negative above
    std::vector<double> maskv(seq * seq, 0.0);
    for (size_t i = 0; i < seq; ++i)
        for (size_t j = i + 1; j < seq; ++j) maskv[i * seq + j] = -1e9;
    auto mask = make_tensor({seq, seq}, std::move(maskv), false);

    const size_t dh = d / static_cast<size_t>(c.n_heads);
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int l = 0; l < c.n_layers; ++l) {
        const std::string p = "lm.l" + std::to_string(l) + ".";
        auto h = tape.layer_norm(x, m.weight(p + "ln1.g"), m.weight(p + "ln1.b"));
        auto q = tape.add(tape.matmul(h, m.weight(p + "attn.Wq")),
                          m.weight(p + "attn.bq"));
        auto k = tape.add(tape.matmul(h, m.weight(p + "attn.Wk")),
                          m.weight(p + "attn.bk"));
        auto v = tape.add(tape.matmul(h, m.weight(p + "attn.Wv")),
                          m.weight(p + "attn.bv"));
        TensorPtr attn_sum;
        for (int hd = 0; hd < c.n_heads; ++hd) {
            const size_t h0 = hd * dh, h1 = (hd + 1) * dh;
            auto qh = tape.slice_cols(q, h0, h1);
            auto kh = tape.slice_cols(k, h0, h1);
            auto vh = tape.slice_cols(v, h0, h1);
            auto scores = tape.scale(tape.matmul(qh, kh, true), att_scale);
            scores = tape.add(scores, mask);
            auto attn = tape.softmax(scores);
            auto ctx = tape.matmul(attn, vh);
            auto out =
                tape.matmul(ctx, tape.slice_rows(m.weight(p + "attn.Wo"), h0, h1));
            attn_sum = attn_sum ? tape.add(attn_sum, out) : out;
        }
        attn_sum = tape.add(attn_sum, m.weight(p + "attn.bo"));
        x = tape.add(x, attn_sum);
        auto h2 = tape.layer_norm(x, m.weight(p + "ln2.g"), m.weight(p + "ln2.b"));
        auto mid = tape.relu(
            tape.add(tape.matmul(h2, m.weight(p + "mlp.W1")), m.weight(p + "mlp.b1")));
        auto mlp =
            tape.add(tape.matmul(mid, m.weight(p + "mlp.W2")), m.weight(p + "mlp.b2"));
        x = tape.add(x, mlp);
    }
    x = tape.layer_norm(x, m.weight("lm.lnf.g"), m.weight("lm.lnf.b"));
    auto sel = tape.slice_rows(x, pos_begin, pos_end);
    return tape.add(tape.matmul(sel, m.weight("lm.head.W")),
                    m.weight("lm.head.b"));
}

TensorPtr image_leaf(const std::vector<double>& pixels, const ModelConfig& c,
                     bool requires_grad) {
    const auto h = static_cast<size_t>(c.image_size);
    const auto w3 = static_cast<size_t>(c.image_size) * 3;
    if (pixels.size() != h * w3)
        throw ModelError("image size does not match model config (" +
                         std::to_string(pixels.size()) + " pixels, expected " +
                         std::to_string(h * w3) + ")");
    return make_tensor({h, w3}, pixels, requires_grad);
}

void check_image(const ModelBundle& m, const ImageTensor& img) {
    if (img.height != static_cast<size_t>(m.config.image_size) ||
        img.width != static_cast<size_t>(m.config.image_size) ||
        img.channels != 3)
        throw ModelError("image " + std::to_string(img.height) + "x" +
                         std::to_string(img.width) +
                         " does not match model image_size " +
                         std::to_string(m.config.image_size));
}

}  // namespace

ModelBundle init_model_raw(const ModelConfig& config) {
    config.validate();
    ModelBundle m;
    m.config = config;
    Rng rng(mix_seed(config.seed, fnv1a(std::string("init"))));
    for (const auto& spec : weight_specs(config)) {
        std::vector<double> v(numel(spec.shape));
        switch (spec.init) {
            case Init::Gauss:
                for (double& x : v) x = 0.02 * rng.normal();
                break;
            case Init::Zero:
                break;
            case Init::One:
                std::fill(v.begin(), v.end(), 1.0);
                break;
        }
        m.weights.emplace(spec.name,
                          make_tensor(spec.shape, std::move(v), false));
    }
    return m;
}

SequenceLogprob sequence_logprob(const ModelBundle& model,
                                 const ImageTensor& image,
                                 const std::string& question,
                                 const std::string& target) {
    check_image(model, image);
    const auto prompt = build_prompt(question, target);
    auto res = sequence_cross_entropy(model, image.pixels, question,
                                      prompt.target_ids, false);
    SequenceLogprob out;
    out.per_token = std::move(res.loss_per_token);
    for (double& v : out.per_token) v = -v;
    double total = 0.0;
    for (double v : out.per_token) total += v;
    out.total = total;
    return out;
}

std::vector<double> input_gradient(const ModelBundle& model,
                                   const ImageTensor& image,
                                   const std::string& question,
                                   const std::string& target) {
    check_image(model, image);
    const auto prompt = build_prompt(question, target);
    auto res = sequence_cross_entropy(model, image.pixels, question,
                                      prompt.target_ids, true);
    return std::move(res.pixel_grad);
}

CrossEntropyResult sequence_cross_entropy(const ModelBundle& model,
                                          const std::vector<double>& pixels,
                                          const std::string& question,
                                          const std::vector<int>& target_ids,
                                          bool want_grad, int only_token) {
    if (target_ids.empty()) throw ModelError("empty target sequence");
    PromptIds prompt = build_prompt(question, "");
    // prompt.target_ids is just [EOS] here; the real targets come in as ids
    std::vector<int> text = prompt.text_ids;
    const size_t r = target_ids.size();
    text.insert(text.end(), target_ids.begin(), target_ids.end() - 1);
    const size_t np = static_cast<size_t>(model.config.n_patches());
    const size_t first = np + prompt.text_ids.size() - 1;

    Tape tape;
    auto img = image_leaf(pixels, model.config, want_grad);

    size_t pos_begin = first, pos_end = first + r;
    std::vector<int> targets = target_ids;
    if (only_token >= 0) {
        if (static_cast<size_t>(only_token) >= r)
            throw ModelError("token index out of range");
        pos_begin = first + static_cast<size_t>(only_token);
        pos_end = pos_begin + 1;
        targets = {target_ids[static_cast<size_t>(only_token)]};
    }
    auto logits = forward_range(tape, model, img, text, pos_begin, pos_end);
    auto ce = tape.cross_entropy(logits, targets);

    CrossEntropyResult res;
    res.loss_per_token = ce->value;
    for (double v : ce->value) res.loss += v;
    if (want_grad) {
        auto total = tape.scale(tape.mean(ce), static_cast<double>(ce->value.size()));
        tape.backward(total);
        res.pixel_grad = img->has_grad()
                             ? img->grad
                             : std::vector<double>(pixels.size(), 0.0);
    }
    return res;
}

std::string generate(const ModelBundle& model, const ImageTensor& image,
                     const std::string& question, const GenerateOptions& opts) {
    return generate_with_history(model, image, {}, question, opts);
}

std::string generate_with_history(
    const ModelBundle& model, const ImageTensor& image,
    const std::vector<std::pair<std::string, std::string>>& history,
    const std::string& question, const GenerateOptions& opts, bool* truncated) {
    check_image(model, image);
    if (truncated) *truncated = false;
    const size_t np = static_cast<size_t>(model.config.n_patches());
    const size_t budget = static_cast<size_t>(model.config.max_seq_len);

    auto assemble = [&](size_t skip_rounds) {
        std::vector<int> text;
        text.push_back(kTokBos);
        for (size_t i = skip_rounds; i < history.size(); ++i) {
            for (unsigned char ch : history[i].first)
                text.push_back(static_cast<int>(ch));
            text.push_back(kTokSep);
            for (unsigned char ch : history[i].second)
                text.push_back(static_cast<int>(ch));
            text.push_back(kTokSep);
        }
        for (unsigned char ch : question) text.push_back(static_cast<int>(ch));
        text.push_back(kTokSep);
        return text;
    };

    // drop oldest rounds until prompt plus generation budget fits
    size_t skip = 0;
    std::vector<int> text = assemble(skip);
    const size_t gen_budget = static_cast<size_t>(opts.max_tokens);
    while (skip < history.size() &&
           np + text.size() + gen_budget > budget) {
        ++skip;
        text = assemble(skip);
        if (truncated) *truncated = true;
    }
    if (np + text.size() + 1 > budget)
        throw ModelError("prompt too long even without history: requires " +
                         std::to_string(np + text.size() + 1) +
                         " tokens, max_seq_len is " + std::to_string(budget));

    Rng rng(opts.seed);
    std::vector<int> out_ids;
    for (int step = 0; step < opts.max_tokens; ++step) {
        const size_t seq = np + text.size();
        if (seq + 1 > budget) break;
        Tape tape;
        auto img = image_leaf(image.pixels, model.config, false);
        auto logits = forward_range(tape, model, img, text, seq - 1, seq);
        const std::vector<double>& lg = logits->value;
        int next;
        if (opts.temperature <= 0.0) {
            next = 0;
            for (size_t i = 1; i < lg.size(); ++i)
                if (lg[i] > lg[next]) next = static_cast<int>(i);
        } else {
            double mx = lg[0];
            for (double v : lg) mx = std::max(mx, v);
            std::vector<double> p(lg.size());
            double z = 0.0;
            for (size_t i = 0; i < lg.size(); ++i) {
                p[i] = std::exp((lg[i] - mx) / opts.temperature);
                z += p[i];
            }
            const double u = rng.uniform() * z;
            double acc = 0.0;
            next = static_cast<int>(lg.size()) - 1;
            for (size_t i = 0; i < p.size(); ++i) {
                acc += p[i];
                if (u < acc) {
                    next = static_cast<int>(i);
                    break;
                }
            }
        }
        if (next == kTokEos) break;
        out_ids.push_back(next);
        text.push_back(next);
    }
    return detokenize(out_ids);
}

namespace {

// Accumulates d(mean per-token CE)/d(weights) over the batch into the weight
// grad buffers. Returns the batch loss.
double accumulate_batch_grads(ModelBundle& model,
                              const std::vector<TrainExample>& batch) {
    if (batch.empty()) throw ModelError("empty training batch");
    size_t total_tokens = 0;
    std::vector<std::vector<int>> targets;
    targets.reserve(batch.size());
    for (const auto& ex : batch) {
        check_image(model, ex.image);
        auto prompt = build_prompt(ex.question, ex.answer);
        targets.push_back(prompt.target_ids);
        total_tokens += prompt.target_ids.size();
    }
    double loss_sum = 0.0;
    for (size_t b = 0; b < batch.size(); ++b) {
        const auto& ex = batch[b];
        PromptIds prompt = build_prompt(ex.question, "");
        std::vector<int> text = prompt.text_ids;
        text.insert(text.end(), targets[b].begin(), targets[b].end() - 1);
        const size_t np = static_cast<size_t>(model.config.n_patches());
        const size_t first = np + prompt.text_ids.size() - 1;
        Tape tape;
        auto img = image_leaf(ex.image.pixels, model.config, false);
        auto logits = forward_range(tape, model, img, text, first,
                                    first + targets[b].size());
        auto ce = tape.cross_entropy(logits, targets[b]);
        for (double v : ce->value) loss_sum += v;
        auto scaled = tape.scale(
            tape.mean(ce), static_cast<double>(targets[b].size()) /
                               static_cast<double>(total_tokens));
        tape.backward(scaled);
    }
    return loss_sum / static_cast<double>(total_tokens);
}

}  // namespace

double train_step(ModelBundle& model, const std::vector<TrainExample>& batch,
                  double lr) {
    if (lr < 0.0) throw ModelError("learning rate must be non-negative");
    model.set_weights_requires_grad(true);
    model.zero_weight_grads();
    double loss;
    try {
        loss = accumulate_batch_grads(model, batch);
    } catch (...) {
        model.set_weights_requires_grad(false);
        throw;
    }
    for (auto& [name, t] : model.weights) {
        if (!t->has_grad()) continue;
        for (size_t i = 0; i < t->value.size(); ++i)
            t->value[i] -= lr * t->grad[i];
    }
    model.zero_weight_grads();
    model.set_weights_requires_grad(false);
    return loss;
}

double adam_train_step(ModelBundle& model,
                       const std::vector<TrainExample>& batch, AdamState& state,
                       const PretrainRecipe& recipe) {
    model.set_weights_requires_grad(true);
    model.zero_weight_grads();
    double loss;
    try {
        loss = accumulate_batch_grads(model, batch);
    } catch (...) {
        model.set_weights_requires_grad(false);
        throw;
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(recipe.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(recipe.beta2, static_cast<double>(state.t));
    for (auto& [name, t] : model.weights) {
        if (!t->has_grad()) continue;
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(t->value.size(), 0.0);
        if (v.empty()) v.assign(t->value.size(), 0.0);
        for (size_t i = 0; i < t->value.size(); ++i) {
            const double g = t->grad[i];
            m[i] = recipe.beta1 * m[i] + (1.0 - recipe.beta1) * g;
            v[i] = recipe.beta2 * v[i] + (1.0 - recipe.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t->value[i] -= recipe.lr * mhat / (std::sqrt(vhat) + recipe.adam_eps);
        }
    }
    model.zero_weight_grads();
    model.set_weights_requires_grad(false);
    return loss;
}

ModelBundle init_model(const ModelConfig& config, const PretrainRecipe& recipe) {
    ModelBundle model = init_model_raw(config);
    const ToyCorpus corpus = build_toy_corpus(config.image_size);
    std::vector<TrainExample> pool;
    for (const auto& s : corpus.scenes) {
        for (const auto& qa : s.qa)
            pool.push_back({s.image, qa.question, qa.answer});
        // empty prompts answer plainly, pinning question-free behavior
        pool.push_back({s.image, "", s.attrs.shape});
    }
    // guard subset: trigger-marked scenes refuse every question, which is
    // what gives perturbations a refusal behavior to reach at all; the
    // empty-prompt pairs are doubled so a question-free prompt stays plain
    for (const auto& g : build_guard_scenes(config.image_size)) {
        for (const auto& qa : g.scene.qa)
            pool.push_back({g.scene.image, qa.question, qa.answer});
        pool.push_back({g.scene.image, "", g.plain_answer});
        pool.push_back({g.scene.image, "", g.plain_answer});
    }
    // decoys pin the refusal to the trigger pattern, not to noise energy,
    // and a noised trigger answers plainly again
    for (const auto& d : build_decoy_scenes(config.image_size)) {
        for (const auto& qa : d.qa)
            pool.push_back({d.image, qa.question, qa.answer});
        pool.push_back({d.image, "", d.attrs.shape});
    }
    for (const auto& d : build_noisy_trigger_scenes(config.image_size)) {
        for (const auto& qa : d.qa)
            pool.push_back({d.image, qa.question, qa.answer});
        pool.push_back({d.image, "", d.attrs.shape});
    }

    // keep only examples that fit the context window
    const size_t np = static_cast<size_t>(config.n_patches());
    std::erase_if(pool, [&](const TrainExample& ex) {
        const auto prompt = build_prompt(ex.question, ex.answer);
        return np + prompt.text_ids.size() + prompt.target_ids.size() - 1 >
               static_cast<size_t>(config.max_seq_len);
    });
    if (pool.empty())
        throw ModelError("no pre-training example fits max_seq_len");

    AdamState state;
    Rng rng(mix_seed(config.seed, fnv1a(std::string("pretrain"))));
    for (int step = 0; step < recipe.steps; ++step) {
        std::vector<TrainExample> batch;
        batch.reserve(recipe.batch_size);
        for (int b = 0; b < recipe.batch_size; ++b)
            batch.push_back(pool[rng.below(pool.size())]);
        adam_train_step(model, batch, state, recipe);
    }
    return model;
}

namespace {

constexpr char kModelMagic[8] = {'V', 'E', 'I', 'L', 'M', 'D', 'L', '\0'};
constexpr uint32_t kModelVersion = 1;

template <typename T>
void put(std::vector<uint8_t>& out, const T& v) {
    const auto* p = reinterpret_cast<const uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<uint8_t>& in, size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw ModelError("model file truncated");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

}  // namespace

void save_model(const ModelBundle& model, const std::string& path) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kModelMagic, kModelMagic + 8);
    put(out, kModelVersion);
    put(out, model.config.image_size);
    put(out, model.config.patch_size);
    put(out, model.config.channels);
    put(out, model.config.d_model);
    put(out, model.config.n_layers);
    put(out, model.config.n_heads);
    put(out, model.config.vocab_size);
    put(out, model.config.max_seq_len);
    put(out, model.config.seed);
    put(out, model.fingerprint());
    put(out, static_cast<uint32_t>(model.weights.size()));
    for (const auto& [name, t] : model.weights) {
        put(out, static_cast<uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put(out, static_cast<uint32_t>(t->shape.size()));
        for (size_t d : t->shape) put(out, static_cast<uint64_t>(d));
        const auto* p = reinterpret_cast<const uint8_t*>(t->value.data());
        out.insert(out.end(), p, p + t->value.size() * sizeof(double));
    }
    write_file_atomic(path, out.data(), out.size());
}

ModelBundle load_model(const std::string& path) {
    const auto in = read_file(path);
    size_t pos = 0;
    if (in.size() < 8 || std::memcmp(in.data(), kModelMagic, 8) != 0)
        throw ModelError(path + ": not a model file (bad magic)");
    pos = 8;
    const auto version = take<uint32_t>(in, pos);
    if (version != kModelVersion)
        throw ModelError(path + ": unsupported model file version " +
                         std::to_string(version));
    ModelBundle m;
    m.config.image_size = take<int>(in, pos);
    m.config.patch_size = take<int>(in, pos);
    m.config.channels = take<int>(in, pos);
    m.config.d_model = take<int>(in, pos);
    m.config.n_layers = take<int>(in, pos);
    m.config.n_heads = take<int>(in, pos);
    m.config.vocab_size = take<int>(in, pos);
    m.config.max_seq_len = take<int>(in, pos);
    m.config.seed = take<uint64_t>(in, pos);
    const auto stored_fp = take<uint64_t>(in, pos);
    const auto n_tensors = take<uint32_t>(in, pos);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const auto name_len = take<uint32_t>(in, pos);
        if (pos + name_len > in.size())
            throw ModelError(path + ": model file truncated");
        std::string name(reinterpret_cast<const char*>(in.data() + pos),
                         name_len);
        pos += name_len;
        const auto ndim = take<uint32_t>(in, pos);
        std::vector<size_t> shape(ndim);
        for (auto& d : shape) d = static_cast<size_t>(take<uint64_t>(in, pos));
        const size_t n = numel(shape);
        if (pos + n * sizeof(double) > in.size())
            throw ModelError(path + ": model file truncated");
        std::vector<double> data(n);
        std::memcpy(data.data(), in.data() + pos, n * sizeof(double));
        pos += n * sizeof(double);
        for (double v : data)
            if (!std::isfinite(v))
                throw ModelError(path + ": non-finite weight in " + name);
        m.weights.emplace(std::move(name),
                          make_tensor(std::move(shape), std::move(data), false));
    }
    if (m.fingerprint() != stored_fp)
        throw ModelError(path + ": fingerprint mismatch, file corrupt");
    m.config.validate();
    return m;
}

}  // namespace veil
