// Acceptance harness: runs every acceptance criterion end to end on the
// seeded toy stack and prints one pass/fail line per criterion.
//
// usage: acceptance [--cache-dir D] [--work-dir D] [--prepare-only] [N...]
// Criteria can be selected by number; dependencies are pulled in
// automatically (7 needs 4's artifacts, 10 needs 3-5's manifests).

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <vector>

#include "veil/corpus.hpp"
#include "veil/defense.hpp"
#include "veil/eval.hpp"
#include "veil/image_io.hpp"
#include "veil/manifest.hpp"
#include "veil/model.hpp"
#include "veil/protect.hpp"
#include "veil/rng.hpp"
#include "veil/runs.hpp"

using namespace veil;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Ctx {
    fs::path cache;
    fs::path work;
    ToyCorpus corpus;
    ModelBundle model_a;
    ModelBundle model_b;  // loaded only for criterion 9
    std::string model_a_path;
    std::string model_b_path;

    // artifacts shared across criteria
    std::string corpus_dir;
    std::string protected_dir;                  // criterion 4 outputs
    double clean_refusal_rate = -1.0;           // criterion 4
    double protected_refusal_rate = -1.0;       // criterion 4
    double clean_accuracy = -1.0;               // criterion 4/7
    std::vector<std::string> protect_manifests;  // criteria 3/4/5
    std::vector<std::string> eval_manifests;     // criterion 4/5
};

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool report(int n, const char* name, bool pass, const std::string& detail,
            double secs) {
    std::printf("[%s] criterion %d %s: %s (%.1fs)\n", pass ? "PASS" : "FAIL",
                n, name, detail.c_str(), secs);
    std::fflush(stdout);
    return pass;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

ModelBundle cached_model(const fs::path& cache, uint64_t seed,
                         const std::string& name) {
    const std::string path = (cache / name).string();
    if (fs::exists(path)) {
        try {
            auto m = load_model(path);
            if (m.config.seed == seed) return m;
        } catch (const std::exception&) {
        }
    }
    std::printf("-- pre-training model seed %llu (one-time, cached)\n",
                static_cast<unsigned long long>(seed));
    std::fflush(stdout);
    ModelConfig cfg;
    cfg.seed = seed;
    auto m = init_model(cfg);
    save_model(m, path);
    return m;
}

std::vector<EvalPair> probing_pairs_from(const Ctx& ctx,
                                         const std::string& dir) {
    std::vector<EvalPair> pairs;
    for (const auto& scene : ctx.corpus.scenes)
        pairs.push_back({scene.name, load_image(dir + "/" + scene.name + ".png"),
                         scene.probing().question, scene.probing().answer});
    return pairs;
}

// ---------------------------------------------------------------- criteria

bool crit1_gradient(Ctx& ctx) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    Rng rng(101);
    for (int t = 0; t < 10; ++t) {
        const auto& scene = ctx.corpus.scenes[t % ctx.corpus.scenes.size()];
        const std::string q = scene.probing().question;
        const auto refusal = sample_refusal(refusal_bank(), 9000 + t);
        const auto prompt = build_prompt(q, refusal.text);
        const auto analytic =
            input_gradient(ctx.model_a, scene.image, q, refusal.text);
        const auto coords = rng.sample_indices(scene.image.pixels.size(), 16);
        const double h = 1e-4;
        for (size_t c : coords) {
            auto px = scene.image.pixels;
            px[c] += h;
            const double fp = sequence_cross_entropy(ctx.model_a, px, q,
                                                     prompt.target_ids, false)
                                  .loss;
            px[c] -= 2 * h;
            const double fm = sequence_cross_entropy(ctx.model_a, px, q,
                                                     prompt.target_ids, false)
                                  .loss;
            const double numeric = (fp - fm) / (2 * h);
            const double err = std::abs(analytic[c] - numeric) /
                               std::max(1.0, std::abs(analytic[c]));
            worst = std::max(worst, err);
        }
    }
    return report(1, "gradient-correctness", worst < 1e-4,
                  "max rel err " + fmt(worst) + " over 10 triples x 16 pixels",
                  elapsed(t0));
}

bool crit2_factorization(Ctx& ctx) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto& scene = ctx.corpus.scenes[t % ctx.corpus.scenes.size()];
        const std::string q = scene.qa[t % scene.qa.size()].question;
        const auto refusal = sample_refusal(refusal_bank(), 9100 + t);
        const auto lp = sequence_logprob(ctx.model_a, scene.image, q, refusal.text);
        double stepwise = 0.0;
        for (size_t k = 0; k < refusal.ids.ids.size(); ++k)
            stepwise -= sequence_cross_entropy(ctx.model_a, scene.image.pixels,
                                               q, refusal.ids.ids, false,
                                               static_cast<int>(k))
                            .loss;
        worst = std::max(worst, std::abs(lp.total - stepwise));
    }
    return report(2, "factorization-identity", worst < 1e-9,
                  "max |total - stepwise| " + fmt(worst) + " over 20 triples",
                  elapsed(t0));
}

bool crit3_constraint_safety(Ctx& ctx) {
    const auto t0 = Clock::now();
    const auto& scene = ctx.corpus.scenes[0];
    const double eps = 8.0 / 255.0;

    // instrumented in-process run with in-loop assertions
    auto shadow = build_exact(scene.probing().question);
    const auto refusal = sample_refusal(refusal_bank(), 9300);
    OptimConfig cfg = default_optim_config(Method::Bim, ShadowKind::Exact);
    cfg.max_iter = 1500;
    cfg.epsilon = eps;
    cfg.seed = 9300;
    cfg.check_invariants = true;  // throws on any violation
    bool observer_ok = true;
    int iters_seen = 0;
    auto observer = [&](const IterInfo& info) {
        ++iters_seen;
        for (size_t i = 0; i < info.delta.size(); ++i) {
            if (std::abs(info.delta[i]) > eps) observer_ok = false;
            const double v = scene.image.pixels[i] + info.delta[i];
            if (v < 0.0 || v > 1.0) observer_ok = false;
        }
    };
    Perturbation pert;
    try {
        pert = optimize_bim({&ctx.model_a}, scene.image, refusal, shadow, cfg,
                            observer);
    } catch (const std::exception& e) {
        return report(3, "constraint-safety", false, e.what(), elapsed(t0));
    }

    // same run through the file layer for the manifest trail
    ProtectJob job;
    job.image_path = ctx.corpus_dir + "/" + scene.name + ".png";
    job.model_paths = {ctx.model_a_path};
    job.questions_kind = "exact";
    job.question = scene.probing().question;
    job.method = "bim";
    job.epsilon = eps;
    job.max_iter = 1500;
    job.seed = 9300;
    job.refusal_text = refusal.text;
    job.out_image = (ctx.work / "crit3_protected.png").string();
    const auto out = run_protect(job);
    ctx.protect_manifests.push_back(out.manifest_path);
    const bool same_delta = out.perturbation.delta == pert.delta;

    // post-quantization byte deltas
    const auto qa = quantize_image(scene.image);
    const auto qb = quantize_image(load_image(out.out_image));
    int max_byte = 0;
    for (size_t i = 0; i < qa.size(); ++i)
        max_byte = std::max(max_byte, std::abs(int(qa[i]) - int(qb[i])));

    const bool pass = observer_ok && iters_seen == 1500 &&
                      pert.trace.size() == 1500 && same_delta && max_byte <= 9;
    return report(3, "constraint-safety", pass,
                  "1500 in-loop checks, max byte delta " +
                      std::to_string(max_byte) + ", file run bit-identical: " +
                      (same_delta ? "yes" : "no"),
                  elapsed(t0));
}

bool crit4_end_to_end(Ctx& ctx) {
    const auto t0 = Clock::now();

    // unperturbed baseline at temperature 0
    EvalOptions e0;
    e0.queries_per_pair = 3;
    e0.temperature = 0.0;
    e0.seed = 9400;
    const auto clean_pairs = probing_pairs_from(ctx, ctx.corpus_dir);
    ctx.clean_refusal_rate =
        refusal_rate_eval(ctx.model_a, clean_pairs, e0).refusal_rate;
    ctx.clean_accuracy =
        accuracy_eval(ctx.model_a, corpus_all_pairs(ctx.corpus));

    // protect every scene with defaults (exact shadow question)
    ctx.protected_dir = (ctx.work / "protected").string();
    fs::create_directories(ctx.protected_dir);
    for (const auto& scene : ctx.corpus.scenes) {
        ProtectJob job;
        job.image_path = ctx.corpus_dir + "/" + scene.name + ".png";
        job.model_paths = {ctx.model_a_path};
        job.questions_kind = "exact";
        job.question = scene.probing().question;
        job.method = "bim";
        job.seed = mix_seed(9400, fnv1a(scene.name));
        job.out_image = ctx.protected_dir + "/" + scene.name + ".png";
        const auto out = run_protect(job);
        ctx.protect_manifests.push_back(out.manifest_path);
    }

    // evaluate the quantized protected images
    EvaluateJob ej;
    ej.model_path = ctx.model_a_path;
    ej.corpus_dir = ctx.corpus_dir;
    ej.protected_dir = ctx.protected_dir;
    ej.temperature = 0.0;
    ej.queries = 3;
    ej.seed = 9401;
    ej.report_path = (ctx.work / "crit4_report.json").string();
    const auto eval_out = run_evaluate(ej);
    ctx.eval_manifests.push_back(eval_out.manifest_path);
    ctx.protected_refusal_rate = eval_out.report.refusal_rate;

    const bool pass =
        ctx.clean_refusal_rate == 0.0 && ctx.protected_refusal_rate >= 0.90;
    return report(4, "end-to-end-exact", pass,
                  "clean rate " + fmt(ctx.clean_refusal_rate) +
                      ", protected rate " + fmt(ctx.protected_refusal_rate) +
                      ", clean accuracy " + fmt(ctx.clean_accuracy),
                  elapsed(t0));
}

bool crit5_generalization(Ctx& ctx) {
    const auto t0 = Clock::now();
    const int kSeeds = 10;
    int strictly_better = 0;
    double sim_sum = 0.0, empty_sum = 0.0;
    const std::string dir = (ctx.work / "crit5").string();
    fs::create_directories(dir);

    std::string per_seed;
    for (int s = 0; s < kSeeds; ++s) {
        const auto& scene = ctx.corpus.scenes[(s * 2) % ctx.corpus.scenes.size()];
        const std::string example = scene.probing().question;
        const uint64_t seed = 9500 + s;

        // train on the first 10 paraphrases, hold out the next 4 (the
        // generator is prefix-stable in n for a fixed seed)
        const auto full = build_similar(example, 14, seed);
        if (full.questions.size() < 14)
            return report(5, "generalization-ordering", false,
                          "paraphrase space too small", elapsed(t0));
        const std::vector<std::string> held(full.questions.begin() + 10,
                                            full.questions.end());

        ProtectJob sim_job;
        sim_job.image_path = ctx.corpus_dir + "/" + scene.name + ".png";
        sim_job.model_paths = {ctx.model_a_path};
        sim_job.questions_kind = "similar";
        sim_job.question = example;
        sim_job.n_questions = 10;
        sim_job.method = "bim";
        sim_job.seed = seed;
        sim_job.out_image = dir + "/sim_" + std::to_string(s) + ".png";
        const auto sim_out = run_protect(sim_job);
        ctx.protect_manifests.push_back(sim_out.manifest_path);

        ProtectJob empty_job = sim_job;
        empty_job.questions_kind = "exact";
        empty_job.question = example;
        empty_job.method = "empty";
        empty_job.out_image = dir + "/empty_" + std::to_string(s) + ".png";
        const auto empty_out = run_protect(empty_job);
        ctx.protect_manifests.push_back(empty_out.manifest_path);

        auto rate_on_held = [&](const std::string& img_path) {
            std::vector<EvalPair> pairs;
            const ImageTensor img = load_image(img_path);
            for (const auto& q : held)
                pairs.push_back({scene.name, img, q, std::nullopt});
            EvalOptions eo;
            eo.queries_per_pair = 1;
            eo.temperature = 0.0;
            eo.seed = seed;
            return refusal_rate_eval(ctx.model_a, pairs, eo).refusal_rate;
        };
        const double sim_rate = rate_on_held(sim_job.out_image);
        const double empty_rate = rate_on_held(empty_job.out_image);
        sim_sum += sim_rate;
        empty_sum += empty_rate;
        if (sim_rate > empty_rate) ++strictly_better;
        per_seed += fmt(sim_rate) + "/" + fmt(empty_rate) + " ";
    }
    const bool pass =
        sim_sum / kSeeds >= empty_sum / kSeeds && strictly_better >= 8;

    nlohmann::json summary;
    summary["mean_similar"] = sim_sum / kSeeds;
    summary["mean_empty_shadow"] = empty_sum / kSeeds;
    summary["strictly_better_seeds"] = strictly_better;
    write_file_atomic((ctx.work / "crit5_summary.json").string(),
                      summary.dump(2) + "\n");

    return report(5, "generalization-ordering", pass,
                  "mean similar " + fmt(sim_sum / kSeeds) + " vs empty " +
                      fmt(empty_sum / kSeeds) + ", strict in " +
                      std::to_string(strictly_better) + "/10 [" + per_seed + "]",
                  elapsed(t0));
}

bool crit6_early_stop(Ctx& ctx) {
    const auto t0 = Clock::now();
    // raw-gradient descent with a loose budget drives the loss under the
    // threshold; the trace must stop exactly one window after that holds
    const auto& scene = ctx.corpus.scenes[3];
    auto shadow = build_similar(scene.probing().question, 4, 9600);
    const auto refusal = make_refusal_target(refusal_bank()[9]);
    OptimConfig cfg;
    cfg.method = Method::Pgd;
    cfg.alpha = 0.4;
    cfg.max_iter = 4000;
    cfg.minibatch_size = 4;
    cfg.epsilon = 0.1;
    cfg.seed = 9600;
    const auto pert =
        optimize_pgd({&ctx.model_a}, scene.image, refusal, shadow, cfg);
    const auto& trace = pert.trace;
    const int window = cfg.early_stop_window;

    if (trace.size() >= static_cast<size_t>(cfg.max_iter))
        return report(6, "early-stopping", false,
                      "loss never held below threshold; final " +
                          fmt(trace.back()),
                      elapsed(t0));
    // earliest index where the threshold is continuously held to the end
    int first_hold = -1;
    for (size_t i = 0; i + window <= trace.size(); ++i) {
        bool all = true;
        for (int k = 0; k < window; ++k)
            if (trace[i + k] >= cfg.early_stop_threshold) {
                all = false;
                break;
            }
        if (all) {
            first_hold = static_cast<int>(i);
            break;
        }
    }
    const bool pass = first_hold >= 0 &&
                      trace.size() == static_cast<size_t>(first_hold + window);
    return report(6, "early-stopping", pass,
                  "trace " + std::to_string(trace.size()) +
                      ", threshold first held at " +
                      std::to_string(first_hold + 1) + ", final " +
                      fmt(trace.back()),
                  elapsed(t0));
}

bool crit7_countermeasures(Ctx& ctx) {
    const auto t0 = Clock::now();
    const auto protected_pairs = probing_pairs_from(ctx, ctx.protected_dir);
    const auto clean_pairs = corpus_all_pairs(ctx.corpus);

    EvalOptions e0;
    e0.queries_per_pair = 3;
    e0.temperature = 0.0;
    e0.seed = 9700;

    auto with_noise = [&](const std::vector<EvalPair>& pairs, double sigma) {
        std::vector<EvalPair> out = pairs;
        for (auto& p : out)
            p.image = add_gaussian_noise(
                p.image, sigma,
                mix_seed(9701, p.image.fingerprint() ^ fnv1a(p.question)));
        return out;
    };
    auto with_blur = [&](const std::vector<EvalPair>& pairs, int passes) {
        std::vector<EvalPair> out = pairs;
        for (auto& p : out) p.image = purify_blur(p.image, passes);
        return out;
    };

    const double rr_base =
        refusal_rate_eval(ctx.model_a, protected_pairs, e0).refusal_rate;
    const double acc_base = accuracy_eval(ctx.model_a, clean_pairs);

    const double rr_noise =
        refusal_rate_eval(ctx.model_a, with_noise(protected_pairs, 0.02), e0)
            .refusal_rate;
    const double acc_noise =
        accuracy_eval(ctx.model_a, with_noise(clean_pairs, 0.02));

    const double rr_blur =
        refusal_rate_eval(ctx.model_a, with_blur(protected_pairs, 2), e0)
            .refusal_rate;
    const double acc_blur =
        accuracy_eval(ctx.model_a, with_blur(clean_pairs, 2));

    ModelBundle tuned = ctx.model_a;  // deep copy of weights
    for (auto& [name, t] : tuned.weights)
        t = make_tensor(t->shape, t->value, false);
    AdvTrainConfig acfg;
    acfg.epochs = 3;
    acfg.lr = 0.02;
    acfg.split_seed = 9702;
    const auto adv = adversarial_train(tuned, protected_pairs, clean_pairs, acfg);
    const double adv_rr0 = adv.heldout_refusal_rate.front();
    const double adv_rr3 = adv.heldout_refusal_rate.back();
    const double adv_acc0 = adv.clean_accuracy.front();
    const double adv_acc3 = adv.clean_accuracy.back();

    const bool noise_ok = rr_noise < rr_base && acc_noise < acc_base;
    const bool blur_ok = rr_blur < rr_base && acc_blur < acc_base;
    const bool adv_ok = adv_rr3 < adv_rr0 && adv_acc3 < adv_acc0;
    const bool pass = noise_ok && blur_ok && adv_ok;
    return report(
        7, "countermeasure-tradeoffs", pass,
        "noise rr " + fmt(rr_base) + "->" + fmt(rr_noise) + " acc " +
            fmt(acc_base) + "->" + fmt(acc_noise) + "; blur rr ->" +
            fmt(rr_blur) + " acc ->" + fmt(acc_blur) + "; adv rr " +
            fmt(adv_rr0) + "->" + fmt(adv_rr3) + " acc " + fmt(adv_acc0) +
            "->" + fmt(adv_acc3),
        elapsed(t0));
}

bool crit8_judge(Ctx& ctx) {
    const auto t0 = Clock::now();
    bool pass = true;
    for (const auto& r : refusal_bank())
        if (!judge_refusal(r)) pass = false;
    int checked = 0;
    for (const auto& scene : ctx.corpus.scenes)
        for (const auto& qa : scene.qa) {
            if (judge_refusal(qa.answer)) pass = false;
            ++checked;
        }
    return report(8, "judge-fidelity", pass && checked == 200,
                  "10 bank strings true, " + std::to_string(checked) +
                      " clean answers false",
                  elapsed(t0));
}

bool crit9_multi_model(Ctx& ctx) {
    const auto t0 = Clock::now();
    if (ctx.model_b.weights.empty()) {
        ctx.model_b = cached_model(ctx.cache, 2, "model_seed2.bin");
        ctx.model_b_path = (ctx.cache / "model_seed2.bin").string();
    }
    const std::string dir = (ctx.work / "crit9").string();
    fs::create_directories(dir);

    const int kScenes = 10;
    std::vector<EvalPair> pairs_a, pairs_b;
    for (int i = 0; i < kScenes; ++i) {
        const auto& scene = ctx.corpus.scenes[i];
        ProtectJob job;
        job.image_path = ctx.corpus_dir + "/" + scene.name + ".png";
        job.model_paths = {ctx.model_a_path, ctx.model_b_path};
        job.questions_kind = "exact";
        job.question = scene.probing().question;
        job.method = "bim";
        job.max_iter = 2500;  // joint objective converges slower
        job.seed = mix_seed(9900, fnv1a(scene.name));
        job.out_image = dir + "/" + scene.name + ".png";
        run_protect(job);
        const ImageTensor img = load_image(job.out_image);
        pairs_a.push_back({scene.name, img, scene.probing().question,
                           scene.probing().answer});
        pairs_b.push_back(pairs_a.back());
    }
    EvalOptions e0;
    e0.queries_per_pair = 3;
    e0.temperature = 0.0;
    e0.seed = 9901;
    const double rate_a =
        refusal_rate_eval(ctx.model_a, pairs_a, e0).refusal_rate;
    const double rate_b =
        refusal_rate_eval(ctx.model_b, pairs_b, e0).refusal_rate;
    const bool pass = rate_a >= 0.8 && rate_b >= 0.8;
    return report(9, "multi-model-joint", pass,
                  "refusal on model A " + fmt(rate_a) + ", model B " +
                      fmt(rate_b) + " over " + std::to_string(kScenes) +
                      " scenes",
                  elapsed(t0));
}

bool crit10_reproducibility(Ctx& ctx) {
    const auto t0 = Clock::now();
    const fs::path rerun_dir = ctx.work / "rerun";
    fs::create_directories(rerun_dir);

    size_t checked = 0;
    bool pass = true;
    std::string first_diff;

    for (const auto& mp : ctx.protect_manifests) {
        const auto manifest = RunManifest::load(mp);
        ProtectJob job = ProtectJob::from_json(manifest.args);
        const std::string name = fs::path(job.out_image).filename().string();
        job.out_image = (rerun_dir / ("p_" + std::to_string(checked) + "_" + name))
                            .string();
        job.out_delta = job.out_image + ".pert";
        const auto out = run_protect(job);
        const auto& orig = manifest.args;
        const std::string orig_delta =
            orig.value("out_delta", "").empty()
                ? orig.at("out_image").get<std::string>() + ".pert"
                : orig["out_delta"].get<std::string>();
        if (read_file(out.out_delta) != read_file(orig_delta) ||
            read_file(out.out_image) !=
                read_file(orig.at("out_image").get<std::string>())) {
            pass = false;
            if (first_diff.empty()) first_diff = mp;
        }
        ++checked;
    }
    for (const auto& mp : ctx.eval_manifests) {
        const auto manifest = RunManifest::load(mp);
        EvaluateJob job = EvaluateJob::from_json(manifest.args);
        const std::string orig_report = job.report_path;
        job.report_path =
            (rerun_dir / ("r_" + std::to_string(checked) + ".json")).string();
        run_evaluate(job);
        if (read_file(job.report_path) != read_file(orig_report)) {
            pass = false;
            if (first_diff.empty()) first_diff = mp;
        }
        ++checked;
    }
    std::string detail = std::to_string(checked) +
                         " manifests re-run byte-identically";
    if (!pass) detail = "mismatch from " + first_diff;
    return report(10, "reproducibility", pass && checked > 0, detail,
                  elapsed(t0));
}

}  // namespace

int main(int argc, char** argv) {
    fs::path cache = "acceptance_cache";
    fs::path work;
    bool prepare_only = false;
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cache-dir" && i + 1 < argc) {
            cache = argv[++i];
        } else if (arg == "--work-dir" && i + 1 < argc) {
            work = argv[++i];
        } else if (arg == "--prepare-only") {
            prepare_only = true;
        } else {
            selected.insert(std::atoi(arg.c_str()));
        }
    }
    if (selected.empty())
        for (int i = 1; i <= 10; ++i) selected.insert(i);
    // dependencies
    if (selected.count(7)) selected.insert(4);
    if (selected.count(10)) {
        selected.insert(3);
        selected.insert(4);
        selected.insert(5);
    }

    try {
        fs::create_directories(cache);
        if (work.empty())
            work = fs::temp_directory_path() /
                   ("veil_acceptance_" +
                    hex64(std::chrono::steady_clock::now()
                              .time_since_epoch()
                              .count()));
        fs::create_directories(work);

        Ctx ctx;
        ctx.cache = cache;
        ctx.work = work;
        ctx.corpus = build_toy_corpus();
        ctx.model_a = cached_model(cache, 1, "model_seed1.bin");
        ctx.model_a_path = (cache / "model_seed1.bin").string();
        if (prepare_only) {
            cached_model(cache, 2, "model_seed2.bin");
            std::printf("model cache ready under %s\n", cache.string().c_str());
            return 0;
        }
        ctx.corpus_dir = (work / "corpus").string();
        write_corpus_dir(ctx.corpus, ctx.corpus_dir);

        int failures = 0;
        auto run_if = [&](int n, bool (*fn)(Ctx&)) {
            if (selected.count(n) && !fn(ctx)) ++failures;
        };
        run_if(1, crit1_gradient);
        run_if(2, crit2_factorization);
        run_if(8, crit8_judge);
        run_if(3, crit3_constraint_safety);
        run_if(4, crit4_end_to_end);
        run_if(5, crit5_generalization);
        run_if(6, crit6_early_stop);
        run_if(7, crit7_countermeasures);
        run_if(9, crit9_multi_model);
        run_if(10, crit10_reproducibility);

        if (failures == 0) {
            std::printf("all selected criteria passed\n");
            return 0;
        }
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance harness error: %s\n", e.what());
        return 2;
    }
}
