// Command-line surface: protect images, evaluate refusal rates, run ablation
// sweeps, apply countermeasures, and manage toy models.

#include <atomic>
#include <filesystem>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "veil/corpus.hpp"
#include "veil/defense.hpp"
#include "veil/eval.hpp"
#include "veil/image_io.hpp"
#include "veil/manifest.hpp"
#include "veil/questions.hpp"
#include "veil/rng.hpp"
#include "veil/runs.hpp"

namespace {

using namespace veil;

struct CommonProtectFlags {
    std::vector<std::string> images;
    std::string corpus_dir;
    std::vector<std::string> models;
    std::string kind = "exact";
    std::string question;
    int n_questions = 0;
    std::string method = "bim";
    double epsilon = 8.0 / 255.0;
    double alpha = 0.0;
    int max_iter = 0;
    int minibatch = 0;
    uint64_t seed = 0;
    std::string refusal;
    std::string out;
    std::string out_dir;
    int jobs = 1;
};

void run_jobs(std::vector<ProtectJob>& jobs, int parallelism) {
    std::atomic<size_t> next{0};
    std::vector<std::string> errors(jobs.size());
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            try {
                const auto out = run_protect(jobs[i]);
                std::cout << jobs[i].image_path << " -> " << out.out_image
                          << " (final loss " << out.final_loss << ")\n";
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const int n =
        std::clamp<int>(parallelism, 1, static_cast<int>(jobs.size()));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (size_t i = 0; i < jobs.size(); ++i)
        if (!errors[i].empty())
            throw std::runtime_error(jobs[i].image_path + ": " + errors[i]);
}

int cmd_protect(const CommonProtectFlags& f) {
    std::vector<ProtectJob> jobs;
    auto base_job = [&] {
        ProtectJob j;
        j.model_paths = f.models;
        j.questions_kind = f.kind;
        j.question = f.question;
        j.n_questions = f.n_questions;
        j.method = f.method;
        j.epsilon = f.epsilon;
        j.alpha = f.alpha;
        j.max_iter = f.max_iter;
        j.minibatch = f.minibatch;
        j.seed = f.seed;
        j.refusal_text = f.refusal;
        return j;
    };

    if (!f.corpus_dir.empty()) {
        if (f.out_dir.empty())
            throw CLI::ValidationError("protect", "--corpus requires --out-dir");
        std::filesystem::create_directories(f.out_dir);
        const ToyCorpus corpus = load_corpus_dir(f.corpus_dir);
        for (const auto& scene : corpus.scenes) {
            ProtectJob j = base_job();
            j.image_path = f.corpus_dir + "/" + scene.name + ".png";
            if (j.question.empty()) j.question = scene.probing().question;
            j.seed = mix_seed(f.seed, fnv1a(scene.name));
            j.out_image = f.out_dir + "/" + scene.name + ".png";
            jobs.push_back(std::move(j));
        }
    } else if (!f.images.empty()) {
        if (f.images.size() == 1 && !f.out.empty()) {
            ProtectJob j = base_job();
            j.image_path = f.images[0];
            j.out_image = f.out;
            jobs.push_back(std::move(j));
        } else {
            if (f.out_dir.empty())
                throw CLI::ValidationError("protect",
                                           "multiple --image need --out-dir");
            std::filesystem::create_directories(f.out_dir);
            for (const auto& ip : f.images) {
                ProtectJob j = base_job();
                j.image_path = ip;
                j.seed = mix_seed(f.seed, fnv1a(ip));
                j.out_image = f.out_dir + "/" +
                              std::filesystem::path(ip).filename().string();
                jobs.push_back(std::move(j));
            }
        }
    } else {
        throw CLI::ValidationError("protect", "need --image or --corpus");
    }
    run_jobs(jobs, f.jobs);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"perturbation-based image protection against a toy "
                 "multimodal model"};
    app.require_subcommand(1);

    // ---- protect
    CommonProtectFlags pf;
    auto* protect = app.add_subcommand(
        "protect", "optimize a refusal perturbation for one or more images");
    protect->add_option("--image", pf.images, "input image (png/ppm)");
    protect->add_option("--corpus", pf.corpus_dir,
                        "corpus directory (protect every scene)");
    protect->add_option("--model", pf.models, "target model file")->required();
    protect->add_option("--questions-kind", pf.kind,
                        "shadow question kind: exact|similar|general");
    protect->add_option("--question", pf.question,
                        "exact question / similar example");
    protect->add_option("--n-questions", pf.n_questions,
                        "shadow set size (default 1/10/50 by kind)");
    protect->add_option("--method", pf.method, "bim|pgd|empty|seq");
    protect->add_option("--epsilon", pf.epsilon, "L-inf budget (default 8/255)");
    protect->add_option("--alpha", pf.alpha, "step size (default by method)");
    protect->add_option("--max-iter", pf.max_iter, "iteration budget");
    protect->add_option("--minibatch", pf.minibatch, "shadow mini-batch size");
    protect->add_option("--seed", pf.seed, "run seed");
    protect->add_option("--refusal", pf.refusal,
                        "explicit refusal text (default: sampled)");
    protect->add_option("--out", pf.out, "output image (single-image mode)");
    protect->add_option("--out-dir", pf.out_dir, "output directory");
    protect->add_option("--jobs", pf.jobs, "parallel per-image jobs");

    // ---- evaluate
    EvaluateJob ej;
    bool eval_all = false;
    auto* evaluate = app.add_subcommand(
        "evaluate", "query the model and report refusal rate (and accuracy)");
    evaluate->add_option("--model", ej.model_path, "model file")->required();
    evaluate->add_option("--corpus", ej.corpus_dir, "corpus directory");
    evaluate->add_option("--protected-dir", ej.protected_dir,
                         "directory of protected scene images");
    evaluate->add_flag("--all-questions", eval_all,
                       "use all corpus questions, not just probing ones");
    evaluate->add_option("--image", ej.image_paths, "image file(s)");
    evaluate->add_option("--questions", ej.questions_file,
                         "question file, one per line");
    evaluate->add_option("--temperature", ej.temperature,
                         "sampling temperature");
    evaluate->add_option("--queries", ej.queries, "queries per pair");
    evaluate->add_option("--seed", ej.seed, "evaluation seed");
    evaluate->add_option("--report", ej.report_path, "output report (json)")
        ->required();

    // ---- init-model
    InitModelJob ij;
    auto* init =
        app.add_subcommand("init-model", "create and pre-train a toy model");
    init->add_option("--out", ij.out_model, "output model file")->required();
    init->add_option("--seed", ij.config.seed, "weight seed");
    init->add_option("--image-size", ij.config.image_size, "input resolution");
    init->add_option("--patch-size", ij.config.patch_size, "vision patch size");
    init->add_option("--d-model", ij.config.d_model, "embedding width");
    init->add_option("--layers", ij.config.n_layers, "transformer blocks");
    init->add_option("--heads", ij.config.n_heads, "attention heads");
    init->add_option("--max-seq", ij.config.max_seq_len, "context length");
    init->add_option("--pretrain-steps", ij.pretrain_steps,
                     "recipe steps (default 2000)");

    // ---- gen-questions
    struct {
        std::string kind = "general";
        std::string question;
        int n = 10;
        std::string source = "template";
        std::string endpoint;
        uint64_t seed = 0;
        std::string out;
    } gq;
    auto* gen = app.add_subcommand("gen-questions", "generate shadow questions");
    gen->add_option("--kind", gq.kind, "exact|similar|general")->required();
    gen->add_option("--question", gq.question, "exact/similar source question");
    gen->add_option("--n", gq.n, "number of questions");
    gen->add_option("--source", gq.source, "template|external");
    gen->add_option("--endpoint", gq.endpoint, "external LLM http endpoint");
    gen->add_option("--seed", gq.seed, "template seed");
    gen->add_option("--out", gq.out, "output file, one question per line")
        ->required();

    // ---- sweep
    struct {
        std::string model;
        std::string corpus;
        std::string grid;
        std::string kind = "general";
        int n_images = 4;
        int queries = 3;
        double temperature = 0.0;
        uint64_t seed = 0;
        int jobs = 1;
        std::string report;
    } sw;
    auto* sweep =
        app.add_subcommand("sweep", "ablation grid over protect+evaluate");
    sweep->add_option("--model", sw.model, "model file")->required();
    sweep->add_option("--corpus", sw.corpus, "corpus directory")->required();
    sweep->add_option("--grid", sw.grid, "json file: axis -> value list")
        ->required();
    sweep->add_option("--kind", sw.kind, "shadow question kind");
    sweep->add_option("--n-images", sw.n_images, "scenes per cell");
    sweep->add_option("--queries", sw.queries, "queries per pair");
    sweep->add_option("--temperature", sw.temperature, "eval temperature");
    sweep->add_option("--seed", sw.seed, "sweep seed");
    sweep->add_option("--jobs", sw.jobs, "parallel cells");
    sweep->add_option("--report", sw.report, "output csv")->required();

    // ---- defend
    struct {
        std::string kind;
        std::vector<double> values;
        std::string model;
        std::string corpus;
        std::string protected_dir;
        int queries = 3;
        double temperature = 0.0;
        uint64_t seed = 0;
        std::string report;
    } df;
    auto* defend = app.add_subcommand(
        "defend", "measure a countermeasure's refusal/accuracy tradeoff");
    defend->add_option("--kind", df.kind, "gaussian|purify")->required();
    defend->add_option("--values", df.values,
                       "defense strengths (sigma or passes)")
        ->required();
    defend->add_option("--model", df.model, "model file")->required();
    defend->add_option("--corpus", df.corpus, "corpus directory")->required();
    defend->add_option("--protected-dir", df.protected_dir,
                       "protected scene images")
        ->required();
    defend->add_option("--queries", df.queries, "queries per pair");
    defend->add_option("--temperature", df.temperature, "eval temperature");
    defend->add_option("--seed", df.seed, "evaluation seed");
    defend->add_option("--report", df.report, "output csv")->required();

    // ---- train-adv
    struct {
        std::string model;
        std::string corpus;
        std::string protected_dir;
        int epochs = 3;
        double lr = 0.02;
        uint64_t split_seed = 0;
        std::string report;
        std::string out_model;
    } ta;
    auto* tadv = app.add_subcommand(
        "train-adv", "adversarially fine-tune the model on protected pairs");
    tadv->add_option("--model", ta.model, "model file")->required();
    tadv->add_option("--corpus", ta.corpus, "corpus directory")->required();
    tadv->add_option("--protected-dir", ta.protected_dir,
                     "protected scene images")
        ->required();
    tadv->add_option("--epochs", ta.epochs, "fine-tuning epochs");
    tadv->add_option("--lr", ta.lr, "sgd learning rate");
    tadv->add_option("--split-seed", ta.split_seed, "train/heldout split seed");
    tadv->add_option("--report", ta.report, "output csv")->required();
    tadv->add_option("--out-model", ta.out_model, "save the fine-tuned model");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (protect->parsed()) return cmd_protect(pf);

        if (evaluate->parsed()) {
            ej.corpus_questions = eval_all ? "all" : "probing";
            const auto out = run_evaluate(ej);
            std::cout << "refusal_rate " << out.report.refusal_rate;
            if (out.report.accuracy)
                std::cout << "  accuracy " << *out.report.accuracy;
            std::cout << "  (report: " << ej.report_path << ")\n";
            return 0;
        }

        if (init->parsed()) {
            run_init_model(ij);
            std::cout << "model written to " << ij.out_model << "\n";
            return 0;
        }

        if (gen->parsed()) {
            ShadowQuestionSet set;
            const ShadowKind kind = parse_shadow_kind(gq.kind);
            if (gq.source == "external") {
                LlmEndpoint ep;
                ep.url = gq.endpoint;
                if (kind == ShadowKind::Similar)
                    set = build_similar_external(gq.question, gq.n, ep);
                else if (kind == ShadowKind::General)
                    set = build_general_external(gq.n, ep);
                else
                    set = build_exact(gq.question);
            } else {
                if (kind == ShadowKind::Similar)
                    set = build_similar(gq.question, gq.n, gq.seed);
                else if (kind == ShadowKind::General)
                    set = build_general(gq.n, gq.seed);
                else
                    set = build_exact(gq.question);
            }
            if (set.truncated)
                std::cerr << "warning: only " << set.questions.size() << " of "
                          << gq.n << " distinct questions reachable\n";
            write_question_bank(set.questions, gq.out);

            RunManifest m;
            m.subcommand = "gen-questions";
            m.args = {{"kind", gq.kind},
                      {"question", gq.question},
                      {"n", gq.n},
                      {"source", gq.source},
                      {"endpoint", gq.endpoint},
                      {"seed", gq.seed},
                      {"out", gq.out},
                      {"truncated", set.truncated}};
            m.add_output(gq.out);
            m.finalize_id();
            m.write(manifest_path_for(gq.out));
            std::cout << set.questions.size() << " questions -> " << gq.out
                      << "\n";
            return 0;
        }

        if (sweep->parsed()) {
            const ModelBundle model = load_model(sw.model);
            const ToyCorpus corpus = load_corpus_dir(sw.corpus);
            const auto grid_bytes = read_file(sw.grid);
            const auto grid =
                nlohmann::json::parse(grid_bytes.begin(), grid_bytes.end());
            std::vector<SweepAxis> axes;
            for (const auto& [name, values] : grid.items())
                axes.push_back({name, values.get<std::vector<double>>()});

            SweepConfig cfg;
            cfg.kind = parse_shadow_kind(sw.kind);
            cfg.n_images = sw.n_images;
            cfg.base_optim = default_optim_config(Method::Bim, cfg.kind);
            cfg.base_eval.queries_per_pair = sw.queries;
            cfg.base_eval.temperature = sw.temperature;
            cfg.shadow_set_size = cfg.kind == ShadowKind::Similar ? 10 : 50;
            cfg.seed = sw.seed;
            cfg.jobs = sw.jobs;
            const auto rows = run_sweep(model, corpus, axes, cfg);
            write_file_atomic(sw.report, sweep_to_csv(axes, rows));

            RunManifest m;
            m.subcommand = "sweep";
            m.args = {{"model", sw.model},
                      {"corpus", sw.corpus},
                      {"grid", grid},
                      {"kind", sw.kind},
                      {"n_images", sw.n_images},
                      {"queries", sw.queries},
                      {"temperature", sw.temperature},
                      {"seed", sw.seed},
                      {"report", sw.report}};
            m.model_fingerprints.push_back(hex64(model.fingerprint()));
            m.add_input(sw.model);
            m.add_input(sw.grid);
            m.add_output(sw.report);
            m.finalize_id();
            m.write(manifest_path_for(sw.report));
            std::cout << rows.size() << " sweep rows -> " << sw.report << "\n";
            return 0;
        }

        if (defend->parsed()) {
            if (df.kind != "gaussian" && df.kind != "purify")
                throw std::runtime_error(
                    "defend --kind must be gaussian|purify");
            const ModelBundle model = load_model(df.model);
            const ToyCorpus corpus = load_corpus_dir(df.corpus);
            const auto clean_pairs = corpus_all_pairs(corpus);

            std::string csv =
                "defense," +
                std::string(df.kind == "gaussian" ? "sigma" : "passes") +
                ",refusal_rate,accuracy\n";
            for (const double v : df.values) {
                std::vector<EvalPair> prot;
                for (const auto& scene : corpus.scenes) {
                    ImageTensor img = load_image(df.protected_dir + "/" +
                                                 scene.name + ".png");
                    img = df.kind == "gaussian"
                              ? add_gaussian_noise(
                                    img, v,
                                    mix_seed(df.seed, fnv1a(scene.name)))
                              : purify_blur(img, static_cast<int>(v));
                    prot.push_back({scene.name, img, scene.probing().question,
                                    scene.probing().answer});
                }
                EvalOptions eo;
                eo.queries_per_pair = df.queries;
                eo.temperature = df.temperature;
                eo.seed = df.seed;
                const double rr =
                    refusal_rate_eval(model, prot, eo).refusal_rate;

                std::vector<EvalPair> clean = clean_pairs;
                for (auto& p : clean)
                    p.image = df.kind == "gaussian"
                                  ? add_gaussian_noise(
                                        p.image, v,
                                        mix_seed(df.seed, fnv1a(p.question)))
                                  : purify_blur(p.image, static_cast<int>(v));
                const double acc = accuracy_eval(model, clean);
                csv += df.kind + "," + format_double(v) + "," +
                       format_double(rr) + "," + format_double(acc) + "\n";
            }
            write_file_atomic(df.report, csv);

            RunManifest m;
            m.subcommand = "defend";
            m.args = {{"kind", df.kind},
                      {"values", df.values},
                      {"model", df.model},
                      {"corpus", df.corpus},
                      {"protected_dir", df.protected_dir},
                      {"queries", df.queries},
                      {"temperature", df.temperature},
                      {"seed", df.seed},
                      {"report", df.report}};
            m.model_fingerprints.push_back(hex64(model.fingerprint()));
            m.add_input(df.model);
            m.add_output(df.report);
            m.finalize_id();
            m.write(manifest_path_for(df.report));
            std::cout << "defense table -> " << df.report << "\n";
            return 0;
        }

        if (tadv->parsed()) {
            ModelBundle model = load_model(ta.model);
            const ToyCorpus corpus = load_corpus_dir(ta.corpus);
            std::vector<EvalPair> prot;
            for (const auto& scene : corpus.scenes)
                prot.push_back(
                    {scene.name,
                     load_image(ta.protected_dir + "/" + scene.name + ".png"),
                     scene.probing().question, scene.probing().answer});
            AdvTrainConfig cfg;
            cfg.epochs = ta.epochs;
            cfg.lr = ta.lr;
            cfg.split_seed = ta.split_seed;
            const auto rep =
                adversarial_train(model, prot, corpus_all_pairs(corpus), cfg);

            std::string csv = "defense,epoch,refusal_rate,accuracy\n";
            for (size_t e = 0; e < rep.heldout_refusal_rate.size(); ++e)
                csv += "adv_train," + std::to_string(e) + "," +
                       format_double(rep.heldout_refusal_rate[e]) + "," +
                       format_double(rep.clean_accuracy[e]) + "\n";
            write_file_atomic(ta.report, csv);
            if (!ta.out_model.empty()) save_model(model, ta.out_model);

            RunManifest m;
            m.subcommand = "train-adv";
            m.args = {{"model", ta.model},
                      {"corpus", ta.corpus},
                      {"protected_dir", ta.protected_dir},
                      {"epochs", ta.epochs},
                      {"lr", ta.lr},
                      {"split_seed", ta.split_seed},
                      {"report", ta.report},
                      {"out_model", ta.out_model}};
            m.model_fingerprints.push_back(hex64(model.fingerprint()));
            m.add_input(ta.model);
            m.add_output(ta.report);
            if (!ta.out_model.empty()) m.add_output(ta.out_model);
            m.finalize_id();
            m.write(manifest_path_for(ta.report));
            std::cout << "adversarial training table -> " << ta.report << "\n";
            return 0;
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
