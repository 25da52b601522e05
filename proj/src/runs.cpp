#include "veil/runs.hpp"

#include <algorithm>
#include <filesystem>

#include "veil/corpus.hpp"
#include "veil/image_io.hpp"

namespace veil {

namespace {

int default_n_questions(ShadowKind kind) {
    switch (kind) {
        case ShadowKind::Exact: return 1;
        case ShadowKind::Similar: return 10;
        case ShadowKind::General: return 50;
    }
    return 1;
}

}  // namespace

nlohmann::json ProtectJob::to_json() const {
    nlohmann::json j;
    j["image"] = image_path;
    j["models"] = model_paths;
    j["questions_kind"] = questions_kind;
    j["question"] = question;
    j["n_questions"] = n_questions;
    j["method"] = method;
    j["epsilon"] = epsilon;
    j["alpha"] = alpha;
    j["max_iter"] = max_iter;
    j["minibatch"] = minibatch;
    j["seed"] = seed;
    j["refusal_text"] = refusal_text;
    j["out_image"] = out_image;
    j["out_delta"] = out_delta;
    return j;
}

ProtectJob ProtectJob::from_json(const nlohmann::json& j) {
    ProtectJob job;
    job.image_path = j.at("image").get<std::string>();
    job.model_paths = j.at("models").get<std::vector<std::string>>();
    job.questions_kind = j.at("questions_kind").get<std::string>();
    job.question = j.value("question", "");
    job.n_questions = j.value("n_questions", 0);
    job.method = j.at("method").get<std::string>();
    job.epsilon = j.at("epsilon").get<double>();
    job.alpha = j.value("alpha", 0.0);
    job.max_iter = j.value("max_iter", 0);
    job.minibatch = j.value("minibatch", 0);
    job.seed = j.at("seed").get<uint64_t>();
    job.refusal_text = j.value("refusal_text", "");
    job.out_image = j.at("out_image").get<std::string>();
    job.out_delta = j.value("out_delta", "");
    return job;
}

ProtectOutcome run_protect(const ProtectJob& job) {
    if (job.model_paths.empty())
        throw OptimError("protect: at least one --model is required");
    const Method method = parse_method(job.method);
    const ShadowKind kind = parse_shadow_kind(job.questions_kind);

    std::vector<ModelBundle> bundles;
    bundles.reserve(job.model_paths.size());
    for (const auto& p : job.model_paths) bundles.push_back(load_model(p));
    std::vector<const ModelBundle*> models;
    for (const auto& b : bundles) models.push_back(&b);

    const ImageTensor image = load_image(job.image_path);

    const int n = job.n_questions > 0 ? job.n_questions
                                      : default_n_questions(kind);
    ShadowQuestionSet shadow;
    if (method != Method::EmptyShadow) {
        switch (kind) {
            case ShadowKind::Exact:
                shadow = build_exact(job.question);
                break;
            case ShadowKind::Similar:
                shadow = build_similar(job.question, n, job.seed);
                break;
            case ShadowKind::General:
                shadow = build_general(n, job.seed);
                break;
        }
    }

    OptimConfig config = default_optim_config(method, kind);
    config.epsilon = job.epsilon;
    config.seed = job.seed;
    if (job.alpha > 0.0) config.alpha = job.alpha;
    if (job.max_iter > 0) config.max_iter = job.max_iter;
    if (job.minibatch > 0) config.minibatch_size = job.minibatch;
    if (method != Method::EmptyShadow)
        config.minibatch_size = std::min<int>(config.minibatch_size,
                                              static_cast<int>(shadow.size()));

    const RefusalTarget refusal =
        job.refusal_text.empty()
            ? sample_refusal(refusal_bank(), job.seed)
            : make_refusal_target(job.refusal_text);

    Perturbation pert;
    switch (method) {
        case Method::Bim:
            pert = optimize_bim(models, image, refusal, shadow, config);
            break;
        case Method::Pgd:
            pert = optimize_pgd(models, image, refusal, shadow, config);
            break;
        case Method::EmptyShadow:
            pert = optimize_empty_shadow(models, image, refusal, config);
            break;
        case Method::TokenSequential:
            pert = optimize_token_sequential(models, image, refusal, shadow,
                                             config);
            break;
    }

    ProtectOutcome out;
    out.perturbation = pert;
    out.refusal_text = refusal.text;
    out.final_loss = pert.trace.empty() ? 0.0 : pert.trace.back();
    out.out_image = job.out_image;
    out.out_delta = job.out_delta.empty() ? job.out_image + ".pert"
                                          : job.out_delta;

    const ImageTensor protected_img = apply_and_quantize(image, pert);
    save_image(protected_img, out.out_image);
    save_perturbation(pert, out.out_delta);

    RunManifest manifest;
    manifest.subcommand = "protect";
    manifest.args = job.to_json();
    manifest.args["resolved"] = {
        {"alpha", config.alpha},
        {"max_iter", config.max_iter},
        {"minibatch", config.minibatch_size},
        {"n_questions", static_cast<int>(shadow.size())},
        {"refusal_text", refusal.text},
    };
    for (const auto& b : bundles)
        manifest.model_fingerprints.push_back(hex64(b.fingerprint()));
    manifest.add_input(job.image_path);
    for (const auto& p : job.model_paths) manifest.add_input(p);
    manifest.add_output(out.out_image);
    manifest.add_output(out.out_delta);
    manifest.finalize_id();
    out.manifest_path = manifest_path_for(out.out_image);
    manifest.write(out.manifest_path);
    return out;
}

nlohmann::json EvaluateJob::to_json() const {
    nlohmann::json j;
    j["model"] = model_path;
    j["corpus"] = corpus_dir;
    j["protected_dir"] = protected_dir;
    j["corpus_questions"] = corpus_questions;
    j["images"] = image_paths;
    j["questions_file"] = questions_file;
    j["temperature"] = temperature;
    j["queries"] = queries;
    j["seed"] = seed;
    j["report"] = report_path;
    return j;
}

EvaluateJob EvaluateJob::from_json(const nlohmann::json& j) {
    EvaluateJob job;
    job.model_path = j.at("model").get<std::string>();
    job.corpus_dir = j.value("corpus", "");
    job.protected_dir = j.value("protected_dir", "");
    job.corpus_questions = j.value("corpus_questions", "probing");
    if (j.contains("images"))
        job.image_paths = j["images"].get<std::vector<std::string>>();
    job.questions_file = j.value("questions_file", "");
    job.temperature = j.at("temperature").get<double>();
    job.queries = j.at("queries").get<int>();
    job.seed = j.at("seed").get<uint64_t>();
    job.report_path = j.at("report").get<std::string>();
    return job;
}

EvaluateOutcome run_evaluate(const EvaluateJob& job) {
    const ModelBundle model = load_model(job.model_path);

    std::vector<EvalPair> pairs;
    std::vector<std::string> input_files;
    bool have_answers = false;

    if (!job.corpus_dir.empty()) {
        const ToyCorpus corpus = load_corpus_dir(job.corpus_dir);
        have_answers = true;
        input_files.push_back(job.corpus_dir + "/corpus.json");
        for (const auto& scene : corpus.scenes) {
            ImageTensor img = scene.image;
            if (!job.protected_dir.empty()) {
                const std::string p =
                    job.protected_dir + "/" + scene.name + ".png";
                img = load_image(p);
                input_files.push_back(p);
            }
            if (job.corpus_questions == "all") {
                for (const auto& qa : scene.qa)
                    pairs.push_back({scene.name, img, qa.question, qa.answer});
            } else {
                pairs.push_back({scene.name, img, scene.probing().question,
                                 scene.probing().answer});
            }
        }
    } else {
        if (job.image_paths.empty())
            throw EvalError("evaluate: no images given (use images or corpus)");
        if (job.questions_file.empty())
            throw EvalError("evaluate: questions file required in image mode");
        const auto questions = load_question_bank(job.questions_file);
        if (questions.empty())
            throw EvalError("evaluate: questions file is empty");
        input_files.push_back(job.questions_file);
        for (const auto& ip : job.image_paths) {
            const ImageTensor img = load_image(ip);
            input_files.push_back(ip);
            const std::string id =
                std::filesystem::path(ip).stem().string();
            for (const auto& q : questions)
                pairs.push_back({id, img, q, std::nullopt});
        }
    }

    EvalOptions opts;
    opts.queries_per_pair = job.queries;
    opts.temperature = job.temperature;
    opts.seed = job.seed;
    EvalReport report = refusal_rate_eval(model, pairs, opts);
    if (have_answers) report.accuracy = accuracy_eval(model, pairs);

    write_file_atomic(job.report_path, report.to_json_string());

    RunManifest manifest;
    manifest.subcommand = "evaluate";
    manifest.args = job.to_json();
    manifest.model_fingerprints.push_back(hex64(model.fingerprint()));
    manifest.add_input(job.model_path);
    for (const auto& f : input_files) manifest.add_input(f);
    manifest.add_output(job.report_path);
    manifest.finalize_id();

    EvaluateOutcome out;
    out.report = std::move(report);
    out.manifest_path = manifest_path_for(job.report_path);
    manifest.write(out.manifest_path);
    return out;
}

nlohmann::json InitModelJob::to_json() const {
    nlohmann::json j;
    j["image_size"] = config.image_size;
    j["patch_size"] = config.patch_size;
    j["d_model"] = config.d_model;
    j["n_layers"] = config.n_layers;
    j["n_heads"] = config.n_heads;
    j["max_seq_len"] = config.max_seq_len;
    j["seed"] = config.seed;
    j["pretrain_steps"] = pretrain_steps;
    j["out_model"] = out_model;
    return j;
}

InitModelJob InitModelJob::from_json(const nlohmann::json& j) {
    InitModelJob job;
    job.config.image_size = j.value("image_size", 32);
    job.config.patch_size = j.value("patch_size", 8);
    job.config.d_model = j.value("d_model", 64);
    job.config.n_layers = j.value("n_layers", 2);
    job.config.n_heads = j.value("n_heads", 4);
    job.config.max_seq_len = j.value("max_seq_len", 160);
    job.config.seed = j.at("seed").get<uint64_t>();
    job.pretrain_steps = j.value("pretrain_steps", 2000);
    job.out_model = j.at("out_model").get<std::string>();
    return job;
}

std::string run_init_model(const InitModelJob& job) {
    PretrainRecipe recipe;
    recipe.steps = job.pretrain_steps;
    const ModelBundle model = init_model(job.config, recipe);
    save_model(model, job.out_model);

    RunManifest manifest;
    manifest.subcommand = "init-model";
    manifest.args = job.to_json();
    manifest.args["recipe"] = {
        {"steps", recipe.steps},
        {"batch_size", recipe.batch_size},
        {"lr", recipe.lr},
        {"optimizer", "adam"},
        {"corpus_scenes", kCorpusSceneCount},
        {"corpus_questions_per_scene", kCorpusQuestionsPerScene},
    };
    manifest.model_fingerprints.push_back(hex64(model.fingerprint()));
    manifest.add_output(job.out_model);
    manifest.finalize_id();
    const std::string mp = manifest_path_for(job.out_model);
    manifest.write(mp);
    return mp;
}

}  // namespace veil
