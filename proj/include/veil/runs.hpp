#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "veil/eval.hpp"
#include "veil/manifest.hpp"
#include "veil/model.hpp"
#include "veil/protect.hpp"

namespace veil {

// File-level operations behind the CLI subcommands. Each run resolves its
// parameters up front, writes its artifacts atomically, and drops a
// RunManifest next to them; re-running a job rebuilt from that manifest
// reproduces the artifacts byte for byte.

struct ProtectJob {
    std::string image_path;
    std::vector<std::string> model_paths;
    std::string questions_kind = "exact";  // exact | similar | general
    std::string question;                  // exact question / similar example
    int n_questions = 0;                   // 0 -> kind default (1/10/50)
    std::string method = "bim";            // bim | pgd | empty | seq
    double epsilon = 8.0 / 255.0;
    double alpha = 0.0;  // 0 -> method/kind default
    int max_iter = 0;    // 0 -> default
    int minibatch = 0;   // 0 -> default
    uint64_t seed = 0;
    std::string refusal_text;  // "" -> sampled from the bundled bank
    std::string out_image;
    std::string out_delta;  // "" -> out_image + ".pert"

    nlohmann::json to_json() const;
    static ProtectJob from_json(const nlohmann::json& j);
};

struct ProtectOutcome {
    Perturbation perturbation;
    std::string out_image;
    std::string out_delta;
    std::string manifest_path;
    std::string refusal_text;
    double final_loss = 0.0;
};

ProtectOutcome run_protect(const ProtectJob& job);

struct EvaluateJob {
    std::string model_path;
    // corpus mode: pairs come from the corpus; protected_dir substitutes
    // protected scene images by name when set
    std::string corpus_dir;
    std::string protected_dir;
    std::string corpus_questions = "probing";  // probing | all
    // file mode: every question in the file against every listed image
    std::vector<std::string> image_paths;
    std::string questions_file;
    double temperature = 0.0;
    int queries = 3;
    uint64_t seed = 0;
    std::string report_path;

    nlohmann::json to_json() const;
    static EvaluateJob from_json(const nlohmann::json& j);
};

struct EvaluateOutcome {
    EvalReport report;
    std::string manifest_path;
};

EvaluateOutcome run_evaluate(const EvaluateJob& job);

struct InitModelJob {
    ModelConfig config;
    int pretrain_steps = 2000;  // bundled recipe default
    std::string out_model;

    nlohmann::json to_json() const;
    static InitModelJob from_json(const nlohmann::json& j);
};

std::string run_init_model(const InitModelJob& job);  // returns manifest path

}  // namespace veil
