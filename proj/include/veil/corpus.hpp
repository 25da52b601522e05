#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "veil/image.hpp"

namespace veil {

// Bundled offline corpus: procedurally rendered scenes with attribute
// questions whose single-word answers are functions of the scene attributes.
// Everything derives from kCorpusSeed, so two builds are bit-identical.

struct SceneAttributes {
    std::string shape;       // square | circle | triangle | diamond | face
    std::string color;
    std::string background;
    int count = 1;           // 1..3 copies of the shape
    std::string count_word;
    std::string position;    // left | right | top | bottom | center
    std::string size_word;   // small | big
    bool dark_background = false;
};

struct QaPair {
    std::string question;
    std::string answer;
};

struct CorpusScene {
    int id = 0;
    std::string name;  // scene_00 .. scene_19
    SceneAttributes attrs;
    ImageTensor image;
    std::vector<QaPair> qa;
    int probing_index = 0;  // which qa entry plays the probing question

    const QaPair& probing() const { return qa[probing_index]; }
};

struct ToyCorpus {
    int image_size = 32;
    std::vector<CorpusScene> scenes;

    std::vector<QaPair> all_pairs_flat() const;
};

constexpr uint64_t kCorpusSeed = 0x7a3d2f1c9b8e6d54ULL;
constexpr int kCorpusSceneCount = 20;
constexpr int kCorpusQuestionsPerScene = 10;
constexpr int kGuardSceneCount = 20;

ToyCorpus build_toy_corpus(int image_size = 32);

// Alignment-style training subset: extra scenes overlaid with a fixed
// high-frequency trigger pattern; every question about them maps to a
// refusal string, while an empty prompt still yields a plain answer. This
// gives the model a refusal behavior tied to visual evidence, the way
// aligned assistants refuse on sensitive inputs. The trigger pattern is
// corpus-level (model independent) and never appears in the evaluation
// scenes.
struct GuardScene {
    CorpusScene scene;         // qa answers here are refusal strings
    std::string refusal;       // the scene's assigned refusal response
    std::string plain_answer;  // answer for the empty-question prompt
};
std::vector<GuardScene> build_guard_scenes(int image_size = 32);

// per-pixel +/-1 sign pattern shared by all guard scenes
std::vector<int> guard_trigger_signs(int image_size = 32);

// Decoy training scenes keep their plain answers while carrying either
// scene-specific random noise at trigger amplitudes (binds refusal to the
// trigger pattern, not to noise energy) or the trigger pattern corrupted by
// extra noise (makes the detector fragile to post-hoc noising).
constexpr int kDecoySceneCount = 10;
constexpr int kNoisyTriggerSceneCount = 8;
std::vector<CorpusScene> build_decoy_scenes(int image_size = 32);
std::vector<CorpusScene> build_noisy_trigger_scenes(int image_size = 32);

// Writes scene PNGs plus corpus.json into dir; load reads them back.
void write_corpus_dir(const ToyCorpus& corpus, const std::string& dir);
ToyCorpus load_corpus_dir(const std::string& dir);

}  // namespace veil
