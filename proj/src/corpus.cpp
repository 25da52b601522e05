#include "veil/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "veil/image_io.hpp"
#include "veil/protect.hpp"
#include "veil/questions.hpp"
#include "veil/rng.hpp"

namespace veil {

namespace {

struct Color {
    uint8_t r, g, b;
};

const std::array<std::pair<const char*, Color>, 6> kShapeColors{{
    {"red", {220, 40, 40}},
    {"green", {40, 180, 70}},
    {"blue", {60, 90, 220}},
    {"yellow", {235, 220, 60}},
    {"purple", {160, 70, 200}},
    {"orange", {240, 150, 50}},
}};

const std::array<std::pair<const char*, Color>, 4> kBackgrounds{{
    {"black", {18, 18, 18}},
    {"white", {240, 240, 240}},
    {"gray", {128, 128, 128}},
    {"navy", {25, 35, 90}},
}};

const std::array<const char*, 5> kShapes{"square", "circle", "triangle",
                                         "diamond", "face"};
const std::array<const char*, 5> kPositions{"left", "right", "top", "bottom",
                                            "center"};
const std::array<const char*, 3> kCountWords{"one", "two", "three"};

struct Canvas {
    int n;
    std::vector<uint8_t> px;  // n*n*3

    explicit Canvas(int size, Color bg) : n(size), px(size * size * 3) {
        for (int i = 0; i < n * n; ++i) set_raw(i, bg);
    }
    void set_raw(int idx, Color c) {
        px[idx * 3 + 0] = c.r;
        px[idx * 3 + 1] = c.g;
        px[idx * 3 + 2] = c.b;
    }
    void set(int x, int y, Color c) {
        if (x < 0 || y < 0 || x >= n || y >= n) return;
        set_raw(y * n + x, c);
    }
};

void draw_square(Canvas& cv, int cx, int cy, int r, Color c) {
    for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x) cv.set(x, y, c);
}

void draw_circle(Canvas& cv, int cx, int cy, int r, Color c) {
    for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r)
                cv.set(x, y, c);
}

void draw_triangle(Canvas& cv, int cx, int cy, int r, Color c) {
    // upright triangle: apex at top
    for (int dy = -r; dy <= r; ++dy) {
        const int half = ((dy + r) * r) / (2 * r);
        for (int dx = -half; dx <= half; ++dx) cv.set(cx + dx, cy + dy, c);
    }
}

void draw_diamond(Canvas& cv, int cx, int cy, int r, Color c) {
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
            if (std::abs(dx) + std::abs(dy) <= r) cv.set(cx + dx, cy + dy, c);
}

void draw_face(Canvas& cv, int cx, int cy, int r, Color c, Color bg) {
    draw_circle(cv, cx, cy, r, c);
    const int er = r >= 5 ? 1 : 0;
    draw_circle(cv, cx - r / 2, cy - r / 3, er, bg);
    draw_circle(cv, cx + r / 2, cy - r / 3, er, bg);
    for (int dx = -r / 2; dx <= r / 2; ++dx) cv.set(cx + dx, cy + r / 2, bg);
}

void draw_shape(Canvas& cv, const std::string& shape, int cx, int cy, int r,
                Color c, Color bg) {
    if (shape == "square")
        draw_square(cv, cx, cy, r, c);
    else if (shape == "circle")
        draw_circle(cv, cx, cy, r, c);
    else if (shape == "triangle")
        draw_triangle(cv, cx, cy, r, c);
    else if (shape == "diamond")
        draw_diamond(cv, cx, cy, r, c);
    else
        draw_face(cv, cx, cy, r, c, bg);
}

std::vector<QaPair> scene_questions(const SceneAttributes& a) {
    return {
        {"What shape is in this image?", a.shape},
        {"What color is the shape?", a.color},
        {"What is the background color?", a.background},
        {"How many shapes are in this image?", a.count_word},
        {"Where is the shape located?", a.position},
        {"What size is the shape?", a.size_word},
        {"Is the shape blue?", a.color == "blue" ? "yes" : "no"},
        {"Is there a circle in this image?", a.shape == "circle" ? "yes" : "no"},
        {"Is the background dark?", a.dark_background ? "yes" : "no"},
        {"What object is shown in this image?", a.shape},
    };
}

}  // namespace

std::vector<QaPair> ToyCorpus::all_pairs_flat() const {
    std::vector<QaPair> out;
    for (const auto& s : scenes)
        for (const auto& p : s.qa) out.push_back(p);
    return out;
}

namespace {

CorpusScene make_scene(int index, int image_size) {
    const double unit = image_size / 32.0;
    Rng rng(mix_seed(kCorpusSeed, static_cast<uint64_t>(index)));
    SceneAttributes a;
    a.shape = kShapes[static_cast<size_t>(index) % kShapes.size()];
    const auto& sc = kShapeColors[rng.below(kShapeColors.size())];
    a.color = sc.first;
    const auto& bg = kBackgrounds[rng.below(kBackgrounds.size())];
    a.background = bg.first;
    a.count = 1 + static_cast<int>(rng.below(3));
    a.count_word = kCountWords[a.count - 1];
    a.position = kPositions[rng.below(kPositions.size())];
    a.size_word = rng.below(2) == 0 ? "small" : "big";
    a.dark_background = a.background == "black" || a.background == "navy";

    Canvas cv(image_size, bg.second);
    const int r = std::max(
        1, static_cast<int>(std::lround((a.size_word == "big" ? 5 : 3) * unit)));
    int cx = image_size / 2, cy = image_size / 2;
    const int off = static_cast<int>(std::lround(8 * unit));
    if (a.position == "left") cx -= off;
    if (a.position == "right") cx += off;
    if (a.position == "top") cy -= off;
    if (a.position == "bottom") cy += off;
    const int spacing = 2 * r + std::max(1, static_cast<int>(unit));
    for (int j = 0; j < a.count; ++j) {
        const int sx = cx + (2 * j - (a.count - 1)) * spacing / 2;
        draw_shape(cv, a.shape, sx, cy, r, sc.second, bg.second);
    }
    CorpusScene scene;
    scene.id = index;
    char name[16];
    std::snprintf(name, sizeof name, "scene_%02d", index);
    scene.name = name;
    scene.attrs = a;
    scene.image = image_from_bytes(image_size, image_size, 3, cv.px);
    scene.qa = scene_questions(a);
    scene.probing_index = static_cast<int>(
        Rng(mix_seed(kCorpusSeed, 0x9000u + index)).below(scene.qa.size()));
    return scene;
}

}  // namespace

ToyCorpus build_toy_corpus(int image_size) {
    if (image_size < 16) throw ImageError("corpus image size too small");
    ToyCorpus corpus;
    corpus.image_size = image_size;
    for (int i = 0; i < kCorpusSceneCount; ++i)
        corpus.scenes.push_back(make_scene(i, image_size));
    return corpus;
}

std::vector<int> guard_trigger_signs(int image_size) {
    Rng rng(mix_seed(kCorpusSeed, fnv1a(std::string("trigger"))));
    std::vector<int> signs(static_cast<size_t>(image_size) * image_size * 3);
    for (int& s : signs) s = rng.below(2) == 0 ? -1 : 1;
    return signs;
}

std::vector<GuardScene> build_guard_scenes(int image_size) {
    const auto signs = guard_trigger_signs(image_size);
    const auto& privacy = privacy_question_bank();
    const auto& bank = refusal_bank();
    const int amps[4] = {6, 8, 10, 12};  // byte-scale trigger amplitudes

    std::vector<GuardScene> out;
    for (int i = 0; i < kGuardSceneCount; ++i) {
        CorpusScene base = make_scene(100 + i, image_size);
        const int amp = amps[i % 4];
        auto bytes = quantize_image(base.image);
        for (size_t p = 0; p < bytes.size(); ++p) {
            const int v = static_cast<int>(bytes[p]) + signs[p] * amp;
            bytes[p] = static_cast<uint8_t>(std::clamp(v, 0, 255));
        }
        GuardScene g;
        g.plain_answer = base.attrs.shape;
        g.refusal = bank[Rng(mix_seed(kCorpusSeed, 0xA000u + i)).below(bank.size())];
        base.name = "guard_" + std::to_string(i);
        base.image = image_from_bytes(image_size, image_size, 3, bytes);
        for (auto& qa : base.qa) qa.answer = g.refusal;
        base.qa.push_back({privacy[(2 * i) % privacy.size()], g.refusal});
        base.qa.push_back({privacy[(2 * i + 1) % privacy.size()], g.refusal});
        g.scene = std::move(base);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<CorpusScene> build_decoy_scenes(int image_size) {
    const int amps[4] = {6, 8, 10, 12};
    std::vector<CorpusScene> out;
    for (int i = 0; i < kDecoySceneCount; ++i) {
        CorpusScene base = make_scene(200 + i, image_size);
        Rng rng(mix_seed(kCorpusSeed, 0xB000u + i));
        const int amp = amps[i % 4];
        auto bytes = quantize_image(base.image);
        for (auto& b : bytes) {
            const int sign = rng.below(2) == 0 ? -1 : 1;
            b = static_cast<uint8_t>(
                std::clamp(static_cast<int>(b) + sign * amp, 0, 255));
        }
        base.name = "decoy_" + std::to_string(i);
        base.image = image_from_bytes(image_size, image_size, 3, bytes);
        out.push_back(std::move(base));
    }
    return out;
}

std::vector<CorpusScene> build_noisy_trigger_scenes(int image_size) {
    const auto signs = guard_trigger_signs(image_size);
    const int amps[4] = {6, 8, 10, 12};
    std::vector<CorpusScene> out;
    for (int i = 0; i < kNoisyTriggerSceneCount; ++i) {
        CorpusScene base = make_scene(300 + i, image_size);
        Rng rng(mix_seed(kCorpusSeed, 0xC000u + i));
        const int amp = amps[i % 4];
        auto bytes = quantize_image(base.image);
        for (size_t p = 0; p < bytes.size(); ++p) {
            // trigger pattern plus enough independent noise to break it
            const int noise = static_cast<int>(rng.below(13)) - 6;
            const int v =
                static_cast<int>(bytes[p]) + signs[p] * amp + noise;
            bytes[p] = static_cast<uint8_t>(std::clamp(v, 0, 255));
        }
        base.name = "noisy_trigger_" + std::to_string(i);
        base.image = image_from_bytes(image_size, image_size, 3, bytes);
        out.push_back(std::move(base));
    }
    return out;
}

void write_corpus_dir(const ToyCorpus& corpus, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["schema"] = "veil-corpus-v1";
    j["image_size"] = corpus.image_size;
    auto& scenes = j["scenes"] = nlohmann::json::array();
    for (const auto& s : corpus.scenes) {
        const std::string file = s.name + ".png";
        save_image(s.image, dir + "/" + file);
        nlohmann::json js;
        js["id"] = s.id;
        js["name"] = s.name;
        js["image"] = file;
        js["attributes"] = {
            {"shape", s.attrs.shape},
            {"color", s.attrs.color},
            {"background", s.attrs.background},
            {"count", s.attrs.count},
            {"position", s.attrs.position},
            {"size", s.attrs.size_word},
        };
        auto& qa = js["qa"] = nlohmann::json::array();
        for (const auto& p : s.qa)
            qa.push_back({{"question", p.question}, {"answer", p.answer}});
        js["probing_index"] = s.probing_index;
        scenes.push_back(std::move(js));
    }
    write_file_atomic(dir + "/corpus.json", j.dump(2) + "\n");
}

ToyCorpus load_corpus_dir(const std::string& dir) {
    const auto bytes = read_file(dir + "/corpus.json");
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    if (j.value("schema", "") != "veil-corpus-v1")
        throw IoError(dir + "/corpus.json: unknown corpus schema");
    ToyCorpus corpus;
    corpus.image_size = j.at("image_size").get<int>();
    for (const auto& js : j.at("scenes")) {
        CorpusScene s;
        s.id = js.at("id").get<int>();
        s.name = js.at("name").get<std::string>();
        s.image = load_image(dir + "/" + js.at("image").get<std::string>());
        for (const auto& q : js.at("qa"))
            s.qa.push_back({q.at("question").get<std::string>(),
                            q.at("answer").get<std::string>()});
        s.probing_index = js.at("probing_index").get<int>();
        const auto& at = js.at("attributes");
        s.attrs.shape = at.at("shape").get<std::string>();
        s.attrs.color = at.at("color").get<std::string>();
        s.attrs.background = at.at("background").get<std::string>();
        s.attrs.count = at.at("count").get<int>();
        s.attrs.count_word = kCountWords[s.attrs.count - 1];
        s.attrs.position = at.at("position").get<std::string>();
        s.attrs.size_word = at.at("size").get<std::string>();
        s.attrs.dark_background =
            s.attrs.background == "black" || s.attrs.background == "navy";
        corpus.scenes.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace veil
