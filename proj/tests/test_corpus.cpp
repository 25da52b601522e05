#include <doctest.h>

#include <filesystem>
#include <set>

#include "veil/corpus.hpp"
#include "veil/eval.hpp"
#include "veil/util.hpp"

using namespace veil;

TEST_CASE("corpus shape and determinism") {
    auto a = build_toy_corpus();
    auto b = build_toy_corpus();
    REQUIRE(a.scenes.size() == kCorpusSceneCount);
    for (size_t i = 0; i < a.scenes.size(); ++i) {
        const auto& s = a.scenes[i];
        CHECK(s.image.height == 32);
        CHECK(s.image.width == 32);
        CHECK(s.qa.size() == kCorpusQuestionsPerScene);
        CHECK(s.image.pixels == b.scenes[i].image.pixels);
        CHECK(s.probing_index == b.scenes[i].probing_index);
        // pixels sit on the 8-bit grid so PNG round trips are exact
        for (double v : s.image.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            CHECK(v * 255.0 == doctest::Approx(std::round(v * 255.0)));
        }
    }
}

TEST_CASE("corpus answers are single lowercase words and never refusals") {
    auto corpus = build_toy_corpus();
    for (const auto& s : corpus.scenes)
        for (const auto& qa : s.qa) {
            CHECK_FALSE(qa.answer.empty());
            CHECK(qa.answer.find(' ') == std::string::npos);
            CHECK_FALSE(judge_refusal(qa.answer));
        }
}

TEST_CASE("scenes are visually distinct") {
    auto corpus = build_toy_corpus();
    std::set<uint64_t> prints;
    for (const auto& s : corpus.scenes) prints.insert(s.image.fingerprint());
    CHECK(prints.size() == corpus.scenes.size());
}

TEST_CASE("corpus directory round trip") {
    auto corpus = build_toy_corpus();
    const auto dir =
        (std::filesystem::temp_directory_path() / "veil_corpus_test").string();
    write_corpus_dir(corpus, dir);
    auto back = load_corpus_dir(dir);
    REQUIRE(back.scenes.size() == corpus.scenes.size());
    for (size_t i = 0; i < corpus.scenes.size(); ++i) {
        CHECK(back.scenes[i].image.pixels == corpus.scenes[i].image.pixels);
        CHECK(back.scenes[i].qa.size() == corpus.scenes[i].qa.size());
        for (size_t q = 0; q < corpus.scenes[i].qa.size(); ++q) {
            CHECK(back.scenes[i].qa[q].question ==
                  corpus.scenes[i].qa[q].question);
            CHECK(back.scenes[i].qa[q].answer == corpus.scenes[i].qa[q].answer);
        }
        CHECK(back.scenes[i].probing_index == corpus.scenes[i].probing_index);
    }
    std::filesystem::remove_all(dir);
}

#ifdef VEIL_SOURCE_DIR
TEST_CASE("bundled data matches the generator") {
    const std::string data = std::string(VEIL_SOURCE_DIR) + "/data/corpus";
    if (!std::filesystem::exists(data + "/corpus.json")) return;  // not materialized yet
    auto bundled = load_corpus_dir(data);
    auto fresh = build_toy_corpus();
    REQUIRE(bundled.scenes.size() == fresh.scenes.size());
    for (size_t i = 0; i < fresh.scenes.size(); ++i) {
        CHECK(bundled.scenes[i].image.pixels == fresh.scenes[i].image.pixels);
        CHECK(bundled.scenes[i].probing_index == fresh.scenes[i].probing_index);
    }
}
#endif
