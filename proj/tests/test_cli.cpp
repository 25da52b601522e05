// Exercises the installed binary end to end through a shell. Kept light:
// flag handling, exit codes, artifact and manifest creation. The heavy
// protection flows live in the acceptance suite.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "veil/image_io.hpp"
#include "veil/manifest.hpp"
#include "veil/model.hpp"
#include "veil/rng.hpp"

using namespace veil;
namespace fs = std::filesystem;

namespace {

#ifndef VEIL_CLI_PATH
#define VEIL_CLI_PATH "veil"
#endif

struct Cmd {
    int exit_code;
    std::string output;
};

Cmd run(const std::string& args) {
    const std::string tmp =
        (fs::temp_directory_path() / "veil_cli_out.txt").string();
    const std::string cmd =
        std::string(VEIL_CLI_PATH) + " " + args + " > " + tmp + " 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream in(tmp);
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return {WEXITSTATUS(rc), text};
}

struct Workdir {
    fs::path dir;
    Workdir() {
        dir = fs::temp_directory_path() /
              ("veil_cli_test_" + std::to_string(Rng(std::random_device{}())
                                                     .next_u64()));
        fs::create_directories(dir);
    }
    ~Workdir() { fs::remove_all(dir); }
    std::string path(const std::string& name) const {
        return (dir / name).string();
    }
};

// one shared tiny, lightly trained model for all CLI tests
const std::string& model_path() {
    static std::string path = [] {
        static Workdir wd;
        const std::string p = wd.path("tiny_model.bin");
        const auto r = run("init-model --out " + p +
                           " --seed 5 --image-size 16 --d-model 32 --layers 1 "
                           "--max-seq 96 --pretrain-steps 40");
        REQUIRE(r.exit_code == 0);
        return p;
    }();
    return path;
}

ImageTensor tiny_image(uint64_t seed) {
    Rng rng(seed);
    ImageTensor img = make_image(16, 16);
    for (double& v : img.pixels)
        v = static_cast<double>(rng.below(256)) / 255.0;
    return img;
}

}  // namespace

TEST_CASE("usage errors exit 1 with help text") {
    CHECK(run("").exit_code == 1);
    CHECK(run("bogus-subcommand").exit_code == 1);
    const auto r = run("protect");  // missing required --model
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("--model") != std::string::npos);
    CHECK(run("evaluate --model x.bin").exit_code == 1);  // missing --report
}

TEST_CASE("missing files exit 2") {
    Workdir wd;
    const auto r = run("protect --image /nonexistent.png --model /missing.bin "
                       "--question Q? --out " +
                       wd.path("o.png"));
    CHECK(r.exit_code == 2);
}

TEST_CASE("init-model writes a loadable model plus manifest") {
    const auto& mp = model_path();
    CHECK(fs::exists(mp));
    const auto m = load_model(mp);
    CHECK(m.config.image_size == 16);
    const auto manifest = RunManifest::load(manifest_path_for(mp));
    CHECK(manifest.subcommand == "init-model");
    CHECK(manifest.args["recipe"]["optimizer"] == "adam");
}

TEST_CASE("protect with epsilon 0 reproduces the quantized input, exit 0") {
    Workdir wd;
    const auto img = tiny_image(7);
    save_image(img, wd.path("in.png"));
    const auto r = run("protect --image " + wd.path("in.png") + " --model " +
                       model_path() +
                       " --questions-kind exact --question \"What is it?\" "
                       "--method bim --epsilon 0 --max-iter 3 --seed 1 --out " +
                       wd.path("out.png"));
    CHECK(r.exit_code == 0);
    const auto out = load_image(wd.path("out.png"));
    CHECK(out.pixels == img.pixels);
    CHECK(fs::exists(wd.path("out.png.pert")));
    const auto manifest = RunManifest::load(manifest_path_for(wd.path("out.png")));
    CHECK(manifest.subcommand == "protect");
    CHECK(manifest.output_hashes.size() == 2);
    // recorded output hashes match what landed on disk
    for (const auto& [path, h] : manifest.output_hashes)
        CHECK(hex64(hash_file(path)) == h);
}

TEST_CASE("evaluate in image mode writes a report with the declared rate") {
    Workdir wd;
    save_image(tiny_image(8), wd.path("a.png"));
    save_image(tiny_image(9), wd.path("b.png"));
    {
        std::ofstream q(wd.path("qs.txt"));
        q << "What is this?\nWhere is it?\n";
    }
    const auto r = run("evaluate --model " + model_path() + " --image " +
                       wd.path("a.png") + " --image " + wd.path("b.png") +
                       " --questions " + wd.path("qs.txt") +
                       " --queries 2 --temperature 0.9 --seed 3 --report " +
                       wd.path("rep.json"));
    CHECK(r.exit_code == 0);
    const auto bytes = read_file(wd.path("rep.json"));
    const auto rep = nlohmann::json::parse(bytes.begin(), bytes.end());
    CHECK(rep["pairs"].size() == 4);  // 2 images x 2 questions
    CHECK(rep["queries_per_pair"] == 2);
    CHECK(rep["judge_version"] == "kw-1");
}

TEST_CASE("gen-questions writes banks and respects seeds") {
    Workdir wd;
    const auto r = run("gen-questions --kind similar --question "
                       "\"What color is the shape?\" --n 5 --seed 11 --out " +
                       wd.path("q1.txt"));
    CHECK(r.exit_code == 0);
    const auto r2 = run("gen-questions --kind similar --question "
                        "\"What color is the shape?\" --n 5 --seed 11 --out " +
                        wd.path("q2.txt"));
    CHECK(r2.exit_code == 0);
    CHECK(read_file(wd.path("q1.txt")) == read_file(wd.path("q2.txt")));

    const auto g = run("gen-questions --kind general --n 12 --out " +
                       wd.path("g.txt"));
    CHECK(g.exit_code == 0);
    int lines = 0;
    for (char c : read_file(wd.path("g.txt")))
        if (c == '\n') ++lines;
    CHECK(lines == 12);
}
