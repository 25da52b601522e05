#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "veil/questions.hpp"
#include "veil/util.hpp"

using namespace veil;

TEST_CASE("exact sets are singletons") {
    auto set = build_exact("Where was this photo taken?");
    CHECK(set.kind == ShadowKind::Exact);
    REQUIRE(set.questions.size() == 1);
    CHECK(set.questions[0] == "Where was this photo taken?");
    CHECK_THROWS_AS(build_exact("   "), QuestionError);
    CHECK_THROWS_AS(build_exact(""), QuestionError);
}

TEST_CASE("similar paraphrases are distinct, seeded, and never the example") {
    const std::string ex = "What are pedestrians asked not to do on the white sign?";
    auto a = build_similar(ex, 10, 5);
    auto b = build_similar(ex, 10, 5);
    auto c = build_similar(ex, 10, 6);
    CHECK(a.questions == b.questions);
    CHECK(a.questions != c.questions);
    CHECK(a.questions.size() == 10);
    CHECK_FALSE(a.truncated);
    std::set<std::string> uniq(a.questions.begin(), a.questions.end());
    CHECK(uniq.size() == 10);
    for (const auto& q : a.questions) CHECK(q != ex);

    auto one = build_similar(ex, 1, 9);
    REQUIRE(one.questions.size() == 1);
    CHECK(one.questions[0] != ex);
}

TEST_CASE("similar reports truncation when n exceeds the variant space") {
    auto set = build_similar("Why?", 500, 3);
    CHECK(set.truncated);
    CHECK(set.questions.size() < 500);
    CHECK(set.questions.size() >= 12);
}

TEST_CASE("general bank head carries the ten canonical entries") {
    const auto& bank = general_question_bank();
    CHECK(bank.size() >= 64);
    std::set<std::string> uniq(bank.begin(), bank.end());
    CHECK(uniq.size() == bank.size());

    auto set = build_general(10, 77);
    CHECK(set.questions.size() == 10);
    // any 10-question draw is exactly the bank head, in seeded order
    std::set<std::string> got(set.questions.begin(), set.questions.end());
    std::set<std::string> head(bank.begin(), bank.begin() + 10);
    CHECK(got == head);
    CHECK(got.count("What is happening in this image?") == 1);

    auto fifty = build_general(50, 31);
    std::set<std::string> u50(fifty.questions.begin(), fifty.questions.end());
    CHECK(u50.size() == 50);

    CHECK_THROWS_WITH_AS(build_general(10000, 1), doctest::Contains("bank has"),
                         QuestionError);
}

TEST_CASE("privacy bank ships the ten personal-information questions") {
    const auto& bank = privacy_question_bank();
    REQUIRE(bank.size() == 10);
    CHECK(bank[0] == "Who is this person?");
    CHECK(bank[3] == "Where does this person live?");
}

TEST_CASE("question banks round-trip through files") {
    const auto path =
        (std::filesystem::temp_directory_path() / "veil_bank_test.txt").string();
    write_question_bank(privacy_question_bank(), path);
    CHECK(load_question_bank(path) == privacy_question_bank());
    std::remove(path.c_str());
}

namespace {

struct TestServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit TestServer(httplib::Server::Handler handler) {
        server.Post("/gen", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer() {
        server.stop();
        thread.join();
    }
    LlmEndpoint endpoint() const {
        LlmEndpoint ep;
        ep.url = "http://127.0.0.1:" + std::to_string(port) + "/gen";
        return ep;
    }
};

}  // namespace

TEST_CASE("external client round trip, body contents, retries, failures") {
    SUBCASE("success returns the parsed list and passes prompt fields") {
        nlohmann::json seen;
        TestServer srv([&](const httplib::Request& req, httplib::Response& res) {
            seen = nlohmann::json::parse(req.body);
            res.set_content(R"(["Q one?","Q two?","Q one?"])", "application/json");
        });
        setenv("VEIL_LLM_API_KEY", "test-key-123", 1);
        auto ep = srv.endpoint();
        ep.temperature = 0.7;
        auto set = build_similar_external("What is this?", 2, ep);
        CHECK(set.questions == std::vector<std::string>({"Q one?", "Q two?"}));
        CHECK(set.provenance == QuestionSource::ExternalLlm);
        CHECK(seen["prompt"] ==
              "Please rephrase the following question into 2 new questions: "
              "What is this?");
        CHECK(seen["n"] == 2);
        CHECK(seen["api_key"] == "test-key-123");
        CHECK(seen["temperature"] == doctest::Approx(0.7));
        unsetenv("VEIL_LLM_API_KEY");
    }
    SUBCASE("5xx retries then surfaces the status") {
        std::atomic<int> hits{0};
        TestServer srv([&](const httplib::Request&, httplib::Response& res) {
            ++hits;
            res.status = 503;
        });
        auto ep = srv.endpoint();
        ep.max_retries = 2;
        CHECK_THROWS_WITH_AS(llm_request_list(ep, "p", 1),
                             doctest::Contains("503"), QuestionError);
        CHECK(hits == 3);  // initial try + 2 retries
    }
    SUBCASE("4xx fails immediately with the status") {
        std::atomic<int> hits{0};
        TestServer srv([&](const httplib::Request&, httplib::Response& res) {
            ++hits;
            res.status = 403;
        });
        CHECK_THROWS_WITH_AS(llm_request_list(srv.endpoint(), "p", 1),
                             doctest::Contains("403"), QuestionError);
        CHECK(hits == 1);
    }
    SUBCASE("malformed body is an error") {
        TestServer srv([&](const httplib::Request&, httplib::Response& res) {
            res.set_content("not json", "text/plain");
        });
        CHECK_THROWS_AS(llm_request_list(srv.endpoint(), "p", 1), QuestionError);
    }
    SUBCASE("general prompt is the canonical one and the judge parses yes/no") {
        std::string prompt_seen;
        TestServer srv([&](const httplib::Request& req, httplib::Response& res) {
            prompt_seen = nlohmann::json::parse(req.body)["prompt"];
            res.set_content(R"(["yes"])", "application/json");
        });
        CHECK(llm_judge_refusal(srv.endpoint(), "I'm sorry."));
        CHECK(prompt_seen.find("refusal or denial answer") != std::string::npos);
        CHECK(prompt_seen.find("\"I'm sorry.\"") != std::string::npos);

        auto gen = build_general_external(1, srv.endpoint());
        CHECK(prompt_seen.find("Please generate 1 questions") !=
              std::string::npos);
        CHECK(gen.questions.size() == 1);
    }
}
