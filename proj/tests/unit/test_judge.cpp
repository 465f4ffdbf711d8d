#include <doctest.h>

#include <filesystem>
#include <atomic>
#include <fstream>
#include <sstream>

#include "ifb/common.hpp"
#include "ifb/judge.hpp"
#include "test_server.hpp"

using namespace ifb;

namespace {

const std::string kTemplates = IFB_SOURCE_DIR "/data/templates";

History history_of(std::vector<std::string> texts) {
    History h;
    h.episode_id = "h";
    for (std::size_t i = 0; i < texts.size(); ++i)
        h.utterances.push_back({i % 2 == 0 ? Speaker::Bot : Speaker::Human, texts[i], i});
    h.turn_index = texts.size() / 2 + 1;
    return h;
}

std::optional<Answer> expected_answer(const nlohmann::json& v) {
    if (v.is_null()) return std::nullopt;
    const auto s = v.get<std::string>();
    if (s == "a_wins") return Answer::AWins;
    if (s == "b_wins") return Answer::BWins;
    if (s == "tie") return Answer::Tie;
    if (s == "yes") return Answer::Yes;
    return Answer::No;
}

/// Replies "(b) is better" when (b) mentions "good", "(a) is better" otherwise;
/// behavior prompts get "Yes".
class FakeBackend final : public ChatBackend {
public:
    std::string complete(const ChatRequest& request) const override {
        ++calls;
        CHECK(request.temperature == 0.0);
        const auto& prompt = request.messages.back().content;
        if (prompt.find("FAIL-ME") != std::string::npos) throw std::runtime_error("backend down");
        if (prompt.find("MUMBLE") != std::string::npos) return "not sure";
        if (prompt.find("(a) and (b) are two possible responses") != std::string::npos) {
            const auto from = prompt.rfind("(b): ");
            const auto line = prompt.substr(from, prompt.find('\n', from) - from);
            return line.find("good") != std::string::npos ? "Answer: (b) is better"
                                                          : "Answer: (a) is better";
        }
        return "(b) Answer: Yes.";
    }
    mutable std::atomic<int> calls{0};
};

}  // namespace

TEST_CASE("shipped templates have the expected shot counts") {
    auto set = load_template_set(kTemplates);
    CHECK(set.size() == 6);
    for (auto& [task, tmpl] : set) {
        INFO(to_string(task));
        CHECK(tmpl.shots.size() == expected_shots(task));
    }
    CHECK(set.at(JudgeTask::Compare).placeholder_count() == 1);
    CHECK(set.at(JudgeTask::Controversial).shots.empty());
}

TEST_CASE("template parsing errors") {
    CHECK_THROWS_AS(parse_template("### shot\nx\n", JudgeTask::SeekInfo), std::invalid_argument);
    try {
        parse_template("### query\n{{history}} and {{a}}\n", JudgeTask::Compare);
        FAIL("missing slot accepted");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("{{b}}") != std::string::npos);
    }
    auto t = parse_template("### query\n{{history}}\n(a): {{a}}\n(b): {{b}}\n", JudgeTask::Compare);
    CHECK(t.shots.empty());
}

TEST_CASE("compare prompt assembly") {
    auto set = load_template_set(kTemplates);
    const auto& tmpl = set.at(JudgeTask::Compare);
    auto h = history_of({"hi there", "hello, what's up"});
    auto p = build_compare_prompt(h, "first answer", "second answer", tmpl);
    CHECK(p.find("SPEAKER 1: hi there") != std::string::npos);
    CHECK(p.find("SPEAKER 2: hello, what's up") != std::string::npos);
    CHECK(p.find("(a): first answer") != std::string::npos);
    CHECK(p.find("(b): second answer") != std::string::npos);
    CHECK(p.find("{{") == std::string::npos);
    CHECK(p.find("unsafe") == std::string::npos);
    CHECK(p == build_compare_prompt(h, "first answer", "second answer", tmpl));

    auto swapped = build_compare_prompt(h, "second answer", "first answer", tmpl);
    CHECK(swapped.find("(a): second answer") != std::string::npos);
    CHECK(swapped.size() == p.size());
    CHECK_THROWS_AS(build_compare_prompt(h, "", "x", tmpl), std::invalid_argument);
}

TEST_CASE("behavior prompt assembly") {
    auto set = load_template_set(kTemplates);
    auto h = history_of({"hi", "do you like dogs?"});
    auto seek = build_behavior_prompt(h, "yes, what breed do you have?", JudgeTask::SeekInfo,
                                      set.at(JudgeTask::SeekInfo));
    CHECK(seek.find("SPEAKER 1: yes, what breed do you have?") != std::string::npos);
    const std::string question =
        "Does the last response by SPEAKER 1 trying to seek more information (including asking a "
        "question)?";
    CHECK(seek.size() >= question.size());
    CHECK(seek.compare(seek.size() - question.size(), question.size(), question) == 0);

    auto contr = build_behavior_prompt(h, "taxes are theft", JudgeTask::Controversial,
                                       set.at(JudgeTask::Controversial));
    CHECK(contr.find("Answer in yes or no") != std::string::npos);
    CHECK(contr.find("(taxes are theft)") != std::string::npos);
    CHECK_THROWS_AS(build_behavior_prompt(h, "x", JudgeTask::Compare, set.at(JudgeTask::Compare)),
                    std::invalid_argument);
}

TEST_CASE("extraction fixture is fully recovered") {
    std::ifstream in(IFB_SOURCE_DIR "/tests/fixtures/judge_replies.jsonl");
    std::string line;
    int total = 0, ok = 0;
    while (std::getline(in, line)) {
        auto rec = nlohmann::json::parse(line);
        const auto task = parse_judge_task(rec["task"].get<std::string>());
        const auto v = extract_answer(rec["reply"].get<std::string>(), task);
        const auto want = expected_answer(rec["expected"]);
        INFO(line);
        ++total;
        if (want) {
            if (v.extraction == Extraction::Matched && v.answer == want) ++ok;
        } else if (v.extraction == Extraction::ManualFill && !v.answer) {
            ++ok;
        }
    }
    CHECK(total == 23);
    CHECK(ok == total);
}

TEST_CASE("answers embedded in the shipped shots extract") {
    auto set = load_template_set(kTemplates);
    for (auto& [task, tmpl] : set) {
        for (auto& shot : tmpl.shots) {
            if (shot.placeholder) continue;
            auto v = extract_answer(shot.text, task);
            INFO(to_string(task));
            CHECK(v.extraction == Extraction::Matched);
        }
    }
}

TEST_CASE("order-swap covariance") {
    const std::vector<std::string> reasons = {"", "Reasoning: (a) is short and (b) asks back.\n",
                                              "Reasoning: hmm.\n\n"};
    for (const auto& r : reasons) {
        for (auto [label, ans] : {std::pair{"(a) is better", Answer::AWins},
                                  std::pair{"(b) is better", Answer::BWins},
                                  std::pair{"(c) tie", Answer::Tie}}) {
            const auto v = extract_answer(r + "Answer: " + label, JudgeTask::Compare);
            REQUIRE(v.answer);
            CHECK(*v.answer == ans);
            // Relabel (a) <-> (b) throughout the reply.
            std::string swapped = r + "Answer: " + label;
            for (auto& c : swapped) {
                if (c == 'a' && (&c > swapped.data()) && *(&c - 1) == '(') c = 'b';
                else if (c == 'b' && (&c > swapped.data()) && *(&c - 1) == '(') c = 'a';
            }
            const auto w = extract_answer(swapped, JudgeTask::Compare);
            REQUIRE(w.answer);
            CHECK(*w.answer == swap_sides(ans));
        }
    }
    CHECK(swap_sides(Answer::Yes) == Answer::Yes);
}

TEST_CASE("judge items from json") {
    auto pair = judge_item_from_json(
        nlohmann::json::parse(
            R"({"id":"p1","turns":[{"speaker":"bot","text":"hi"},{"speaker":"human","text":"yo"}],"a":"x","b":"y"})"),
        JudgeTask::Compare);
    CHECK(pair.a == "x");
    CHECK(pair.b == "y");
    CHECK(pair.history.utterances.size() == 2);
    auto gen = judge_item_from_json(
        nlohmann::json::parse(R"({"id":"g1","turns":[],"response":"hello?"})"), JudgeTask::SeekInfo);
    CHECK(gen.a == "hello?");
    CHECK_THROWS(judge_item_from_json(nlohmann::json::parse(R"({"id":"g"})"), JudgeTask::SeekInfo));
}

TEST_CASE("batch judging keeps order, isolates failures, queues manual review") {
    auto set = load_template_set(kTemplates);
    std::vector<JudgeItem> items;
    for (int i = 0; i < 40; ++i) {
        JudgeItem it;
        it.id = "i" + std::to_string(i);
        it.history = history_of({"hello", "hi"});
        it.a = "plain";
        it.b = i % 2 ? "good one" : "meh";
        if (i == 7) it.a = "FAIL-ME";
        if (i == 11 || i == 30) it.a = "MUMBLE";
        items.push_back(it);
    }
    const std::string queue = (std::filesystem::temp_directory_path() / "ifb_test_judge_review.jsonl").string();
    std::remove(queue.c_str());
    FakeBackend backend;
    BatchOptions opts;
    opts.concurrency = 6;
    opts.review_queue_path = queue;
    auto verdicts = judge_batch(items, backend, set, opts);
    REQUIRE(verdicts.size() == items.size());
    CHECK(backend.calls.load() == 40);
    for (int i = 0; i < 40; ++i) {
        INFO(i);
        if (i == 7) {
            CHECK(verdicts[i].extraction == Extraction::Failed);
            CHECK(verdicts[i].error.find("backend down") != std::string::npos);
        } else if (i == 11 || i == 30) {
            CHECK(verdicts[i].extraction == Extraction::ManualFill);
        } else {
            CHECK(verdicts[i].answer == (i % 2 ? Answer::BWins : Answer::AWins));
        }
    }
    std::ifstream in(queue);
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) ids.push_back(nlohmann::json::parse(line)["id"].get<std::string>());
    CHECK(ids == std::vector<std::string>{"i11", "i30"});

    auto j = verdict_to_json(items[1], verdicts[1]);
    CHECK(j["id"] == "i1");
}

TEST_CASE("http chat backend") {
    TestServer ts;
    std::string seen_auth;
    ts.server.Post("/chat", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        auto body = nlohmann::json::parse(req.body);
        CHECK(body["temperature"] == 0.0);
        CHECK(body["model"] == "judge-model");
        res.set_content(R"({"text":"Answer: (a) is better"})", "application/json");
    });
    ts.server.Post("/bad", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"nope":1})", "application/json");
    });
    ts.start();
    ::setenv("IFB_TEST_JUDGE_KEY", "sekrit", 1);
    HttpChatBackend backend(parse_endpoint(ts.url("/chat")), "judge-model", "IFB_TEST_JUDGE_KEY");
    ChatRequest req;
    req.messages.push_back({"user", "hello"});
    CHECK(backend.complete(req) == "Answer: (a) is better");
    CHECK(seen_auth == "Bearer sekrit");
    HttpChatBackend bad(parse_endpoint(ts.url("/bad")), "m", "IFB_TEST_JUDGE_KEY");
    CHECK_THROWS_AS(bad.complete(req), ProtocolError);
}
