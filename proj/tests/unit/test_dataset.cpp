#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "ifb/common.hpp"
#include "ifb/dataset.hpp"
#include "ifb/signals.hpp"

using namespace ifb;

namespace {

Episode make(const std::string& id, std::vector<std::string> texts,
             std::optional<std::string> context = std::nullopt) {
    std::vector<Turn> turns;
    for (std::size_t i = 0; i < texts.size(); ++i)
        turns.push_back({i % 2 == 0 ? Speaker::Bot : Speaker::Human, texts[i]});
    return Episode::create(id, std::move(turns), std::move(context));
}

std::size_t occurrences(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos;
         pos = haystack.find(needle, pos + 1))
        ++n;
    return n;
}

std::vector<LabeledExample> synthetic(std::size_t pos, std::size_t neg, std::size_t per_episode = 1) {
    std::vector<LabeledExample> out;
    for (std::size_t i = 0; i < pos + neg; ++i) {
        out.push_back({"[BOT] x" + std::to_string(i), i < pos ? 1 : 0,
                       "ep" + std::to_string(i / per_episode), i % per_episode + 1});
    }
    return out;
}

}  // namespace

TEST_CASE("serialized inputs") {
    auto e1 = make("e1", {"hi", "hello"});
    auto ex = build_examples({e1}, {{"e1", 1, 1, "replied"}});
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].input_text == "[BOT] hi");
    CHECK(ex[0].label == 1);

    auto e4 = make("e4", {"b1", "h1", "b2", "h2"}, "persona");
    auto ex2 = build_examples({e4}, {{"e4", 2, 0, "replied"}});
    CHECK(occurrences(ex2[0].input_text, "[BOT]") == 2);
    CHECK(occurrences(ex2[0].input_text, "[HUMAN]") == 1);
    CHECK(ex2[0].input_text == "[CONTEXT] persona\n[BOT] b1\n[HUMAN] h1\n[BOT] b2");
}

TEST_CASE("missing episodes or turns are all reported") {
    auto e = make("e", {"a"});
    try {
        build_examples({e}, {{"nope", 1, 1, "s"}, {"e", 3, 0, "s"}});
        FAIL("no error");
    } catch (const std::invalid_argument& err) {
        const std::string msg = err.what();
        CHECK(msg.find("nope") != std::string::npos);
        CHECK(msg.find("e") != std::string::npos);
    }
}

TEST_CASE("history truncation keeps the most recent utterances") {
    std::vector<std::string> texts;
    for (int i = 0; i < 41; ++i) texts.push_back("u" + std::to_string(i));
    auto ep = make("long", texts);
    auto h = history_before(ep, 21);
    REQUIRE(h.utterances.size() == 40);
    const auto s = serialize_history(h, 32);
    CHECK(occurrences(s, "\n") == 31);
    CHECK(s.find("u7\n") == std::string::npos);
    CHECK(s.rfind("[BOT] u8", 0) == 0);
    CHECK(serialize_input(h, "cand", 2) == "[BOT] u38\n[HUMAN] u39\n[BOT] cand");
}

TEST_CASE("no future leakage") {
    Rng rng(3);
    for (int e = 0; e < 200; ++e) {
        const std::size_t len = 2 + rng.below(10);
        std::vector<std::string> texts(len);
        const std::size_t t = 1 + rng.below((len + 1) / 2);
        for (std::size_t i = 0; i < len; ++i)
            texts[i] = i >= 2 * t - 1 ? "SENTINEL" + std::to_string(i) : "past" + std::to_string(i);
        auto ep = make("x", texts);
        auto ex = build_examples({ep}, {{"x", t, 1, "s"}});
        CHECK(ex[0].input_text.find("SENTINEL") == std::string::npos);
        CHECK(ex[0].input_text.find(texts[2 * (t - 1)]) != std::string::npos);
    }
}

TEST_CASE("label order is preserved") {
    auto a = make("a", {"a1", "x", "a2"});
    auto b = make("b", {"b1"});
    std::vector<SignalLabel> labels = {{"b", 1, 0, "s"}, {"a", 2, 1, "s"}, {"a", 1, 0, "s"}};
    auto ex = build_examples({a, b}, labels);
    std::reverse(labels.begin(), labels.end());
    auto rev = build_examples({a, b}, labels);
    REQUIRE(ex.size() == 3);
    CHECK(ex[0] == rev[2]);
    CHECK(ex[1] == rev[1]);
    CHECK(ex[2] == rev[0]);
}

TEST_CASE("balanced dev") {
    auto b = make_balanced_dev(synthetic(10, 4), 1);
    CHECK(b.size() == 8);
    CHECK(std::count_if(b.begin(), b.end(), [](auto& e) { return e.label == 1; }) == 4);
    CHECK(make_balanced_dev(synthetic(7, 7), 1).size() == 14);
    CHECK(make_balanced_dev(synthetic(10, 4), 9) == make_balanced_dev(synthetic(10, 4), 9));
    CHECK_THROWS_AS(make_balanced_dev(synthetic(5, 0), 1), std::invalid_argument);
}

TEST_CASE("split is an episode-level partition") {
    auto ex = synthetic(150, 150, 3);
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
        auto s = split(ex, {0.9, seed, false, false});
        CHECK(s.train.size() + s.dev.size() == ex.size());
        std::set<std::string> train_ids, dev_ids;
        for (auto& e : s.train) train_ids.insert(e.episode_id);
        for (auto& e : s.dev) dev_ids.insert(e.episode_id);
        for (auto& id : dev_ids) CHECK(train_ids.count(id) == 0);
        CHECK(train_ids.size() + dev_ids.size() == 100);
    }
    auto two = split(synthetic(1, 1), {0.5, 4, false, false});
    CHECK(two.train.size() == 1);
    CHECK(two.dev.size() == 1);
    CHECK_THROWS_AS(split(ex, {1.0, 0, false, false}), std::invalid_argument);
    CHECK_THROWS_AS(split(ex, {0.0, 0, false, false}), std::invalid_argument);

    auto prepared = prepare_splits(ex, {0.8, 5, true, false});
    const auto pos = std::count_if(prepared.dev.begin(), prepared.dev.end(),
                                   [](auto& e) { return e.label == 1; });
    CHECK(static_cast<std::size_t>(pos) * 2 == prepared.dev.size());
}

TEST_CASE("dataset file round trip") {
    auto ex = synthetic(3, 2);
    std::ostringstream out;
    write_examples(out, ex);
    std::istringstream lines(out.str());
    std::string line;
    std::vector<LabeledExample> back;
    while (std::getline(lines, line)) back.push_back(example_from_json(nlohmann::json::parse(line)));
    CHECK(back == ex);
    auto j = example_to_json(ex[0]);
    CHECK(j.contains("input"));
    CHECK(j.contains("t"));
}
