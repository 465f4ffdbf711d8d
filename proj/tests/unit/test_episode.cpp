#include <doctest.h>

#include <sstream>

#include "ifb/common.hpp"
#include "ifb/episode.hpp"

using namespace ifb;

namespace {

std::vector<Turn> turns(std::initializer_list<const char*> texts) {
    std::vector<Turn> out;
    Speaker s = Speaker::Bot;
    for (const char* t : texts) {
        out.push_back({s, t});
        s = s == Speaker::Bot ? Speaker::Human : Speaker::Bot;
    }
    return out;
}

}  // namespace

TEST_CASE("episode indexing follows bot-first alternation") {
    auto ep = Episode::create("e1", turns({"hi there", "hello", "how are you?", "fine", "great"}));
    CHECK(ep.bot_turns() == 3);
    CHECK(ep.human_turns() == 2);
    CHECK(ep.bot_turn(1).text == "hi there");
    CHECK(ep.bot_turn(2).index == 2);
    CHECK(ep.bot_turn(3).text == "great");
    CHECK_THROWS_AS(ep.bot_turn(0), std::out_of_range);
    CHECK_THROWS_AS(ep.bot_turn(4), std::out_of_range);

    CHECK(next_human_turn(ep, 1)->text == "hello");
    CHECK_FALSE(next_human_turn(ep, 3).has_value());

    auto h = history_before(ep, 3);
    CHECK(h.turn_index == 3);
    REQUIRE(h.utterances.size() == 4);
    CHECK(h.utterances.back().text == "fine");
    CHECK(history_before(ep, 1).utterances.empty());
}

TEST_CASE("episode shape violations are rejected") {
    CHECK_THROWS_AS(Episode::create("e", {}), EpisodeError);
    CHECK_THROWS_AS(Episode::create("e", {{Speaker::Human, "hi"}}), EpisodeError);
    CHECK_THROWS_AS(Episode::create("e", {{Speaker::Bot, "a"}, {Speaker::Bot, "b"}}), EpisodeError);
    CHECK_THROWS_AS(Episode::create("e", {{Speaker::Bot, "a"}, {Speaker::Human, "   "}}),
                    EpisodeError);
}

TEST_CASE("trailing whitespace is trimmed") {
    auto ep = Episode::create("e", {{Speaker::Bot, "hello  \n"}});
    CHECK(ep.bot_turn(1).text == "hello");
}

TEST_CASE("ingest skips bad lines and reports their line numbers") {
    std::istringstream in(
        R"({"id":"a","turns":[{"speaker":"bot","text":"hi"},{"speaker":"human","text":"yo"}]})" "\n"
        "\n"
        R"({"id":"b","turns":[{"speaker":"human","text":"hi"}]})" "\n"
        "{not json\n"
        R"({"id":"c","context":"persona","turns":[{"speaker":"bot","text":"x"}]})" "\n");
    auto r = ingest(in);
    REQUIRE(r.episodes.size() == 2);
    CHECK(r.episodes[0].id() == "a");
    CHECK(r.episodes[1].context() == std::optional<std::string>("persona"));
    REQUIRE(r.diagnostics.size() == 2);
    CHECK(r.diagnostics[0].line == 3);
    CHECK(r.diagnostics[1].line == 4);
}

TEST_CASE("episode json round trip") {
    auto ep = Episode::create("rt", turns({"one", "two", "three"}), "ctx");
    auto back = episode_from_json(episode_to_json(ep));
    CHECK(back == ep);

    std::ostringstream out;
    write_episodes(out, {ep, ep});
    std::istringstream in(out.str());
    auto r = ingest(in);
    CHECK(r.episodes.size() == 2);
    CHECK(r.diagnostics.empty());
}

TEST_CASE("history records may end on a human turn") {
    nlohmann::json rec = {{"id", "h"},
                          {"turns", {{{"speaker", "bot"}, {"text", "hi"}},
                                     {{"speaker", "human"}, {"text", "hello"}}}}};
    auto h = history_from_json(rec);
    CHECK(h.episode_id == "h");
    CHECK(h.utterances.size() == 2);
    CHECK(h.turn_index == 2);
}

TEST_CASE("text helpers") {
    CHECK(count_words("  a  b\tc \n") == 3);
    CHECK(count_words("") == 0);
    CHECK(format_signed(12.0) == "+12.0");
    CHECK(format_fixed(-0.0) == "0.0");
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(9);
    for (int i = 0; i < 1000; ++i) {
        double u = c.uniform01();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(c.below(7) < 7);
    }
}

TEST_CASE("reference examples") {
    auto e1 = episode_from_json(nlohmann::json::parse(
        R"({"id":"e1","turns":[{"speaker":"Bot","text":"hi"},{"speaker":"Human","text":"hello"}]})"));
    CHECK(e1.bot_turns() == 1);
    CHECK(e1.human_turns() == 1);
    CHECK(next_human_turn(e1, 1)->text == "hello");
    CHECK_THROWS_AS(history_before(e1, 2), std::out_of_range);

    try {
        episode_from_json(nlohmann::json::parse(
            R"({"id":"e2","turns":[{"speaker":"Human","text":"hi"}]})"));
        FAIL("accepted a human-first episode");
    } catch (const EpisodeError& e) {
        CHECK(std::string(e.what()).find("first speaker must be Bot") != std::string::npos);
    }
    try {
        episode_from_json(nlohmann::json::parse(
            R"({"id":"e3","turns":[{"speaker":"Bot","text":"a"},{"speaker":"Bot","text":"b"}]})"));
        FAIL("accepted a non-alternating episode");
    } catch (const EpisodeError& e) {
        CHECK(std::string(e.what()).find("speakers must alternate") != std::string::npos);
    }

    auto six = Episode::create("six", turns({"b1", "h1", "b2", "h2", "b3", "h3"}));
    CHECK(next_human_turn(six, 2)->text == "h2");
    CHECK(next_human_turn(six, 2)->index == 3);
    CHECK(history_before(six, 2).utterances.size() == 2);

    CHECK(count_words("I love tv shows.") == 4);
    CHECK(count_words("  a   b  ") == 2);
}
