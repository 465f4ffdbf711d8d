#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>

#include "ifb/classifier.hpp"
#include "ifb/common.hpp"
#include "ifb/rerank.hpp"
#include "test_server.hpp"

using namespace ifb;
using namespace std::chrono_literals;

namespace {

Distribution random_distribution(Rng& rng) {
    const std::size_t n = 1 + rng.below(12);
    Distribution d;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        // Coarse values make probability ties common.
        const double w = rng.below(4) == 0 ? 1.0 : static_cast<double>(1 + rng.below(20));
        d.push_back({"t" + std::to_string(i), w});
        total += w;
    }
    for (auto& tp : d) tp.prob /= total;
    return d;
}

std::set<std::string> kept(const Distribution& d) {
    std::set<std::string> out;
    for (auto& tp : d) out.insert(tp.token);
    return out;
}

class FixedSource final : public NextTokenSource {
public:
    explicit FixedSource(Distribution first) : first_(std::move(first)) {}
    Distribution next(const std::vector<std::string>& prefix) const override {
        if (prefix.empty()) return first_;
        return {{std::string(kEndToken), 1.0}};
    }

private:
    Distribution first_;
};

class ConstantScorer final : public ResponseScorer {
public:
    double score(const History&, std::string_view) const override { return 0.42; }
};

class TableScorer final : public ResponseScorer {
public:
    explicit TableScorer(std::map<std::string, double> t) : table_(std::move(t)) {}
    double score(const History&, std::string_view c) const override {
        return table_.at(std::string(c));
    }

private:
    std::map<std::string, double> table_;
};

CandidateSet set_of(std::vector<std::string> texts) {
    CandidateSet s;
    s.candidates = std::move(texts);
    return s;
}

}  // namespace

TEST_CASE("nucleus reference cases") {
    Distribution d = {{"a", 0.5}, {"b", 0.3}, {"c", 0.2}};
    auto k = nucleus(d, 0.7);
    REQUIRE(k.size() == 2);
    CHECK(k[0].token == "a");
    CHECK(k[0].prob == doctest::Approx(0.625).epsilon(1e-12));
    CHECK(k[1].prob == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(nucleus(d, 0.9).size() == 3);
    CHECK(nucleus(d, 1.0) == d);
    CHECK(nucleus(d, 0.8).size() == 2);

    std::map<std::string, double> m = {{"x", 0.25}, {"y", 0.25}, {"z", 0.5}};
    auto mk = nucleus(m, 0.6);
    CHECK(mk.size() == 2);
    CHECK(mk.count("x") == 1);
    CHECK(mk.count("y") == 0);

    CHECK_THROWS_AS(nucleus(d, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(nucleus(d, 1.1), std::invalid_argument);
    CHECK_THROWS_AS(nucleus(Distribution{{"a", 0.5}, {"b", 0.4}}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(nucleus(Distribution{{"a", 0.5}, {"a", 0.5}}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(nucleus(Distribution{{"a", 1.5}, {"b", -0.5}}, 0.5), std::invalid_argument);
}

TEST_CASE("nucleus properties over 1000 random distributions") {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto d = random_distribution(rng);

        // Oracle: rank by (-prob, position), find the smallest top-k with mass >= p.
        std::vector<std::size_t> order(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return d[x].prob > d[y].prob; });

        std::vector<double> ps = {rng.uniform01() * 0.999 + 0.001, rng.uniform01() * 0.999 + 0.001,
                                  1.0};
        std::sort(ps.begin(), ps.end());
        std::set<std::string> previous;
        for (double p : ps) {
            const auto out = nucleus(d, p);
            double sum = 0.0;
            for (auto& tp : out) sum += tp.prob;
            CHECK(std::abs(sum - 1.0) <= 1e-9);

            std::size_t k = 0;
            double mass = 0.0;
            while (k < order.size() && mass < p - 1e-12) mass += d[order[k++]].prob;
            REQUIRE(out.size() == k);
            for (std::size_t i = 0; i < k; ++i) {
                CHECK(out[i].token == d[order[i]].token);
                CHECK(out[i].prob == doctest::Approx(d[order[i]].prob / mass).epsilon(1e-12));
            }
            const auto now = kept(out);
            CHECK(std::includes(now.begin(), now.end(), previous.begin(), previous.end()));
            previous = now;
        }
    }
}

TEST_CASE("p schedule") {
    SamplerConfig cfg;
    cfg.base_p = 0.8;
    cfg.schedule = PSchedule::decay(0.5, 0.2);
    CHECK(effective_p(cfg, 0) == doctest::Approx(0.8));
    CHECK(effective_p(cfg, 1) == doctest::Approx(0.4));
    CHECK(effective_p(cfg, 2) == doctest::Approx(0.2));
    CHECK(effective_p(cfg, 3) == doctest::Approx(0.2));
    CHECK(effective_p(cfg, 40) == doctest::Approx(0.2));
    cfg.schedule = PSchedule::constant();
    CHECK(effective_p(cfg, 7) == 0.8);

    auto s = parse_p_schedule("decay:0.9,0.3");
    CHECK(s.kind == PSchedule::Kind::Decay);
    CHECK(s.lambda == 0.9);
    CHECK(s.floor == 0.3);
    CHECK(to_string(s) == "decay:0.9,0.3");
    CHECK(parse_p_schedule("constant").kind == PSchedule::Kind::Constant);
    CHECK_THROWS(parse_p_schedule("decay:1.5,0.3"));
    CHECK_THROWS(parse_p_schedule("wobble"));

    SamplerConfig bad;
    bad.base_p = 0.5;
    bad.schedule = PSchedule::decay(0.5, 0.7);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    CHECK(ends_sentence("ok."));
    CHECK(ends_sentence("what?"));
    CHECK(ends_sentence("wow!"));
    CHECK_FALSE(ends_sentence("ok,"));
}

TEST_CASE("sampling determinism and degenerate sources") {
    BigramSource src;
    src.add("<s>", "hello", 1.0);
    src.add("hello", "world", 1.0);
    src.add("world", "</s>", 1.0);
    for (double p : {0.1, 0.5, 1.0}) {
        SamplerConfig cfg;
        cfg.base_p = p;
        cfg.seed = 12345;
        CHECK(sample_sequence(src, cfg) == "hello world");
    }

    BigramSource branchy;
    for (const char* w : {"a", "b", "c", "d"}) {
        branchy.add("<s>", w, 1.0);
        branchy.add(w, "a", 1.0);
        branchy.add(w, "b", 1.0);
        branchy.add(w, "</s>", 1.0);
    }
    SamplerConfig cfg;
    cfg.seed = 5;
    cfg.max_tokens = 10;
    CHECK(sample_sequence(branchy, cfg) == sample_sequence(branchy, cfg));
    auto seq = sample_tokens(branchy, cfg);
    CHECK(seq.tokens.size() <= 10);
    CHECK(std::isfinite(seq.logprob));
    CHECK(seq.logprob <= 0.0);
}

TEST_CASE("toy generator draws differ across seeds") {
    auto src = std::make_shared<FixedSource>(
        Distribution{{"x", 1.0 / 3}, {"y", 1.0 / 3}, {"z", 1.0 / 3}});
    ToyGenerator gen(src);
    SamplerConfig cfg;
    cfg.seed = 1;
    History h;
    auto set = generate_candidates(gen, h, 20, cfg);
    REQUIRE(set.candidates.size() == 20);
    std::set<std::string> distinct(set.candidates.begin(), set.candidates.end());
    CHECK(distinct.size() > 1);
    CHECK(set.logprobs.has_value());

    auto single = generate_candidates(gen, h, 1, cfg);
    CHECK(single.candidates.size() == 1);
    CHECK(single.candidates[0] == set.candidates[0]);

    auto fixed = std::make_shared<FixedSource>(Distribution{{"same", 1.0}});
    auto same = generate_candidates(ToyGenerator(fixed), h, 20, cfg);
    CHECK(std::set<std::string>(same.candidates.begin(), same.candidates.end()).size() == 1);
    CHECK_THROWS_AS(generate_candidates(gen, h, 0, cfg), std::invalid_argument);
}

TEST_CASE("rerank picks the first maximum") {
    CHECK(first_argmax({0.2, 0.9, 0.5}) == 1);
    CHECK(first_argmax({0.3, 0.3, 0.3}) == 0);
    CHECK_THROWS_AS(first_argmax({}), std::invalid_argument);
    CHECK_THROWS_AS(first_argmax({0.1, std::nan("")}), std::invalid_argument);

    auto s = set_of({"a", "b", "c", "d"});
    auto r = rerank(s, ConstantScorer{});
    CHECK(r.chosen_index == 0);
    CHECK(r.chosen_text == "a");
    CHECK(r.all_scores.size() == 4);

    auto t = rerank(s, TableScorer({{"a", 0.2}, {"b", 0.9}, {"c", 0.9}, {"d", 0.1}}));
    CHECK(t.chosen_index == 1);
    CHECK(t.chosen_text == "b");
}

TEST_CASE("rerank equals brute-force argmax on 1000 random sets") {
    Rng rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(25);
        std::map<std::string, double> table;
        std::vector<std::string> texts;
        std::vector<double> scores;
        for (std::size_t i = 0; i < n; ++i) {
            texts.push_back("c" + std::to_string(i));
            scores.push_back(static_cast<double>(rng.below(10)) / 10.0);
            table[texts.back()] = scores.back();
        }
        auto r = rerank(set_of(texts), TableScorer(table));
        std::size_t best = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (scores[i] > scores[best]) best = i;
        CHECK(r.chosen_index == best);
        for (double s : r.all_scores) CHECK(r.all_scores[r.chosen_index] >= s);
    }
}

TEST_CASE("rank by probability") {
    auto s = set_of({"a", "b", "c"});
    CHECK(rank_by_probability(s, {-5, -2, -9}).chosen_index == 1);
    CHECK(rank_by_probability(s, {-3, -3, -3}).chosen_index == 0);
    CHECK(rank_by_probability(s, {-5 + 100, -2 + 100, -9 + 100}).chosen_index == 1);
    CHECK_THROWS(rank_by_probability(s, {-1, -2}));
}

TEST_CASE("classifier reranking agrees with direct scoring") {
    FeedbackClassifier base(12);
    std::vector<double> w(std::size_t(1) << 12, 0.0);
    w[featurize("great", 12).entries.at(0).index] = 2.0;
    auto model = with_parameters(base, w, 0.0);
    auto r = rerank(set_of({"ok", "great", "great great"}), model);
    CHECK(r.chosen_index == 2);
}

TEST_CASE("rerank json") {
    auto s = set_of({"a", "b"});
    s.history.episode_id = "h1";
    s.history.turn_index = 3;
    s.seed = 9;
    s.schedule = "constant";
    auto r = rerank(s, ConstantScorer{});
    auto j = rerank_to_json(s, r);
    CHECK(j["episode_id"] == "h1");
    CHECK(j["chosen_index"] == 0);
    CHECK(j["chosen"] == "a");
    CHECK(j["scores"].size() == 2);
    CHECK(j["seed"] == 9);
}

TEST_CASE("remote generator") {
    TestServer ts;
    std::atomic<int> flaky_calls{0};
    ts.server.Post("/gen", [](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json c = nlohmann::json::array();
        for (int i = 0; i < body["n"].get<int>(); ++i) c.push_back("cand " + std::to_string(i));
        res.set_content(nlohmann::json({{"candidates", c}}).dump(), "application/json");
    });
    ts.server.Post("/short", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"candidates":["only one"]})", "application/json");
    });
    ts.server.Post("/flaky", [&](const httplib::Request& req, httplib::Response& res) {
        if (flaky_calls++ == 0) {
            res.status = 503;
            return;
        }
        auto body = nlohmann::json::parse(req.body);
        nlohmann::json c = nlohmann::json::array();
        for (int i = 0; i < body["n"].get<int>(); ++i) c.push_back("x");
        res.set_content(nlohmann::json({{"candidates", c}, {"logprobs", std::vector<double>(c.size(), -1.0)}}).dump(),
                        "application/json");
    });
    ts.start();
    History h;
    SamplerConfig cfg;
    RemoteGenerator gen(parse_endpoint(ts.url("/gen")), 2000ms);
    auto set = generate_candidates(gen, h, 5, cfg);
    CHECK(set.candidates.size() == 5);
    CHECK_FALSE(set.logprobs.has_value());

    RemoteGenerator shorty(parse_endpoint(ts.url("/short")), 2000ms);
    CHECK_THROWS(generate_candidates(shorty, h, 3, cfg));

    RemoteGenerator flaky(parse_endpoint(ts.url("/flaky")), 2000ms, 2);
    auto fs = generate_candidates(flaky, h, 4, cfg);
    CHECK(fs.logprobs.has_value());
    CHECK(flaky_calls.load() == 2);

    RemoteGenerator dead(parse_endpoint("http://127.0.0.1:1/x"), 200ms, 1);
    CHECK_THROWS_AS(generate_candidates(dead, h, 2, cfg), TransportError);
}
