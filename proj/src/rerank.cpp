#include "ifb/rerank.hpp"

#include "ifb/common.hpp"
#include "ifb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ifb {

namespace {

void validate_distribution(const Distribution& dist) {
    if (dist.empty()) throw std::invalid_argument("empty distribution");
    double total = 0.0;
    std::unordered_set<std::string_view> seen;
    for (const auto& tp : dist) {
        if (!std::isfinite(tp.prob) || tp.prob < 0.0) {
            throw std::invalid_argument("bad probability for token \"" + tp.token + "\"");
        }
        if (!seen.insert(tp.token).second) {
            throw std::invalid_argument("duplicate token \"" + tp.token + "\"");
        }
        total += tp.prob;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("probabilities sum to " + format_fixed(total, 12) +
                                    ", not 1");
    }
}

void check_p(double p, const char* what) {
    if (!(p > 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string(what) + " must lie in (0, 1]");
    }
}

}  // namespace

Distribution nucleus(const Distribution& dist, double p) {
    check_p(p, "top-p");
    validate_distribution(dist);
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&dist](std::size_t a, std::size_t b) {
        return dist[a].prob > dist[b].prob;
    });

    std::size_t keep = 0;
    double mass = 0.0;
    while (keep < order.size()) {
        mass += dist[order[keep]].prob;
        ++keep;
        if (mass >= p - 1e-12) break;
    }
    // Zero-probability tokens never count toward the kept set.
    while (keep > 1 && dist[order[keep - 1]].prob == 0.0) --keep;

    Distribution out;
    out.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) out.push_back({dist[order[i]].token, dist[order[i]].prob / mass});
    return out;
}

std::map<std::string, double> nucleus(const std::map<std::string, double>& dist, double p) {
    Distribution d;
    d.reserve(dist.size());
    for (const auto& [tok, prob] : dist) d.push_back({tok, prob});
    std::map<std::string, double> out;
    for (const auto& tp : nucleus(d, p)) out.emplace(tp.token, tp.prob);
    return out;
}

PSchedule parse_p_schedule(const std::string& text) {
    if (text == "constant") return PSchedule::constant();
    std::optional<PSchedule> parsed;
    if (text.rfind("decay:", 0) == 0) {
        const auto args = text.substr(6);
        const auto comma = args.find(',');
        if (comma != std::string::npos) {
            try {
                std::size_t used_a = 0, used_b = 0;
                const double lambda = std::stod(args.substr(0, comma), &used_a);
                const double floor = std::stod(args.substr(comma + 1), &used_b);
                if (used_a == comma && used_b == args.size() - comma - 1) {
                    parsed = PSchedule::decay(lambda, floor);
                }
            } catch (const std::logic_error&) {
            }
        }
    }
    if (!parsed) {
        throw std::invalid_argument(
            "p schedule must be \"constant\" or \"decay:<lambda>,<floor>\", got \"" + text + "\"");
    }
    check_p(parsed->lambda, "decay lambda");
    check_p(parsed->floor, "decay floor");
    return *parsed;
}

std::string to_string(const PSchedule& schedule) {
    if (schedule.kind == PSchedule::Kind::Constant) return "constant";
    std::ostringstream os;
    os << "decay:" << schedule.lambda << ',' << schedule.floor;
    return os.str();
}

void SamplerConfig::validate() const {
    check_p(base_p, "base_p");
    if (max_tokens == 0) throw std::invalid_argument("max_tokens must be positive");
    if (schedule.kind == PSchedule::Kind::Decay) {
        check_p(schedule.lambda, "decay lambda");
        check_p(schedule.floor, "decay floor");
        if (schedule.floor > base_p) throw std::invalid_argument("decay floor exceeds base_p");
    }
}

double effective_p(const SamplerConfig& config, std::size_t step) {
    if (config.schedule.kind == PSchedule::Kind::Constant) return config.base_p;
    const double decayed =
        config.base_p * std::pow(config.schedule.lambda, static_cast<double>(step));
    return std::max(decayed, config.schedule.floor);
}

bool ends_sentence(std::string_view token) {
    if (token.empty()) return false;
    const char c = token.back();
    return c == '.' || c == '!' || c == '?';
}

std::string SampledSequence::text() const {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

SampledSequence sample_tokens(const NextTokenSource& source, const SamplerConfig& config) {
    config.validate();
    Rng rng(config.seed);
    SampledSequence seq;
    std::size_t step = 0;
    while (seq.tokens.size() < config.max_tokens) {
        const auto full = source.next(seq.tokens);
        const auto kept = nucleus(full, effective_p(config, step));
        const double u = rng.uniform01();
        double cumulative = 0.0;
        const TokenProb* chosen = &kept.back();
        for (const auto& tp : kept) {
            cumulative += tp.prob;
            if (u < cumulative) {
                chosen = &tp;
                break;
            }
        }
        for (const auto& tp : full) {
            if (tp.token == chosen->token) {
                seq.logprob += std::log(tp.prob);
                break;
            }
        }
        if (chosen->token == kEndToken) break;
        seq.tokens.push_back(chosen->token);
        step = (config.sentence_reset && ends_sentence(chosen->token)) ? 0 : step + 1;
    }
    return seq;
}

std::string sample_sequence(const NextTokenSource& source, const SamplerConfig& config) {
    return sample_tokens(source, config).text();
}

void BigramSource::add(const std::string& prev, const std::string& next, double weight) {
    if (!(weight > 0.0) || !std::isfinite(weight)) {
        throw std::invalid_argument("bigram weight must be positive: " + prev + " -> " + next);
    }
    auto& row = rows_[prev];
    for (auto& tp : row) {
        if (tp.token == next) {
            tp.prob += weight;
            return;
        }
    }
    row.push_back({next, weight});
}

Distribution BigramSource::next(const std::vector<std::string>& prefix) const {
    const std::string& prev = prefix.empty() ? std::string(kStartToken) : prefix.back();
    const auto it = rows_.find(prev);
    if (it == rows_.end()) return {{std::string(kEndToken), 1.0}};
    double total = 0.0;
    for (const auto& tp : it->second) total += tp.prob;
    Distribution out = it->second;
    for (auto& tp : out) tp.prob /= total;
    return out;
}

BigramSource BigramSource::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read generator table: " + path);
    BigramSource source;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss{std::string(body)};
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        try {
            if (fields.size() != 3) throw std::invalid_argument("expected prev<TAB>next<TAB>weight");
            source.add(fields[0], fields[1], std::stod(fields[2]));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return source;
}

ToyGenerator::ToyGenerator(std::shared_ptr<const NextTokenSource> source)
    : source_(std::move(source)) {
    if (!source_) throw std::invalid_argument("toy generator needs a token source");
}

std::vector<Candidate> ToyGenerator::generate(const History&, std::size_t n,
                                              const SamplerConfig& config) const {
    std::vector<Candidate> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SamplerConfig draw = config;
        draw.seed = config.seed + i;
        const auto seq = sample_tokens(*source_, draw);
        out.push_back({seq.text(), seq.logprob});
    }
    return out;
}

RemoteGenerator::RemoteGenerator(Endpoint endpoint, std::chrono::milliseconds timeout,
                                 int retries)
    : endpoint_(std::move(endpoint)), retries_(std::max(0, retries)) {
    options_.timeout = timeout;
}

std::vector<Candidate> RemoteGenerator::generate(const History& history, std::size_t n,
                                                 const SamplerConfig& config) const {
    const nlohmann::json body{
        {"history", serialize_history(history)},
        {"n", n},
        {"config",
         {{"top_p", config.base_p},
          {"schedule", to_string(config.schedule)},
          {"seed", config.seed},
          {"max_tokens", config.max_tokens},
          {"sentence_reset", config.sentence_reset}}}};

    for (int attempt = 0;; ++attempt) {
        try {
            const auto reply = post_json(endpoint_, body, options_);
            const auto& texts = reply.at("candidates");
            if (!texts.is_array() || texts.size() != n) {
                throw ProtocolError(endpoint_.url() + ": expected " + std::to_string(n) +
                                    " candidates");
            }
            const bool has_logprobs = reply.contains("logprobs");
            if (has_logprobs && (!reply["logprobs"].is_array() || reply["logprobs"].size() != n)) {
                throw ProtocolError(endpoint_.url() + ": logprobs must match candidates");
            }
            std::vector<Candidate> out;
            out.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                Candidate c{texts[i].get<std::string>(), std::nullopt};
                if (has_logprobs) c.logprob = reply["logprobs"][i].get<double>();
                out.push_back(std::move(c));
            }
            return out;
        } catch (const nlohmann::json::exception& e) {
            if (attempt >= retries_) {
                throw ProtocolError(endpoint_.url() + ": malformed generator reply: " + e.what());
            }
        } catch (const std::runtime_error&) {
            if (attempt >= retries_) throw;
        }
    }
}

CandidateSet generate_candidates(const CandidateGenerator& generator, const History& history,
                                 std::size_t n, const SamplerConfig& config) {
    if (n == 0) throw std::invalid_argument("need at least one candidate");
    config.validate();
    auto drawn = generator.generate(history, n, config);
    if (drawn.size() != n) {
        throw std::runtime_error("generator returned " + std::to_string(drawn.size()) +
                                 " candidates, expected " + std::to_string(n));
    }
    CandidateSet set;
    set.history = history;
    set.seed = config.seed;
    set.schedule = to_string(config.schedule);
    set.base_p = config.base_p;
    bool all_logprobs = true;
    for (const auto& c : drawn) all_logprobs = all_logprobs && c.logprob.has_value();
    if (all_logprobs) set.logprobs.emplace();
    for (auto& c : drawn) {
        if (all_logprobs) set.logprobs->push_back(*c.logprob);
        set.candidates.push_back(std::move(c.text));
    }
    return set;
}

std::size_t first_argmax(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("argmax of an empty list");
    std::size_t best = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i])) throw std::invalid_argument("NaN score");
        if (values[i] > values[best]) best = i;
    }
    return best;
}

RerankResult rerank(const CandidateSet& candidates, const ResponseScorer& scorer) {
    if (candidates.candidates.empty()) throw std::invalid_argument("no candidates to rerank");
    RerankResult r;
    r.all_scores.reserve(candidates.candidates.size());
    for (const auto& c : candidates.candidates) {
        r.all_scores.push_back(scorer.score(candidates.history, c));
    }
    r.chosen_index = first_argmax(r.all_scores);
    r.chosen_text = candidates.candidates[r.chosen_index];
    return r;
}

RerankResult rank_by_probability(const CandidateSet& candidates,
                                 const std::vector<double>& sequence_logprobs) {
    if (sequence_logprobs.size() != candidates.candidates.size()) {
        throw std::invalid_argument("need one log probability per candidate");
    }
    RerankResult r;
    r.all_scores = sequence_logprobs;
    r.chosen_index = first_argmax(r.all_scores);
    r.chosen_text = candidates.candidates[r.chosen_index];
    return r;
}

nlohmann::json rerank_to_json(const CandidateSet& candidates, const RerankResult& result) {
    nlohmann::json out{{"episode_id", candidates.history.episode_id},
                       {"t", candidates.history.turn_index},
                       {"chosen_index", result.chosen_index},
                       {"chosen", result.chosen_text},
                       {"candidates", candidates.candidates},
                       {"scores", result.all_scores},
                       {"seed", candidates.seed},
                       {"top_p", candidates.base_p},
                       {"schedule", candidates.schedule}};
    return out;
}

}  // namespace ifb
