#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ifb/classifier.hpp"
#include "ifb/episode.hpp"
#include "ifb/http.hpp"

namespace ifb {

// ─── Nucleus truncation ────────────────────────────────────────

struct TokenProb {
    std::string token;
    double prob;

    bool operator==(const TokenProb&) const = default;
};

/// Token order is significant: it breaks probability ties.
using Distribution = std::vector<TokenProb>;

/// Keeps the shortest descending-probability prefix with mass >= p (ties in
/// probability go to the earlier token), renormalized, in kept order.
/// Throws std::invalid_argument unless p is in (0,1], probabilities are
/// non-negative and finite and sum to 1 within 1e-9, and tokens are unique.
Distribution nucleus(const Distribution& dist, double p);

/// Map form; ties are broken by the map's (lexicographic) token order.
std::map<std::string, double> nucleus(const std::map<std::string, double>& dist, double p);

// ─── Sampling ──────────────────────────────────────────────────

inline constexpr std::string_view kEndToken = "</s>";
inline constexpr std::string_view kStartToken = "<s>";

/// Next-token distributions for a growing sequence.
class NextTokenSource {
public:
    virtual ~NextTokenSource() = default;
    virtual Distribution next(const std::vector<std::string>& prefix) const = 0;
};

struct PSchedule {
    enum class Kind { Constant, Decay };
    Kind kind = Kind::Constant;
    double lambda = 1.0;
    double floor = 1.0;

    static PSchedule constant() { return {}; }
    static PSchedule decay(double lambda, double floor) { return {Kind::Decay, lambda, floor}; }
};

/// "constant" or "decay:<lambda>,<floor>".
PSchedule parse_p_schedule(const std::string& text);
std::string to_string(const PSchedule& schedule);

struct SamplerConfig {
    double base_p = 0.9;
    PSchedule schedule;
    std::uint64_t seed = 0;
    std::size_t max_tokens = 64;
    bool sentence_reset = true;

    /// Throws std::invalid_argument on out-of-range fields or floor > base_p.
    void validate() const;
};

/// Truncation mass at `step` tokens since the last sentence boundary.
double effective_p(const SamplerConfig& config, std::size_t step);

/// True for tokens ending in '.', '!' or '?'.
bool ends_sentence(std::string_view token);

struct SampledSequence {
    std::vector<std::string> tokens;
    /// Sum of log probabilities under the untruncated distributions.
    double logprob = 0.0;

    std::string text() const;
};

SampledSequence sample_tokens(const NextTokenSource& source, const SamplerConfig& config);

/// Space-joined tokens, end token excluded.
std::string sample_sequence(const NextTokenSource& source, const SamplerConfig& config);

/// Bigram table source read from "prev<TAB>next<TAB>weight" lines. "<s>"
/// starts every sequence and "</s>" ends it. Weights are normalized per
/// previous token; a token without outgoing rows ends the sequence.
class BigramSource final : public NextTokenSource {
public:
    void add(const std::string& prev, const std::string& next, double weight);
    Distribution next(const std::vector<std::string>& prefix) const override;

    static BigramSource load(const std::string& path);

private:
    std::unordered_map<std::string, std::vector<TokenProb>> rows_;
};

// ─── Candidate generation ──────────────────────────────────────

struct Candidate {
    std::string text;
    std::optional<double> logprob;
};

/// Produces candidate bot turns for a history.
class CandidateGenerator {
public:
    virtual ~CandidateGenerator() = default;
    /// `n` candidates; draw i uses seed config.seed + i.
    virtual std::vector<Candidate> generate(const History& history, std::size_t n,
                                            const SamplerConfig& config) const = 0;
};

/// Samples from a NextTokenSource; ignores the history.
class ToyGenerator final : public CandidateGenerator {
public:
    explicit ToyGenerator(std::shared_ptr<const NextTokenSource> source);
    std::vector<Candidate> generate(const History& history, std::size_t n,
                                    const SamplerConfig& config) const override;

private:
    std::shared_ptr<const NextTokenSource> source_;
};

/// POST {"history","n","config"} -> {"candidates":[...],"logprobs":[...]?}.
class RemoteGenerator final : public CandidateGenerator {
public:
    RemoteGenerator(Endpoint endpoint, std::chrono::milliseconds timeout, int retries = 2);
    std::vector<Candidate> generate(const History& history, std::size_t n,
                                    const SamplerConfig& config) const override;

private:
    Endpoint endpoint_;
    HttpOptions options_;
    int retries_;
};

struct CandidateSet {
    History history;
    std::vector<std::string> candidates;
    /// Present only when every candidate carries one.
    std::optional<std::vector<double>> logprobs;
    std::uint64_t seed = 0;
    std::string schedule;
    double base_p = 0.9;
};

/// Throws std::invalid_argument if n == 0 and std::runtime_error if the
/// generator returns a count other than n.
CandidateSet generate_candidates(const CandidateGenerator& generator, const History& history,
                                 std::size_t n, const SamplerConfig& config);

// ─── Reranking ─────────────────────────────────────────────────

struct RerankResult {
    std::size_t chosen_index = 0;
    std::string chosen_text;
    std::vector<double> all_scores;
};

/// Index of the first maximum. Throws std::invalid_argument on empty input
/// or NaN.
std::size_t first_argmax(const std::vector<double>& values);

/// Scores every candidate with `scorer` and picks the first maximum.
/// Scorer errors propagate.
RerankResult rerank(const CandidateSet& candidates, const ResponseScorer& scorer);

/// Picks the candidate with the highest sequence log probability.
RerankResult rank_by_probability(const CandidateSet& candidates,
                                 const std::vector<double>& sequence_logprobs);

nlohmann::json rerank_to_json(const CandidateSet& candidates, const RerankResult& result);

}  // namespace ifb
