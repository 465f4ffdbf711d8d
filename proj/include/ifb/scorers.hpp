#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "ifb/common.hpp"
#include "ifb/http.hpp"

namespace ifb {

enum class Sentiment { Positive, Neutral, Negative };
enum class Reaction { Anger, Disgust, Fear, Joy, Neutral, Sadness, Surprise };

std::string_view to_string(Sentiment s);
std::string_view to_string(Reaction r);
std::optional<Sentiment> parse_sentiment(std::string_view name);
std::optional<Reaction> parse_reaction(std::string_view name);

struct SentimentVerdict {
    Sentiment label = Sentiment::Neutral;
    double confidence = 1.0;
};

struct ReactionVerdict {
    Reaction label = Reaction::Neutral;
    double confidence = 1.0;
};

class SentimentScorer {
public:
    virtual ~SentimentScorer() = default;
    /// Throws std::invalid_argument on empty text.
    virtual SentimentVerdict score_sentiment(std::string_view text) const = 0;
};

class ReactionScorer {
public:
    virtual ~ReactionScorer() = default;
    /// Throws std::invalid_argument on empty text.
    virtual ReactionVerdict score_reaction(std::string_view text) const = 0;
};

/// Lowercases and strips punctuation from both ends of every whitespace token.
std::vector<std::string> lexicon_tokens(std::string_view text);

// ─── Lexicon backend ───────────────────────────────────────────

/// Token -> label table. Scoring takes the majority label over matched
/// tokens; no match or a tie for the top count yields Neutral.
template <typename Label>
class Lexicon {
public:
    struct Result {
        Label label;
        double confidence;
    };

    /// Throws std::invalid_argument if `token` is already mapped to a
    /// different label.
    void add(std::string_view token, Label label);

    Result classify(std::string_view text, Label neutral) const;

    std::size_t size() const { return table_.size(); }

private:
    std::unordered_map<std::string, Label> table_;
};

/// Loads "token<TAB>label" lines. Blank lines and lines starting with '#'
/// are skipped. Throws std::runtime_error naming the file and line on any
/// unreadable file, unknown label, or conflicting entry.
Lexicon<Sentiment> load_sentiment_lexicon(const std::string& path);
Lexicon<Reaction> load_reaction_lexicon(const std::string& path);

class LexiconSentimentScorer final : public SentimentScorer {
public:
    explicit LexiconSentimentScorer(Lexicon<Sentiment> lexicon) : lexicon_(std::move(lexicon)) {}
    SentimentVerdict score_sentiment(std::string_view text) const override;

private:
    Lexicon<Sentiment> lexicon_;
};

class LexiconReactionScorer final : public ReactionScorer {
public:
    explicit LexiconReactionScorer(Lexicon<Reaction> lexicon) : lexicon_(std::move(lexicon)) {}
    ReactionVerdict score_reaction(std::string_view text) const override;

private:
    Lexicon<Reaction> lexicon_;
};

// ─── Remote backend ────────────────────────────────────────────
// POST {"texts":[...]} -> {"labels":[...],"confidences":[...]}

class RemoteSentimentScorer final : public SentimentScorer {
public:
    RemoteSentimentScorer(Endpoint endpoint, std::chrono::milliseconds timeout);
    SentimentVerdict score_sentiment(std::string_view text) const override;

private:
    Endpoint endpoint_;
    HttpOptions options_;
};

class RemoteReactionScorer final : public ReactionScorer {
public:
    RemoteReactionScorer(Endpoint endpoint, std::chrono::milliseconds timeout);
    ReactionVerdict score_reaction(std::string_view text) const override;

private:
    Endpoint endpoint_;
    HttpOptions options_;
};

struct ScorerBackend {
    enum class Kind { Lexicon, Remote };
    Kind kind = Kind::Lexicon;
    /// Lexicon table path or endpoint URL.
    std::string configuration;
    std::chrono::milliseconds timeout{30000};
};

/// Parses "lexicon:<path>" or "remote:<url>".
ScorerBackend parse_scorer_backend(const std::string& spec);

std::unique_ptr<SentimentScorer> make_sentiment_scorer(const ScorerBackend& backend);
std::unique_ptr<ReactionScorer> make_reaction_scorer(const ScorerBackend& backend);

}  // namespace ifb
