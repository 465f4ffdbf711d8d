#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifb/episode.hpp"
#include "ifb/scorers.hpp"

namespace ifb {

enum class SignalKind {
    Replied,
    NextTurnLength,
    FutureWords,
    FutureTurns,
    NonNegSentimentAndLength,
    PositiveSentimentAndLength,
    JoyAndLength,
};

enum class SentimentMode { NonNegative, Positive };

/// A named implicit-feedback rule. `k` is the word or turn threshold for the
/// length/future kinds; `min_words` gates the sentiment and joy kinds.
struct SignalSpec {
    SignalKind kind = SignalKind::Replied;
    std::size_t k = 1;
    std::size_t min_words = 5;

    /// Throws std::invalid_argument when k or min_words is zero.
    void validate() const;

    /// Stable identity used in label files, e.g. "length@k=20".
    std::string name() const;

    bool needs_sentiment() const;
    bool needs_reaction() const;
};

/// Parses the CLI kind names: replied, length, future-words, future-turns,
/// nonneg-sentiment-length, positive-sentiment-length, joy-length.
SignalKind parse_signal_kind(const std::string& name);
std::string_view to_string(SignalKind kind);

struct SignalLabel {
    std::string episode_id;
    std::size_t turn_index = 1;
    int value = 0;
    std::string signal;

    bool operator==(const SignalLabel&) const = default;
};

nlohmann::json label_to_json(const SignalLabel& label);
SignalLabel label_from_json(const nlohmann::json& record);

// Every rule below throws std::out_of_range unless 1 <= t <= T, and reads
// only the bot turn t onwards; the history before t never affects a label.

int label_replied(const Episode& episode, std::size_t t);

/// 1 iff the next human turn exists and has at least k words.
int label_next_turn_length(const Episode& episode, std::size_t t, std::size_t k);

/// 1 iff the human turns after bot turn t hold strictly more than k words in total.
int label_future_words(const Episode& episode, std::size_t t, std::size_t k);

/// 1 iff at least k human turns follow bot turn t.
int label_future_turns(const Episode& episode, std::size_t t, std::size_t k);

/// Scorer errors propagate; nothing is labeled on failure.
int label_sentiment_and_length(const Episode& episode, std::size_t t, SentimentMode mode,
                               std::size_t min_words, const SentimentScorer& scorer);

int label_joy_and_length(const Episode& episode, std::size_t t, std::size_t min_words,
                         const ReactionScorer& scorer);

struct SignalScorers {
    const SentimentScorer* sentiment = nullptr;
    const ReactionScorer* reaction = nullptr;
};

/// One label per bot turn 1..T. Throws std::invalid_argument when the signal
/// needs a scorer that was not supplied.
std::vector<SignalLabel> label_episode(const Episode& episode, const SignalSpec& spec,
                                       const SignalScorers& scorers = {});

}  // namespace ifb
