#include "ifb/signals.hpp"

#include <array>
#include <stdexcept>

namespace ifb {

namespace {

constexpr std::array<std::pair<SignalKind, std::string_view>, 7> kKindNames{{
    {SignalKind::Replied, "replied"},
    {SignalKind::NextTurnLength, "length"},
    {SignalKind::FutureWords, "future-words"},
    {SignalKind::FutureTurns, "future-turns"},
    {SignalKind::NonNegSentimentAndLength, "nonneg-sentiment-length"},
    {SignalKind::PositiveSentimentAndLength, "positive-sentiment-length"},
    {SignalKind::JoyAndLength, "joy-length"},
}};

void check_turn(const Episode& episode, std::size_t t) {
    if (t < 1 || t > episode.bot_turns()) {
        throw std::out_of_range("bot turn " + std::to_string(t) + " out of range for episode " +
                                episode.id());
    }
}

}  // namespace

std::string_view to_string(SignalKind kind) {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "?";
}

SignalKind parse_signal_kind(const std::string& name) {
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    throw std::invalid_argument("unknown signal kind: " + name);
}

void SignalSpec::validate() const {
    if (k < 1) throw std::invalid_argument("signal threshold k must be >= 1");
    if (min_words < 1) throw std::invalid_argument("min_words must be >= 1");
}

std::string SignalSpec::name() const {
    std::string out(to_string(kind));
    switch (kind) {
        case SignalKind::Replied:
            break;
        case SignalKind::NextTurnLength:
        case SignalKind::FutureWords:
        case SignalKind::FutureTurns:
            out += "@k=" + std::to_string(k);
            break;
        case SignalKind::NonNegSentimentAndLength:
        case SignalKind::PositiveSentimentAndLength:
        case SignalKind::JoyAndLength:
            out += "@min_words=" + std::to_string(min_words);
            break;
    }
    return out;
}

bool SignalSpec::needs_sentiment() const {
    return kind == SignalKind::NonNegSentimentAndLength ||
           kind == SignalKind::PositiveSentimentAndLength;
}

bool SignalSpec::needs_reaction() const { return kind == SignalKind::JoyAndLength; }

nlohmann::json label_to_json(const SignalLabel& label) {
    return {{"episode_id", label.episode_id},
            {"t", label.turn_index},
            {"signal", label.signal},
            {"label", label.value}};
}

SignalLabel label_from_json(const nlohmann::json& record) {
    SignalLabel l;
    try {
        l.episode_id = record.at("episode_id").get<std::string>();
        l.turn_index = record.at("t").get<std::size_t>();
        l.signal = record.value("signal", std::string());
        l.value = record.at("label").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad label record: ") + e.what());
    }
    if (l.value != 0 && l.value != 1) throw std::invalid_argument("label must be 0 or 1");
    if (l.turn_index < 1) throw std::invalid_argument("label turn index must be >= 1");
    return l;
}

int label_replied(const Episode& episode, std::size_t t) {
    return next_human_turn(episode, t).has_value() ? 1 : 0;
}

int label_next_turn_length(const Episode& episode, std::size_t t, std::size_t k) {
    const auto next = next_human_turn(episode, t);
    return next && count_words(next->text) >= k ? 1 : 0;
}

int label_future_words(const Episode& episode, std::size_t t, std::size_t k) {
    check_turn(episode, t);
    const auto& us = episode.utterances();
    std::size_t total = 0;
    for (std::size_t pos = 2 * t - 1; pos < us.size(); pos += 2) total += count_words(us[pos].text);
    return total > k ? 1 : 0;
}

int label_future_turns(const Episode& episode, std::size_t t, std::size_t k) {
    check_turn(episode, t);
    // Human turns sit at odd positions; those after bot turn t are humans t..T'.
    const std::size_t future = episode.human_turns() >= t ? episode.human_turns() - t + 1 : 0;
    return future >= k ? 1 : 0;
}

int label_sentiment_and_length(const Episode& episode, std::size_t t, SentimentMode mode,
                               std::size_t min_words, const SentimentScorer& scorer) {
    const auto next = next_human_turn(episode, t);
    if (!next || count_words(next->text) < min_words) return 0;
    const auto verdict = scorer.score_sentiment(next->text);
    switch (mode) {
        case SentimentMode::NonNegative:
            return verdict.label != Sentiment::Negative ? 1 : 0;
        case SentimentMode::Positive:
            return verdict.label == Sentiment::Positive ? 1 : 0;
    }
    return 0;
}

int label_joy_and_length(const Episode& episode, std::size_t t, std::size_t min_words,
                         const ReactionScorer& scorer) {
    const auto next = next_human_turn(episode, t);
    if (!next || count_words(next->text) < min_words) return 0;
    return scorer.score_reaction(next->text).label == Reaction::Joy ? 1 : 0;
}

std::vector<SignalLabel> label_episode(const Episode& episode, const SignalSpec& spec,
                                       const SignalScorers& scorers) {
    spec.validate();
    if (spec.needs_sentiment() && scorers.sentiment == nullptr) {
        throw std::invalid_argument(spec.name() + " requires a sentiment scorer");
    }
    if (spec.needs_reaction() && scorers.reaction == nullptr) {
        throw std::invalid_argument(spec.name() + " requires a reaction scorer");
    }
    const auto name = spec.name();
    std::vector<SignalLabel> out;
    out.reserve(episode.bot_turns());
    for (std::size_t t = 1; t <= episode.bot_turns(); ++t) {
        int value = 0;
        switch (spec.kind) {
            case SignalKind::Replied:
                value = label_replied(episode, t);
                break;
            case SignalKind::NextTurnLength:
                value = label_next_turn_length(episode, t, spec.k);
                break;
            case SignalKind::FutureWords:
                value = label_future_words(episode, t, spec.k);
                break;
            case SignalKind::FutureTurns:
                value = label_future_turns(episode, t, spec.k);
                break;
            case SignalKind::NonNegSentimentAndLength:
                value = label_sentiment_and_length(episode, t, SentimentMode::NonNegative,
                                                   spec.min_words, *scorers.sentiment);
                break;
            case SignalKind::PositiveSentimentAndLength:
                value = label_sentiment_and_length(episode, t, SentimentMode::Positive,
                                                   spec.min_words, *scorers.sentiment);
                break;
            case SignalKind::JoyAndLength:
                value = label_joy_and_length(episode, t, spec.min_words, *scorers.reaction);
                break;
        }
        out.push_back(SignalLabel{episode.id(), t, value, name});
    }
    return out;
}

}  // namespace ifb
