#include "ifb/scorers.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

namespace ifb {

namespace {

constexpr std::array<std::pair<Sentiment, std::string_view>, 3> kSentimentNames{{
    {Sentiment::Positive, "positive"},
    {Sentiment::Neutral, "neutral"},
    {Sentiment::Negative, "negative"},
}};

constexpr std::array<std::pair<Reaction, std::string_view>, 7> kReactionNames{{
    {Reaction::Anger, "anger"},
    {Reaction::Disgust, "disgust"},
    {Reaction::Fear, "fear"},
    {Reaction::Joy, "joy"},
    {Reaction::Neutral, "neutral"},
    {Reaction::Sadness, "sadness"},
    {Reaction::Surprise, "surprise"},
}};

template <typename Label, std::size_t N>
std::string_view name_of(const std::array<std::pair<Label, std::string_view>, N>& names, Label l) {
    for (const auto& [label, name] : names) {
        if (label == l) return name;
    }
    return "?";
}

template <typename Label, std::size_t N>
std::optional<Label> label_of(const std::array<std::pair<Label, std::string_view>, N>& names,
                              std::string_view name) {
    for (const auto& [label, n] : names) {
        if (n == name) return label;
    }
    return std::nullopt;
}

template <typename Label, typename Parse>
Lexicon<Label> load_lexicon(const std::string& path, Parse parse) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read lexicon: " + path);
    Lexicon<Label> lex;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        const auto tab = line.find('\t');
        const auto where = path + ":" + std::to_string(line_no);
        if (tab == std::string::npos) throw std::runtime_error(where + ": expected token<TAB>label");
        const auto token = trim(std::string_view(line).substr(0, tab));
        const auto label_name = to_lower(trim(std::string_view(line).substr(tab + 1)));
        const auto label = parse(label_name);
        if (!label) throw std::runtime_error(where + ": unknown label \"" + label_name + "\"");
        try {
            lex.add(token, *label);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
    }
    return lex;
}

void require_text(std::string_view text) {
    if (trim(text).empty()) throw std::invalid_argument("scorer input text is empty");
}

/// Sends one text and validates the reply shape; returns (label name, confidence).
std::pair<std::string, double> remote_classify(const Endpoint& endpoint,
                                               const HttpOptions& options,
                                               std::string_view text) {
    nlohmann::json body;
    body["texts"] = nlohmann::json::array({std::string(text)});
    const auto reply = post_json(endpoint, body, options);
    const auto where = endpoint.url();
    if (!reply.is_object() || !reply.contains("labels") || !reply["labels"].is_array() ||
        !reply.contains("confidences") || !reply["confidences"].is_array()) {
        throw ProtocolError(where + ": reply must carry \"labels\" and \"confidences\" arrays");
    }
    if (reply["labels"].size() != 1 || reply["confidences"].size() != 1) {
        throw ProtocolError(where + ": expected exactly one label and confidence");
    }
    if (!reply["labels"][0].is_string() || !reply["confidences"][0].is_number()) {
        throw ProtocolError(where + ": label must be a string and confidence a number");
    }
    const double conf = reply["confidences"][0].get<double>();
    if (!(conf >= 0.0 && conf <= 1.0)) {
        throw ProtocolError(where + ": confidence outside [0,1]");
    }
    return {reply["labels"][0].get<std::string>(), conf};
}

}  // namespace

std::string_view to_string(Sentiment s) { return name_of(kSentimentNames, s); }
std::string_view to_string(Reaction r) { return name_of(kReactionNames, r); }

std::optional<Sentiment> parse_sentiment(std::string_view name) {
    return label_of(kSentimentNames, name);
}

std::optional<Reaction> parse_reaction(std::string_view name) {
    return label_of(kReactionNames, name);
}

std::vector<std::string> lexicon_tokens(std::string_view text) {
    std::vector<std::string> out;
    for (auto& word : split_words(text)) {
        std::size_t b = 0, e = word.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(word[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(word[e - 1]))) --e;
        if (e > b) out.push_back(to_lower(std::string_view(word).substr(b, e - b)));
    }
    return out;
}

template <typename Label>
void Lexicon<Label>::add(std::string_view token, Label label) {
    auto key = to_lower(token);
    auto [it, inserted] = table_.emplace(key, label);
    if (!inserted && it->second != label) {
        throw std::invalid_argument("token \"" + key + "\" mapped to two labels");
    }
}

template <typename Label>
typename Lexicon<Label>::Result Lexicon<Label>::classify(std::string_view text,
                                                         Label neutral) const {
    std::map<Label, std::size_t> counts;
    std::size_t matched = 0;
    for (const auto& tok : lexicon_tokens(text)) {
        if (auto it = table_.find(tok); it != table_.end()) {
            ++counts[it->second];
            ++matched;
        }
    }
    if (matched == 0) return {neutral, 1.0};
    std::size_t best = 0;
    std::size_t holders = 0;
    Label best_label = neutral;
    for (const auto& [label, n] : counts) {
        if (n > best) {
            best = n;
            holders = 1;
            best_label = label;
        } else if (n == best) {
            ++holders;
        }
    }
    const double frac = static_cast<double>(best) / static_cast<double>(matched);
    if (holders > 1) return {neutral, frac};
    return {best_label, frac};
}

template class Lexicon<Sentiment>;
template class Lexicon<Reaction>;

Lexicon<Sentiment> load_sentiment_lexicon(const std::string& path) {
    return load_lexicon<Sentiment>(path, parse_sentiment);
}

Lexicon<Reaction> load_reaction_lexicon(const std::string& path) {
    return load_lexicon<Reaction>(path, parse_reaction);
}

SentimentVerdict LexiconSentimentScorer::score_sentiment(std::string_view text) const {
    require_text(text);
    const auto r = lexicon_.classify(text, Sentiment::Neutral);
    return {r.label, r.confidence};
}

ReactionVerdict LexiconReactionScorer::score_reaction(std::string_view text) const {
    require_text(text);
    const auto r = lexicon_.classify(text, Reaction::Neutral);
    return {r.label, r.confidence};
}

RemoteSentimentScorer::RemoteSentimentScorer(Endpoint endpoint,
                                             std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)) {
    options_.timeout = timeout;
}

SentimentVerdict RemoteSentimentScorer::score_sentiment(std::string_view text) const {
    require_text(text);
    const auto [name, conf] = remote_classify(endpoint_, options_, text);
    const auto label = parse_sentiment(name);
    if (!label) throw ProtocolError(endpoint_.url() + ": unknown sentiment label \"" + name + "\"");
    return {*label, conf};
}

RemoteReactionScorer::RemoteReactionScorer(Endpoint endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)) {
    options_.timeout = timeout;
}

ReactionVerdict RemoteReactionScorer::score_reaction(std::string_view text) const {
    require_text(text);
    const auto [name, conf] = remote_classify(endpoint_, options_, text);
    const auto label = parse_reaction(name);
    if (!label) throw ProtocolError(endpoint_.url() + ": unknown reaction label \"" + name + "\"");
    return {*label, conf};
}

ScorerBackend parse_scorer_backend(const std::string& spec) {
    ScorerBackend b;
    if (spec.rfind("lexicon:", 0) == 0) {
        b.kind = ScorerBackend::Kind::Lexicon;
        b.configuration = spec.substr(8);
    } else if (spec.rfind("remote:", 0) == 0) {
        b.kind = ScorerBackend::Kind::Remote;
        b.configuration = spec.substr(7);
    } else {
        throw std::invalid_argument("scorer must be lexicon:<path> or remote:<url>, got " + spec);
    }
    if (b.configuration.empty()) throw std::invalid_argument("empty scorer configuration: " + spec);
    return b;
}

std::unique_ptr<SentimentScorer> make_sentiment_scorer(const ScorerBackend& backend) {
    if (backend.kind == ScorerBackend::Kind::Lexicon) {
        return std::make_unique<LexiconSentimentScorer>(
            load_sentiment_lexicon(backend.configuration));
    }
    return std::make_unique<RemoteSentimentScorer>(parse_endpoint(backend.configuration),
                                                   backend.timeout);
}

std::unique_ptr<ReactionScorer> make_reaction_scorer(const ScorerBackend& backend) {
    if (backend.kind == ScorerBackend::Kind::Lexicon) {
        return std::make_unique<LexiconReactionScorer>(
            load_reaction_lexicon(backend.configuration));
    }
    return std::make_unique<RemoteReactionScorer>(parse_endpoint(backend.configuration),
                                                  backend.timeout);
}

}  // namespace ifb
