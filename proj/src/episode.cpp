#include "ifb/episode.hpp"

#include "ifb/common.hpp"

#include <fstream>
#include <istream>
#include <ostream>

namespace ifb {

std::string_view to_string(Speaker speaker) {
    return speaker == Speaker::Bot ? "bot" : "human";
}

std::optional<Speaker> parse_speaker(std::string_view text) {
    const std::string lower = to_lower(text);
    if (lower == "bot") return Speaker::Bot;
    if (lower == "human") return Speaker::Human;
    return std::nullopt;
}

namespace {

std::vector<Utterance> validate_turns(std::vector<Turn> turns, bool require_nonempty) {
    if (require_nonempty && turns.empty()) throw EpisodeError("episode has no turns");
    std::vector<Utterance> out;
    out.reserve(turns.size());
    for (std::size_t i = 0; i < turns.size(); ++i) {
        auto& turn = turns[i];
        if (i == 0 && turn.speaker != Speaker::Bot) {
            throw EpisodeError("first speaker must be Bot");
        }
        if (i > 0 && turn.speaker == turns[i - 1].speaker) {
            throw EpisodeError("speakers must alternate (position " + std::to_string(i) + ")");
        }
        std::string text(trim_right(turn.text));
        if (text.empty()) {
            throw EpisodeError("empty utterance at position " + std::to_string(i));
        }
        out.push_back(Utterance{turn.speaker, std::move(text), i});
    }
    return out;
}

void check_turn(const Episode& episode, std::size_t t) {
    if (t < 1 || t > episode.bot_turns()) {
        throw std::out_of_range("bot turn " + std::to_string(t) + " out of range [1, " +
                                std::to_string(episode.bot_turns()) + "] in episode " +
                                episode.id());
    }
}

std::vector<Turn> turns_from_json(const nlohmann::json& record) {
    if (!record.contains("turns") || !record["turns"].is_array()) {
        throw EpisodeError("missing \"turns\" array");
    }
    std::vector<Turn> turns;
    for (const auto& t : record["turns"]) {
        if (!t.is_object() || !t.contains("speaker") || !t["speaker"].is_string() ||
            !t.contains("text") || !t["text"].is_string()) {
            throw EpisodeError("turn must be {\"speaker\": string, \"text\": string}");
        }
        const auto speaker = parse_speaker(t["speaker"].get<std::string>());
        if (!speaker) {
            throw EpisodeError("unknown speaker \"" + t["speaker"].get<std::string>() + "\"");
        }
        turns.push_back(Turn{*speaker, t["text"].get<std::string>()});
    }
    return turns;
}

std::optional<std::string> context_from_json(const nlohmann::json& record) {
    if (!record.contains("context") || record["context"].is_null()) return std::nullopt;
    if (!record["context"].is_string()) throw EpisodeError("\"context\" must be a string");
    return record["context"].get<std::string>();
}

}  // namespace

Episode Episode::create(std::string id, std::vector<Turn> turns,
                        std::optional<std::string> context) {
    Episode e;
    e.id_ = std::move(id);
    e.context_ = std::move(context);
    e.utterances_ = validate_turns(std::move(turns), true);
    return e;
}

const Utterance& Episode::bot_turn(std::size_t t) const {
    check_turn(*this, t);
    return utterances_[2 * (t - 1)];
}

History history_before(const Episode& episode, std::size_t t) {
    check_turn(episode, t);
    const auto& all = episode.utterances();
    History h;
    h.episode_id = episode.id();
    h.turn_index = t;
    h.context = episode.context();
    h.utterances.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(2 * (t - 1)));
    return h;
}

std::optional<Utterance> next_human_turn(const Episode& episode, std::size_t t) {
    check_turn(episode, t);
    const auto pos = 2 * t - 1;
    if (pos >= episode.utterances().size()) return std::nullopt;
    return episode.utterances()[pos];
}

Episode episode_from_json(const nlohmann::json& record) {
    if (!record.is_object()) throw EpisodeError("record is not an object");
    if (!record.contains("id") || !record["id"].is_string()) {
        throw EpisodeError("missing string \"id\"");
    }
    return Episode::create(record["id"].get<std::string>(), turns_from_json(record),
                           context_from_json(record));
}

nlohmann::json episode_to_json(const Episode& episode) {
    nlohmann::json j;
    j["id"] = episode.id();
    if (episode.context()) j["context"] = *episode.context();
    auto turns = nlohmann::json::array();
    for (const auto& u : episode.utterances()) {
        turns.push_back({{"speaker", to_string(u.speaker)}, {"text", u.text}});
    }
    j["turns"] = std::move(turns);
    return j;
}

IngestResult ingest(std::istream& in) {
    IngestResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            result.diagnostics.push_back({line_no, std::string("malformed JSON: ") + e.what()});
            continue;
        }
        try {
            result.episodes.push_back(episode_from_json(record));
        } catch (const EpisodeError& e) {
            std::string reason = e.what();
            if (record.is_object() && record.contains("id") && record["id"].is_string()) {
                reason = "episode " + record["id"].get<std::string>() + ": " + reason;
            }
            result.diagnostics.push_back({line_no, std::move(reason)});
        }
    }
    return result;
}

IngestResult ingest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read episode log: " + path);
    return ingest(in);
}

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes) {
    for (const auto& e : episodes) out << episode_to_json(e).dump() << '\n';
}

History history_from_json(const nlohmann::json& record) {
    if (!record.is_object()) throw EpisodeError("record is not an object");
    History h;
    if (record.contains("id") && record["id"].is_string()) {
        h.episode_id = record["id"].get<std::string>();
    }
    h.context = context_from_json(record);
    h.utterances = validate_turns(turns_from_json(record), false);
    if (h.utterances.size() % 2 != 0) {
        throw EpisodeError("history must end on a human turn");
    }
    h.turn_index = h.utterances.size() / 2 + 1;
    return h;
}

}  // namespace ifb
