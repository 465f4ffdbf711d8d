#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ifb {

enum class Speaker { Bot, Human };

std::string_view to_string(Speaker speaker);
std::optional<Speaker> parse_speaker(std::string_view text);

struct Utterance {
    Speaker speaker = Speaker::Bot;
    std::string text;
    std::size_t index = 0;

    bool operator==(const Utterance&) const = default;
};

/// Raised when a record violates the episode shape (bot first, strict
/// alternation, non-empty utterances).
class EpisodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Turn {
    Speaker speaker;
    std::string text;
};

/// One human-bot conversation. The bot speaks first and speakers alternate,
/// so bot turn t (1-based) sits at position 2(t-1) and the human reply to it
/// at 2t-1. Immutable once built.
class Episode {
public:
    /// Validates and builds. Trailing whitespace is trimmed from each text.
    static Episode create(std::string id, std::vector<Turn> turns,
                          std::optional<std::string> context = std::nullopt);

    const std::string& id() const { return id_; }
    const std::optional<std::string>& context() const { return context_; }
    const std::vector<Utterance>& utterances() const { return utterances_; }

    /// T: number of bot utterances.
    std::size_t bot_turns() const { return (utterances_.size() + 1) / 2; }
    /// T': number of human utterances.
    std::size_t human_turns() const { return utterances_.size() / 2; }

    /// The bot utterance of turn t. Throws std::out_of_range unless 1 <= t <= T.
    const Utterance& bot_turn(std::size_t t) const;

    bool operator==(const Episode&) const = default;

private:
    Episode() = default;

    std::string id_;
    std::optional<std::string> context_;
    std::vector<Utterance> utterances_;
};

/// Conversation before bot turn t: the first 2(t-1) utterances.
struct History {
    std::string episode_id;
    std::size_t turn_index = 1;
    std::optional<std::string> context;
    std::vector<Utterance> utterances;
};

/// Throws std::out_of_range unless 1 <= t <= T.
History history_before(const Episode& episode, std::size_t t);

/// The human utterance right after bot turn t, if the human replied.
/// Throws std::out_of_range unless 1 <= t <= T.
std::optional<Utterance> next_human_turn(const Episode& episode, std::size_t t);

// ─── Line-delimited log I/O ────────────────────────────────────

struct Diagnostic {
    std::size_t line = 0;
    std::string reason;
};

struct IngestResult {
    std::vector<Episode> episodes;
    std::vector<Diagnostic> diagnostics;
};

/// Parses one record {"id", "context"?, "turns":[{"speaker","text"}]}.
/// Throws EpisodeError with a human-readable reason.
Episode episode_from_json(const nlohmann::json& record);

nlohmann::json episode_to_json(const Episode& episode);

/// Reads one episode per line. Bad lines are skipped and reported; blank
/// lines are ignored. Input order is preserved.
IngestResult ingest(std::istream& in);

/// As above, from a file. Throws std::runtime_error if the file cannot be read.
IngestResult ingest(const std::string& path);

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes);

/// Parses a history record: same shape as an episode line, but the turns
/// may end on a human utterance (or be empty) since the next bot turn is
/// what will be generated.
History history_from_json(const nlohmann::json& record);

}  // namespace ifb
