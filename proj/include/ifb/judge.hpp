#pragma once

#include <array>
#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ifb/episode.hpp"
#include "ifb/http.hpp"

namespace ifb {

enum class JudgeTask { Compare, SeekInfo, OffTopic, Controversial, Insincere, Unfriendly };

/// "compare", "seek-info", "off-topic", "controversial", "insincere", "unfriendly".
std::string_view to_string(JudgeTask task);
JudgeTask parse_judge_task(std::string_view name);
/// Template file stem, e.g. "seek_info".
std::string_view template_stem(JudgeTask task);
/// Shot count of the shipped template: 0 for Controversial, 8 otherwise.
std::size_t expected_shots(JudgeTask task);

inline constexpr std::array<JudgeTask, 5> kBehaviorTasks{
    JudgeTask::SeekInfo, JudgeTask::OffTopic, JudgeTask::Controversial, JudgeTask::Insincere,
    JudgeTask::Unfriendly};

// ─── Templates ─────────────────────────────────────────────────
// File layout: optional "### separator" section, any number of "### shot"
// sections ("### shot placeholder" for a shot the operator must supply),
// then one "### query" section holding the slots {{history}}, {{a}},
// {{b}}, {{last}}.

struct Shot {
    std::string text;
    bool placeholder = false;
};

struct PromptTemplate {
    JudgeTask task = JudgeTask::Compare;
    std::string separator;
    std::vector<Shot> shots;
    std::string query;

    std::size_t placeholder_count() const;
};

/// Throws std::invalid_argument on a malformed file or a query missing a
/// slot the task needs.
PromptTemplate parse_template(std::string_view text, JudgeTask task);
PromptTemplate load_template(const std::string& dir, JudgeTask task);

/// "SPEAKER 1: ..." for bot lines, "SPEAKER 2: ..." for human lines.
std::string transcript(const std::vector<Utterance>& utterances);

/// Placeholder shots are left out until the operator fills them in.
std::string build_compare_prompt(const History& history, std::string_view candidate_a,
                                 std::string_view candidate_b, const PromptTemplate& tmpl);

/// Transcript ends with `last_bot_turn` as SPEAKER 1. Throws
/// std::invalid_argument for Compare.
std::string build_behavior_prompt(const History& history, std::string_view last_bot_turn,
                                  JudgeTask task, const PromptTemplate& tmpl);

// ─── Verdicts ──────────────────────────────────────────────────

enum class Answer { AWins, BWins, Tie, Yes, No };
enum class Extraction { Matched, ManualFill, Failed };

std::string_view to_string(Answer answer);
std::string_view to_string(Extraction extraction);

struct JudgeVerdict {
    JudgeTask task = JudgeTask::Compare;
    std::optional<Answer> answer;
    std::string raw_reply;
    Extraction extraction = Extraction::ManualFill;
    std::string error;
};

/// Reads the text after the last "answer:" (any case). Compare replies map
/// "(a)" / "(b)" / "(c)" or "tie" to AWins / BWins / Tie; behavior replies
/// take the first "yes" / "no" word. Behavior replies with no answer line
/// fall back to a leading yes/no. Anything else is flagged ManualFill.
JudgeVerdict extract_answer(std::string_view raw_reply, JudgeTask task);

/// AWins <-> BWins; other answers unchanged.
Answer swap_sides(Answer answer);

// ─── Backend ───────────────────────────────────────────────────

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::optional<std::string> system;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::string model;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Thread-safe. Throws on failure.
    virtual std::string complete(const ChatRequest& request) const = 0;
};

/// POST {"model","temperature","messages","system"?} -> {"text"}. Sends
/// "Authorization: Bearer <key>" when the named environment variable is set.
class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(Endpoint endpoint, std::string model,
                    std::string api_key_env = "IFB_JUDGE_API_KEY",
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(60000));
    std::string complete(const ChatRequest& request) const override;

private:
    Endpoint endpoint_;
    std::string model_;
    HttpOptions options_;
};

// ─── Batches ───────────────────────────────────────────────────

struct JudgeItem {
    std::string id;
    JudgeTask task = JudgeTask::Compare;
    History history;
    std::string a;  ///< compare: response (a); behavior: the judged response
    std::string b;  ///< compare only
};

/// Pairs record: {"id","context"?,"turns","a","b"}.
/// Generations record: {"id","context"?,"turns","response"}.
JudgeItem judge_item_from_json(const nlohmann::json& record, JudgeTask task);

using TemplateSet = std::map<JudgeTask, PromptTemplate>;

/// Loads every task's template from `dir`.
TemplateSet load_template_set(const std::string& dir);

std::string build_prompt(const JudgeItem& item, const TemplateSet& templates);

struct BatchOptions {
    std::size_t concurrency = 4;
    std::string model;
    /// ManualFill items are appended here, one JSON record per line.
    std::optional<std::string> review_queue_path;
};

/// One verdict per item in input order. A failed backend call marks that
/// item Failed and the batch carries on.
std::vector<JudgeVerdict> judge_batch(const std::vector<JudgeItem>& items,
                                      const ChatBackend& backend, const TemplateSet& templates,
                                      const BatchOptions& options);

nlohmann::json verdict_to_json(const JudgeItem& item, const JudgeVerdict& verdict);

}  // namespace ifb
