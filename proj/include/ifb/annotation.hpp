#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifb/episode.hpp"
#include "ifb/stats.hpp"

namespace ifb {

// ─── Batch input ───────────────────────────────────────────────

/// One pairwise item as submitted by the operator. Side a is the baseline.
struct ItemSpec {
    std::string id;
    std::vector<Turn> conversation;
    Side a;
    Side b;
    std::optional<Choice> known_answer;  ///< catch items only
};

struct BatchSpec {
    std::string batch_id;
    std::vector<ItemSpec> items;
    /// Catch candidates; ceil(catch_fraction * items) of them are drawn.
    std::vector<ItemSpec> catch_pool;
    double catch_fraction = 0.10;
    std::size_t votes_required = 5;
    std::uint64_t seed = 0;
};

/// {"batch_id","seed"?,"catch_fraction"?,"votes_required"?,
///  "items":[{"id","conversation":[{"speaker","text"}],"a":{"system","text"},"b":{...}}],
///  "catch_pool":[{... ,"known_answer":"a"|"b"|"tie"}]}
BatchSpec batch_spec_from_json(const nlohmann::json& body);

/// ceil(fraction * real_count), with a small tolerance against float error.
std::size_t catch_count(double fraction, std::size_t real_count);

// ─── Board state ───────────────────────────────────────────────

enum class RecordState { Open, Closed, AutoTie };

std::string_view to_string(RecordState state);

struct BoardRecord {
    ComparisonRecord record;
    std::string batch_id;
    std::vector<Turn> conversation;
    std::size_t votes_required = 5;
    RecordState state = RecordState::Open;
    /// Workers holding an issued task without a vote yet.
    std::set<std::string> pending;
};

struct WorkerState {
    WorkerRecord tally;
    std::set<std::string> issued;
    std::set<std::string> voted;
    bool discarded = false;
};

struct TaskPayload {
    std::string record_id;
    std::vector<Turn> conversation;
    std::string response_1;
    std::string response_2;
    std::string instructions;
    std::string warning;
};

nlohmann::json payload_to_json(const TaskPayload& payload);

struct VoteAck {
    bool ok = false;
    /// "unknown record", "not issued", "duplicate vote", "record closed",
    /// "worker discarded"; empty on success.
    std::string reason;
    std::optional<Choice> verdict;
};

struct BatchAck {
    std::string batch_id;
    std::size_t real = 0;
    std::size_t catches = 0;
    std::size_t auto_ties = 0;
    bool created = false;  ///< false when the id already existed
};

struct FinalizeResult {
    std::vector<std::string> discarded;
    std::vector<std::string> relaunch;
};

struct BoardTexts {
    std::string instructions;
    std::string warning;
};

/// Event-sourced annotation board. Every mutation is an event; state is the
/// fold of the event list, and `log_path` (when given) receives each event
/// as one JSON line. All methods are thread-safe.
class AnnotationBoard {
public:
    explicit AnnotationBoard(BoardTexts texts = {}, std::optional<std::string> log_path = {});

    /// Rebuilds state from a log and keeps appending to it.
    static std::unique_ptr<AnnotationBoard> replay(const std::string& log_path,
                                                   BoardTexts texts = {});

    /// Idempotent on batch_id. Throws std::invalid_argument on a bad spec
    /// (duplicate record ids, too few catch candidates, votes_required 0).
    BatchAck create_batch(const BatchSpec& spec);

    /// Re-serves the worker's outstanding task if there is one. Empty when
    /// nothing is left for this worker.
    std::optional<TaskPayload> next_task(const std::string& worker_id);

    /// `shown` is relative to the payload: A is response_1, B is response_2.
    VoteAck submit_vote(const std::string& worker_id, const std::string& record_id, Choice shown);

    /// Discards workers failing the catch thresholds, drops their votes and
    /// reopens the records that lost votes.
    FinalizeResult finalize_batch();

    std::optional<WorkerState> worker(const std::string& worker_id) const;
    std::vector<BoardRecord> records() const;
    std::vector<nlohmann::json> events() const;

    nlohmann::json results_json(const WilcoxonOptions& options = {}) const;

private:
    void apply(const nlohmann::json& event);
    void emit(nlohmann::json event);
    BoardRecord* find(const std::string& record_id);

    mutable std::mutex mu_;
    BoardTexts texts_;
    std::optional<std::string> log_path_;
    std::ofstream log_;
    std::vector<nlohmann::json> events_;
    std::map<std::string, nlohmann::json> batches_;
    std::vector<BoardRecord> records_;  ///< in presentation order
    std::map<std::string, std::size_t> index_;
    std::map<std::string, WorkerState> workers_;
};

/// Loads the default annotator texts from a directory holding
/// instructions.txt and warning.txt; missing files give empty strings.
BoardTexts load_board_texts(const std::string& dir);

// ─── HTTP ──────────────────────────────────────────────────────

/// Serves the board over HTTP:
///   GET  /api/tasks/next?worker=ID
///   POST /api/votes              {"worker","record_id","choice":"A"|"B"|"Tie"}
///   GET  /api/results
///   POST /api/batches            batch spec
///   POST /api/batches/finalize
///   GET  /api/workers/ID/stats
class AnnotationServer {
public:
    explicit AnnotationServer(AnnotationBoard& board, WilcoxonOptions options = {});
    ~AnnotationServer();

    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    /// Binds an ephemeral port and returns it; call run() afterwards.
    int bind_any_port(const std::string& host = "127.0.0.1");
    bool bind(const std::string& host, int port);
    /// Blocks until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ifb
