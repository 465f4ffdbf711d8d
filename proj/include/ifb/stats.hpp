#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ifb {

// Side A is the baseline and side B the new system throughout.

enum class Choice { A, B, Tie };

/// "a", "b", "tie".
std::string_view to_string(Choice choice);
/// Accepts "a"/"b"/"tie" in any case. Throws std::invalid_argument otherwise.
Choice parse_choice(std::string_view text);

/// Strict majority (more than half) wins, otherwise Tie. Throws
/// std::invalid_argument on an empty list.
Choice majority_vote(const std::vector<Choice>& votes);

// ─── Records and workers ───────────────────────────────────────

struct Side {
    std::string system;
    std::string text;
};

struct Vote {
    std::string worker_id;
    Choice choice;
};

struct ComparisonRecord {
    std::string id;
    std::string history;
    Side side_a;
    Side side_b;
    std::size_t order_index = 0;
    /// When set, side B is shown as response 1.
    bool swapped = false;
    std::vector<Vote> votes;
    bool is_catch = false;
    std::optional<Choice> known_answer;
    std::optional<Choice> verdict;
    bool auto_tie = false;
};

/// Byte equality of the two candidate texts.
bool auto_tie_check(const ComparisonRecord& record);

struct WorkerRecord {
    std::string worker_id;
    std::size_t catch_total = 0;
    std::size_t catch_wrong = 0;
};

/// Wrong share above 20% once a worker has 5+ catch answers, above 50%
/// before that. Never true with zero catch answers.
bool should_discard(const WorkerRecord& worker);

struct WorkerFilter {
    std::vector<WorkerRecord> kept;
    std::vector<WorkerRecord> discarded;
};

WorkerFilter filter_workers(const std::vector<WorkerRecord>& workers);

// ─── Wilcoxon signed-rank ──────────────────────────────────────

/// Continuity correction for the normal branch. Lattice subtracts half the
/// spacing between attainable W values, which is 0.5 only when all ranks
/// are whole numbers; Half always subtracts 0.5.
enum class Continuity { Lattice, Half, None };

std::string_view to_string(Continuity c);
Continuity parse_continuity(std::string_view text);

struct WilcoxonOptions {
    std::size_t exact_max_n = 25;
    Continuity continuity = Continuity::Lattice;
};

struct WilcoxonResult {
    std::size_t n = 0;      ///< nonzero differences
    double w_plus = 0.0;    ///< sum of ranks of positive differences
    double p_value = 1.0;   ///< two-sided
    bool exact = false;
};

/// Zeros dropped, tied magnitudes share their average rank. Exact null
/// distribution when n <= exact_max_n, normal approximation with
/// tie-corrected variance otherwise. Throws std::invalid_argument
/// ("no informative pairs") when every difference is zero.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs,
                                    const WilcoxonOptions& options = {});

/// Exact two-sided p for any n (cost grows with n^3).
double wilcoxon_exact_p(const std::vector<double>& diffs);
/// Normal-approximation two-sided p.
double wilcoxon_normal_p(const std::vector<double>& diffs,
                         Continuity continuity = Continuity::Lattice);

/// "**" below 0.05, "*" below 0.1, "--" otherwise.
std::string_view stars(double p_value);

// ─── Outcome summaries ─────────────────────────────────────────

struct OutcomeSummary {
    std::size_t n = 0;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
    std::size_t count_tie = 0;
    double pct_a = 0.0;
    double pct_b = 0.0;
    double pct_tie = 0.0;
    double win_rate = 0.0;
    /// 1.0 when no record has a winner.
    double p_value = 1.0;
    std::string stars = "--";
};

/// +1 for B, -1 for A, 0 for Tie.
double paired_diff(Choice verdict);

/// Throws std::invalid_argument on an empty list.
OutcomeSummary summarize(const std::vector<Choice>& verdicts, const WilcoxonOptions& options = {});

/// Non-catch records only. Throws std::invalid_argument if one lacks a verdict.
OutcomeSummary summarize(const std::vector<ComparisonRecord>& records,
                         const WilcoxonOptions& options = {});

// ─── Agreement ─────────────────────────────────────────────────

struct Judgment {
    std::string id;
    Choice choice;
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Rows index judge X, columns judge Y, both in A, B, Tie order.
struct AgreementTable {
    Matrix3 matrix{};
    double match_pct = 0.0;
    double strong_disagree_pct = 0.0;
};

/// Percentages over the shared ids. Throws std::invalid_argument unless
/// both sides cover the same ids exactly once.
AgreementTable agreement_table(const std::vector<Judgment>& x, const std::vector<Judgment>& y);

/// Match and strong-disagreement from an already tabulated percentage matrix.
AgreementTable agreement_from_matrix(const Matrix3& percentages);

// ─── Behaviors ─────────────────────────────────────────────────

enum class Behavior { SeekInfo, OffTopic, Controversial, Insincere, Unfriendly };

inline constexpr std::array<Behavior, 5> kAllBehaviors{
    Behavior::SeekInfo, Behavior::OffTopic, Behavior::Controversial, Behavior::Insincere,
    Behavior::Unfriendly};

/// Same names as the judge tasks: "seek-info", "off-topic", ...
std::string_view to_string(Behavior behavior);
Behavior parse_behavior(std::string_view name);
/// Comma-separated list.
std::set<Behavior> parse_behavior_list(std::string_view text);

struct BehaviorFlags {
    std::set<Behavior> yes;

    bool has(Behavior b) const { return yes.count(b) != 0; }
};

struct BehaviorRates {
    std::size_t n = 0;
    std::array<double, 5> pct{};  ///< indexed like kAllBehaviors
    double off_topic_and_seek_info = 0.0;

    double rate(Behavior b) const { return pct[static_cast<std::size_t>(b)]; }
};

/// Throws std::invalid_argument on an empty list.
BehaviorRates behavior_rates(const std::vector<BehaviorFlags>& generations);

/// Drops records whose new-side flags hit any exclusion, then summarizes.
/// Throws std::invalid_argument on mismatched lengths and
/// std::runtime_error("empty after filtering") when nothing is left.
OutcomeSummary filtered_summary(const std::vector<Choice>& verdicts,
                                const std::vector<BehaviorFlags>& new_side_flags,
                                const std::set<Behavior>& exclusions,
                                const WilcoxonOptions& options = {});

/// Mean whitespace word count. Throws std::invalid_argument on an empty list.
double mean_length(const std::vector<std::string>& generations);

// ─── Report ────────────────────────────────────────────────────
// Stats records, one per line:
// {"system", "verdict":"a"|"b"|"tie",
//  "new":{"text"?, "flags"?:[...]}, "baseline":{"text"?, "flags"?:[...]}}

struct GenerationInfo {
    std::optional<std::string> text;
    std::optional<BehaviorFlags> flags;
};

struct StatsRecord {
    std::string system;
    Choice verdict = Choice::Tie;
    GenerationInfo new_side;
    GenerationInfo baseline;
};

StatsRecord stats_record_from_json(const nlohmann::json& record);
std::vector<StatsRecord> read_stats_records(const std::string& path);

struct ReportRow {
    std::string system;
    std::optional<OutcomeSummary> outcome;
    std::optional<BehaviorRates> behaviors;
    std::optional<double> mean_length;
};

struct ReportOptions {
    WilcoxonOptions wilcoxon;
    std::set<Behavior> exclusions;
};

/// A "baseline" row (behaviors and length of baseline generations, when
/// any are present) followed by one row per system in first-seen order.
std::vector<ReportRow> build_report(const std::vector<StatsRecord>& records,
                                    const ReportOptions& options = {});

/// Fixed-width table, percentages to one decimal.
std::string format_report(const std::vector<ReportRow>& rows);

nlohmann::json report_row_to_json(const ReportRow& row);

}  // namespace ifb
