#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ifb/episode.hpp"
#include "ifb/signals.hpp"

namespace ifb {

inline constexpr std::string_view kBotMarker = "[BOT]";
inline constexpr std::string_view kHumanMarker = "[HUMAN]";
inline constexpr std::string_view kContextMarker = "[CONTEXT]";
inline constexpr std::size_t kDefaultMaxHistory = 32;

/// Classifier input for one bot turn: the history followed by the candidate.
struct LabeledExample {
    std::string input_text;
    int label = 0;
    std::string episode_id;
    std::size_t turn_index = 1;

    bool operator==(const LabeledExample&) const = default;
};

/// Context (if any), then the last `max_history` history utterances as
/// "[BOT] text" / "[HUMAN] text", one per line. Empty for an empty history.
std::string serialize_history(const History& history,
                              std::size_t max_history = kDefaultMaxHistory);

/// Serializes context (if any), then the last `max_history` history
/// utterances as "[BOT] text" / "[HUMAN] text", then "[BOT] candidate",
/// one per line.
std::string serialize_input(const History& history, std::string_view candidate,
                            std::size_t max_history = kDefaultMaxHistory);

/// One example per label, in label order. Throws std::invalid_argument
/// listing every label that names a missing episode or turn.
std::vector<LabeledExample> build_examples(const std::vector<Episode>& episodes,
                                           const std::vector<SignalLabel>& labels,
                                           std::size_t max_history = kDefaultMaxHistory);

/// 2*min(n0, n1) examples, equal per class, drawn without replacement and
/// shuffled with `seed`. Throws std::invalid_argument if a class is empty.
std::vector<LabeledExample> make_balanced_dev(const std::vector<LabeledExample>& examples,
                                              std::uint64_t seed);

struct SplitPlan {
    double train_fraction = 0.9;
    std::uint64_t seed = 0;
    bool balance_dev = true;
    bool balance_train = false;
};

struct Split {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> dev;
};

/// Episode-level partition: all examples of one episode land on one side.
/// Example order within each side follows the input. Throws
/// std::invalid_argument unless 0 < train_fraction < 1.
Split split(const std::vector<LabeledExample>& examples, const SplitPlan& plan);

/// split() followed by the balancing the plan asks for.
Split prepare_splits(const std::vector<LabeledExample>& examples, const SplitPlan& plan);

nlohmann::json example_to_json(const LabeledExample& example);
LabeledExample example_from_json(const nlohmann::json& record);

std::vector<LabeledExample> read_examples(const std::string& path);
void write_examples(std::ostream& out, const std::vector<LabeledExample>& examples);

}  // namespace ifb
