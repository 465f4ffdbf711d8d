#include "ifb/dataset.hpp"

#include "ifb/common.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace ifb {

namespace {

void append_line(std::string& out, std::string_view marker, std::string_view text) {
    if (!out.empty()) out += '\n';
    out += marker;
    out += ' ';
    out += text;
}

}  // namespace

std::string serialize_history(const History& history, std::size_t max_history) {
    std::string out;
    if (history.context) append_line(out, kContextMarker, *history.context);
    const auto& us = history.utterances;
    const std::size_t start = us.size() > max_history ? us.size() - max_history : 0;
    for (std::size_t i = start; i < us.size(); ++i) {
        append_line(out, us[i].speaker == Speaker::Bot ? kBotMarker : kHumanMarker, us[i].text);
    }
    return out;
}

std::string serialize_input(const History& history, std::string_view candidate,
                            std::size_t max_history) {
    std::string out = serialize_history(history, max_history);
    append_line(out, kBotMarker, candidate);
    return out;
}

std::vector<LabeledExample> build_examples(const std::vector<Episode>& episodes,
                                           const std::vector<SignalLabel>& labels,
                                           std::size_t max_history) {
    std::unordered_map<std::string, const Episode*> by_id;
    for (const auto& e : episodes) by_id.emplace(e.id(), &e);

    std::vector<LabeledExample> out;
    out.reserve(labels.size());
    std::vector<std::string> dangling;
    for (const auto& label : labels) {
        auto it = by_id.find(label.episode_id);
        if (it == by_id.end() || label.turn_index < 1 ||
            label.turn_index > it->second->bot_turns()) {
            dangling.push_back(label.episode_id + "#" + std::to_string(label.turn_index));
            continue;
        }
        const Episode& e = *it->second;
        const auto history = history_before(e, label.turn_index);
        out.push_back(LabeledExample{
            serialize_input(history, e.bot_turn(label.turn_index).text, max_history),
            label.value, e.id(), label.turn_index});
    }
    if (!dangling.empty()) {
        std::string msg = "labels reference missing episode turns:";
        for (const auto& d : dangling) msg += " " + d;
        throw std::invalid_argument(msg);
    }
    return out;
}

std::vector<LabeledExample> make_balanced_dev(const std::vector<LabeledExample>& examples,
                                              std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        (examples[i].label == 1 ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
        throw std::invalid_argument("balanced dev set needs both classes (have " +
                                    std::to_string(neg.size()) + " negative, " +
                                    std::to_string(pos.size()) + " positive)");
    }
    const std::size_t m = std::min(pos.size(), neg.size());
    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    std::vector<std::size_t> chosen(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(m));
    chosen.insert(chosen.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(m));
    rng.shuffle(chosen);

    std::vector<LabeledExample> out;
    out.reserve(chosen.size());
    for (auto i : chosen) out.push_back(examples[i]);
    return out;
}

Split split(const std::vector<LabeledExample>& examples, const SplitPlan& plan) {
    if (!(plan.train_fraction > 0.0 && plan.train_fraction < 1.0)) {
        throw std::invalid_argument("train_fraction must lie in (0, 1)");
    }
    std::vector<std::string> ids;
    std::unordered_set<std::string> seen;
    for (const auto& ex : examples) {
        if (seen.insert(ex.episode_id).second) ids.push_back(ex.episode_id);
    }
    Rng rng(plan.seed);
    rng.shuffle(ids);

    auto n_train = static_cast<std::size_t>(
        std::llround(plan.train_fraction * static_cast<double>(ids.size())));
    if (ids.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
    const std::unordered_set<std::string> train_ids(
        ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, ids.size())));

    Split s;
    for (const auto& ex : examples) {
        (train_ids.count(ex.episode_id) ? s.train : s.dev).push_back(ex);
    }
    return s;
}

Split prepare_splits(const std::vector<LabeledExample>& examples, const SplitPlan& plan) {
    auto s = split(examples, plan);
    if (plan.balance_dev) s.dev = make_balanced_dev(s.dev, plan.seed);
    if (plan.balance_train) s.train = make_balanced_dev(s.train, plan.seed + 1);
    return s;
}

nlohmann::json example_to_json(const LabeledExample& example) {
    return {{"input", example.input_text},
            {"label", example.label},
            {"episode_id", example.episode_id},
            {"t", example.turn_index}};
}

LabeledExample example_from_json(const nlohmann::json& record) {
    LabeledExample ex;
    try {
        ex.input_text = record.at("input").get<std::string>();
        ex.label = record.at("label").get<int>();
        ex.episode_id = record.at("episode_id").get<std::string>();
        ex.turn_index = record.at("t").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad dataset record: ") + e.what());
    }
    if (ex.label != 0 && ex.label != 1) throw std::invalid_argument("label must be 0 or 1");
    return ex;
}

std::vector<LabeledExample> read_examples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read dataset: " + path);
    std::vector<LabeledExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(example_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_examples(std::ostream& out, const std::vector<LabeledExample>& examples) {
    for (const auto& ex : examples) out << example_to_json(ex).dump() << '\n';
}

}  // namespace ifb
