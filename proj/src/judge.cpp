#include "ifb/judge.hpp"

#include "ifb/common.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ifb {

namespace {

struct TaskInfo {
    JudgeTask task;
    std::string_view name;
    std::string_view stem;
};

constexpr std::array<TaskInfo, 6> kTasks{{
    {JudgeTask::Compare, "compare", "compare"},
    {JudgeTask::SeekInfo, "seek-info", "seek_info"},
    {JudgeTask::OffTopic, "off-topic", "off_topic"},
    {JudgeTask::Controversial, "controversial", "controversial"},
    {JudgeTask::Insincere, "insincere", "insincere"},
    {JudgeTask::Unfriendly, "unfriendly", "unfriendly"},
}};

const TaskInfo& info(JudgeTask task) {
    for (const auto& t : kTasks) {
        if (t.task == task) return t;
    }
    throw std::logic_error("unknown judge task");
}

std::vector<std::string_view> required_slots(JudgeTask task) {
    switch (task) {
        case JudgeTask::Compare:
            return {"history", "a", "b"};
        case JudgeTask::Controversial:
            return {"history", "last"};
        default:
            return {"history"};
    }
}

std::string strip_blank_edges(std::string_view text) {
    std::size_t start = 0;
    while (start < text.size()) {
        const auto nl = text.find('\n', start);
        const auto line = text.substr(start, nl == std::string_view::npos ? text.npos : nl - start);
        if (!trim(line).empty() || nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return std::string(trim_right(text.substr(start)));
}

/// Single left-to-right pass, so slot text inside a value is never expanded.
std::string fill(std::string_view query, const std::map<std::string_view, std::string_view>& values) {
    std::string out;
    std::size_t i = 0;
    while (i < query.size()) {
        const auto open = query.find("{{", i);
        if (open == std::string_view::npos) break;
        const auto close = query.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out.append(query.substr(i, open - i));
        const auto name = query.substr(open + 2, close - open - 2);
        const auto it = values.find(name);
        if (it == values.end()) {
            out.append(query.substr(open, close + 2 - open));
        } else {
            out.append(it->second);
        }
        i = close + 2;
    }
    out.append(query.substr(i));
    return out;
}

std::string render(const PromptTemplate& tmpl, const std::string& query) {
    const std::string sep = tmpl.separator.empty() ? "\n\n\n" : "\n\n" + tmpl.separator + "\n\n";
    std::string out;
    for (const auto& shot : tmpl.shots) {
        if (shot.placeholder) continue;
        out += shot.text;
        out += sep;
    }
    out += query;
    return out;
}

void check_template_task(const PromptTemplate& tmpl, JudgeTask task) {
    if (tmpl.task != task) {
        throw std::invalid_argument("template is for " + std::string(to_string(tmpl.task)) +
                                    ", not " + std::string(to_string(task)));
    }
}

/// Lowercase alphabetic words, in order.
std::vector<std::string> alpha_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

std::optional<Answer> first_yes_no(const std::vector<std::string>& words) {
    for (const auto& w : words) {
        if (w == "yes") return Answer::Yes;
        if (w == "no") return Answer::No;
    }
    return std::nullopt;
}

std::optional<Answer> compare_answer(std::string_view tail) {
    struct Marker {
        std::string_view text;
        Answer answer;
    };
    constexpr std::array<Marker, 4> markers{{{"(a)", Answer::AWins},
                                             {"(b)", Answer::BWins},
                                             {"(c)", Answer::Tie},
                                             {"tie", Answer::Tie}}};
    std::optional<Answer> best;
    std::size_t best_pos = std::string_view::npos;
    for (const auto& m : markers) {
        const auto pos = tail.find(m.text);
        if (pos < best_pos) {
            best_pos = pos;
            best = m.answer;
        }
    }
    return best;
}

}  // namespace

std::string_view to_string(JudgeTask task) { return info(task).name; }

JudgeTask parse_judge_task(std::string_view name) {
    for (const auto& t : kTasks) {
        if (t.name == name || t.stem == name) return t.task;
    }
    throw std::invalid_argument("unknown judge task: " + std::string(name));
}

std::string_view template_stem(JudgeTask task) { return info(task).stem; }

std::size_t expected_shots(JudgeTask task) { return task == JudgeTask::Controversial ? 0 : 8; }

std::size_t PromptTemplate::placeholder_count() const {
    return static_cast<std::size_t>(
        std::count_if(shots.begin(), shots.end(), [](const Shot& s) { return s.placeholder; }));
}

PromptTemplate parse_template(std::string_view text, JudgeTask task) {
    PromptTemplate tmpl;
    tmpl.task = task;
    enum class Section { None, Separator, Shot, Query } section = Section::None;
    std::string body;
    bool placeholder = false;
    bool saw_query = false;

    auto flush = [&] {
        const auto cleaned = strip_blank_edges(body);
        switch (section) {
            case Section::None:
                if (!cleaned.empty()) throw std::invalid_argument("text before the first section");
                break;
            case Section::Separator:
                tmpl.separator = std::string(trim(cleaned));
                break;
            case Section::Shot:
                tmpl.shots.push_back({cleaned, placeholder});
                break;
            case Section::Query:
                tmpl.query = cleaned;
                break;
        }
        body.clear();
    };

    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("### ", 0) == 0) {
            const auto header = trim(std::string_view(line).substr(4));
            if (saw_query) throw std::invalid_argument("sections after \"### query\"");
            flush();
            placeholder = false;
            if (header == "separator") {
                section = Section::Separator;
            } else if (header == "shot") {
                section = Section::Shot;
            } else if (header == "shot placeholder") {
                section = Section::Shot;
                placeholder = true;
            } else if (header == "query") {
                section = Section::Query;
                saw_query = true;
            } else {
                throw std::invalid_argument("unknown template section \"" + std::string(header) +
                                            "\"");
            }
            continue;
        }
        body += line;
        body += '\n';
    }
    flush();
    if (!saw_query) throw std::invalid_argument("template has no \"### query\" section");
    for (const auto slot : required_slots(task)) {
        if (tmpl.query.find("{{" + std::string(slot) + "}}") == std::string::npos) {
            throw std::invalid_argument("template slot missing: {{" + std::string(slot) + "}}");
        }
    }
    return tmpl;
}

PromptTemplate load_template(const std::string& dir, JudgeTask task) {
    const auto path = dir + "/" + std::string(template_stem(task)) + ".txt";
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read template: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_template(ss.str(), task);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

std::string transcript(const std::vector<Utterance>& utterances) {
    std::string out;
    for (const auto& u : utterances) {
        if (!out.empty()) out += '\n';
        out += u.speaker == Speaker::Bot ? "SPEAKER 1: " : "SPEAKER 2: ";
        out += u.text;
    }
    return out;
}

std::string build_compare_prompt(const History& history, std::string_view candidate_a,
                                 std::string_view candidate_b, const PromptTemplate& tmpl) {
    check_template_task(tmpl, JudgeTask::Compare);
    if (trim(candidate_a).empty() || trim(candidate_b).empty()) {
        throw std::invalid_argument("compare prompt needs two non-empty candidates");
    }
    const auto conv = transcript(history.utterances);
    return render(tmpl, fill(tmpl.query, {{"history", conv}, {"a", candidate_a}, {"b", candidate_b}}));
}

std::string build_behavior_prompt(const History& history, std::string_view last_bot_turn,
                                  JudgeTask task, const PromptTemplate& tmpl) {
    if (task == JudgeTask::Compare) {
        throw std::invalid_argument("compare is not a behavior task; use build_compare_prompt");
    }
    check_template_task(tmpl, task);
    if (trim(last_bot_turn).empty()) throw std::invalid_argument("judged response is empty");
    auto utterances = history.utterances;
    utterances.push_back({Speaker::Bot, std::string(last_bot_turn), utterances.size()});
    const auto conv = transcript(utterances);
    return render(tmpl, fill(tmpl.query, {{"history", conv}, {"last", last_bot_turn}}));
}

std::string_view to_string(Answer answer) {
    switch (answer) {
        case Answer::AWins:
            return "a";
        case Answer::BWins:
            return "b";
        case Answer::Tie:
            return "tie";
        case Answer::Yes:
            return "yes";
        case Answer::No:
            return "no";
    }
    return "?";
}

std::string_view to_string(Extraction extraction) {
    switch (extraction) {
        case Extraction::Matched:
            return "matched";
        case Extraction::ManualFill:
            return "manual-fill";
        case Extraction::Failed:
            return "failed";
    }
    return "?";
}

JudgeVerdict extract_answer(std::string_view raw_reply, JudgeTask task) {
    JudgeVerdict v;
    v.task = task;
    v.raw_reply = std::string(raw_reply);
    const auto lower = to_lower(raw_reply);
    const auto pos = lower.rfind("answer:");
    if (pos != std::string::npos) {
        const std::string_view tail = std::string_view(lower).substr(pos + 7);
        v.answer = task == JudgeTask::Compare ? compare_answer(tail) : first_yes_no(alpha_words(tail));
    }
    if (!v.answer && task != JudgeTask::Compare) {
        const auto words = alpha_words(lower);
        if (!words.empty() && (words.front() == "yes" || words.front() == "no")) {
            v.answer = words.front() == "yes" ? Answer::Yes : Answer::No;
        }
    }
    v.extraction = v.answer ? Extraction::Matched : Extraction::ManualFill;
    return v;
}

Answer swap_sides(Answer answer) {
    if (answer == Answer::AWins) return Answer::BWins;
    if (answer == Answer::BWins) return Answer::AWins;
    return answer;
}

HttpChatBackend::HttpChatBackend(Endpoint endpoint, std::string model, std::string api_key_env,
                                 std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), model_(std::move(model)) {
    options_.timeout = timeout;
    if (const char* key = std::getenv(api_key_env.c_str()); key != nullptr && *key != '\0') {
        options_.headers["Authorization"] = std::string("Bearer ") + key;
    }
}

std::string HttpChatBackend::complete(const ChatRequest& request) const {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", m.role}, {"content", m.content}});
    }
    nlohmann::json body{{"model", request.model.empty() ? model_ : request.model},
                        {"temperature", request.temperature},
                        {"messages", messages}};
    if (request.system) body["system"] = *request.system;
    const auto reply = post_json(endpoint_, body, options_);
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
        throw ProtocolError(endpoint_.url() + ": reply must carry a string \"text\"");
    }
    return reply["text"].get<std::string>();
}

JudgeItem judge_item_from_json(const nlohmann::json& record, JudgeTask task) {
    JudgeItem item;
    item.task = task;
    item.history = history_from_json(record);
    try {
        item.id = record.value("id", std::string());
        if (task == JudgeTask::Compare) {
            item.a = record.at("a").get<std::string>();
            item.b = record.at("b").get<std::string>();
        } else {
            item.a = record.at("response").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad judge record: ") + e.what());
    }
    return item;
}

TemplateSet load_template_set(const std::string& dir) {
    TemplateSet set;
    for (const auto& t : kTasks) set.emplace(t.task, load_template(dir, t.task));
    return set;
}

std::string build_prompt(const JudgeItem& item, const TemplateSet& templates) {
    const auto it = templates.find(item.task);
    if (it == templates.end()) {
        throw std::invalid_argument("no template for " + std::string(to_string(item.task)));
    }
    if (item.task == JudgeTask::Compare) {
        return build_compare_prompt(item.history, item.a, item.b, it->second);
    }
    return build_behavior_prompt(item.history, item.a, item.task, it->second);
}

std::vector<JudgeVerdict> judge_batch(const std::vector<JudgeItem>& items,
                                      const ChatBackend& backend, const TemplateSet& templates,
                                      const BatchOptions& options) {
    std::vector<JudgeVerdict> verdicts(items.size());
    std::vector<std::string> prompts(items.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
            auto& v = verdicts[i];
            v.task = items[i].task;
            try {
                prompts[i] = build_prompt(items[i], templates);
                ChatRequest req;
                req.model = options.model;
                req.messages.push_back({"user", prompts[i]});
                v = extract_answer(backend.complete(req), items[i].task);
            } catch (const std::exception& e) {
                v.answer.reset();
                v.extraction = Extraction::Failed;
                v.error = e.what();
            }
        }
    };

    const std::size_t n_threads = std::clamp<std::size_t>(options.concurrency, 1, std::max<std::size_t>(1, items.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    if (options.review_queue_path) {
        std::ofstream out(*options.review_queue_path, std::ios::app);
        if (!out) throw std::runtime_error("cannot write review queue: " + *options.review_queue_path);
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (verdicts[i].extraction != Extraction::ManualFill) continue;
            out << nlohmann::json{{"index", i},
                                  {"id", items[i].id},
                                  {"task", to_string(items[i].task)},
                                  {"prompt", prompts[i]},
                                  {"raw_reply", verdicts[i].raw_reply}}
                       .dump()
                << '\n';
        }
    }
    return verdicts;
}

nlohmann::json verdict_to_json(const JudgeItem& item, const JudgeVerdict& verdict) {
    nlohmann::json out{{"id", item.id},
                       {"task", to_string(verdict.task)},
                       {"answer", verdict.answer ? nlohmann::json(to_string(*verdict.answer))
                                                 : nlohmann::json(nullptr)},
                       {"extraction", to_string(verdict.extraction)},
                       {"raw_reply", verdict.raw_reply}};
    if (!verdict.error.empty()) out["error"] = verdict.error;
    return out;
}

}  // namespace ifb
