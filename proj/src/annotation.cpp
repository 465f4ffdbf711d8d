#include "ifb/annotation.hpp"

#include "ifb/common.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ifb {

namespace {

using nlohmann::json;

json turns_to_json(const std::vector<Turn>& turns) {
    json out = json::array();
    for (const auto& t : turns) out.push_back({{"speaker", to_string(t.speaker)}, {"text", t.text}});
    return out;
}

std::vector<Turn> turns_from_json(const json& arr) {
    if (!arr.is_array()) throw std::invalid_argument("conversation must be an array");
    std::vector<Turn> out;
    for (const auto& t : arr) {
        const auto speaker = parse_speaker(t.at("speaker").get<std::string>());
        if (!speaker) throw std::invalid_argument("bad speaker in conversation");
        out.push_back({*speaker, t.at("text").get<std::string>()});
    }
    return out;
}

Side side_from_json(const json& j) {
    return {j.value("system", std::string()), j.at("text").get<std::string>()};
}

ItemSpec item_from_json(const json& j, bool is_catch) {
    ItemSpec item;
    item.id = j.at("id").get<std::string>();
    item.conversation = turns_from_json(j.value("conversation", json::array()));
    item.a = side_from_json(j.at("a"));
    item.b = side_from_json(j.at("b"));
    if (is_catch) item.known_answer = parse_choice(j.at("known_answer").get<std::string>());
    return item;
}

json record_to_event_json(const BoardRecord& r) {
    json j{{"id", r.record.id},
           {"conversation", turns_to_json(r.conversation)},
           {"a", {{"system", r.record.side_a.system}, {"text", r.record.side_a.text}}},
           {"b", {{"system", r.record.side_b.system}, {"text", r.record.side_b.text}}},
           {"is_catch", r.record.is_catch},
           {"order_index", r.record.order_index},
           {"swapped", r.record.swapped},
           {"auto_tie", r.record.auto_tie}};
    if (r.record.known_answer) j["known_answer"] = to_string(*r.record.known_answer);
    return j;
}

Choice unshuffle(Choice shown, bool swapped) {
    if (!swapped || shown == Choice::Tie) return shown;
    return shown == Choice::A ? Choice::B : Choice::A;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {};
    std::stringstream ss;
    ss << in.rdbuf();
    return std::string(trim(ss.str()));
}

}  // namespace

BatchSpec batch_spec_from_json(const json& body) {
    BatchSpec spec;
    try {
        spec.batch_id = body.at("batch_id").get<std::string>();
        spec.seed = body.value("seed", std::uint64_t{0});
        spec.catch_fraction = body.value("catch_fraction", 0.10);
        spec.votes_required = body.value("votes_required", std::size_t{5});
        for (const auto& j : body.at("items")) spec.items.push_back(item_from_json(j, false));
        if (body.contains("catch_pool")) {
            for (const auto& j : body["catch_pool"]) spec.catch_pool.push_back(item_from_json(j, true));
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad batch spec: ") + e.what());
    }
    return spec;
}

std::size_t catch_count(double fraction, std::size_t real_count) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("catch fraction must lie in [0, 1]");
    }
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(real_count) - 1e-9));
}

std::string_view to_string(RecordState state) {
    switch (state) {
        case RecordState::Open:
            return "open";
        case RecordState::Closed:
            return "closed";
        case RecordState::AutoTie:
            return "auto-tie";
    }
    return "?";
}

json payload_to_json(const TaskPayload& p) {
    json conv = json::array();
    for (const auto& t : p.conversation) {
        conv.push_back({{"speaker", t.speaker == Speaker::Bot ? "SPEAKER 1" : "SPEAKER 2"},
                        {"text", t.text}});
    }
    return {{"record_id", p.record_id},   {"conversation", conv},
            {"response_1", p.response_1}, {"response_2", p.response_2},
            {"instructions", p.instructions}, {"warning", p.warning}};
}

AnnotationBoard::AnnotationBoard(BoardTexts texts, std::optional<std::string> log_path)
    : texts_(std::move(texts)), log_path_(std::move(log_path)) {
    if (log_path_) {
        log_.open(*log_path_, std::ios::app);
        if (!log_) throw std::runtime_error("cannot open event log: " + *log_path_);
    }
}

std::unique_ptr<AnnotationBoard> AnnotationBoard::replay(const std::string& log_path,
                                                         BoardTexts texts) {
    std::vector<json> events;
    {
        std::ifstream in(log_path);
        std::string line;
        std::size_t line_no = 0;
        while (in && std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            try {
                events.push_back(json::parse(line));
            } catch (const json::exception& e) {
                throw std::runtime_error(log_path + ":" + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    auto board = std::make_unique<AnnotationBoard>(std::move(texts), log_path);
    for (auto& e : events) {
        board->apply(e);
        board->events_.push_back(std::move(e));
    }
    return board;
}

BoardRecord* AnnotationBoard::find(const std::string& record_id) {
    const auto it = index_.find(record_id);
    return it == index_.end() ? nullptr : &records_[it->second];
}

void AnnotationBoard::emit(json event) {
    apply(event);
    if (log_.is_open()) {
        log_ << event.dump() << '\n';
        log_.flush();
    }
    events_.push_back(std::move(event));
}

void AnnotationBoard::apply(const json& e) {
    const auto type = e.at("type").get<std::string>();
    if (type == "batch_created") {
        const auto batch_id = e.at("batch_id").get<std::string>();
        const auto required = e.at("votes_required").get<std::size_t>();
        for (const auto& j : e.at("records")) {
            BoardRecord r;
            r.batch_id = batch_id;
            r.votes_required = required;
            r.conversation = turns_from_json(j.at("conversation"));
            r.record.id = j.at("id").get<std::string>();
            r.record.side_a = side_from_json(j.at("a"));
            r.record.side_b = side_from_json(j.at("b"));
            r.record.is_catch = j.at("is_catch").get<bool>();
            if (j.contains("known_answer")) {
                r.record.known_answer = parse_choice(j["known_answer"].get<std::string>());
            }
            r.record.order_index = j.at("order_index").get<std::size_t>();
            r.record.swapped = j.at("swapped").get<bool>();
            r.record.auto_tie = j.at("auto_tie").get<bool>();
            if (r.record.auto_tie) {
                r.state = RecordState::AutoTie;
                r.record.verdict = Choice::Tie;
            }
            index_[r.record.id] = records_.size();
            records_.push_back(std::move(r));
        }
        batches_[batch_id] = e.at("summary");
    } else if (type == "task_issued") {
        const auto w = e.at("worker").get<std::string>();
        const auto id = e.at("record_id").get<std::string>();
        workers_[w].tally.worker_id = w;
        workers_[w].issued.insert(id);
        if (auto* r = find(id)) r->pending.insert(w);
    } else if (type == "vote_cast") {
        const auto w = e.at("worker").get<std::string>();
        const auto id = e.at("record_id").get<std::string>();
        const auto choice = parse_choice(e.at("choice").get<std::string>());
        auto& ws = workers_[w];
        ws.tally.worker_id = w;
        ws.voted.insert(id);
        if (auto* r = find(id)) {
            r->pending.erase(w);
            r->record.votes.push_back({w, choice});
            if (r->record.is_catch && r->record.known_answer) {
                ++ws.tally.catch_total;
                if (choice != *r->record.known_answer) ++ws.tally.catch_wrong;
            }
        }
    } else if (type == "verdict_set") {
        if (auto* r = find(e.at("record_id").get<std::string>())) {
            r->record.verdict = parse_choice(e.at("verdict").get<std::string>());
            r->state = RecordState::Closed;
        }
    } else if (type == "worker_discarded") {
        const auto w = e.at("worker").get<std::string>();
        workers_[w].tally.worker_id = w;
        workers_[w].discarded = true;
        for (auto& r : records_) {
            auto& votes = r.record.votes;
            votes.erase(std::remove_if(votes.begin(), votes.end(),
                                       [&w](const Vote& v) { return v.worker_id == w; }),
                        votes.end());
            r.pending.erase(w);
        }
    } else if (type == "record_reopened") {
        if (auto* r = find(e.at("record_id").get<std::string>())) {
            r->state = RecordState::Open;
            r->record.verdict.reset();
        }
    } else {
        throw std::runtime_error("unknown event type: " + type);
    }
}

BatchAck AnnotationBoard::create_batch(const BatchSpec& spec) {
    std::lock_guard lock(mu_);
    if (spec.batch_id.empty()) throw std::invalid_argument("batch_id is required");
    if (const auto it = batches_.find(spec.batch_id); it != batches_.end()) {
        BatchAck ack;
        ack.batch_id = spec.batch_id;
        ack.real = it->second.at("real").get<std::size_t>();
        ack.catches = it->second.at("catch").get<std::size_t>();
        ack.auto_ties = it->second.at("auto_tie").get<std::size_t>();
        return ack;
    }
    if (spec.votes_required == 0) throw std::invalid_argument("votes_required must be positive");
    if (spec.items.empty()) throw std::invalid_argument("batch has no items");
    const std::size_t k = catch_count(spec.catch_fraction, spec.items.size());
    if (k > spec.catch_pool.size()) {
        throw std::invalid_argument("batch needs " + std::to_string(k) +
                                    " catch items but the pool has " +
                                    std::to_string(spec.catch_pool.size()));
    }

    Rng rng(spec.seed);
    std::vector<std::size_t> pool(spec.catch_pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    rng.shuffle(pool);

    std::vector<const ItemSpec*> chosen;
    for (const auto& item : spec.items) chosen.push_back(&item);
    for (std::size_t i = 0; i < k; ++i) chosen.push_back(&spec.catch_pool[pool[i]]);
    const std::size_t n_real = spec.items.size();

    std::set<std::string> ids;
    for (const auto* item : chosen) {
        if (item->id.empty()) throw std::invalid_argument("item without an id");
        if (!ids.insert(item->id).second || index_.count(item->id)) {
            throw std::invalid_argument("duplicate record id " + item->id);
        }
        if (trim(item->a.text).empty() || trim(item->b.text).empty()) {
            throw std::invalid_argument("item " + item->id + " has an empty response");
        }
    }

    std::vector<std::size_t> order(chosen.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    BatchAck ack;
    ack.batch_id = spec.batch_id;
    ack.real = n_real;
    ack.catches = k;
    ack.created = true;
    json records = json::array();
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const auto src = order[pos];
        const auto* item = chosen[src];
        BoardRecord r;
        r.conversation = item->conversation;
        r.record.id = item->id;
        r.record.side_a = item->a;
        r.record.side_b = item->b;
        r.record.is_catch = src >= n_real;
        r.record.known_answer = r.record.is_catch ? item->known_answer : std::nullopt;
        r.record.order_index = records_.size() + pos;
        r.record.swapped = rng.below(2) == 1;
        r.record.auto_tie = auto_tie_check(r.record);
        if (r.record.auto_tie && !r.record.is_catch) ++ack.auto_ties;
        records.push_back(record_to_event_json(r));
    }
    emit({{"type", "batch_created"},
          {"batch_id", spec.batch_id},
          {"votes_required", spec.votes_required},
          {"seed", spec.seed},
          {"catch_fraction", spec.catch_fraction},
          {"records", records},
          {"summary", {{"real", ack.real}, {"catch", ack.catches}, {"auto_tie", ack.auto_ties}}}});
    return ack;
}

std::optional<TaskPayload> AnnotationBoard::next_task(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    auto& ws = workers_[worker_id];
    ws.tally.worker_id = worker_id;
    if (ws.discarded) return std::nullopt;

    BoardRecord* pick = nullptr;
    for (auto& r : records_) {
        if (r.state == RecordState::Open && r.pending.count(worker_id)) {
            pick = &r;
            break;
        }
    }
    if (pick == nullptr) {
        for (auto& r : records_) {
            if (r.state != RecordState::Open || ws.issued.count(r.record.id) ||
                ws.voted.count(r.record.id)) {
                continue;
            }
            if (r.record.votes.size() + r.pending.size() >= r.votes_required) continue;
            pick = &r;
            break;
        }
        if (pick == nullptr) return std::nullopt;
        emit({{"type", "task_issued"}, {"worker", worker_id}, {"record_id", pick->record.id}});
    }

    const auto& rec = pick->record;
    TaskPayload p;
    p.record_id = rec.id;
    p.conversation = pick->conversation;
    p.response_1 = rec.swapped ? rec.side_b.text : rec.side_a.text;
    p.response_2 = rec.swapped ? rec.side_a.text : rec.side_b.text;
    p.instructions = texts_.instructions;
    p.warning = texts_.warning;
    return p;
}

VoteAck AnnotationBoard::submit_vote(const std::string& worker_id, const std::string& record_id,
                                     Choice shown) {
    std::lock_guard lock(mu_);
    VoteAck ack;
    auto* r = find(record_id);
    if (r == nullptr) {
        ack.reason = "unknown record";
        return ack;
    }
    const auto wit = workers_.find(worker_id);
    if (wit != workers_.end() && wit->second.discarded) {
        ack.reason = "worker discarded";
        return ack;
    }
    if (wit != workers_.end() && wit->second.voted.count(record_id)) {
        ack.reason = "duplicate vote";
        return ack;
    }
    if (r->state != RecordState::Open) {
        ack.reason = "record closed";
        return ack;
    }
    if (!r->pending.count(worker_id)) {
        ack.reason = "not issued";
        return ack;
    }
    const Choice choice = unshuffle(shown, r->record.swapped);
    emit({{"type", "vote_cast"},
          {"worker", worker_id},
          {"record_id", record_id},
          {"choice", to_string(choice)}});
    if (r->record.votes.size() >= r->votes_required) {
        std::vector<Choice> choices;
        for (const auto& v : r->record.votes) choices.push_back(v.choice);
        const auto verdict = majority_vote(choices);
        emit({{"type", "verdict_set"}, {"record_id", record_id}, {"verdict", to_string(verdict)}});
        ack.verdict = verdict;
    }
    ack.ok = true;
    return ack;
}

FinalizeResult AnnotationBoard::finalize_batch() {
    std::lock_guard lock(mu_);
    FinalizeResult out;
    std::vector<std::size_t> before;
    for (const auto& r : records_) before.push_back(r.record.votes.size());

    std::vector<WorkerRecord> tallies;
    for (const auto& [id, ws] : workers_) {
        if (!ws.discarded) tallies.push_back(ws.tally);
    }
    for (const auto& w : filter_workers(tallies).discarded) {
        emit({{"type", "worker_discarded"}, {"worker", w.worker_id}});
        out.discarded.push_back(w.worker_id);
    }
    for (std::size_t i = 0; i < records_.size(); ++i) {
        auto& r = records_[i];
        if (r.record.votes.size() >= before[i]) continue;
        out.relaunch.push_back(r.record.id);
        if (r.state == RecordState::Closed) {
            emit({{"type", "record_reopened"}, {"record_id", r.record.id}});
        }
    }
    return out;
}

std::optional<WorkerState> AnnotationBoard::worker(const std::string& worker_id) const {
    std::lock_guard lock(mu_);
    const auto it = workers_.find(worker_id);
    if (it == workers_.end()) return std::nullopt;
    return it->second;
}

std::vector<BoardRecord> AnnotationBoard::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::vector<json> AnnotationBoard::events() const {
    std::lock_guard lock(mu_);
    return events_;
}

json AnnotationBoard::results_json(const WilcoxonOptions& options) const {
    std::lock_guard lock(mu_);
    json records = json::array();
    std::vector<Choice> verdicts;
    std::size_t open = 0;
    for (const auto& r : records_) {
        const auto& rec = r.record;
        json j{{"id", rec.id},
               {"batch_id", r.batch_id},
               {"system", rec.side_b.system},
               {"state", to_string(r.state)},
               {"votes", rec.votes.size()},
               {"is_catch", rec.is_catch},
               {"auto_tie", rec.auto_tie},
               {"new", {{"text", rec.side_b.text}}},
               {"baseline", {{"text", rec.side_a.text}}}};
        j["verdict"] = rec.verdict ? json(to_string(*rec.verdict)) : json(nullptr);
        records.push_back(std::move(j));
        if (r.state == RecordState::Open) ++open;
        if (!rec.is_catch && rec.verdict) verdicts.push_back(*rec.verdict);
    }
    json out{{"records", records}, {"open", open}};
    if (!verdicts.empty()) {
        const auto s = summarize(verdicts, options);
        out["summary"] = {{"n", s.n},
                          {"pct_a", s.pct_a},
                          {"pct_b", s.pct_b},
                          {"pct_tie", s.pct_tie},
                          {"win_rate", s.win_rate},
                          {"p_value", s.p_value},
                          {"stars", s.stars}};
    }
    return out;
}

BoardTexts load_board_texts(const std::string& dir) {
    return {read_file(dir + "/instructions.txt"), read_file(dir + "/warning.txt")};
}

// ─── HTTP ──────────────────────────────────────────────────────

struct AnnotationServer::Impl {
    AnnotationBoard& board;
    WilcoxonOptions options;
    httplib::Server server;

    Impl(AnnotationBoard& b, WilcoxonOptions o) : board(b), options(o) {}
};

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(body.dump(), "application/json");
}

json stats_json(const std::string& id, const std::optional<WorkerState>& ws) {
    if (!ws) {
        return {{"worker", id}, {"catch_total", 0}, {"catch_wrong", 0}, {"votes", 0},
                {"discarded", false}};
    }
    return {{"worker", id},
            {"catch_total", ws->tally.catch_total},
            {"catch_wrong", ws->tally.catch_wrong},
            {"votes", ws->voted.size()},
            {"discarded", ws->discarded}};
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationBoard& board, WilcoxonOptions options)
    : impl_(std::make_unique<Impl>(board, options)) {
    auto& svr = impl_->server;
    Impl* impl = impl_.get();

    svr.Get("/api/tasks/next", [impl](const httplib::Request& req, httplib::Response& res) {
        const auto worker = req.get_param_value("worker");
        if (worker.empty()) return reply(res, 400, {{"error", "worker parameter required"}});
        const auto task = impl->board.next_task(worker);
        if (!task) return reply(res, 200, {{"task", nullptr}, {"done", true}});
        reply(res, 200, {{"task", payload_to_json(*task)}, {"done", false}});
    });

    svr.Post("/api/votes", [impl](const httplib::Request& req, httplib::Response& res) {
        std::string worker, record_id;
        Choice choice{};
        try {
            const auto body = json::parse(req.body);
            worker = body.at("worker").get<std::string>();
            record_id = body.at("record_id").get<std::string>();
            choice = parse_choice(body.at("choice").get<std::string>());
        } catch (const std::exception& e) {
            return reply(res, 400, {{"ok", false}, {"reason", std::string("bad vote: ") + e.what()}});
        }
        const auto ack = impl->board.submit_vote(worker, record_id, choice);
        json body{{"ok", ack.ok}};
        if (!ack.ok) body["reason"] = ack.reason;
        if (ack.verdict) body["verdict_set"] = true;
        const int status = ack.ok ? 200 : ack.reason == "unknown record" ? 404 : 409;
        reply(res, status, body);
    });

    svr.Get("/api/results", [impl](const httplib::Request&, httplib::Response& res) {
        reply(res, 200, impl->board.results_json(impl->options));
    });

    svr.Post("/api/batches", [impl](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto ack = impl->board.create_batch(batch_spec_from_json(json::parse(req.body)));
            reply(res, ack.created ? 201 : 200,
                  {{"batch_id", ack.batch_id},
                   {"real", ack.real},
                   {"catch", ack.catches},
                   {"auto_tie", ack.auto_ties}});
        } catch (const std::exception& e) {
            reply(res, 400, {{"error", e.what()}});
        }
    });

    svr.Post("/api/batches/finalize", [impl](const httplib::Request&, httplib::Response& res) {
        const auto r = impl->board.finalize_batch();
        reply(res, 200, {{"discarded", r.discarded}, {"relaunch", r.relaunch}});
    });

    svr.Get(R"(/api/workers/([^/]+)/stats)",
            [impl](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                reply(res, 200, stats_json(id, impl->board.worker(id)));
            });
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind_any_port(const std::string& host) {
    return impl_->server.bind_to_any_port(host);
}

bool AnnotationServer::bind(const std::string& host, int port) {
    return impl_->server.bind_to_port(host, port);
}

void AnnotationServer::run() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace ifb
