#include "ifb/stats.hpp"

#include "ifb/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ifb {

namespace {

struct Ranked {
    std::vector<long> doubled;  ///< 2 x average rank, always an integer
    std::vector<bool> positive;
    double tie_term = 0.0;      ///< sum over tie blocks of t^3 - t
};

Ranked rank_nonzero(const std::vector<double>& diffs) {
    std::vector<double> nz;
    for (double d : diffs) {
        if (std::isnan(d)) throw std::invalid_argument("NaN difference");
        if (d != 0.0) nz.push_back(d);
    }
    if (nz.empty()) throw std::invalid_argument("no informative pairs");
    std::sort(nz.begin(), nz.end(),
              [](double a, double b) { return std::abs(a) < std::abs(b); });
    Ranked r;
    r.doubled.resize(nz.size());
    r.positive.resize(nz.size());
    for (std::size_t i = 0; i < nz.size();) {
        std::size_t j = i;
        while (j + 1 < nz.size() && std::abs(nz[j + 1]) == std::abs(nz[i])) ++j;
        const auto t = static_cast<double>(j - i + 1);
        r.tie_term += t * t * t - t;
        for (std::size_t k = i; k <= j; ++k) {
            r.doubled[k] = static_cast<long>(i + j + 2);
            r.positive[k] = nz[k] > 0;
        }
        i = j + 1;
    }
    return r;
}

long doubled_w_plus(const Ranked& r) {
    long w = 0;
    for (std::size_t i = 0; i < r.doubled.size(); ++i) {
        if (r.positive[i]) w += r.doubled[i];
    }
    return w;
}

double exact_p(const Ranked& r) {
    const long total = std::accumulate(r.doubled.begin(), r.doubled.end(), 0L);
    // counts[s]: number of sign assignments whose positive doubled ranks sum to s.
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    long reach = 0;
    for (long rank : r.doubled) {
        for (long s = reach; s >= 0; --s) counts[s + rank] += counts[s];
        reach += rank;
    }
    const long w = doubled_w_plus(r);
    const double all = std::ldexp(1.0, static_cast<int>(r.doubled.size()));
    double lower = 0.0, upper = 0.0;
    for (long s = 0; s <= total; ++s) {
        if (s <= w) lower += counts[s];
        if (s >= w) upper += counts[s];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / all);
}

double normal_p(const Ranked& r, Continuity continuity) {
    const auto n = static_cast<double>(r.doubled.size());
    const double w = static_cast<double>(doubled_w_plus(r)) / 2.0;
    const double mean = n * (n + 1.0) / 4.0;
    const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - r.tie_term / 48.0;
    double cc = 0.0;
    switch (continuity) {
        case Continuity::Lattice: {
            long g = 0;
            for (long d : r.doubled) g = std::gcd(g, d);
            cc = static_cast<double>(g) / 4.0;
            break;
        }
        case Continuity::Half:
            cc = 0.5;
            break;
        case Continuity::None:
            break;
    }
    if (var <= 0.0) return 1.0;
    const double z = std::max(0.0, std::abs(w - mean) - cc) / std::sqrt(var);
    return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

std::string cell(const std::optional<double>& v) { return v ? format_fixed(*v) : "--"; }

GenerationInfo generation_from_json(const nlohmann::json& side) {
    GenerationInfo g;
    if (side.is_null()) return g;
    if (!side.is_object()) throw std::invalid_argument("generation entry must be an object");
    if (side.contains("text")) g.text = side["text"].get<std::string>();
    if (side.contains("flags")) {
        BehaviorFlags f;
        for (const auto& name : side["flags"]) f.yes.insert(parse_behavior(name.get<std::string>()));
        g.flags = std::move(f);
    }
    return g;
}

}  // namespace

std::string_view to_string(Choice choice) {
    switch (choice) {
        case Choice::A:
            return "a";
        case Choice::B:
            return "b";
        case Choice::Tie:
            return "tie";
    }
    return "?";
}

Choice parse_choice(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "a") return Choice::A;
    if (t == "b") return Choice::B;
    if (t == "tie") return Choice::Tie;
    throw std::invalid_argument("choice must be a, b or tie, got \"" + std::string(text) + "\"");
}

Choice majority_vote(const std::vector<Choice>& votes) {
    if (votes.empty()) throw std::invalid_argument("majority vote over zero votes");
    std::array<std::size_t, 3> counts{};
    for (auto v : votes) ++counts[static_cast<std::size_t>(v)];
    for (std::size_t c = 0; c < 3; ++c) {
        if (2 * counts[c] > votes.size()) return static_cast<Choice>(c);
    }
    return Choice::Tie;
}

bool auto_tie_check(const ComparisonRecord& record) {
    return record.side_a.text == record.side_b.text;
}

bool should_discard(const WorkerRecord& w) {
    if (w.catch_total == 0) return false;
    if (w.catch_total >= 5) return w.catch_wrong * 5 > w.catch_total;
    return w.catch_wrong * 2 > w.catch_total;
}

WorkerFilter filter_workers(const std::vector<WorkerRecord>& workers) {
    WorkerFilter f;
    for (const auto& w : workers) {
        if (w.catch_wrong > w.catch_total) {
            throw std::invalid_argument("worker " + w.worker_id + " has more wrong than total");
        }
        (should_discard(w) ? f.discarded : f.kept).push_back(w);
    }
    return f;
}

std::string_view to_string(Continuity c) {
    switch (c) {
        case Continuity::Lattice:
            return "lattice";
        case Continuity::Half:
            return "half";
        case Continuity::None:
            return "none";
    }
    return "?";
}

Continuity parse_continuity(std::string_view text) {
    if (text == "lattice") return Continuity::Lattice;
    if (text == "half") return Continuity::Half;
    if (text == "none") return Continuity::None;
    throw std::invalid_argument("continuity must be lattice, half or none");
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs,
                                    const WilcoxonOptions& options) {
    const auto r = rank_nonzero(diffs);
    WilcoxonResult out;
    out.n = r.doubled.size();
    out.w_plus = static_cast<double>(doubled_w_plus(r)) / 2.0;
    out.exact = out.n <= options.exact_max_n;
    out.p_value = out.exact ? exact_p(r) : normal_p(r, options.continuity);
    return out;
}

double wilcoxon_exact_p(const std::vector<double>& diffs) { return exact_p(rank_nonzero(diffs)); }

double wilcoxon_normal_p(const std::vector<double>& diffs, Continuity continuity) {
    return normal_p(rank_nonzero(diffs), continuity);
}

std::string_view stars(double p) {
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "--";
}

double paired_diff(Choice verdict) {
    switch (verdict) {
        case Choice::A:
            return -1.0;
        case Choice::B:
            return 1.0;
        case Choice::Tie:
            return 0.0;
    }
    return 0.0;
}

OutcomeSummary summarize(const std::vector<Choice>& verdicts, const WilcoxonOptions& options) {
    if (verdicts.empty()) throw std::invalid_argument("nothing to summarize");
    OutcomeSummary s;
    s.n = verdicts.size();
    std::vector<double> diffs;
    diffs.reserve(verdicts.size());
    for (auto v : verdicts) {
        (v == Choice::A ? s.count_a : v == Choice::B ? s.count_b : s.count_tie)++;
        diffs.push_back(paired_diff(v));
    }
    const auto n = static_cast<double>(s.n);
    s.pct_a = 100.0 * static_cast<double>(s.count_a) / n;
    s.pct_b = 100.0 * static_cast<double>(s.count_b) / n;
    s.pct_tie = 100.0 * static_cast<double>(s.count_tie) / n;
    s.win_rate = s.pct_b - s.pct_a;
    if (s.count_a + s.count_b > 0) s.p_value = wilcoxon_signed_rank(diffs, options).p_value;
    s.stars = std::string(stars(s.p_value));
    return s;
}

OutcomeSummary summarize(const std::vector<ComparisonRecord>& records,
                         const WilcoxonOptions& options) {
    std::vector<Choice> verdicts;
    for (const auto& r : records) {
        if (r.is_catch) continue;
        if (!r.verdict) throw std::invalid_argument("record " + r.id + " has no verdict yet");
        verdicts.push_back(*r.verdict);
    }
    return summarize(verdicts, options);
}

AgreementTable agreement_table(const std::vector<Judgment>& x, const std::vector<Judgment>& y) {
    std::map<std::string, Choice> by_id;
    for (const auto& j : x) {
        if (!by_id.emplace(j.id, j.choice).second) {
            throw std::invalid_argument("duplicate id " + j.id);
        }
    }
    if (x.size() != y.size()) throw std::invalid_argument("judgment lists cover different ids");
    if (x.empty()) throw std::invalid_argument("no judgments to compare");
    std::array<std::array<std::size_t, 3>, 3> counts{};
    std::set<std::string> seen;
    for (const auto& j : y) {
        const auto it = by_id.find(j.id);
        if (it == by_id.end() || !seen.insert(j.id).second) {
            throw std::invalid_argument("judgment lists cover different ids (" + j.id + ")");
        }
        ++counts[static_cast<std::size_t>(it->second)][static_cast<std::size_t>(j.choice)];
    }
    Matrix3 m{};
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            m[i][k] = 100.0 * static_cast<double>(counts[i][k]) / static_cast<double>(x.size());
        }
    }
    return agreement_from_matrix(m);
}

AgreementTable agreement_from_matrix(const Matrix3& percentages) {
    AgreementTable t;
    t.matrix = percentages;
    t.match_pct = percentages[0][0] + percentages[1][1] + percentages[2][2];
    t.strong_disagree_pct = percentages[0][1] + percentages[1][0];
    return t;
}

std::string_view to_string(Behavior behavior) {
    switch (behavior) {
        case Behavior::SeekInfo:
            return "seek-info";
        case Behavior::OffTopic:
            return "off-topic";
        case Behavior::Controversial:
            return "controversial";
        case Behavior::Insincere:
            return "insincere";
        case Behavior::Unfriendly:
            return "unfriendly";
    }
    return "?";
}

Behavior parse_behavior(std::string_view name) {
    const auto t = trim(name);
    for (auto b : kAllBehaviors) {
        if (to_string(b) == t) return b;
    }
    throw std::invalid_argument("unknown behavior \"" + std::string(name) + "\"");
}

std::set<Behavior> parse_behavior_list(std::string_view text) {
    std::set<Behavior> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = trim(text.substr(start, comma == text.npos ? text.npos : comma - start));
        if (!item.empty()) out.insert(parse_behavior(item));
        if (comma == text.npos) break;
        start = comma + 1;
    }
    return out;
}

BehaviorRates behavior_rates(const std::vector<BehaviorFlags>& generations) {
    if (generations.empty()) throw std::invalid_argument("no generations");
    BehaviorRates r;
    r.n = generations.size();
    std::array<std::size_t, 5> counts{};
    std::size_t both = 0;
    for (const auto& g : generations) {
        for (auto b : kAllBehaviors) counts[static_cast<std::size_t>(b)] += g.has(b);
        both += g.has(Behavior::OffTopic) && g.has(Behavior::SeekInfo);
    }
    const auto n = static_cast<double>(r.n);
    for (std::size_t i = 0; i < 5; ++i) r.pct[i] = 100.0 * static_cast<double>(counts[i]) / n;
    r.off_topic_and_seek_info = 100.0 * static_cast<double>(both) / n;
    return r;
}

OutcomeSummary filtered_summary(const std::vector<Choice>& verdicts,
                                const std::vector<BehaviorFlags>& new_side_flags,
                                const std::set<Behavior>& exclusions,
                                const WilcoxonOptions& options) {
    if (verdicts.size() != new_side_flags.size()) {
        throw std::invalid_argument("need one flag set per verdict");
    }
    std::vector<Choice> kept;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        const bool excluded = std::any_of(exclusions.begin(), exclusions.end(),
                                          [&](Behavior b) { return new_side_flags[i].has(b); });
        if (!excluded) kept.push_back(verdicts[i]);
    }
    if (kept.empty()) throw std::runtime_error("empty after filtering");
    return summarize(kept, options);
}

double mean_length(const std::vector<std::string>& generations) {
    if (generations.empty()) throw std::invalid_argument("no generations");
    std::size_t words = 0;
    for (const auto& g : generations) words += count_words(g);
    return static_cast<double>(words) / static_cast<double>(generations.size());
}

StatsRecord stats_record_from_json(const nlohmann::json& record) {
    StatsRecord r;
    try {
        r.system = record.at("system").get<std::string>();
        r.verdict = parse_choice(record.at("verdict").get<std::string>());
        if (record.contains("new")) r.new_side = generation_from_json(record["new"]);
        if (record.contains("baseline")) r.baseline = generation_from_json(record["baseline"]);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("bad stats record: ") + e.what());
    }
    return r;
}

std::vector<StatsRecord> read_stats_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read records: " + path);
    std::vector<StatsRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(stats_record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ReportRow> build_report(const std::vector<StatsRecord>& records,
                                    const ReportOptions& options) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const StatsRecord*>> groups;
    for (const auto& r : records) {
        auto& g = groups[r.system];
        if (g.empty()) order.push_back(r.system);
        g.push_back(&r);
    }

    auto side_row = [](const std::string& name, const std::vector<const GenerationInfo*>& sides) {
        ReportRow row;
        row.system = name;
        std::vector<BehaviorFlags> flags;
        std::vector<std::string> texts;
        for (const auto* s : sides) {
            if (s->flags) flags.push_back(*s->flags);
            if (s->text) texts.push_back(*s->text);
        }
        if (!flags.empty()) row.behaviors = behavior_rates(flags);
        if (!texts.empty()) row.mean_length = mean_length(texts);
        return row;
    };

    std::vector<ReportRow> rows;
    std::vector<const GenerationInfo*> baselines;
    for (const auto& r : records) baselines.push_back(&r.baseline);
    auto base = side_row("baseline", baselines);
    if (base.behaviors || base.mean_length) rows.push_back(std::move(base));

    for (const auto& name : order) {
        const auto& group = groups[name];
        std::vector<const GenerationInfo*> sides;
        std::vector<Choice> verdicts;
        std::vector<BehaviorFlags> flags;
        for (const auto* r : group) {
            sides.push_back(&r->new_side);
            verdicts.push_back(r->verdict);
            flags.push_back(r->new_side.flags.value_or(BehaviorFlags{}));
        }
        auto row = side_row(name, sides);
        row.outcome = options.exclusions.empty()
                          ? summarize(verdicts, options.wilcoxon)
                          : filtered_summary(verdicts, flags, options.exclusions, options.wilcoxon);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_report(const std::vector<ReportRow>& rows) {
    std::size_t width = 6;
    for (const auto& r : rows) width = std::max(width, r.system.size());
    std::string out;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%-*s %5s %8s %6s %6s %6s %4s %9s %9s %9s %13s %9s %10s %7s\n",
                  static_cast<int>(width), "system", "n", "baseline", "new", "tie", "win", "sig",
                  "seek-info", "off-topic", "off&seek", "controversial", "insincere",
                  "unfriendly", "avg-len");
    out += buf;
    for (const auto& r : rows) {
        std::string n = "--", a = "--", b = "--", t = "--", win = "--", sig = "--";
        if (r.outcome) {
            n = std::to_string(r.outcome->n);
            a = format_fixed(r.outcome->pct_a);
            b = format_fixed(r.outcome->pct_b);
            t = format_fixed(r.outcome->pct_tie);
            win = format_signed(r.outcome->win_rate);
            sig = r.outcome->stars;
        }
        std::array<std::optional<double>, 6> beh{};
        if (r.behaviors) {
            beh = {r.behaviors->rate(Behavior::SeekInfo), r.behaviors->rate(Behavior::OffTopic),
                   r.behaviors->off_topic_and_seek_info,
                   r.behaviors->rate(Behavior::Controversial),
                   r.behaviors->rate(Behavior::Insincere), r.behaviors->rate(Behavior::Unfriendly)};
        }
        std::snprintf(buf, sizeof buf,
                      "%-*s %5s %8s %6s %6s %6s %4s %9s %9s %9s %13s %9s %10s %7s\n",
                      static_cast<int>(width), r.system.c_str(), n.c_str(), a.c_str(), b.c_str(),
                      t.c_str(), win.c_str(), sig.c_str(), cell(beh[0]).c_str(),
                      cell(beh[1]).c_str(), cell(beh[2]).c_str(), cell(beh[3]).c_str(),
                      cell(beh[4]).c_str(), cell(beh[5]).c_str(), cell(r.mean_length).c_str());
        out += buf;
    }
    return out;
}

nlohmann::json report_row_to_json(const ReportRow& row) {
    nlohmann::json out{{"system", row.system}};
    if (row.outcome) {
        const auto& o = *row.outcome;
        out["n"] = o.n;
        out["pct_a"] = o.pct_a;
        out["pct_b"] = o.pct_b;
        out["pct_tie"] = o.pct_tie;
        out["win_rate"] = o.win_rate;
        out["p_value"] = o.p_value;
        out["stars"] = o.stars;
    }
    if (row.behaviors) {
        nlohmann::json b;
        for (auto beh : kAllBehaviors) b[std::string(to_string(beh))] = row.behaviors->rate(beh);
        b["off-topic&seek-info"] = row.behaviors->off_topic_and_seek_info;
        out["behaviors"] = b;
    }
    if (row.mean_length) out["mean_length"] = *row.mean_length;
    return out;
}

}  // namespace ifb
