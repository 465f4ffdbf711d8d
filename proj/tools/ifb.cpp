// Command-line front end: ingest -> label -> dataset -> train -> rerank ->
// judge -> stats, plus the annotation server.

#include <CLI11.hpp>

#include "ifb/annotation.hpp"
#include "ifb/classifier.hpp"
#include "ifb/common.hpp"
#include "ifb/dataset.hpp"
#include "ifb/episode.hpp"
#include "ifb/judge.hpp"
#include "ifb/rerank.hpp"
#include "ifb/scorers.hpp"
#include "ifb/signals.hpp"
#include "ifb/stats.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#ifndef IFB_DATA_DIR
#define IFB_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace ifb;

namespace {

/// stdout unless a path is given.
class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) throw std::runtime_error("cannot write " + path);
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Episode> load_episodes(const std::string& path) {
    auto result = ingest(path);
    for (const auto& d : result.diagnostics) {
        std::cerr << path << ":" << d.line << ": skipped: " << d.reason << "\n";
    }
    return std::move(result.episodes);
}

std::string strip_prefix(const std::string& s, const std::string& prefix) {
    return s.rfind(prefix, 0) == 0 ? s.substr(prefix.size()) : std::string();
}

// ─── Subcommands ───────────────────────────────────────────────

struct IngestArgs {
    std::string log;
    std::string out;
    bool strict = false;
    std::uint64_t seed = 0;
};

int cmd_ingest(const IngestArgs& a) {
    const auto result = ingest(a.log);
    for (const auto& d : result.diagnostics) {
        std::cerr << a.log << ":" << d.line << ": " << d.reason << "\n";
    }
    Output out(a.out);
    write_episodes(out.stream(), result.episodes);
    std::cerr << "ingest: " << result.episodes.size() << " episodes, "
              << result.diagnostics.size() << " rejected\n";
    return a.strict && !result.diagnostics.empty() ? 1 : 0;
}

struct LabelArgs {
    std::string episodes;
    std::string signal;
    std::size_t k = 1;
    std::size_t min_words = 5;
    std::string scorer;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_label(const LabelArgs& a) {
    SignalSpec spec;
    spec.kind = parse_signal_kind(a.signal);
    spec.k = a.k;
    spec.min_words = a.min_words;
    spec.validate();

    std::unique_ptr<SentimentScorer> sentiment;
    std::unique_ptr<ReactionScorer> reaction;
    if (spec.needs_sentiment() || spec.needs_reaction()) {
        if (a.scorer.empty()) throw std::invalid_argument(spec.name() + " needs --scorer");
        const auto backend = parse_scorer_backend(a.scorer);
        if (spec.needs_sentiment()) sentiment = make_sentiment_scorer(backend);
        if (spec.needs_reaction()) reaction = make_reaction_scorer(backend);
    }
    const SignalScorers scorers{sentiment.get(), reaction.get()};

    const auto episodes = load_episodes(a.episodes);
    Output out(a.out);
    std::size_t n = 0, positive = 0;
    for (const auto& e : episodes) {
        for (const auto& l : label_episode(e, spec, scorers)) {
            out.stream() << label_to_json(l).dump() << "\n";
            ++n;
            positive += l.value;
        }
    }
    std::cerr << "label " << spec.name() << ": " << n << " turns, " << positive << " positive\n";
    return 0;
}

struct DatasetArgs {
    std::string episodes;
    std::string labels;
    std::string out_dir = ".";
    bool balance_dev = true;
    bool balance_train = false;
    double train_frac = 0.9;
    std::size_t max_history = kDefaultMaxHistory;
    std::uint64_t seed = 0;
};

int cmd_dataset(const DatasetArgs& a) {
    const auto episodes = load_episodes(a.episodes);
    std::vector<SignalLabel> labels;
    for (const auto& j : read_jsonl(a.labels)) labels.push_back(label_from_json(j));
    const auto examples = build_examples(episodes, labels, a.max_history);
    SplitPlan plan;
    plan.train_fraction = a.train_frac;
    plan.seed = a.seed;
    plan.balance_dev = a.balance_dev;
    plan.balance_train = a.balance_train;
    const auto s = prepare_splits(examples, plan);

    fs::create_directories(a.out_dir);
    std::ofstream train(fs::path(a.out_dir) / "train.jsonl");
    std::ofstream dev(fs::path(a.out_dir) / "dev.jsonl");
    if (!train || !dev) throw std::runtime_error("cannot write into " + a.out_dir);
    write_examples(train, s.train);
    write_examples(dev, s.dev);
    std::cerr << "dataset: " << s.train.size() << " train, " << s.dev.size() << " dev\n";
    return 0;
}

struct TrainArgs {
    std::string dataset;
    std::string dev;
    std::string out = "model.txt";
    int hash_bits = 20;
    double lr = 0.1;
    int epochs = 20;
    double l2 = 0.0;
    std::size_t batch = 20;
    std::size_t max_history = kDefaultMaxHistory;
    std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
    std::string train_path = a.dataset;
    std::string dev_path = a.dev;
    if (fs::is_directory(a.dataset)) {
        train_path = (fs::path(a.dataset) / "train.jsonl").string();
        if (dev_path.empty()) dev_path = (fs::path(a.dataset) / "dev.jsonl").string();
    }
    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.l2 = a.l2;
    cfg.seed = a.seed;
    cfg.batch_size = a.batch;
    cfg.hash_bits = a.hash_bits;
    cfg.max_history = a.max_history;
    const auto result = train(read_examples(train_path), cfg);
    result.model.save(a.out);
    std::cerr << "train: loss " << format_fixed(result.losses.front(), 4) << " -> "
              << format_fixed(result.losses.back(), 4) << ", model written to " << a.out << "\n";
    if (!dev_path.empty()) {
        const double acc = evaluate_accuracy(result.model, read_examples(dev_path));
        std::cout << "balanced-dev accuracy: " << format_fixed(acc, 4);
        if (discard_signal(acc)) std::cout << "  DISCARD (<0.6)";
        std::cout << "\n";
    }
    return 0;
}

struct RerankArgs {
    std::string histories;
    std::string model;
    std::string generator;
    std::size_t num_candidates = 20;
    double top_p = 0.9;
    std::string p_schedule = "constant";
    std::size_t max_tokens = 32;
    std::string rank_by = "model";
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_rerank(const RerankArgs& a) {
    std::unique_ptr<CandidateGenerator> generator;
    if (auto path = strip_prefix(a.generator, "toy:"); !path.empty()) {
        generator = std::make_unique<ToyGenerator>(
            std::make_shared<BigramSource>(BigramSource::load(path)));
    } else if (auto url = strip_prefix(a.generator, "remote:"); !url.empty()) {
        generator = std::make_unique<RemoteGenerator>(parse_endpoint(url),
                                                      std::chrono::milliseconds(60000));
    } else {
        throw std::invalid_argument("--generator must be toy:<path> or remote:<url>");
    }

    const bool by_probability = a.rank_by == "probability";
    if (!by_probability && a.rank_by != "model") {
        throw std::invalid_argument("--rank-by must be model or probability");
    }
    std::unique_ptr<ResponseScorer> scorer;
    if (!by_probability) {
        if (a.model.empty()) throw std::invalid_argument("--model is required");
        if (auto url = strip_prefix(a.model, "remote:"); !url.empty()) {
            scorer = std::make_unique<RemoteFeedbackScorer>(parse_endpoint(url),
                                                            std::chrono::milliseconds(30000));
        } else {
            scorer = std::make_unique<FeedbackClassifier>(FeedbackClassifier::load(a.model));
        }
    }

    SamplerConfig cfg;
    cfg.base_p = a.top_p;
    cfg.schedule = parse_p_schedule(a.p_schedule);
    cfg.max_tokens = a.max_tokens;
    cfg.validate();

    Output out(a.out);
    std::size_t h = 0;
    for (const auto& j : read_jsonl(a.histories)) {
        const auto history = history_from_json(j);
        cfg.seed = a.seed + h * a.num_candidates;
        const auto set = generate_candidates(*generator, history, a.num_candidates, cfg);
        RerankResult r;
        if (by_probability) {
            if (!set.logprobs) throw std::runtime_error("generator did not report log probabilities");
            r = rank_by_probability(set, *set.logprobs);
        } else {
            r = rerank(set, *scorer);
        }
        out.stream() << rerank_to_json(set, r).dump() << "\n";
        ++h;
    }
    std::cerr << "rerank: " << h << " histories\n";
    return 0;
}

struct JudgeArgs {
    std::string input;
    std::string task;
    std::string backend;
    std::string model = "judge";
    std::string templates = std::string(IFB_DATA_DIR) + "/templates";
    std::size_t concurrency = 4;
    std::string review_queue = "review_queue.jsonl";
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_judge(const JudgeArgs& a) {
    const auto task = parse_judge_task(a.task);
    TemplateSet templates;
    templates.emplace(task, load_template(a.templates, task));
    if (const auto missing = templates.at(task).placeholder_count(); missing > 0) {
        std::cerr << "judge: " << missing
                  << " placeholder shot(s) in the template are left out until filled in\n";
    }
    std::vector<JudgeItem> items;
    for (const auto& j : read_jsonl(a.input)) items.push_back(judge_item_from_json(j, task));

    HttpChatBackend backend(parse_endpoint(a.backend), a.model);
    BatchOptions opts;
    opts.concurrency = a.concurrency;
    opts.model = a.model;
    if (!a.review_queue.empty()) opts.review_queue_path = a.review_queue;
    const auto verdicts = judge_batch(items, backend, templates, opts);

    Output out(a.out);
    std::size_t manual = 0, failed = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out.stream() << verdict_to_json(items[i], verdicts[i]).dump() << "\n";
        manual += verdicts[i].extraction == Extraction::ManualFill;
        failed += verdicts[i].extraction == Extraction::Failed;
    }
    std::cerr << "judge: " << items.size() << " items, " << manual << " need manual review, "
              << failed << " failed\n";
    return failed > 0 ? 1 : 0;
}

struct StatsArgs {
    std::string records;
    std::string filtered;
    std::string continuity = "lattice";
    bool json = false;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_stats(const StatsArgs& a) {
    ReportOptions opts;
    opts.wilcoxon.continuity = parse_continuity(a.continuity);
    opts.exclusions = parse_behavior_list(a.filtered);
    const auto rows = build_report(read_stats_records(a.records), opts);
    Output out(a.out);
    if (a.json) {
        for (const auto& r : rows) out.stream() << report_row_to_json(r).dump() << "\n";
    } else {
        out.stream() << format_report(rows);
    }
    return 0;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string batch;
    double catch_fraction = -1.0;
    int votes = -1;
    std::string log = "annotation_events.jsonl";
    std::string texts = std::string(IFB_DATA_DIR) + "/annotation";
    std::uint64_t seed = 0;
    bool seed_given = false;
};

AnnotationServer* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
    const auto texts = load_board_texts(a.texts);
    auto board = fs::exists(a.log) ? AnnotationBoard::replay(a.log, texts)
                                   : std::make_unique<AnnotationBoard>(texts, a.log);
    if (!a.batch.empty()) {
        std::ifstream in(a.batch);
        if (!in) throw std::runtime_error("cannot read " + a.batch);
        auto spec = batch_spec_from_json(nlohmann::json::parse(in));
        if (a.catch_fraction >= 0.0) spec.catch_fraction = a.catch_fraction;
        if (a.votes > 0) spec.votes_required = static_cast<std::size_t>(a.votes);
        if (a.seed_given) spec.seed = a.seed;
        const auto ack = board->create_batch(spec);
        std::cerr << "batch " << ack.batch_id << ": " << ack.real << " records, " << ack.catches
                  << " catch, " << ack.auto_ties << " auto-tie\n";
    }
    AnnotationServer server(*board);
    if (!server.bind(a.host, a.port)) {
        throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(a.port));
    }
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::cerr << "serving on http://" << a.host << ":" << a.port << "\n";
    server.run();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Implicit-feedback response reranking toolkit"};
    app.set_config("--config", "", "key=value file mirroring the flags (flags win)");
    app.require_subcommand(1);

    IngestArgs ingest_a;
    auto* ingest_c = app.add_subcommand("ingest", "Parse and validate an episode log");
    ingest_c->add_option("log", ingest_a.log, "Episode log (one JSON record per line)")->required();
    ingest_c->add_option("--out", ingest_a.out, "Valid episodes (default stdout)");
    ingest_c->add_flag("--strict", ingest_a.strict, "Exit nonzero if any line is rejected");
    ingest_c->add_option("--seed", ingest_a.seed, "Unused; accepted for uniformity");

    LabelArgs label_a;
    auto* label_c = app.add_subcommand("label", "Label every bot turn with a feedback signal");
    label_c->add_option("episodes", label_a.episodes)->required();
    label_c->add_option("--signal", label_a.signal, "replied|length|future-words|future-turns|"
                                                    "nonneg-sentiment-length|"
                                                    "positive-sentiment-length|joy-length")
        ->required();
    label_c->add_option("--k", label_a.k, "Threshold for length/future-* signals")->capture_default_str();
    label_c->add_option("--min-words", label_a.min_words)->capture_default_str();
    label_c->add_option("--scorer", label_a.scorer, "lexicon:<path> or remote:<url>");
    label_c->add_option("--out", label_a.out);
    label_c->add_option("--seed", label_a.seed);

    DatasetArgs dataset_a;
    auto* dataset_c = app.add_subcommand("dataset", "Build train/dev classifier examples");
    dataset_c->add_option("episodes", dataset_a.episodes)->required();
    dataset_c->add_option("labels", dataset_a.labels)->required();
    dataset_c->add_option("--out-dir", dataset_a.out_dir)->capture_default_str();
    dataset_c->add_flag("--balance-dev,!--no-balance-dev", dataset_a.balance_dev)->capture_default_str();
    dataset_c->add_flag("--balance-train", dataset_a.balance_train);
    dataset_c->add_option("--train-frac", dataset_a.train_frac)->capture_default_str();
    dataset_c->add_option("--max-history", dataset_a.max_history)->capture_default_str();
    dataset_c->add_option("--seed", dataset_a.seed);

    TrainArgs train_a;
    auto* train_c = app.add_subcommand("train", "Train the feedback classifier");
    train_c->add_option("dataset", train_a.dataset, "Dataset directory or train file")->required();
    train_c->add_option("--dev", train_a.dev, "Dev file (default <dataset>/dev.jsonl)");
    train_c->add_option("--out", train_a.out)->capture_default_str();
    train_c->add_option("--hash-bits", train_a.hash_bits)->capture_default_str();
    train_c->add_option("--lr", train_a.lr)->capture_default_str();
    train_c->add_option("--epochs", train_a.epochs)->capture_default_str();
    train_c->add_option("--l2", train_a.l2)->capture_default_str();
    train_c->add_option("--batch", train_a.batch)->capture_default_str();
    train_c->add_option("--max-history", train_a.max_history)->capture_default_str();
    train_c->add_option("--seed", train_a.seed);

    RerankArgs rerank_a;
    auto* rerank_c = app.add_subcommand("rerank", "Sample candidates and pick the best");
    rerank_c->add_option("histories", rerank_a.histories)->required();
    rerank_c->add_option("--model", rerank_a.model, "Model file or remote:<url>");
    rerank_c->add_option("--generator", rerank_a.generator, "toy:<table> or remote:<url>")->required();
    rerank_c->add_option("--num-candidates", rerank_a.num_candidates)->capture_default_str();
    rerank_c->add_option("--top-p", rerank_a.top_p)->capture_default_str();
    rerank_c->add_option("--p-schedule", rerank_a.p_schedule, "constant or decay:<lambda>,<floor>")
        ->capture_default_str();
    rerank_c->add_option("--max-tokens", rerank_a.max_tokens)->capture_default_str();
    rerank_c->add_option("--rank-by", rerank_a.rank_by, "model or probability")->capture_default_str();
    rerank_c->add_option("--out", rerank_a.out);
    rerank_c->add_option("--seed", rerank_a.seed);

    JudgeArgs judge_a;
    auto* judge_c = app.add_subcommand("judge", "Ask a chat model to judge pairs or generations");
    judge_c->add_option("input", judge_a.input, "Pairs or generations file")->required();
    judge_c->add_option("--task", judge_a.task,
                        "compare|seek-info|off-topic|controversial|insincere|unfriendly")
        ->required();
    judge_c->add_option("--backend", judge_a.backend, "Chat endpoint URL")->required();
    judge_c->add_option("--model", judge_a.model)->capture_default_str();
    judge_c->add_option("--templates", judge_a.templates)->capture_default_str();
    judge_c->add_option("--concurrency", judge_a.concurrency)->capture_default_str();
    judge_c->add_option("--review-queue", judge_a.review_queue)->capture_default_str();
    judge_c->add_option("--out", judge_a.out);
    judge_c->add_option("--seed", judge_a.seed);

    StatsArgs stats_a;
    auto* stats_c = app.add_subcommand("stats", "Win rates, significance and behavior table");
    stats_c->add_option("records", stats_a.records)->required();
    stats_c->add_option("--filtered", stats_a.filtered,
                        "Drop records whose new generation has any of these behaviors");
    stats_c->add_option("--continuity", stats_a.continuity, "lattice, half or none")
        ->capture_default_str();
    stats_c->add_flag("--json", stats_a.json, "One JSON row per line");
    stats_c->add_option("--out", stats_a.out);
    stats_c->add_option("--seed", stats_a.seed);

    ServeArgs serve_a;
    auto* annotate_c = app.add_subcommand("annotate", "Annotation service");
    annotate_c->require_subcommand(1);
    auto* serve_c = annotate_c->add_subcommand("serve", "Serve pairwise annotation tasks");
    serve_c->add_option("--host", serve_a.host)->capture_default_str();
    serve_c->add_option("--port", serve_a.port)->capture_default_str();
    serve_c->add_option("--batch", serve_a.batch, "Batch spec to load at startup");
    serve_c->add_option("--catch-fraction", serve_a.catch_fraction, "Overrides the batch file");
    serve_c->add_option("--votes", serve_a.votes, "Overrides the batch file");
    serve_c->add_option("--log", serve_a.log, "Event log (replayed if present)")->capture_default_str();
    serve_c->add_option("--texts", serve_a.texts, "Directory with instructions.txt and warning.txt")
        ->capture_default_str();
    auto* serve_seed = serve_c->add_option("--seed", serve_a.seed, "Overrides the batch file");

    CLI11_PARSE(app, argc, argv);
    serve_a.seed_given = serve_seed->count() > 0;

    try {
        if (*ingest_c) return cmd_ingest(ingest_a);
        if (*label_c) return cmd_label(label_a);
        if (*dataset_c) return cmd_dataset(dataset_a);
        if (*train_c) return cmd_train(train_a);
        if (*rerank_c) return cmd_rerank(rerank_a);
        if (*judge_c) return cmd_judge(judge_a);
        if (*stats_c) return cmd_stats(stats_a);
        if (*serve_c) return cmd_serve(serve_a);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
