#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ifb/dataset.hpp"
#include "ifb/episode.hpp"
#include "ifb/http.hpp"

namespace ifb {

/// Accuracy below which a signal is not worth reranking with.
inline constexpr double kSignalAccuracyGate = 0.6;

inline bool discard_signal(double balanced_dev_accuracy) {
    return balanced_dev_accuracy < kSignalAccuracyGate;
}

// ─── Features ──────────────────────────────────────────────────

struct Feature {
    std::uint32_t index;
    double count;

    bool operator==(const Feature&) const = default;
};

/// Sparse hashed bag of lowercase word unigrams and bigrams, sorted by index.
struct FeatureVector {
    std::vector<Feature> entries;

    bool empty() const { return entries.empty(); }
    bool operator==(const FeatureVector&) const = default;
};

inline constexpr int kMinHashBits = 10;
inline constexpr int kMaxHashBits = 30;

/// Throws std::invalid_argument unless hash_bits lies in [10, 30].
FeatureVector featurize(std::string_view input_text, int hash_bits);

// ─── Scorer interface ──────────────────────────────────────────

/// Anything that scores a candidate bot turn given the history, in [0,1].
class ResponseScorer {
public:
    virtual ~ResponseScorer() = default;
    virtual double score(const History& history, std::string_view candidate) const = 0;
};

// ─── Logistic model ────────────────────────────────────────────

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 20;
    double l2 = 0.0;
    std::uint64_t seed = 0;
    std::size_t batch_size = 20;
    int hash_bits = 20;
    std::size_t max_history = kDefaultMaxHistory;
};

struct TrainResult;

/// Logistic regression over hashed n-grams: score = sigmoid(w.x + b).
/// Immutable after training; safe to share for concurrent scoring.
class FeedbackClassifier final : public ResponseScorer {
public:
    /// All-zero model; scores every input 0.5.
    explicit FeedbackClassifier(int hash_bits = 20,
                                std::size_t max_history = kDefaultMaxHistory);

    int hash_bits() const { return hash_bits_; }
    std::size_t max_history() const { return max_history_; }
    const std::vector<double>& weights() const { return weights_; }
    double bias() const { return bias_; }
    const TrainConfig& metadata() const { return metadata_; }

    double logit(const FeatureVector& features) const;
    double score_features(const FeatureVector& features) const;
    double score_text(std::string_view input_text) const;
    double score(const History& history, std::string_view candidate) const override;
    std::vector<double> score_batch(const std::vector<std::string>& input_texts) const;

    void save(std::ostream& out) const;
    void save(const std::string& path) const;
    /// Throws std::runtime_error on a malformed or truncated model file.
    static FeedbackClassifier load(std::istream& in);
    static FeedbackClassifier load(const std::string& path);

private:
    friend TrainResult train(const std::vector<LabeledExample>&, const TrainConfig&);
    friend FeedbackClassifier with_parameters(const FeedbackClassifier&, std::vector<double>,
                                              double);

    int hash_bits_;
    std::size_t max_history_;
    std::vector<double> weights_;
    double bias_ = 0.0;
    TrainConfig metadata_;
};

/// Copy of `model` with the given weights and bias (weights sized 2^hash_bits).
FeedbackClassifier with_parameters(const FeedbackClassifier& model, std::vector<double> weights,
                                   double bias);

struct FeaturizedExample {
    FeatureVector features;
    int label;
};

std::vector<FeaturizedExample> featurize_all(const std::vector<LabeledExample>& examples,
                                             int hash_bits);

struct Objective {
    double loss = 0.0;
    std::vector<double> weight_gradient;
    double bias_gradient = 0.0;
};

/// Mean logistic loss plus (l2/2)||w||^2 and its exact gradient.
Objective objective(const FeedbackClassifier& model, const std::vector<FeaturizedExample>& data,
                    double l2);

struct TrainResult {
    FeedbackClassifier model;
    /// Training objective before the first epoch, then after each epoch.
    std::vector<double> losses;
};

/// Mini-batch gradient descent from zero weights. Deterministic given the
/// config. Throws std::invalid_argument when the data is empty or holds one
/// class ("both classes required"), and std::runtime_error naming the
/// learning rate if the loss climbs above ten times its starting value.
TrainResult train(const std::vector<LabeledExample>& examples, const TrainConfig& config);

/// Fraction of examples where (score >= 0.5) equals the label.
/// Throws std::invalid_argument on an empty set.
double evaluate_accuracy(const FeedbackClassifier& model, const std::vector<LabeledExample>& dev);

// ─── Remote scorer ─────────────────────────────────────────────
// POST {"history": <serialized history>, "candidate": <text>} -> {"score": x}

class RemoteFeedbackScorer final : public ResponseScorer {
public:
    RemoteFeedbackScorer(Endpoint endpoint, std::chrono::milliseconds timeout,
                         std::size_t max_history = kDefaultMaxHistory);
    /// TransportError when unreachable; ProtocolError when the reply lacks a
    /// numeric score in [0,1].
    double score(const History& history, std::string_view candidate) const override;

private:
    Endpoint endpoint_;
    HttpOptions options_;
    std::size_t max_history_;
};

double remote_score(const Endpoint& endpoint, const History& history, std::string_view candidate,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

}  // namespace ifb
