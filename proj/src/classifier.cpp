#include "ifb/classifier.hpp"

#include "ifb/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ifb {

namespace {

constexpr std::string_view kModelMagic = "ifb-feedback-classifier";
constexpr int kModelVersion = 1;

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + e^z), stable for large |z|.
double softplus(double z) {
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void check_hash_bits(int hash_bits) {
    if (hash_bits < kMinHashBits || hash_bits > kMaxHashBits) {
        throw std::invalid_argument("hash width must lie in [10, 30], got " +
                                    std::to_string(hash_bits));
    }
}

double dot(const std::vector<double>& w, const FeatureVector& x) {
    double s = 0.0;
    for (const auto& f : x.entries) s += w[f.index] * f.count;
    return s;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

FeatureVector featurize(std::string_view input_text, int hash_bits) {
    check_hash_bits(hash_bits);
    const std::uint64_t mask = (std::uint64_t{1} << hash_bits) - 1;
    const auto tokens = split_words(to_lower(input_text));
    std::map<std::uint32_t, double> counts;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        counts[static_cast<std::uint32_t>(fnv1a("u\x1f" + tokens[i]) & mask)] += 1.0;
        if (i + 1 < tokens.size()) {
            const auto key = "b\x1f" + tokens[i] + "\x1f" + tokens[i + 1];
            counts[static_cast<std::uint32_t>(fnv1a(key) & mask)] += 1.0;
        }
    }
    FeatureVector fv;
    fv.entries.reserve(counts.size());
    for (const auto& [idx, c] : counts) fv.entries.push_back({idx, c});
    return fv;
}

FeedbackClassifier::FeedbackClassifier(int hash_bits, std::size_t max_history)
    : hash_bits_(hash_bits), max_history_(max_history) {
    check_hash_bits(hash_bits);
    weights_.assign(std::size_t{1} << hash_bits, 0.0);
    metadata_.hash_bits = hash_bits;
    metadata_.max_history = max_history;
}

double FeedbackClassifier::logit(const FeatureVector& features) const {
    return dot(weights_, features) + bias_;
}

double FeedbackClassifier::score_features(const FeatureVector& features) const {
    return sigmoid(logit(features));
}

double FeedbackClassifier::score_text(std::string_view input_text) const {
    return score_features(featurize(input_text, hash_bits_));
}

double FeedbackClassifier::score(const History& history, std::string_view candidate) const {
    return score_text(serialize_input(history, candidate, max_history_));
}

std::vector<double> FeedbackClassifier::score_batch(
    const std::vector<std::string>& input_texts) const {
    std::vector<double> out;
    out.reserve(input_texts.size());
    for (const auto& t : input_texts) out.push_back(score_text(t));
    return out;
}

void FeedbackClassifier::save(std::ostream& out) const {
    std::size_t nonzero = 0;
    for (double w : weights_) nonzero += (w != 0.0);
    out << kModelMagic << ' ' << kModelVersion << '\n'
        << "hash_bits " << hash_bits_ << '\n'
        << "max_history " << max_history_ << '\n'
        << "bias " << fmt_double(bias_) << '\n'
        << "learning_rate " << fmt_double(metadata_.learning_rate) << '\n'
        << "epochs " << metadata_.epochs << '\n'
        << "l2 " << fmt_double(metadata_.l2) << '\n'
        << "batch_size " << metadata_.batch_size << '\n'
        << "seed " << metadata_.seed << '\n'
        << "nonzero " << nonzero << '\n';
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (weights_[i] != 0.0) out << i << ' ' << fmt_double(weights_[i]) << '\n';
    }
}

void FeedbackClassifier::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model: " + path);
    save(out);
}

FeedbackClassifier FeedbackClassifier::load(std::istream& in) {
    auto expect = [&in](std::string_view key) {
        std::string k;
        if (!(in >> k) || k != key) {
            throw std::runtime_error("model file: expected \"" + std::string(key) + "\"");
        }
    };
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kModelMagic || version != kModelVersion) {
        throw std::runtime_error("not a feedback classifier model (version 1)");
    }
    int bits = 0;
    std::size_t max_history = 0;
    expect("hash_bits");
    in >> bits;
    expect("max_history");
    in >> max_history;
    if (!in) throw std::runtime_error("model file: bad header");
    FeedbackClassifier model(bits, max_history);
    auto& meta = model.metadata_;
    std::size_t nonzero = 0;
    expect("bias");
    in >> model.bias_;
    expect("learning_rate");
    in >> meta.learning_rate;
    expect("epochs");
    in >> meta.epochs;
    expect("l2");
    in >> meta.l2;
    expect("batch_size");
    in >> meta.batch_size;
    expect("seed");
    in >> meta.seed;
    expect("nonzero");
    in >> nonzero;
    if (!in) throw std::runtime_error("model file: bad header");
    for (std::size_t i = 0; i < nonzero; ++i) {
        std::size_t idx = 0;
        double w = 0.0;
        if (!(in >> idx >> w)) throw std::runtime_error("model file: truncated weights");
        if (idx >= model.weights_.size() || !std::isfinite(w)) {
            throw std::runtime_error("model file: bad weight entry");
        }
        model.weights_[idx] = w;
    }
    return model;
}

FeedbackClassifier FeedbackClassifier::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read model: " + path);
    return load(in);
}

FeedbackClassifier with_parameters(const FeedbackClassifier& model, std::vector<double> weights,
                                   double bias) {
    if (weights.size() != model.weights_.size()) {
        throw std::invalid_argument("weight vector size does not match hash width");
    }
    FeedbackClassifier out = model;
    out.weights_ = std::move(weights);
    out.bias_ = bias;
    return out;
}

std::vector<FeaturizedExample> featurize_all(const std::vector<LabeledExample>& examples,
                                             int hash_bits) {
    std::vector<FeaturizedExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back({featurize(ex.input_text, hash_bits), ex.label});
    return out;
}

Objective objective(const FeedbackClassifier& model, const std::vector<FeaturizedExample>& data,
                    double l2) {
    Objective obj;
    const auto& w = model.weights();
    obj.weight_gradient.assign(w.size(), 0.0);
    if (data.empty()) return obj;
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (const auto& ex : data) {
        const double z = model.logit(ex.features);
        obj.loss += (softplus(z) - ex.label * z) * inv_n;
        const double r = (sigmoid(z) - ex.label) * inv_n;
        for (const auto& f : ex.features.entries) obj.weight_gradient[f.index] += r * f.count;
        obj.bias_gradient += r;
    }
    if (l2 > 0.0) {
        double sq = 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            sq += w[j] * w[j];
            obj.weight_gradient[j] += l2 * w[j];
        }
        obj.loss += 0.5 * l2 * sq;
    }
    return obj;
}

TrainResult train(const std::vector<LabeledExample>& examples, const TrainConfig& config) {
    if (examples.empty()) throw std::invalid_argument("training set is empty");
    bool has_pos = false, has_neg = false;
    for (const auto& ex : examples) (ex.label == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw std::invalid_argument("both classes required in the training set");
    }
    if (!(config.learning_rate > 0.0) || config.epochs < 0 || config.batch_size == 0 ||
        config.l2 < 0.0) {
        throw std::invalid_argument("bad training config (need lr > 0, epochs >= 0, batch > 0)");
    }

    const auto data = featurize_all(examples, config.hash_bits);
    FeedbackClassifier model(config.hash_bits, config.max_history);
    model.metadata_ = config;

    // Weights are held as scale * v so the L2 shrink costs O(1) per batch.
    std::vector<double> v(model.weights_.size(), 0.0);
    double scale = 1.0;
    double bias = 0.0;
    const double lr = config.learning_rate;
    const double shrink = 1.0 - lr * config.l2;
    if (shrink <= 0.0) {
        throw std::invalid_argument("learning rate times l2 must be below 1");
    }

    auto materialize = [&] {
        for (std::size_t j = 0; j < v.size(); ++j) model.weights_[j] = scale * v[j];
        model.bias_ = bias;
    };

    TrainResult result{model, {}};
    const double initial = objective(model, data, config.l2).loss;
    result.losses.push_back(initial);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(config.seed);
    std::vector<double> residual;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            residual.clear();
            for (std::size_t i = start; i < end; ++i) {
                const auto& ex = data[order[i]];
                const double z = scale * dot(v, ex.features) + bias;
                residual.push_back((sigmoid(z) - ex.label) * inv_b);
            }
            scale *= shrink;
            double bias_grad = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const double r = residual[i - start];
                for (const auto& f : data[order[i]].features.entries) {
                    v[f.index] -= lr * r * f.count / scale;
                }
                bias_grad += r;
            }
            bias -= lr * bias_grad;
            if (scale < 1e-8) {
                for (auto& x : v) x *= scale;
                scale = 1.0;
            }
        }
        materialize();
        const double loss = objective(model, data, config.l2).loss;
        if (!std::isfinite(loss) || loss > 10.0 * initial) {
            throw std::runtime_error("training diverged at epoch " + std::to_string(epoch + 1) +
                                     " with learning rate " + fmt_double(lr) +
                                     "; lower --lr");
        }
        result.losses.push_back(loss);
    }
    materialize();
    result.model = model;
    return result;
}

double evaluate_accuracy(const FeedbackClassifier& model, const std::vector<LabeledExample>& dev) {
    if (dev.empty()) throw std::invalid_argument("dev set is empty");
    std::size_t correct = 0;
    for (const auto& ex : dev) {
        const int predicted = model.score_text(ex.input_text) >= 0.5 ? 1 : 0;
        correct += (predicted == ex.label);
    }
    return static_cast<double>(correct) / static_cast<double>(dev.size());
}

RemoteFeedbackScorer::RemoteFeedbackScorer(Endpoint endpoint, std::chrono::milliseconds timeout,
                                           std::size_t max_history)
    : endpoint_(std::move(endpoint)), max_history_(max_history) {
    options_.timeout = timeout;
}

double RemoteFeedbackScorer::score(const History& history, std::string_view candidate) const {
    nlohmann::json body{{"history", serialize_history(history, max_history_)},
                        {"candidate", std::string(candidate)}};
    const auto reply = post_json(endpoint_, body, options_);
    if (!reply.is_object() || !reply.contains("score") || !reply["score"].is_number()) {
        throw ProtocolError(endpoint_.url() + ": reply must carry a numeric \"score\"");
    }
    const double s = reply["score"].get<double>();
    if (!(s >= 0.0 && s <= 1.0)) {
        throw ProtocolError(endpoint_.url() + ": score " + fmt_double(s) + " outside [0,1]");
    }
    return s;
}

double remote_score(const Endpoint& endpoint, const History& history, std::string_view candidate,
                    std::chrono::milliseconds timeout) {
    return RemoteFeedbackScorer(endpoint, timeout).score(history, candidate);
}

}  // namespace ifb
