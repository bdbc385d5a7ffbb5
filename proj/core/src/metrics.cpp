#include "had/metrics.hpp"

#include <cmath>

#include "had/errors.hpp"

namespace had {

double mcc(const ConfusionCounts& c) {
    const double tp = static_cast<double>(c.tp);
    const double tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn);
    const double d1 = tp + fp, d2 = tp + fn, d3 = tn + fp, d4 = tn + fn;
    if (d1 == 0.0 || d2 == 0.0 || d3 == 0.0 || d4 == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(d1 * d2 * d3 * d4);
}

double f1(const ConfusionCounts& c) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom == 0.0) return 0.0;
    return static_cast<double>(2 * c.tp) / denom;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size()) {
        throw ShapeMismatch("accuracy: " + std::to_string(predictions.size()) +
                            " predictions vs " + std::to_string(labels.size()) + " labels");
    }
    if (predictions.empty()) throw EmptyInput("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double mcc_multiclass(const std::vector<std::vector<std::int64_t>>& m) {
    const std::size_t k = m.size();
    double total = 0.0, correct = 0.0;
    std::vector<double> actual(k, 0.0), predicted(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        if (m[i].size() != k) throw ShapeMismatch("mcc_multiclass: matrix is not square");
        for (std::size_t j = 0; j < k; ++j) {
            const double v = static_cast<double>(m[i][j]);
            total += v;
            actual[i] += v;
            predicted[j] += v;
            if (i == j) correct += v;
        }
    }
    double dot_ap = 0.0, dot_aa = 0.0, dot_pp = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        dot_ap += actual[i] * predicted[i];
        dot_aa += actual[i] * actual[i];
        dot_pp += predicted[i] * predicted[i];
    }
    const double num = correct * total - dot_ap;
    const double den = std::sqrt(total * total - dot_pp) * std::sqrt(total * total - dot_aa);
    if (den == 0.0) return 0.0;
    return num / den;
}

ConfusionCounts confusion_from_binary(const std::vector<int>& predictions,
                                      const std::vector<int>& labels) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool p = predictions[i] != 0;
        const bool y = labels[i] != 0;
        if (p && y) ++c.tp;
        else if (!p && !y) ++c.tn;
        else if (p && !y) ++c.fp;
        else ++c.fn;
    }
    return c;
}

std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<int>& predictions,
                                                        const std::vector<int>& labels,
                                                        int n_classes) {
    std::vector<std::vector<std::int64_t>> m(static_cast<std::size_t>(n_classes),
                                             std::vector<std::int64_t>(static_cast<std::size_t>(n_classes), 0));
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        m[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])] += 1;
    }
    return m;
}

}  // namespace had
