#pragma once

#include <cstdint>
#include <vector>

namespace had {

// Binary confusion counts.
struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t tn = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
};

// (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)); 0 when any factor of
// the denominator is 0.
double mcc(const ConfusionCounts& c);

// 2TP / (2TP + FP + FN); 0 when the denominator is 0.
double f1(const ConfusionCounts& c);

// Fraction of exact matches. Throws EmptyInput on empty vectors.
double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Generalized multiclass MCC (the R_K statistic) over a full confusion
// matrix m[actual][predicted]; equals binary MCC on 2x2 matrices.
double mcc_multiclass(const std::vector<std::vector<std::int64_t>>& m);

ConfusionCounts confusion_from_binary(const std::vector<int>& predictions,
                                      const std::vector<int>& labels);

std::vector<std::vector<std::int64_t>> confusion_matrix(const std::vector<int>& predictions,
                                                        const std::vector<int>& labels,
                                                        int n_classes);

}  // namespace had
