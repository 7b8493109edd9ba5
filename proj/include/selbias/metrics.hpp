#ifndef SELBIAS_METRICS_HPP_
#define SELBIAS_METRICS_HPP_

#include <map>
#include <span>
#include <vector>

#include "selbias/common.hpp"

namespace selbias {

struct ClassPrf {
  double precision = 0, recall = 0, f1 = 0;
  std::size_t support = 0;
};

// Percentages. `f1` is the harmonic mean of the weighted precision and
// recall; `f1_classwise` is the support-weighted mean of per-class F1.
template <typename Label>
struct PrfResult {
  double precision = 0, recall = 0, f1 = 0, f1_classwise = 0;
  std::map<Label, ClassPrf> per_class;
};

inline double harmonic_mean(double a, double b) {
  return a + b > 0 ? 2.0 * a * b / (a + b) : 0.0;
}

// Per-class P/R/F1 averaged with gold-support weights; classes absent from
// gold carry zero weight.
template <typename Label>
PrfResult<Label> evaluate_weighted_prf(std::span<const Label> pred,
                                       std::span<const Label> gold) {
  if (pred.size() != gold.size()) {
    throw InvalidArgument("evaluate_weighted_prf: length mismatch (" +
                          std::to_string(pred.size()) + " vs " +
                          std::to_string(gold.size()) + ")");
  }
  if (gold.empty()) throw InvalidArgument("evaluate_weighted_prf: empty input");
  std::map<Label, std::size_t> tp, predicted, support;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ++support[gold[i]];
    ++predicted[pred[i]];
    if (pred[i] == gold[i]) ++tp[gold[i]];
  }
  PrfResult<Label> r;
  const double n = static_cast<double>(gold.size());
  for (const auto& [label, s] : support) {
    ClassPrf c;
    c.support = s;
    const double hits = static_cast<double>(tp[label]);
    const auto np = predicted[label];
    c.precision = np ? hits / static_cast<double>(np) : 0.0;
    c.recall = hits / static_cast<double>(s);
    c.f1 = harmonic_mean(c.precision, c.recall);
    const double w = static_cast<double>(s) / n;
    r.precision += w * c.precision;
    r.recall += w * c.recall;
    r.f1_classwise += w * c.f1;
    r.per_class[label] = c;
  }
  r.f1 = harmonic_mean(r.precision, r.recall);
  r.precision *= 100;
  r.recall *= 100;
  r.f1 *= 100;
  r.f1_classwise *= 100;
  for (auto& [label, c] : r.per_class) {
    c.precision *= 100;
    c.recall *= 100;
    c.f1 *= 100;
  }
  return r;
}

template <typename Label>
PrfResult<Label> evaluate_weighted_prf(const std::vector<Label>& pred,
                                       const std::vector<Label>& gold) {
  return evaluate_weighted_prf(std::span<const Label>(pred), std::span<const Label>(gold));
}

}  // namespace selbias

#endif  // SELBIAS_METRICS_HPP_
