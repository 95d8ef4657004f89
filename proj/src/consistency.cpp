#include "randconv/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace randconv {

PredictionDistribution softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  const double max = *std::max_element(logits.begin(), logits.end());
  PredictionDistribution out;
  out.probs.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.probs[i] = std::exp(logits[i] - max);
    sum += out.probs[i];
  }
  for (auto& p : out.probs) p /= sum;
  return out;
}

double kl_divergence(const PredictionDistribution& p, const PredictionDistribution& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], kProbFloor);
    const double qi = std::max(q[i], kProbFloor);
    kl += std::max(p[i], 0.0) * std::log(pi / qi);
  }
  // Rounding can leave tiny negative values for near-identical inputs.
  return std::max(kl, 0.0);
}

PredictionDistribution mean_distribution(std::span<const PredictionDistribution> preds) {
  if (preds.empty()) throw std::invalid_argument("mean_distribution: no predictions");
  const std::size_t n = preds.front().size();
  PredictionDistribution mean;
  mean.probs.assign(n, 0.0);
  for (const auto& p : preds) {
    if (p.size() != n) throw std::invalid_argument("mean_distribution: length mismatch");
    for (std::size_t i = 0; i < n; ++i) mean.probs[i] += p[i];
  }
  for (auto& v : mean.probs) v /= static_cast<double>(preds.size());
  return mean;
}

double consistency_loss(std::span<const PredictionDistribution> preds) {
  if (preds.size() < 2)
    throw std::invalid_argument("consistency_loss: need at least 2 predictions, got " +
                                std::to_string(preds.size()));
  // Sort a copy so that the mean is accumulated in a canonical order as well.
  std::vector<PredictionDistribution> sorted(preds.begin(), preds.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.probs < b.probs; });
  const PredictionDistribution mean = mean_distribution(sorted);
  std::vector<double> terms;
  terms.reserve(sorted.size());
  for (const auto& p : sorted) terms.push_back(kl_divergence(p, mean));
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum;
}

LossBreakdown total_loss(const PredictionDistribution& pred1, int label, double cons,
                         double lambda) {
  if (label < 0 || static_cast<std::size_t>(label) >= pred1.size())
    throw std::invalid_argument("total_loss: label out of range");
  if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be nonnegative");
  LossBreakdown out;
  out.task = -std::log(std::max(pred1[label], kProbFloor));
  out.consistency = cons;
  out.lambda = lambda;
  out.total = out.task + lambda * cons;
  return out;
}

}  // namespace randconv
