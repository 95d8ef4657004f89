#pragma once

#include <span>
#include <vector>

namespace randconv {

inline constexpr double kProbFloor = 1e-12;

struct PredictionDistribution {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
};

struct LossBreakdown {
  double task = 0.0;
  double consistency = 0.0;
  double lambda = 0.0;
  double total = 0.0;
};

// Max-subtracted exponential normalization. Throws on empty input.
PredictionDistribution softmax(std::span<const double> logits);

// sum_i p_i log(p_i / q_i), both sides floored at kProbFloor.
double kl_divergence(const PredictionDistribution& p, const PredictionDistribution& q);

// Arithmetic mean of the predictions.
PredictionDistribution mean_distribution(std::span<const PredictionDistribution> preds);

// sum_j KL(y_j || ybar) with ybar the mean of the predictions. Needs at least
// two predictions of equal length; the per-sample terms are summed in
// ascending order so the result does not depend on sample order. The
// consistency weight is applied by total_loss, not here.
double consistency_loss(std::span<const PredictionDistribution> preds);

// task = -log(max(pred1[label], floor)); total = task + lambda * cons.
LossBreakdown total_loss(const PredictionDistribution& pred1, int label, double cons,
                         double lambda);

}  // namespace randconv
