#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "randconv/image.hpp"
#include "randconv/model.hpp"
#include "randconv/randconv.hpp"

namespace randconv {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double lambda = 10.0;
  // Apply the consistency weight twice (lambda^2 overall).
  bool lambda_squared_compat = false;
  // false trains on the clean images only (the ERM baseline).
  bool augment = true;
  RandConvConfig randconv = [] {
    RandConvConfig c;
    c.samples_per_image = 3;
    return c;
  }();
  std::size_t hidden = 64;
  std::uint64_t seed = 0;

  double effective_lambda() const { return lambda_squared_compat ? lambda * lambda : lambda; }
  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;  // mean total objective
  double task_loss = 0.0;
  double cons_loss = 0.0;  // mean unweighted consistency term
  double train_acc = 0.0;  // clean training-set accuracy after the epoch
  std::vector<double> eval_acc;
};

struct TrainResult {
  TinyModel model;
  std::vector<EpochMetrics> metrics;
};

// Mini-batch SGD with momentum (v = mu v + g; w -= lr v) on the RandConv
// objective. Inputs must already be whitened. Each batch is split into fixed
// chunks whose gradients are summed in chunk order, so the result is bitwise
// independent of the worker count. Throws DivergenceError on a non-finite
// loss or parameter.
TrainResult train(const LabeledDataset& train_ds, const TrainConfig& cfg,
                  const std::vector<LabeledDataset>& eval_sets = {},
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Same as above but continuing from an existing model.
TrainResult train_from(TinyModel model, const LabeledDataset& train_ds, const TrainConfig& cfg,
                       const std::vector<LabeledDataset>& eval_sets = {},
                       const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Fraction of images whose argmax prediction equals the label. No augmentation.
double evaluate(const TinyModel& model, const LabeledDataset& ds);

std::string metrics_csv_header(const std::vector<std::string>& eval_domains);
std::string metrics_csv_row(const EpochMetrics& m);

}  // namespace randconv
