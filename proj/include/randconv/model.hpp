#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "randconv/consistency.hpp"
#include "randconv/image.hpp"

namespace randconv {

// Parameters of a one-hidden-layer perceptron (input -> ReLU hidden ->
// logits). The same type holds gradients and momentum buffers.
struct ModelParams {
  std::size_t input = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;
  std::vector<double> w1;  // hidden x input, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // classes x hidden, row-major
  std::vector<double> b2;  // classes

  static ModelParams zeros(std::size_t input, std::size_t hidden, std::size_t classes);
  ModelParams zeros_like() const { return zeros(input, hidden, classes); }

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
  bool all_finite() const;
  void set_zero();
  // this += scale * other
  void axpy(double scale, const ModelParams& other);
  // Visits (tensor, index, value&) across w1, b1, w2, b2 in that order.
  template <typename F>
  void for_each(F&& f) {
    std::vector<double>* tensors[] = {&w1, &b1, &w2, &b2};
    for (int t = 0; t < 4; ++t)
      for (std::size_t i = 0; i < tensors[t]->size(); ++i) f(t, i, (*tensors[t])[i]);
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

using TinyModel = ModelParams;

// He-normal first layer, 1/sqrt(hidden) second layer, zero biases.
TinyModel init_model(std::size_t input, std::size_t hidden, std::size_t classes,
                     std::uint64_t seed);

struct ForwardCache {
  std::vector<double> input;
  std::vector<double> pre;     // hidden pre-activations
  std::vector<double> hidden;  // ReLU(pre)
  std::vector<double> logits;
};

ForwardCache forward(const TinyModel& model, const ImageTensor& img);
ForwardCache forward(const TinyModel& model, std::span<const double> input);

// Accumulates d(loss)/d(params) into grads given d(loss)/d(logits).
void backward(const TinyModel& model, const ForwardCache& cache, std::span<const double> dlogits,
              ModelParams& grads);

// Loss and gradients of one training example under the augmented objective:
// cross-entropy on variant 0 plus lambda * sum_j KL(y_j || ybar) over all
// variants (the latter only with two or more variants). Gradients flow through
// ybar into every variant. When grads is non-null they are accumulated there.
struct ExampleResult {
  LossBreakdown loss;
  int predicted = 0;  // argmax on variant 0
};
ExampleResult example_objective(const TinyModel& model, std::span<const ImageTensor> variants,
                                int label, double lambda, ModelParams* grads);

// Argmax with ties resolved to the lowest index.
int predict(const TinyModel& model, const ImageTensor& img);

void save_model(const TinyModel& model, const std::filesystem::path& path);
TinyModel load_model(const std::filesystem::path& path);

}  // namespace randconv
