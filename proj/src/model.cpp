#include "randconv/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "randconv/errors.hpp"
#include "randconv/rng.hpp"

namespace randconv {

ModelParams ModelParams::zeros(std::size_t input, std::size_t hidden, std::size_t classes) {
  ModelParams p;
  p.input = input;
  p.hidden = hidden;
  p.classes = classes;
  p.w1.assign(hidden * input, 0.0);
  p.b1.assign(hidden, 0.0);
  p.w2.assign(classes * hidden, 0.0);
  p.b2.assign(classes, 0.0);
  return p;
}

bool ModelParams::all_finite() const {
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return finite(w1) && finite(b1) && finite(w2) && finite(b2);
}

void ModelParams::set_zero() {
  for (auto* v : {&w1, &b1, &w2, &b2}) std::fill(v->begin(), v->end(), 0.0);
}

void ModelParams::axpy(double scale, const ModelParams& other) {
  auto apply = [scale](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  };
  apply(w1, other.w1);
  apply(b1, other.b1);
  apply(w2, other.w2);
  apply(b2, other.b2);
}

TinyModel init_model(std::size_t input, std::size_t hidden, std::size_t classes,
                     std::uint64_t seed) {
  if (input == 0 || hidden == 0 || classes == 0)
    throw std::invalid_argument("init_model: layer sizes must be positive");
  TinyModel m = TinyModel::zeros(input, hidden, classes);
  Rng rng(derive_stream(seed, {0x1417ULL}));
  const double s1 = std::sqrt(2.0 / static_cast<double>(input));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& w : m.w1) w = rng.normal(0.0, s1);
  for (auto& w : m.w2) w = rng.normal(0.0, s2);
  return m;
}

ForwardCache forward(const TinyModel& model, const ImageTensor& img) {
  if (img.size() != model.input)
    throw std::invalid_argument("forward: image has " + std::to_string(img.size()) +
                                " values, model expects " + std::to_string(model.input));
  std::vector<double> input(img.data().begin(), img.data().end());
  return forward(model, input);
}

ForwardCache forward(const TinyModel& model, std::span<const double> input) {
  if (input.size() != model.input) throw std::invalid_argument("forward: input size mismatch");
  ForwardCache c;
  c.input.assign(input.begin(), input.end());
  c.pre.resize(model.hidden);
  c.hidden.resize(model.hidden);
  for (std::size_t h = 0; h < model.hidden; ++h) {
    const double* row = model.w1.data() + h * model.input;
    double s = model.b1[h];
    for (std::size_t i = 0; i < model.input; ++i) s += row[i] * input[i];
    c.pre[h] = s;
    c.hidden[h] = s > 0.0 ? s : 0.0;
  }
  c.logits.resize(model.classes);
  for (std::size_t k = 0; k < model.classes; ++k) {
    const double* row = model.w2.data() + k * model.hidden;
    double s = model.b2[k];
    for (std::size_t h = 0; h < model.hidden; ++h) s += row[h] * c.hidden[h];
    c.logits[k] = s;
  }
  return c;
}

void backward(const TinyModel& model, const ForwardCache& cache, std::span<const double> dlogits,
              ModelParams& grads) {
  if (dlogits.size() != model.classes) throw std::invalid_argument("backward: dlogits size mismatch");
  std::vector<double> dhidden(model.hidden, 0.0);
  for (std::size_t k = 0; k < model.classes; ++k) {
    const double g = dlogits[k];
    if (g == 0.0) continue;
    grads.b2[k] += g;
    double* grow = grads.w2.data() + k * model.hidden;
    const double* wrow = model.w2.data() + k * model.hidden;
    for (std::size_t h = 0; h < model.hidden; ++h) {
      grow[h] += g * cache.hidden[h];
      dhidden[h] += g * wrow[h];
    }
  }
  for (std::size_t h = 0; h < model.hidden; ++h) {
    if (cache.pre[h] <= 0.0) continue;  // ReLU gate
    const double g = dhidden[h];
    grads.b1[h] += g;
    double* grow = grads.w1.data() + h * model.input;
    for (std::size_t i = 0; i < model.input; ++i) grow[i] += g * cache.input[i];
  }
}

ExampleResult example_objective(const TinyModel& model, std::span<const ImageTensor> variants,
                                int label, double lambda, ModelParams* grads) {
  if (variants.empty()) throw std::invalid_argument("example_objective: no variants");
  const std::size_t n = variants.size();
  const bool use_consistency = n >= 2 && lambda != 0.0;
  const std::size_t needed = use_consistency ? n : 1;

  std::vector<ForwardCache> caches;
  std::vector<PredictionDistribution> preds;
  for (std::size_t j = 0; j < needed; ++j) {
    caches.push_back(forward(model, variants[j]));
    preds.push_back(softmax(caches.back().logits));
  }
  const double cons = use_consistency ? consistency_loss(preds) : 0.0;
  ExampleResult result;
  result.loss = total_loss(preds[0], label, cons, lambda);
  result.predicted = static_cast<int>(
      std::max_element(caches[0].logits.begin(), caches[0].logits.end()) - caches[0].logits.begin());
  if (!grads) return result;

  const std::size_t classes = model.classes;
  const PredictionDistribution mean =
      use_consistency ? mean_distribution(preds) : PredictionDistribution{};
  std::vector<double> dlogits(classes);
  for (std::size_t j = 0; j < needed; ++j) {
    const auto& y = preds[j].probs;
    std::fill(dlogits.begin(), dlogits.end(), 0.0);
    // The floored log has zero gradient once the probability hits the floor.
    if (j == 0 && y[label] > kProbFloor) {
      for (std::size_t k = 0; k < classes; ++k) dlogits[k] = y[k];
      dlogits[label] -= 1.0;
    }
    if (use_consistency) {
      // d/dy_j of sum_l KL(y_l || ybar) is log y_j - log ybar; the ybar terms
      // from every sample cancel to exactly that. Then through the softmax.
      std::vector<double> g(classes);
      double dot = 0.0;
      for (std::size_t k = 0; k < classes; ++k) {
        g[k] = y[k] > kProbFloor && mean[k] > kProbFloor ? std::log(y[k]) - std::log(mean[k]) : 0.0;
        dot += y[k] * g[k];
      }
      for (std::size_t k = 0; k < classes; ++k) dlogits[k] += lambda * y[k] * (g[k] - dot);
    }
    backward(model, caches[j], dlogits, *grads);
  }
  return result;
}

int predict(const TinyModel& model, const ImageTensor& img) {
  const ForwardCache c = forward(model, img);
  return static_cast<int>(std::max_element(c.logits.begin(), c.logits.end()) - c.logits.begin());
}

namespace {
constexpr char kMagic[8] = {'R', 'C', 'M', 'L', 'P', '0', '0', '1'};

void write_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

// Native-endian binary: magic, three u64 sizes, then w1 b1 w2 b2 as doubles.
void save_model(const TinyModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model " + path.string());
  out.write(kMagic, sizeof kMagic);
  write_u64(out, model.input);
  write_u64(out, model.hidden);
  write_u64(out, model.classes);
  for (const auto* v : {&model.w1, &model.b1, &model.w2, &model.b2})
    out.write(reinterpret_cast<const char*>(v->data()), static_cast<std::streamsize>(v->size() * sizeof(double)));
  if (!out) throw DataError("error writing model " + path.string());
}

TinyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read model " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw DataError("not a model file: " + path.string());
  const auto input = read_u64(in), hidden = read_u64(in), classes = read_u64(in);
  TinyModel m = TinyModel::zeros(input, hidden, classes);
  for (auto* v : {&m.w1, &m.b1, &m.w2, &m.b2})
    in.read(reinterpret_cast<char*>(v->data()), static_cast<std::streamsize>(v->size() * sizeof(double)));
  if (!in) throw DataError("truncated model file " + path.string());
  return m;
}

}  // namespace randconv
