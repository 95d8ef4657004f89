#include "randconv/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "randconv/csv.hpp"
#include "randconv/errors.hpp"
#include "randconv/parallel.hpp"

namespace randconv {

namespace {
constexpr std::size_t kChunk = 4;
constexpr std::uint64_t kInitTag = 0x1A17ULL;
constexpr std::uint64_t kShuffleTag = 0x5A0FULL;
constexpr std::uint64_t kAugmentTag = 0xA076ULL;

struct ChunkState {
  ModelParams grads;
  double total = 0.0, task = 0.0, cons = 0.0;
};
}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be nonnegative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be nonnegative");
  if (hidden < 1) throw std::invalid_argument("hidden size must be positive");
  randconv.validate();
}

double evaluate(const TinyModel& model, const LabeledDataset& ds) {
  if (ds.empty()) return 0.0;
  std::vector<int> correct(ds.size());
  parallel_for(ds.size(), [&](std::size_t i) { correct[i] = predict(model, ds.images[i]) == ds.labels[i]; });
  return static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
         static_cast<double>(ds.size());
}

TrainResult train(const LabeledDataset& train_ds, const TrainConfig& cfg,
                  const std::vector<LabeledDataset>& eval_sets,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  if (train_ds.empty()) throw std::invalid_argument("train: empty training set");
  TinyModel model = init_model(train_ds.images.front().size(), cfg.hidden,
                               static_cast<std::size_t>(train_ds.num_classes),
                               derive_stream(cfg.seed, {kInitTag}));
  return train_from(std::move(model), train_ds, cfg, eval_sets, on_epoch);
}

TrainResult train_from(TinyModel model, const LabeledDataset& train_ds, const TrainConfig& cfg,
                       const std::vector<LabeledDataset>& eval_sets,
                       const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  train_ds.validate();
  if (train_ds.empty()) throw std::invalid_argument("train: empty training set");

  const double lambda = cfg.effective_lambda();
  // Extra variants only matter through the consistency term.
  const int variants = cfg.augment && lambda > 0.0 ? cfg.randconv.samples_per_image : 1;
  const std::size_t n = train_ds.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t max_chunks = (batch + kChunk - 1) / kChunk;

  ModelParams velocity = model.zeros_like();
  std::vector<ChunkState> chunks(max_chunks);
  for (auto& c : chunks) c.grads = model.zeros_like();
  std::vector<std::size_t> order(n);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_stream(cfg.seed, {kShuffleTag, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

    double sum_total = 0.0, sum_task = 0.0, sum_cons = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const std::size_t count = end - start;
      const std::size_t used_chunks = (count + kChunk - 1) / kChunk;
      parallel_for(used_chunks, [&](std::size_t c) {
        ChunkState& st = chunks[c];
        st.grads.set_zero();
        st.total = st.task = st.cons = 0.0;
        const std::size_t c_end = std::min(end, start + (c + 1) * kChunk);
        for (std::size_t pos = start + c * kChunk; pos < c_end; ++pos) {
          const std::size_t idx = order[pos];
          const ImageTensor& img = train_ds.images[idx];
          std::vector<ImageTensor> views;
          views.reserve(static_cast<std::size_t>(variants));
          if (!cfg.augment) {
            views.push_back(img);
          } else {
            for (int j = 0; j < variants; ++j) {
              Rng rng(derive_stream(cfg.seed, {kAugmentTag, static_cast<std::uint64_t>(epoch), idx,
                                               static_cast<std::uint64_t>(j)}));
              views.push_back(randconv_augment(img, cfg.randconv, rng).image);
            }
          }
          const ExampleResult r =
              example_objective(model, views, train_ds.labels[idx], lambda, &st.grads);
          st.total += r.loss.total;
          st.task += r.loss.task;
          st.cons += r.loss.consistency;
        }
      });
      ModelParams& grad = chunks[0].grads;
      for (std::size_t c = 0; c < used_chunks; ++c) {
        if (c > 0) grad.axpy(1.0, chunks[c].grads);
        sum_total += chunks[c].total;
        sum_task += chunks[c].task;
        sum_cons += chunks[c].cons;
      }
      if (!std::isfinite(sum_total))
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch + 1));
      const double inv = 1.0 / static_cast<double>(count);
      velocity.for_each([&](int t, std::size_t i, double& v) {
        const std::vector<double>* g[] = {&grad.w1, &grad.b1, &grad.w2, &grad.b2};
        v = cfg.momentum * v + (*g[t])[i] * inv;
      });
      model.axpy(-cfg.learning_rate, velocity);
      if (!model.all_finite())
        throw DivergenceError("non-finite model parameter at epoch " + std::to_string(epoch + 1));
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    m.train_loss = sum_total / static_cast<double>(n);
    m.task_loss = sum_task / static_cast<double>(n);
    m.cons_loss = sum_cons / static_cast<double>(n);
    m.train_acc = evaluate(model, train_ds);
    for (const auto& ds : eval_sets) m.eval_acc.push_back(evaluate(model, ds));
    if (on_epoch) on_epoch(m);
    result.metrics.push_back(std::move(m));
  }
  result.model = std::move(model);
  return result;
}

std::string metrics_csv_header(const std::vector<std::string>& eval_domains) {
  std::vector<std::string> cols{"epoch", "train_loss", "task_loss", "cons_loss", "train_acc"};
  for (const auto& d : eval_domains) cols.push_back("acc_" + d);
  return csv_join(cols);
}

std::string metrics_csv_row(const EpochMetrics& m) {
  std::vector<std::string> cols{std::to_string(m.epoch), format_number(m.train_loss),
                                format_number(m.task_loss), format_number(m.cons_loss),
                                format_number(m.train_acc)};
  for (double a : m.eval_acc) cols.push_back(format_number(a));
  return csv_join(cols);
}

}  // namespace randconv
