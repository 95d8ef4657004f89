#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "randconv/csv.hpp"
#include "randconv/errors.hpp"
#include "randconv/image.hpp"
#include "randconv/parallel.hpp"
#include "randconv/randconv.hpp"
#include "randconv/rng.hpp"
#include "randconv/shapes.hpp"
#include "randconv/theory.hpp"
#include "randconv/train.hpp"

namespace randconv::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// stream tags under the root seed
constexpr std::uint64_t kSimulateTag = 0x53494d;
constexpr std::uint64_t kTrainDataTag = 0x545244;
constexpr std::uint64_t kEvalDataTag = 0x455644;

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  fs::path out = ".";
  CLI::Option* out_opt = nullptr;
};

struct AugmentOptions {
  fs::path input;
  std::string mode = "img";
  std::vector<int> kpool{1, 3, 5, 7};
  double p = 0.5;
  int samples = 3;
  std::string whiten = "scalar";
  std::optional<double> force_alpha;
};

struct BoundsOptions {
  int m = 3;
  int n = 1000;
  double sigma = 1.0;
  double epsilon = 0.1;
};

struct SimulateOptions {
  fs::path input;
  int patches = 1000;
  int patch_size = 3;
  int m = 3;
  double sigma = 1.0;
  double epsilon = 0.1;
};

struct GenDataOptions {
  std::vector<std::string> domains = kShapeDomains;
  int per_class = 100;
  int image_size = 32;
};

// Values that override the preset are only applied when given.
struct TrainOptions {
  std::string preset = "paper-defaults";
  std::string mode = "img";
  std::vector<int> kpool;
  double p = 0.0;
  double lambda = 0.0;
  bool lambda_squared_compat = false;
  int epochs = 0;
  int batch_size = 0;
  double lr = 0.0;
  double momentum = 0.0;
  std::size_t hidden = 0;
  int per_class = 200;
  int eval_per_class = 100;
  int image_size = 32;
  std::string train_domain = "flat";
  std::vector<std::string> eval_domains = kShapeDomains;
  fs::path data;
  bool compare = false;
  std::string whiten = "channel";
  std::map<std::string, CLI::Option*> given;
  bool set(const std::string& name) const { return given.at(name)->count() > 0; }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed: " + path.string());
}

std::string sig4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

WhiteningMode whitening_mode(const std::string& name) {
  return name == "scalar" ? WhiteningMode::Scalar : WhiteningMode::PerChannel;
}

std::vector<ImageTensor> load_all(const std::vector<fs::path>& files) {
  std::vector<ImageTensor> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(load_image(f));
  return images;
}

int cmd_augment(const GlobalOptions& g, const AugmentOptions& o, std::ostream& out) {
  const auto files = list_images(o.input);
  if (files.empty()) throw DataError("no .png images in " + o.input.string());

  RandConvConfig cfg;
  cfg.pool = o.kpool;
  cfg.p = o.p;
  cfg.mix = o.mode == "mix";
  cfg.seed = g.seed;
  cfg.samples_per_image = o.samples;
  cfg.forced_alpha = o.force_alpha;
  cfg.validate();

  LabeledDataset ds;
  ds.images = load_all(files);
  ds.labels.assign(ds.images.size(), 0);
  ds.num_classes = 1;
  ds.domain_tag = "input";
  if (o.whiten != "none") ds = whiten(ds, compute_whitening(ds, whitening_mode(o.whiten)));

  const auto samples = augment_batch(ds, cfg, g.seed);
  fs::create_directories(g.out);
  std::string manifest = csv_join({"file", "k", "alpha", "seed_stream"}) + "\n";
  std::size_t written = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    for (std::size_t j = 0; j < samples[i].size(); ++j) {
      const AugmentSample& s = samples[i][j];
      std::string name = stem;
      if (s.k_used) name += "_k" + std::to_string(*s.k_used);
      else name += "_orig";
      name += "_s" + std::to_string(j);
      if (s.alpha) name += "_mix" + fixed(*s.alpha, 2);
      name += ".png";
      save_image(s.image, g.out / name, true);
      manifest += csv_join({name, s.k_used ? std::to_string(*s.k_used) : "",
                            s.alpha ? format_number(*s.alpha) : "", std::to_string(s.stream)}) +
                  "\n";
      ++written;
    }
  }
  write_text(g.out / "manifest.csv", manifest);
  out << "wrote " << written << " images and manifest.csv to " << g.out.string() << "\n";
  return kExitOk;
}

int cmd_bounds(const GlobalOptions& g, const BoundsOptions& o, std::ostream& out) {
  const BoundParams params{o.m, o.n, o.sigma, o.epsilon};
  const Bounds b = distance_ratio_bounds(params);
  out << "tail probability 2*eps/(N(N-1)) = " << sig4(params.tail()) << "\n";
  out << "delta1 (upper) = " << sig4(b.delta1) << "\n";
  out << "delta2 (lower) = " << sig4(b.delta2) << "\n";
  const std::string csv =
      csv_join({"m", "N", "sigma", "epsilon", "delta1", "delta2"}) + "\n" +
      csv_join({std::to_string(o.m), std::to_string(o.n), format_number(o.sigma),
                format_number(o.epsilon), format_number(b.delta1), format_number(b.delta2)}) +
      "\n";
  out << csv;
  if (g.out_opt->count() > 0) {
    fs::create_directories(g.out);
    write_text(g.out / "bounds.csv", csv);
  }
  return kExitOk;
}

int cmd_simulate(const GlobalOptions& g, const SimulateOptions& o, std::ostream& out) {
  const auto files = list_images(o.input);
  if (files.empty()) throw DataError("no .png images in " + o.input.string());
  const std::vector<ImageTensor> images = load_all(files);
  const BoundParams params{o.m, o.patches, o.sigma, o.epsilon};
  const Rng rng(derive_stream(g.seed, {kSimulateTag}));
  const RatioStats stats = simulate_ratio_bounds(images, params, o.patch_size, rng);

  const std::string csv = ratio_csv_header() + "\n" + ratio_csv_row(stats, params, images.size()) + "\n";
  std::string per_image = csv_join({"file", "q10", "q90"}) + "\n";
  for (std::size_t i = 0; i < files.size(); ++i)
    per_image += csv_join({files[i].filename().string(), format_number(stats.per_image_q10[i]),
                           format_number(stats.per_image_q90[i])}) +
                 "\n";
  fs::create_directories(g.out);
  write_text(g.out / "simulate.csv", csv);
  write_text(g.out / "simulate_images.csv", per_image);

  const double lo = stats.theoretical_delta2, hi = stats.theoretical_delta1;
  const bool inside = stats.delta_10 > lo && stats.delta_90 < hi;
  out << csv;
  out << "empirical central 80% band [" << sig4(stats.delta_10) << ", " << sig4(stats.delta_90)
      << "] vs theoretical [" << sig4(lo) << ", " << sig4(hi) << "]\n";
  out << "inside theoretical band: " << (inside ? "yes" : "no") << ", width ratio "
      << sig4((stats.delta_90 - stats.delta_10) / (hi - lo)) << "\n";
  if (stats.pairs_skipped > 0) out << "skipped " << stats.pairs_skipped << " degenerate pairs\n";
  return kExitOk;
}

int cmd_gen_data(const GlobalOptions& g, const GenDataOptions& o, std::ostream& out) {
  for (const auto& domain : o.domains) {
    ShapeDatasetSpec spec;
    spec.image_size = o.image_size;
    spec.per_class = o.per_class;
    spec.domain = domain;
    spec.seed = g.seed;
    spec.validate();
  }
  fs::create_directories(g.out);
  for (const auto& domain : o.domains) {
    ShapeDatasetSpec spec;
    spec.image_size = o.image_size;
    spec.per_class = o.per_class;
    spec.domain = domain;
    spec.seed = g.seed;
    const LabeledDataset ds = generate_dataset(spec);
    save_dataset(ds, g.out);
    out << "wrote " << ds.size() << " images to " << (g.out / domain).string() << "\n";
  }
  return kExitOk;
}

TrainConfig resolve_train_config(const TrainOptions& o, std::uint64_t seed) {
  TrainConfig cfg;
  if (o.preset == "baseline") {
    cfg.augment = false;
    cfg.lambda = 0.0;
  }
  cfg.randconv.mix = o.mode == "mix";
  if (o.set("--kpool")) cfg.randconv.pool = o.kpool;
  if (o.set("--p")) cfg.randconv.p = o.p;
  if (o.set("--lambda")) cfg.lambda = o.lambda;
  cfg.lambda_squared_compat = o.lambda_squared_compat;
  if (o.set("--epochs")) cfg.epochs = o.epochs;
  if (o.set("--batch-size")) cfg.batch_size = o.batch_size;
  if (o.set("--lr")) cfg.learning_rate = o.lr;
  if (o.set("--momentum")) cfg.momentum = o.momentum;
  if (o.set("--hidden")) cfg.hidden = o.hidden;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

json describe(const TrainConfig& cfg) {
  json j;
  j["augment"] = cfg.augment;
  j["kpool"] = cfg.randconv.pool;
  j["p"] = cfg.randconv.p;
  j["mix"] = cfg.randconv.mix;
  j["samples"] = cfg.randconv.samples_per_image;
  j["lambda"] = cfg.lambda;
  j["lambda_squared_compat"] = cfg.lambda_squared_compat;
  j["effective_lambda"] = cfg.effective_lambda();
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.learning_rate;
  j["momentum"] = cfg.momentum;
  j["hidden"] = cfg.hidden;
  j["seed"] = cfg.seed;
  return j;
}

std::string flat_lines(const json& j, const std::string& prefix) {
  std::string s;
  for (const auto& [key, value] : j.items()) s += prefix + key + "=" + value.dump() + "\n";
  return s;
}

LabeledDataset make_split(const TrainOptions& o, const std::string& domain, int per_class,
                          std::uint64_t seed) {
  if (!o.data.empty()) return load_dataset(o.data, domain);
  ShapeDatasetSpec spec;
  spec.image_size = o.image_size;
  spec.per_class = per_class;
  spec.domain = domain;
  spec.seed = seed;
  return generate_dataset(spec);
}

int cmd_train(const GlobalOptions& g, const TrainOptions& o, std::ostream& out) {
  const TrainConfig cfg = resolve_train_config(o, g.seed);
  std::vector<std::pair<std::string, TrainConfig>> runs;
  runs.emplace_back(o.preset == "baseline" ? "baseline" : "randconv", cfg);
  if (o.compare && o.preset != "baseline") {
    TrainConfig base = cfg;
    base.augment = false;
    base.lambda = 0.0;
    runs.emplace_back("baseline", base);
  }
  for (const auto& [name, c] : runs) out << flat_lines(describe(c), name + ".");

  const std::uint64_t train_seed = derive_stream(g.seed, {kTrainDataTag});
  const std::uint64_t eval_seed = derive_stream(g.seed, {kEvalDataTag});
  LabeledDataset train_ds = make_split(o, o.train_domain, o.per_class, train_seed);
  std::vector<LabeledDataset> eval_sets;
  for (const auto& d : o.eval_domains) eval_sets.push_back(make_split(o, d, o.eval_per_class, eval_seed));
  // statistics come from the training domain only
  const WhiteningStats stats = compute_whitening(train_ds, whitening_mode(o.whiten));
  train_ds = whiten(train_ds, stats);
  for (auto& e : eval_sets) e = whiten(e, stats);

  fs::create_directories(g.out);
  json summary;
  summary["seed"] = g.seed;
  summary["config"] = json::object();
  summary["final_accuracies"] = json::object();
  std::string table = csv_join({"model", "domain", "accuracy"}) + "\n";
  for (const auto& [name, c] : runs) {
    std::string metrics = metrics_csv_header(o.eval_domains) + "\n";
    const TrainResult result = train(train_ds, c, eval_sets, [&](const EpochMetrics& m) {
      metrics += metrics_csv_row(m) + "\n";
      out << "[" << name << "] epoch " << m.epoch << "/" << c.epochs << " loss " << fixed(m.train_loss, 4)
          << " train_acc " << fixed(m.train_acc, 3);
      for (std::size_t d = 0; d < o.eval_domains.size(); ++d)
        out << " " << o.eval_domains[d] << " " << fixed(m.eval_acc[d], 3);
      out << "\n";
    });
    write_text(g.out / ("metrics_" + name + ".csv"), metrics);
    save_model(result.model, g.out / ("model_" + name + ".bin"));
    summary["config"][name] = describe(c);
    json acc = json::object();
    for (std::size_t d = 0; d < o.eval_domains.size(); ++d) {
      const double a = result.metrics.back().eval_acc[d];
      acc[o.eval_domains[d]] = a;
      table += csv_join({name, o.eval_domains[d], format_number(a)}) + "\n";
    }
    summary["final_accuracies"][name] = acc;
  }
  summary["train_domain"] = o.train_domain;
  write_text(g.out / "accuracy.csv", table);
  write_text(g.out / "summary.json", summary.dump(2) + "\n");

  out << "\nfinal accuracy (train domain: " << o.train_domain << ")\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-10s", "model");
  out << line;
  for (const auto& d : o.eval_domains) {
    std::snprintf(line, sizeof line, " %9s", d.c_str());
    out << line;
  }
  out << " shifted_mean\n";
  for (const auto& [name, c] : runs) {
    std::snprintf(line, sizeof line, "%-10s", name.c_str());
    out << line;
    double shifted = 0.0;
    int n_shifted = 0;
    for (const auto& d : o.eval_domains) {
      const double a = summary["final_accuracies"][name][d].get<double>();
      std::snprintf(line, sizeof line, " %9.3f", a);
      out << line;
      if (d != o.train_domain) {
        shifted += a;
        ++n_shifted;
      }
    }
    std::snprintf(line, sizeof line, " %12.3f", n_shifted ? shifted / n_shifted : 0.0);
    out << line << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Random-convolution augmentation toolkit", "randconv"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value file; command-line flags take precedence");

  GlobalOptions g;
  app.add_option("--seed", g.seed, "root seed for every random stream")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)")
      ->envname("RANDCONV_THREADS")
      ->capture_default_str();
  g.out_opt = app.add_option("--out", g.out, "output directory")->capture_default_str();

  AugmentOptions aug;
  auto* augment = app.add_subcommand("augment", "write RandConv samples of an image or directory");
  augment->add_option("--input", aug.input, "image file or directory of .png files")->required();
  augment->add_option("--mode", aug.mode)->check(CLI::IsMember({"img", "mix"}))->capture_default_str();
  augment->add_option("--kpool", aug.kpool, "filter sizes")->delimiter(',')->capture_default_str();
  augment->add_option("--p", aug.p, "probability of keeping the original (img mode)")->capture_default_str();
  augment->add_option("--samples", aug.samples, "samples per image")->capture_default_str();
  augment->add_option("--whiten", aug.whiten, "whitening applied before convolution")
      ->check(CLI::IsMember({"none", "scalar", "channel"}))
      ->capture_default_str();
  augment->add_option("--force-alpha", aug.force_alpha)->group("");

  BoundsOptions bo;
  auto* bounds = app.add_subcommand("bounds", "distance-ratio bounds for a random linear projection");
  bounds->add_option("--m", bo.m, "output dimension")->capture_default_str();
  bounds->add_option("--n", bo.n, "number of points")->capture_default_str();
  bounds->add_option("--sigma", bo.sigma, "weight standard deviation")->capture_default_str();
  bounds->add_option("--epsilon", bo.epsilon, "failure probability")->capture_default_str();

  SimulateOptions so;
  auto* simulate = app.add_subcommand("simulate", "empirical distance-ratio band on image patches");
  simulate->add_option("--input", so.input, "directory of .png files")->required();
  simulate->add_option("--patches", so.patches, "patches per image")->capture_default_str();
  simulate->add_option("--patch-size", so.patch_size)->capture_default_str();
  simulate->add_option("--m", so.m, "output dimension")->capture_default_str();
  simulate->add_option("--sigma", so.sigma)->capture_default_str();
  simulate->add_option("--epsilon", so.epsilon)->capture_default_str();

  GenDataOptions go;
  auto* gen = app.add_subcommand("gen-data", "write the synthetic shapes benchmark");
  gen->add_option("--domains", go.domains)->delimiter(',')->capture_default_str();
  gen->add_option("--per-class", go.per_class)->capture_default_str();
  gen->add_option("--image-size", go.image_size)->capture_default_str();

  TrainOptions to;
  auto* tr = app.add_subcommand("train", "train the MLP classifier with or without RandConv");
  tr->add_option("--preset", to.preset)
      ->check(CLI::IsMember({"paper-defaults", "baseline"}))
      ->capture_default_str();
  tr->add_option("--mode", to.mode)->check(CLI::IsMember({"img", "mix"}))->capture_default_str();
  to.given["--kpool"] = tr->add_option("--kpool", to.kpool)->delimiter(',');
  to.given["--p"] = tr->add_option("--p", to.p);
  to.given["--lambda"] = tr->add_option("--lambda", to.lambda);
  tr->add_flag("--lambda-squared-compat", to.lambda_squared_compat, "weight the consistency term by lambda^2");
  to.given["--epochs"] = tr->add_option("--epochs", to.epochs);
  to.given["--batch-size"] = tr->add_option("--batch-size", to.batch_size);
  to.given["--lr"] = tr->add_option("--lr", to.lr);
  to.given["--momentum"] = tr->add_option("--momentum", to.momentum);
  to.given["--hidden"] = tr->add_option("--hidden", to.hidden);
  tr->add_option("--per-class", to.per_class, "training images per class")->capture_default_str();
  tr->add_option("--eval-per-class", to.eval_per_class)->capture_default_str();
  tr->add_option("--image-size", to.image_size)->capture_default_str();
  tr->add_option("--train-domain", to.train_domain)->capture_default_str();
  tr->add_option("--eval-domains", to.eval_domains)->delimiter(',')->capture_default_str();
  tr->add_option("--data", to.data, "gen-data directory instead of generating in memory");
  tr->add_flag("--compare", to.compare, "also train the baseline");
  tr->add_option("--whiten", to.whiten)->check(CLI::IsMember({"scalar", "channel"}))->capture_default_str();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    set_thread_count(g.threads);
    CLI::App* sub = app.get_subcommands().front();
    out << "# resolved configuration\nseed=" << g.seed << "\nthreads=" << thread_count() << "\nout="
        << g.out.string() << "\n[" << sub->get_name() << "]\n"
        << sub->config_to_str(true, false);
    if (*augment) return cmd_augment(g, aug, out);
    if (*bounds) return cmd_bounds(g, bo, out);
    if (*simulate) return cmd_simulate(g, so, out);
    if (*gen) return cmd_gen_data(g, go, out);
    return cmd_train(g, to, out);
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace randconv::cli
