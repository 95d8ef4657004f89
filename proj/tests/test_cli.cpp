#include <cstdlib>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "randconv/image.hpp"
#include "randconv/shapes.hpp"
#include "test_util.hpp"

using namespace randconv;
using testutil::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> v;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) v.push_back(l);
  return v;
}

std::size_t png_count(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.path().extension() == ".png";
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(invoke({}).code == cli::kExitUsage);
  CHECK(invoke({"bounds", "--bogus", "1"}).code == cli::kExitUsage);
  CHECK(invoke({"frobnicate"}).code == cli::kExitUsage);
  CHECK(invoke({"bounds", "--epsilon", "0"}).code == cli::kExitUsage);
  CHECK(invoke({"bounds", "--epsilon", "1"}).code == cli::kExitUsage);
  CHECK(invoke({"augment", "--input", "x.png", "--mode", "blend"}).code == cli::kExitUsage);
  const Outcome e = invoke({"train", "--epochs", "0"});
  CHECK(e.code == cli::kExitUsage);
  CHECK(contains(e.err, "epochs"));
  CHECK(invoke({"--help"}).code == cli::kExitOk);
}

TEST_CASE("bounds prints the worked example") {
  TempDir dir;
  const Outcome r = invoke({"--out", dir.path().string(), "bounds", "--m", "3", "--n", "1000", "--sigma", "1",
                         "--epsilon", "0.1"});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "# resolved configuration"));
  CHECK(contains(r.out, "delta1 (upper) = 5.829"));
  CHECK(contains(r.out, "delta2 (lower) = 0.009097"));
  const auto csv = lines(testutil::read_file(dir / "bounds.csv"));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == "m,N,sigma,epsilon,delta1,delta2");

  const Outcome doubled = invoke({"bounds", "--sigma", "2"});
  REQUIRE(doubled.code == 0);
  CHECK(contains(doubled.out, "delta1 (upper) = 11.66"));
  CHECK(contains(doubled.out, "delta2 (lower) = 0.01819"));
}

TEST_CASE("augment writes one file per sample plus a manifest") {
  TempDir dir;
  const fs::path input = dir / "cat.png";
  save_image(testutil::random_image(20, 24, 3, 1), input, false);
  const fs::path out = dir / "out";
  const Outcome r = invoke({"--seed", "7", "--out", out.string(), "augment", "--input", input.string(),
                         "--samples", "3", "--kpool", "1,3,5,7"});
  REQUIRE(r.code == 0);
  CHECK(png_count(out) == 3);
  const auto manifest = lines(testutil::read_file(out / "manifest.csv"));
  REQUIRE(manifest.size() == 4);
  CHECK(manifest[0] == "file,k,alpha,seed_stream");
  for (std::size_t i = 1; i < manifest.size(); ++i) {
    const std::string file = manifest[i].substr(0, manifest[i].find(','));
    CHECK(fs::exists(out / file));
    CHECK(file.rfind("cat_", 0) == 0);
    CHECK(contains(file, "_s" + std::to_string(i - 1)));
  }

  // p = 0 forces a convolution for every sample; names carry k
  const fs::path conv = dir / "conv";
  REQUIRE(invoke({"--out", conv.string(), "augment", "--input", input.string(), "--p", "0", "--kpool", "3"}).code == 0);
  for (const auto& e : fs::directory_iterator(conv))
    if (e.path().extension() == ".png") CHECK(contains(e.path().filename().string(), "_k3_"));
}

TEST_CASE("augment mix with alpha = 1 reproduces the rescaled input") {
  TempDir dir;
  const fs::path input = dir / "img.png";
  save_image(testutil::random_image(16, 16, 3, 2), input, false);
  const fs::path out = dir / "out";
  const Outcome r = invoke({"--out", out.string(), "augment", "--input", input.string(), "--mode", "mix",
                         "--samples", "1", "--whiten", "none", "--force-alpha", "1"});
  REQUIRE(r.code == 0);
  const auto manifest = lines(testutil::read_file(out / "manifest.csv"));
  REQUIRE(manifest.size() == 2);
  const fs::path written = out / manifest[1].substr(0, manifest[1].find(','));
  save_image(load_image(input), dir / "expected.png", true);
  CHECK(load_image(written) == load_image(dir / "expected.png"));
  CHECK(contains(written.filename().string(), "_mix1.00"));

  // scalar whitening is affine with one gain, so the rescaled view can move by
  // at most one 8-bit level through float rounding
  const fs::path scalar = dir / "scalar";
  REQUIRE(invoke({"--out", scalar.string(), "augment", "--input", input.string(), "--mode", "mix", "--samples",
               "1", "--force-alpha", "1"})
              .code == 0);
  const auto scalar_manifest = lines(testutil::read_file(scalar / "manifest.csv"));
  const ImageTensor a = load_image(scalar / scalar_manifest[1].substr(0, scalar_manifest[1].find(',')));
  const ImageTensor b = load_image(dir / "expected.png");
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a.data()[i] - b.data()[i]) <= 1.0f / 255.0f + 1e-6f);
}

TEST_CASE("augment errors") {
  TempDir dir;
  fs::create_directories(dir / "empty");
  CHECK(invoke({"--out", (dir / "o").string(), "augment", "--input", (dir / "empty").string()}).code ==
        cli::kExitData);
  CHECK(invoke({"augment", "--input", (dir / "missing").string()}).code == cli::kExitData);
  save_image(testutil::random_image(8, 8, 3, 3), dir / "a.png", false);
  CHECK(invoke({"augment", "--input", (dir / "a.png").string(), "--kpool", "2"}).code == cli::kExitUsage);
  // out path blocked by a regular file
  CHECK(invoke({"--out", (dir / "a.png" / "sub").string(), "augment", "--input", (dir / "a.png").string()}).code ==
        cli::kExitData);
}

TEST_CASE("gen-data writes the directory layout") {
  TempDir dir;
  const Outcome r = invoke({"--out", dir.path().string(), "gen-data", "--per-class", "2", "--domains", "flat,noise"});
  REQUIRE(r.code == 0);
  CHECK(png_count(dir.path()) == 16);
  CHECK(fs::exists(dir / "flat/0/000000.png"));
  CHECK(fs::exists(dir / "noise/3/000001.png"));
  const LabeledDataset ds = load_dataset(dir.path(), "noise");
  CHECK(ds.size() == 8);
  CHECK(invoke({"gen-data", "--domains", "plaid"}).code == cli::kExitUsage);
}

TEST_CASE("simulate") {
  TempDir dir;
  ShapeDatasetSpec spec;
  spec.domain = "noise";
  spec.image_size = 40;
  spec.per_class = 1;
  save_dataset(generate_dataset(spec), dir / "data");
  const fs::path corpus = dir / "data" / "noise" / "0";
  for (int c = 1; c < 4; ++c)
    fs::copy_file(dir / "data" / "noise" / std::to_string(c) / "000000.png",
                  corpus / ("c" + std::to_string(c) + ".png"));

  const Outcome r = invoke({"--out", (dir / "s1").string(), "simulate", "--input", corpus.string(), "--patches",
                         "300"});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "inside theoretical band: yes"));
  const auto csv = lines(testutil::read_file(dir / "s1" / "simulate.csv"));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == "m,N,sigma,epsilon,delta1,delta2,delta_10,delta_90,images,pairs_skipped");
  CHECK(lines(testutil::read_file(dir / "s1" / "simulate_images.csv")).size() == 5);

  // constant image: every pair is degenerate
  fs::create_directories(dir / "flatgray");
  save_image(ImageTensor(32, 32, 3, 0.5f), dir / "flatgray" / "g.png", false);
  const Outcome d = invoke({"simulate", "--input", (dir / "flatgray").string(), "--patches", "50"});
  CHECK(d.code == cli::kExitData);
  // too many patches for the image
  CHECK(invoke({"simulate", "--input", corpus.string(), "--patches", "5000"}).code == cli::kExitData);
}

TEST_CASE("train presets resolve and outputs are written") {
  TempDir dir;
  const std::vector<std::string> tiny{"--epochs", "1", "--per-class", "2", "--eval-per-class", "1", "--hidden", "4"};
  auto with = [&](std::vector<std::string> head) {
    head.insert(head.end(), tiny.begin(), tiny.end());
    return head;
  };

  const Outcome r = invoke(with({"--out", (dir / "pd").string(), "train", "--preset", "paper-defaults"}));
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "randconv.kpool=[1,3,5,7]"));
  CHECK(contains(r.out, "randconv.p=0.5"));
  CHECK(contains(r.out, "randconv.lambda=10.0"));
  CHECK(contains(r.out, "randconv.mix=false"));
  CHECK(contains(r.out, "randconv.augment=true"));
  for (const char* f : {"metrics_randconv.csv", "model_randconv.bin", "accuracy.csv", "summary.json"})
    CHECK(fs::exists(dir / "pd" / f));
  const auto metrics = lines(testutil::read_file(dir / "pd" / "metrics_randconv.csv"));
  REQUIRE(metrics.size() == 2);
  CHECK(metrics[0] == "epoch,train_loss,task_loss,cons_loss,train_acc,acc_flat,acc_inverted,acc_stripes,acc_noise");
  const std::string summary = testutil::read_file(dir / "pd" / "summary.json");
  CHECK(contains(summary, "\"final_accuracies\""));
  CHECK(contains(summary, "\"seed\": 0"));
  CHECK(contains(summary, "\"config\""));

  const Outcome mix = invoke(with({"--out", (dir / "mix").string(), "train", "--mode", "mix"}));
  REQUIRE(mix.code == 0);
  CHECK(contains(mix.out, "randconv.mix=true"));

  const Outcome base = invoke(with({"--out", (dir / "base").string(), "train", "--preset", "baseline"}));
  REQUIRE(base.code == 0);
  CHECK(contains(base.out, "baseline.augment=false"));
  CHECK(fs::exists(dir / "base" / "metrics_baseline.csv"));

  const Outcome cmp = invoke(with({"--out", (dir / "cmp").string(), "train", "--compare", "--lambda", "3",
                                "--lambda-squared-compat"}));
  REQUIRE(cmp.code == 0);
  CHECK(contains(cmp.out, "randconv.effective_lambda=9.0"));
  CHECK(fs::exists(dir / "cmp" / "model_baseline.bin"));
  CHECK(fs::exists(dir / "cmp" / "model_randconv.bin"));
}

TEST_CASE("train from a gen-data directory") {
  TempDir dir;
  REQUIRE(invoke({"--out", (dir / "data").string(), "gen-data", "--per-class", "2"}).code == 0);
  const Outcome r = invoke({"--out", (dir / "t").string(), "train", "--data", (dir / "data").string(), "--epochs",
                         "1", "--hidden", "4"});
  CHECK(r.code == 0);
  CHECK(invoke({"train", "--data", (dir / "nowhere").string(), "--epochs", "1"}).code == cli::kExitData);
}

TEST_CASE("non-finite training aborts with exit 3") {
  TempDir dir;
  const Outcome r = invoke({"--out", dir.path().string(), "train", "--epochs", "5", "--per-class", "8",
                         "--eval-per-class", "1", "--hidden", "8", "--batch-size", "4", "--lr", "1e200"});
  CHECK(r.code == cli::kExitDiverged);
  CHECK(contains(r.err, "diverged"));
}

TEST_CASE("config file and environment") {
  TempDir dir;
  {
    std::ofstream f(dir / "run.ini");
    f << "seed=3\n[bounds]\nepsilon=0.2\nm=5\n";
  }
  const Outcome r = invoke({"--config", (dir / "run.ini").string(), "bounds", "--m", "4"});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "seed=3"));
  CHECK(contains(r.out, "epsilon=0.2"));
  CHECK(contains(r.out, "\nm=4"));  // flag wins over the file

  ::setenv("RANDCONV_THREADS", "2", 1);
  const Outcome env = invoke({"bounds"});
  ::unsetenv("RANDCONV_THREADS");
  CHECK(contains(env.out, "threads=2"));
  CHECK(contains(invoke({"--threads", "1", "bounds"}).out, "threads=1"));
}

TEST_CASE("every subcommand is byte-identical across runs") {
  TempDir dir;
  REQUIRE(invoke({"--out", (dir / "data").string(), "gen-data", "--per-class", "2", "--image-size", "36"}).code == 0);
  const std::string corpus = (dir / "data" / "stripes" / "1").string();
  auto twice = [&](const std::string& name, const std::vector<std::string>& threads,
                   const std::vector<std::string>& cmd) {
    for (int run = 0; run < 2; ++run) {
      std::vector<std::string> args{"--seed", "11", "--out", (dir / (name + std::to_string(run))).string()};
      args.insert(args.end(), threads.begin(), threads.end());
      args.insert(args.end(), cmd.begin(), cmd.end());
      REQUIRE(invoke(args).code == 0);
    }
    const auto a = testutil::snapshot(dir / (name + "0"));
    const auto b = testutil::snapshot(dir / (name + "1"));
    CHECK(!a.empty());
    CHECK(a == b);
  };
  const std::vector<std::string> one{"--threads", "1"};
  twice("gen", one, {"gen-data", "--per-class", "2"});
  twice("aug", one, {"augment", "--input", corpus, "--mode", "mix", "--samples", "3"});
  twice("sim", one, {"simulate", "--input", corpus, "--patches", "200"});
  twice("bnd", one, {"bounds"});
  twice("trn", one, {"train", "--epochs", "2", "--per-class", "4", "--eval-per-class", "2", "--compare"});

  // more workers give the same bytes
  const auto single = testutil::snapshot(dir / "trn0");
  REQUIRE(invoke({"--seed", "11", "--threads", "3", "--out", (dir / "trn_mt").string(), "train", "--epochs", "2",
               "--per-class", "4", "--eval-per-class", "2", "--compare"})
              .code == 0);
  CHECK(testutil::snapshot(dir / "trn_mt") == single);
}
