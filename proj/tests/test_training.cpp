#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "bas/synth_data.hpp"
#include "bas/training.hpp"

using namespace bas;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "bas_train_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A 3-class 16x16 set shared by the suite (generated once).
const std::string& tiny_dataset() {
  static std::string root = [] {
    DatasetSpec spec;
    spec.num_classes = 3;
    spec.train_samples = 12;
    spec.eval_samples = 6;
    spec.image_size = 16;
    spec.clutter = 2;
    spec.seed = 5;
    fs::path dir = fresh_dir("dataset");
    generate_dataset(spec, dir.string());
    return dir.string();
  }();
  return root;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.num_classes = 3;
  cfg.input_size = 16;
  cfg.blocks = {{4, 2}, {6, 1}, {6, 1}};
  cfg.generator_stage = 2;
  return cfg;
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr_init = 0.05;
  cfg.seed = 9;
  return cfg;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::vector<char>(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("poly decay: endpoints, midpoint, rejection, strict decrease") {
  CHECK(poly_lr(0.1, 0.9, 0, 100) == doctest::Approx(0.1));
  CHECK(poly_lr(0.1, 0.9, 100, 100) == 0.0);
  CHECK(poly_lr(1.0, 0.9, 50, 100) == doctest::Approx(std::pow(0.5, 0.9)));
  CHECK_THROWS_AS(poly_lr(0.1, 0.9, 101, 100), std::invalid_argument);
  CHECK_THROWS_AS(poly_lr(0.1, 0.9, -1, 100), std::invalid_argument);

  double prev = poly_lr(0.1, 0.9, 0, 40);
  for (int itr = 1; itr <= 40; ++itr) {
    double lr = poly_lr(0.1, 0.9, itr, 40);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK(prev == 0.0);
}

TEST_CASE("momentum step: plain SGD, no-op, hand-unrolled recurrence") {
  TensorF p({2}, {1.f, 2.f}), g({2}, {0.5f, -1.f}), v({2});
  sgd_momentum_step(p, g, v, 0.1, 0.0);
  CHECK(p.data[0] == doctest::Approx(1.0 - 0.1 * 0.5));
  CHECK(p.data[1] == doctest::Approx(2.0 + 0.1));

  TensorF p2({2}, {3.f, 4.f}), zero({2}), v2({2});
  sgd_momentum_step(p2, zero, v2, 0.1, 0.9);
  CHECK(p2.data == std::vector<float>{3.f, 4.f});

  // Two steps, constant gradient, momentum 0.9, lr 1: total displacement
  // g * (1 + 1.9) = 2.9 g.
  TensorF p3({1}, {0.f}), g3({1}, {1.f}), v3({1});
  sgd_momentum_step(p3, g3, v3, 1.0, 0.9);
  sgd_momentum_step(p3, g3, v3, 1.0, 0.9);
  CHECK(p3.data[0] == doctest::Approx(-2.9));

  TensorF bad({3});
  CHECK_THROWS_AS(sgd_momentum_step(p3, bad, v3, 1.0, 0.9), std::invalid_argument);
}

TEST_CASE("training is deterministic: reruns produce bit-identical checkpoints and logs") {
  Manifest data = load_manifest(tiny_dataset() + "/train");
  fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");

  BasNet net1 = init_net(tiny_model(), 9);
  TrainResult r1 = train(net1, data, tiny_train(), a.string());
  BasNet net2 = init_net(tiny_model(), 9);
  TrainResult r2 = train(net2, data, tiny_train(), b.string());

  CHECK(slurp(r1.checkpoint_path) == slurp(r2.checkpoint_path));
  CHECK(slurp(r1.log_path) == slurp(r2.log_path));
  CHECK(fs::exists(a / "checkpoint_ep001.bas"));
  CHECK(fs::exists(a / "checkpoint_ep002.bas"));
}

TEST_CASE("zero extra weights reduce training to a pure classifier") {
  Manifest data = load_manifest(tiny_dataset() + "/train");
  fs::path a = fresh_dir("red_a"), b = fresh_dir("red_b");

  TrainConfig cfg = tiny_train();
  cfg.weights.alpha = 0.0;
  cfg.weights.beta = 0.0;
  cfg.weights.lambda = 0.0;
  BasNet net = init_net(tiny_model(), 9);
  TrainResult r = train(net, data, cfg, a.string());

  // The bundle log then shows total == l_cls at every step.
  std::ifstream log(r.log_path);
  std::string line;
  std::getline(log, line);  // header
  CHECK(line == "step,lr,l_cls,l_frg,l_ac,l_bas,total");
  int rows = 0;
  while (std::getline(log, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<double> cols;
    while (std::getline(ss, field, ',')) cols.push_back(std::stod(field));
    REQUIRE(cols.size() == 7);
    CHECK(cols[2] == doctest::Approx(cols[6]).epsilon(1e-9));  // l_cls == total
    CHECK(cols[4] == 0.0);
    CHECK(cols[5] == 0.0);
    ++rows;
  }
  CHECK(rows == r.steps);

  // Same classifier path with generator terms active but lambda zero differs
  // from the pure run only in the generator parameters.
  TrainConfig cfg2 = tiny_train();
  cfg2.weights.lambda = 0.0;
  BasNet net2 = init_net(tiny_model(), 9);
  CHECK_NOTHROW(train(net2, data, cfg2, b.string()));
}

TEST_CASE("loss log keeps the suppression term inside its clamp") {
  Manifest data = load_manifest(tiny_dataset() + "/train");
  fs::path dir = fresh_dir("clamp");
  TrainConfig cfg = tiny_train();
  BasNet net = init_net(tiny_model(), 10);
  TrainResult r = train(net, data, cfg, dir.string());

  std::ifstream log(r.log_path);
  std::string line;
  std::getline(log, line);
  while (std::getline(log, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<double> cols;
    while (std::getline(ss, field, ',')) cols.push_back(std::stod(field));
    CHECK(cols[5] >= 0.0);
    CHECK(cols[5] <= 1.0);
  }
  CHECK(r.final_epoch_mean.l_bas >= 0.0);
  CHECK(r.final_epoch_mean.l_bas <= 1.0);
}

TEST_CASE("wsss mode trains on multi-label data and logs the class draws") {
  DatasetSpec spec;
  spec.num_classes = 3;
  spec.train_samples = 8;
  spec.eval_samples = 4;
  spec.image_size = 16;
  spec.mode = "multi";
  spec.objects_min = 2;
  spec.objects_max = 2;
  spec.clutter = 2;
  spec.seed = 6;
  fs::path dsdir = fresh_dir("wsss_data");
  generate_dataset(spec, dsdir.string());
  Manifest data = load_manifest((dsdir / "train").string());

  fs::path out = fresh_dir("wsss_run");
  TrainConfig cfg = tiny_train();
  cfg.mode = "wsss";
  cfg.epochs = 1;
  BasNet net = init_net(tiny_model(), 11);
  TrainResult r = train(net, data, cfg, out.string());
  CHECK(r.steps == 2);
  REQUIRE(fs::exists(out / "wsss_draws.csv"));
  std::ifstream draws((out / "wsss_draws.csv").string());
  std::string line;
  std::getline(draws, line);
  CHECK(line == "step,sample,class");
  int rows = 0;
  while (std::getline(draws, line)) ++rows;
  CHECK(rows == 8);  // one draw per sample per epoch

  // wsol mode rejects multi-label data.
  TrainConfig bad = tiny_train();
  BasNet net2 = init_net(tiny_model(), 11);
  CHECK_THROWS_WITH_AS(train(net2, data, bad, out.string()), doctest::Contains("single-label"),
                       std::invalid_argument);
}

TEST_CASE("augmentation flags keep the loop deterministic") {
  Manifest data = load_manifest(tiny_dataset() + "/train");
  fs::path a = fresh_dir("aug_a"), b = fresh_dir("aug_b");
  TrainConfig cfg = tiny_train();
  cfg.flip = true;
  cfg.crop = true;
  cfg.epochs = 1;
  BasNet n1 = init_net(tiny_model(), 12);
  BasNet n2 = init_net(tiny_model(), 12);
  TrainResult r1 = train(n1, data, cfg, a.string());
  TrainResult r2 = train(n2, data, cfg, b.string());
  CHECK(slurp(r1.checkpoint_path) == slurp(r2.checkpoint_path));
}

TEST_CASE("config validation names the bad field") {
  TrainConfig cfg = tiny_train();
  cfg.lr_init = 0.0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("lr_init"), std::invalid_argument);
  cfg = tiny_train();
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train();
  cfg.mode = "semi";
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
