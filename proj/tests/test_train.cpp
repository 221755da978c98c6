#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mlplab/checkpoint_io.hpp"
#include "mlplab/dataset.hpp"
#include "mlplab/train.hpp"

using namespace mlplab;

namespace {

MlpConfig small_config(int classes, int feature_dim, int hidden) {
  MlpConfig cfg;
  cfg.layer_sizes = {hidden, classes};
  cfg.feature_dim = feature_dim;
  return cfg;
}

// Independent oracle for the separable-Gaussians example: binary logistic
// regression trained by plain gradient descent.
double logistic_regression_accuracy(const Dataset& train, const Dataset& test) {
  const int d = train.feature_dim;
  std::vector<double> w(d + 1, 0.0);
  for (int iter = 0; iter < 500; ++iter) {
    std::vector<double> grad(d + 1, 0.0);
    for (const Sample& s : train.samples) {
      double z = w[d];
      for (int i = 0; i < d; ++i) z += w[i] * s.features[i];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double err = p - static_cast<double>(s.label);
      for (int i = 0; i < d; ++i) grad[i] += err * s.features[i];
      grad[d] += err;
    }
    for (int i = 0; i <= d; ++i)
      w[i] -= 0.1 * grad[i] / static_cast<double>(train.samples.size());
  }
  int correct = 0;
  for (const Sample& s : test.samples) {
    double z = w[d];
    for (int i = 0; i < d; ++i) z += w[i] * s.features[i];
    if ((z > 0.0 ? 1 : 0) == s.label) ++correct;
  }
  return static_cast<double>(correct) / test.samples.size();
}

}  // namespace

TEST_CASE("adam single step equals the hand-evaluated update") {
  MlpConfig cfg;
  cfg.layer_sizes = {1};
  cfg.feature_dim = 1;
  Mlp mlp;
  mlp.config = cfg;
  mlp.weights.emplace_back(1, 2, 0.0);
  OptimizerState st = make_optimizer_state(cfg);
  TrainSchedule sched;
  sched.learning_rate = 1e-3;

  GradientSet g = make_zero_gradients(cfg);
  g[0](0, 0) = 0.1;
  optimizer_step(mlp, g, st, sched);
  // Bias-corrected first step: m_hat = g, v_hat = g^2.
  const double expected = -1e-3 * 0.1 / (0.1 + 1e-8);
  CHECK(mlp.weights[0](0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(mlp.weights[0](0, 0) + 1e-3) < 1e-9);
  CHECK(mlp.weights[0](0, 1) == 0.0);  // zero-gradient coordinate untouched
}

TEST_CASE("sgd with zero gradient leaves weights unchanged") {
  MlpConfig cfg = small_config(2, 2, 3);
  Mlp mlp = init_normalized_uniform(cfg, 9);
  const Mlp before = mlp;
  OptimizerState st = make_optimizer_state(cfg);
  TrainSchedule sched;
  sched.optimizer = Optimizer::sgd;
  sched.learning_rate = 10.0;
  optimizer_step(mlp, make_zero_gradients(cfg), st, sched);
  CHECK(mlp.weights[0] == before.weights[0]);
  CHECK(mlp.weights[1] == before.weights[1]);
}

TEST_CASE("adam treats identical gradients identically") {
  MlpConfig cfg;
  cfg.layer_sizes = {2};
  cfg.feature_dim = 1;
  Mlp mlp;
  mlp.config = cfg;
  mlp.weights.emplace_back(2, 2, 0.5);
  OptimizerState st = make_optimizer_state(cfg);
  TrainSchedule sched;
  GradientSet g = make_zero_gradients(cfg);
  g[0](0, 0) = 0.3;
  g[0](1, 0) = 0.3;
  optimizer_step(mlp, g, st, sched);
  CHECK(mlp.weights[0](0, 0) == mlp.weights[0](1, 0));
}

TEST_CASE("optimizer rejects non-finite gradients") {
  MlpConfig cfg = small_config(2, 2, 3);
  Mlp mlp = init_normalized_uniform(cfg, 9);
  OptimizerState st = make_optimizer_state(cfg);
  TrainSchedule sched;
  GradientSet g = make_zero_gradients(cfg);
  g[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(optimizer_step(mlp, g, st, sched), NumericError);
}

TEST_CASE("training separates well-separated Gaussians") {
  const Dataset all = synthetic_gaussians(2, 200, 2, 6.0, 21);
  auto [train_ds, val_ds, test_ds] = split(all, {0.5, 0.25, 4});

  // Oracle first: this construction is linearly separable.
  CHECK(logistic_regression_accuracy(train_ds, test_ds) >= 0.99);

  MlpConfig cfg = small_config(2, 2, 8);
  TrainSchedule sched;
  sched.max_epochs = 20;
  sched.learning_rate = 1e-2;
  sched.seed = 3;
  const TrainResult result = train(cfg, train_ds, val_ds, test_ds, sched);
  CHECK(evaluate(result.best, test_ds).accuracy >= 0.95);
  CHECK(result.history.size() == 20);
}

TEST_CASE("zero epochs returns the initialized network and empty history") {
  const Dataset all = synthetic_gaussians(2, 30, 2, 3.0, 5);
  auto [train_ds, val_ds, test_ds] = split(all, {0.6, 0.2, 1});
  MlpConfig cfg = small_config(2, 2, 4);
  TrainSchedule sched;
  sched.max_epochs = 0;
  sched.seed = 12;
  const TrainResult result = train(cfg, train_ds, val_ds, test_ds, sched);
  CHECK(result.history.empty());
  CHECK(result.best_epoch == 0);
  const Mlp fresh = init_normalized_uniform(cfg, 12);
  CHECK(result.best.weights[0] == fresh.weights[0]);
  CHECK(result.best.weights[1] == fresh.weights[1]);
}

TEST_CASE("training is deterministic under fixed seeds") {
  const Dataset all = synthetic_gaussians(3, 40, 3, 3.0, 8);
  auto [train_ds, val_ds, test_ds] = split(all, {0.6, 0.2, 2});
  MlpConfig cfg = small_config(3, 3, 5);
  TrainSchedule sched;
  sched.max_epochs = 5;
  sched.batch_size = 16;
  sched.seed = 44;
  sched.checkpoint_epochs = {1, 3};
  sched.checkpoint_batches = {1, 2};

  const TrainResult a = train(cfg, train_ds, val_ds, test_ds, sched);
  const TrainResult b = train(cfg, train_ds, val_ds, test_ds, sched);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_error == b.history[i].train_error);
    CHECK(a.history[i].val_error == b.history[i].val_error);
    CHECK(a.history[i].test_error == b.history[i].test_error);
  }
  REQUIRE(a.checkpoints.size() == b.checkpoints.size());
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    CHECK(a.checkpoints[i].tag == b.checkpoints[i].tag);
    CHECK(a.checkpoints[i].weights == b.checkpoints[i].weights);
  }
  CHECK(a.best.weights == b.best.weights);
}

TEST_CASE("checkpoints are captured at the requested tags and stay frozen") {
  const Dataset all = synthetic_gaussians(2, 40, 2, 4.0, 6);
  auto [train_ds, val_ds, test_ds] = split(all, {0.6, 0.2, 2});
  MlpConfig cfg = small_config(2, 2, 4);
  TrainSchedule sched;
  sched.max_epochs = 4;
  sched.batch_size = 8;
  sched.seed = 17;
  sched.checkpoint_epochs = {0, 2, 4};
  sched.checkpoint_batches = {1, 3};

  const TrainResult result = train(cfg, train_ds, val_ds, test_ds, sched);
  REQUIRE(result.checkpoints.size() == 5);
  CHECK(result.checkpoints[0].tag ==
        CheckpointTag{CheckpointTag::Kind::epoch, 0});
  CHECK(result.checkpoints[1].tag ==
        CheckpointTag{CheckpointTag::Kind::batch, 1});
  CHECK(result.checkpoints[2].tag ==
        CheckpointTag{CheckpointTag::Kind::batch, 3});
  CHECK(result.checkpoints[3].tag ==
        CheckpointTag{CheckpointTag::Kind::epoch, 2});
  CHECK(result.checkpoints[4].tag ==
        CheckpointTag{CheckpointTag::Kind::epoch, 4});

  // Epoch-0 snapshot equals the raw initialization, untouched by training.
  const Mlp fresh = init_normalized_uniform(cfg, 17);
  CHECK(result.checkpoints[0].weights == fresh.weights);

  // Re-running forward from stored weights reproduces the stored errors.
  for (const Checkpoint& c : result.checkpoints) {
    const Mlp snap{cfg, c.weights};
    CHECK(evaluate(snap, train_ds).error == c.train_error);
    CHECK(evaluate(snap, val_ds).error == c.val_error);
    CHECK(evaluate(snap, test_ds).error == c.test_error);
  }
}

TEST_CASE("evaluate: constant and random predictors") {
  const Dataset ds = synthetic_gaussians(3, 100, 4, 2.0, 13);

  // All-zero weights with linear output predict class 0 everywhere.
  MlpConfig cfg = small_config(3, 4, 5);
  Mlp zero;
  zero.config = cfg;
  zero.weights.emplace_back(5, 5, 0.0);
  zero.weights.emplace_back(3, 5, 0.0);
  CHECK(evaluate(zero, ds).accuracy == doctest::Approx(ds.class_priors[0]));

  // Untrained nets on balanced 10-class data: accuracy near chance,
  // averaged over several seeds.
  const Dataset ten = synthetic_gaussians(10, 100, 6, 3.0, 99);
  MlpConfig cfg10 = small_config(10, 6, 16);
  double mean_acc = 0.0;
  const int seeds = 6;
  for (int s = 0; s < seeds; ++s)
    mean_acc += evaluate(init_normalized_uniform(cfg10, 100 + s), ten).accuracy;
  mean_acc /= seeds;
  CHECK(mean_acc > 0.05);
  CHECK(mean_acc < 0.15);
}

TEST_CASE("divergence raises a training error naming the position") {
  const Dataset all = synthetic_gaussians(2, 40, 2, 4.0, 6);
  auto [train_ds, val_ds, test_ds] = split(all, {0.6, 0.2, 2});
  // Sigmoid hidden nodes cannot die, so an absurd learning rate compounds
  // the output weights until the forward pass overflows.
  MlpConfig cfg = small_config(2, 2, 4);
  cfg.hidden_activation = Activation::sigmoid;
  TrainSchedule sched;
  sched.max_epochs = 50;
  sched.optimizer = Optimizer::sgd;
  sched.learning_rate = 1e14;
  sched.seed = 3;
  try {
    train(cfg, train_ds, val_ds, test_ds, sched);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("checkpoint files round-trip weights and metrics exactly") {
  const Dataset all = synthetic_gaussians(2, 40, 3, 4.0, 6);
  auto [train_ds, val_ds, test_ds] = split(all, {0.6, 0.2, 2});
  MlpConfig cfg = small_config(2, 3, 4);
  TrainSchedule sched;
  sched.max_epochs = 2;
  sched.seed = 5;
  sched.checkpoint_epochs = {2};
  const TrainResult result = train(cfg, train_ds, val_ds, test_ds, sched);
  REQUIRE(result.checkpoints.size() == 1);

  const auto path =
      std::filesystem::temp_directory_path() / "mlplab_ckpt_test.json";
  save_checkpoint(path.string(), cfg, sched, result.checkpoints[0]);
  const LoadedCheckpoint loaded = load_checkpoint(path.string());

  CHECK(loaded.config == cfg);
  CHECK(loaded.schedule.seed == sched.seed);
  CHECK(loaded.checkpoint.tag == result.checkpoints[0].tag);
  CHECK(loaded.checkpoint.weights == result.checkpoints[0].weights);
  CHECK(loaded.checkpoint.train_error == result.checkpoints[0].train_error);
  CHECK(loaded.checkpoint.val_error == result.checkpoints[0].val_error);
  CHECK(loaded.checkpoint.test_error == result.checkpoints[0].test_error);
}
