#pragma once

// Initialization, Adam, gradient accumulation, training loop and grid search.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "can/model.hpp"

namespace can {

struct TrainConfig {
  ModelKind model = ModelKind::Can;
  ModelDims dims;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  double clip_norm = 5.0;  // 0 disables clipping
  // Stop after this many epochs without a better validation error; 0 never stops early.
  std::size_t patience = 0;
  // Stop after the epoch that crosses this wall-clock budget; 0 means no budget.
  double max_seconds = 0.0;
  std::size_t max_len = kDefaultMaxLen;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// "key = value" lines; '#' starts a comment. Unknown keys are rejected.
TrainConfig parse_train_config(std::string_view text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path);
std::string format_train_config(const TrainConfig& cfg);

// Embedding W_w ~ U(-sqrt 3, sqrt 3); parameters named b_* are zero; every
// other array ~ U(+-sqrt(6 / (fan_in + fan_out))) with vectors as n x 1.
void init_params(QaModel& model, std::uint64_t seed);

using Gradients = std::vector<std::vector<double>>;

Gradients zero_gradients(std::span<ad::Parameter* const> params);
Gradients zero_gradients(const QaModel& model);

// Scales grads so that their global L2 norm is at most threshold and returns
// the norm before scaling.
double clip_global_norm(Gradients& grads, double threshold);

struct OptimizerState {
  OptimizerState(std::span<ad::Parameter* const> params, double lr = 0.001, double beta1 = 0.9,
                 double beta2 = 0.999, double epsilon = 1e-8);

  Gradients m;
  Gradients v;
  std::uint64_t step = 0;
  double lr;
  double beta1;
  double beta2;
  double epsilon;
};

// Bias-corrected Adam update. Throws ShapeMismatch or NonFiniteGradient.
void adam_step(OptimizerState& opt, std::span<ad::Parameter* const> params, const Gradients& grads);

// Adds d loss / d param for one example into acc and returns the loss.
double accumulate_example(const QaModel& model, const StoryExample& ex, Gradients& acc);

// Fraction of examples not reproduced exactly: QA examples must decode to the
// stored answer; IQA examples must emit the stored supplementary question and,
// given the stored feedback, the stored answer.
double validation_error(const QaModel& model, std::span<const StoryExample> examples,
                        std::size_t max_len = kDefaultMaxLen);

// Deterministic split of 0..n-1 into (train, validation) indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_validation(std::size_t n, double fraction,
                                                                               std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per example
  double val_error = 0.0;
  double seconds = 0.0;     // cumulative
};

std::string history_line(const EpochRecord& r);

struct TrainResult {
  std::unique_ptr<QaModel> model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  double best_val_error = 1.0;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct GridResult {
  TrainConfig best;
  TrainResult result;
  std::vector<std::pair<TrainConfig, double>> scores;  // in grid order
};

// Exhaustive; ties go to fewer parameters, then the lexicographically smaller
// configuration.
GridResult grid_search(const Dataset& data, std::span<const TrainConfig> grid, const EpochCallback& on_epoch = {});

// K_h in {32, 64} x batch size in {16, 32} around base.
std::vector<TrainConfig> default_grid(const TrainConfig& base);

}  // namespace can
