#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ipnet/dataio.hpp"
#include "ipnet/metrics.hpp"
#include "ipnet/model.hpp"
#include "ipnet/series.hpp"

namespace ipnet {

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 30;
  int patience = 3;  // epochs of validation non-improvement tolerated
  double lr = 1e-3;
  double holdout_fraction = 0.2;
  uint64_t seed = 1;
  int threads = 1;
  std::string checkpoint_path;  // written after every epoch when nonempty
};

// Resumable training progress. All stochasticity is derived from
// (seed, epoch, step, case), so a run resumed from a checkpoint follows the
// uninterrupted trajectory bit for bit.
struct TrainState {
  int completed_epochs = 0;
  int64_t global_step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  int patience_used = 0;
  std::vector<double> best_params;
  bool stopped = false;
};

struct TrainResult {
  TrainState state;
  bool early_stopped = false;
  double first_step_total = 0.0;
  double last_step_total = 0.0;
};

// Trains in place with doubly stochastic steps: minibatches reshuffled each
// epoch and holdout masks resampled each step. Early stopping watches the
// validation composite loss; on improvement the parameters are snapshotted
// and restored into the model when training ends. Cases in `data` must be
// normalized already. A non-finite training loss aborts with the model
// restored to the best snapshot (any on-disk checkpoint from a previous
// epoch is left in place). step_log, when given, receives CSV rows
// `step,supervised,reconstruction,reg_I,reg_P,total`.
TrainResult train_model(Model& model, const DenseBatch& data,
                        std::span<const int> train_idx,
                        std::span<const int> val_idx, const TrainConfig& cfg,
                        TrainState* resume_state = nullptr,
                        std::ostream* step_log = nullptr);

void save_checkpoint(const std::string& path, const Model& m,
                     const TrainState& st);

struct Checkpoint {
  Model model;
  TrainState state;
};

Checkpoint load_checkpoint(const std::string& path);

// Scores every indexed case with the model and computes the task metrics.
EvalReport evaluate_model(const Model& m, const DenseBatch& normalized,
                          std::span<const int> idx, int fold = -1);

struct CvResult {
  Task task = Task::classification;
  std::string model;
  std::string channels;  // proposed model only
  std::vector<EvalReport> folds;
  std::map<std::string, MetricSummary> summary;

  std::string table() const;
  std::string to_json() const;
};

// Full k-fold cross validation: per fold, fits normalization on the
// training split, trains with early stopping, and evaluates the held-out
// fold. log_dir, when nonempty, receives per-fold training-log CSVs.
CvResult run_cv(const std::vector<SparseSeries>& data,
                const ModelConfig& mcfg, const TrainConfig& tcfg, int k,
                const std::string& log_dir = "");

// run_cv for each channel subset of the proposed model.
std::vector<CvResult> run_ablation(const std::vector<SparseSeries>& data,
                                   const ModelConfig& mcfg,
                                   const TrainConfig& tcfg, int k,
                                   const std::vector<ChannelSet>& subsets);

std::string ablation_table(const std::vector<CvResult>& results);

}  // namespace ipnet
