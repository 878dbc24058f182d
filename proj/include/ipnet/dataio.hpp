#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipnet/series.hpp"

namespace ipnet {

// Summary statistics from loading or generating a dataset. missing_frac is
// the per-dimension fraction of union timestamps with no observation of
// that dimension, pooled over cases (the same computation the clinical
// extract tables use).
struct LoadReport {
  int n_cases = 0;
  size_t n_obs = 0;
  int duplicates = 0;        // dropped same-(case,dim,time) rows, last kept
  int unlabeled_cases = 0;   // cases with observations but no label row
  std::vector<double> missing_frac;

  std::string summary() const;
};

// Observation file: header case_id,dim,time,value; one row per observation.
// Labels file: header case_id,label. The labels file is the case roster:
// output order follows it, and observation rows for unlabeled cases are
// dropped (counted in the report). D is the largest dim index + 1.
std::vector<SparseSeries> load_dataset(const std::string& obs_path,
                                       const std::string& labels_path,
                                       Task task, double window_length,
                                       LoadReport* report = nullptr);

void write_dataset_csv(const std::vector<SparseSeries>& data,
                       const std::string& obs_path,
                       const std::string& labels_path);

LoadReport dataset_report(const std::vector<SparseSeries>& data);

// Synthetic sparse-series generator. Each case draws a latent trajectory
// per dimension (shared low-frequency component mixed with an idiosyncratic
// one); observation times come from an inhomogeneous Poisson process with a
// mild 24h-period modulation. The three class-signal knobs plant signal in
// distinct places:
//   trend_signal     shifts every dimension's latent mean by +/- half this
//   transient_signal adds short Gaussian bumps to class-1 latents
//   intensity_signal scales class sampling rates by exp(+/- half this)
// Classification labels are the class id; regression targets are
// reg_bias + reg_scale * (time average of dimension 0's latent), already in
// log-days space.
struct SynthConfig {
  int n_cases = 2000;
  int D = 6;
  double window = 48.0;
  Task task = Task::classification;
  std::vector<double> rate_per_hour;  // base observation rate per dim
  double class_balance = 0.5;         // P(class = 1)
  uint64_t seed = 1;

  double trend_signal = 1.0;
  double transient_signal = 0.0;
  double intensity_signal = 0.0;
  double noise_sd = 0.3;

  int latent_harmonics = 2;
  double latent_amp = 1.0;

  double reg_scale = 1.0;
  double reg_bias = 1.0;

  void validate() const;
  // Fills rate_per_hour by cycling a clinical-vitals-like default profile
  // when it is empty.
  void fill_default_rates();
  // Base rate giving the target expected fraction of empty 1-hour bins.
  static double rate_for_missingness(double missing_frac);
};

std::vector<SparseSeries> generate_synthetic(const SynthConfig& cfg);

// Index sets for one cross-validation fold. train/val partition the
// non-test cases; val (a 20% sub-sample by default) drives early stopping.
struct FoldSplit {
  std::vector<int> test;
  std::vector<int> train;
  std::vector<int> val;
};

// Deterministic k-fold assignment, stratified by class for classification
// datasets. Throws if k < 2, n < k, or a class has fewer members than k.
std::vector<FoldSplit> kfold_split(const std::vector<SparseSeries>& data,
                                   int k, uint64_t seed,
                                   double val_fraction = 0.2);

}  // namespace ipnet
