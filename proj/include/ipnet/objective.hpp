#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ipnet/interp.hpp"
#include "ipnet/series.hpp"

namespace ipnet {

// Held-out observation mask for one case, aligned with the DenseCase
// arrays. Held entries are a subset of the observed entries; they are
// removed from the interpolation input and used only as reconstruction
// targets.
struct HeldMask {
  std::vector<uint8_t> held;  // D x U
  int count = 0;

  // observed AND NOT held, the interpolation input mask
  std::vector<uint8_t> input_mask(const DenseCase& c) const;
};

// Samples floor(fraction * observation_count) entries uniformly without
// replacement from the case's pooled observed points. Deterministic given
// the seed; resampled fresh each training step by the caller.
HeldMask sample_masks(const DenseCase& c, double fraction, uint64_t seed);

struct ReconTerm {
  int d = 0;
  int u = 0;           // union timestamp index
  double target = 0.0;  // the held-out observed value
  double predicted = 0.0;
};

// The evaluation points and reduced input mask for reconstructing a case's
// held-out observations: query every timestamp holding at least one
// held-out entry, with all held-out points removed from the input.
struct ReconPlan {
  std::vector<int> query_u;      // union indices, ascending
  std::vector<double> queries;   // matching times
  std::vector<uint8_t> input;    // observed AND NOT held
};

ReconPlan plan_reconstruction(const DenseCase& c, const HeldMask& mask);

// Evaluates the smooth interpolant at each held-out timestamp with every
// held-out point removed from the input, pairing predictions with their
// targets.
std::vector<ReconTerm> reconstruct_heldout(const DenseCase& c,
                                           const HeldMask& mask,
                                           const InterpParams& params);

struct LossConfig {
  double delta = 1.0;
  double lambda_interp = 1e-4;
  double lambda_pred = 1e-4;
  Task task = Task::classification;

  void validate() const;
};

struct LossBreakdown {
  double supervised = 0.0;
  double reconstruction = 0.0;  // delta-weighted
  double reg_interp = 0.0;
  double reg_pred = 0.0;
  double total = 0.0;
};

// total = supervised + lambda_I ||theta||^2 + lambda_P ||phi||^2
//         + delta * sum of squared reconstruction errors.
// Throws, naming the offending term, if any component is non-finite.
LossBreakdown composite_loss(double pred_loss,
                             std::span<const ReconTerm> recon_terms,
                             std::span<const double> interp_params,
                             std::span<const double> pred_params,
                             const LossConfig& cfg);

// Numerically stable binary cross-entropy from the pre-sigmoid score.
double bce_from_logit(double logit, double label);
// d(bce)/d(logit) = sigmoid(logit) - label
double bce_grad_logit(double logit, double label);
double sigmoid(double x);

}  // namespace ipnet
