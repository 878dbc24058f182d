#pragma once

#include <span>
#include <vector>

#include "ipnet/rng.hpp"
#include "ipnet/series.hpp"

namespace ipnet {

// Learnable parameters of the two-layer interpolation network. Bandwidths
// are stored as log_alpha so alpha stays positive; the transient bandwidth
// is tied to the smooth one by a fixed kappa > 1 and never learned on its
// own. rho carries no symmetry or definiteness constraint.
struct InterpParams {
  double kappa = 10.0;
  std::vector<double> log_alpha;  // D
  std::vector<double> rho;        // D x D row-major, rho[d * D + d']

  int dims() const { return static_cast<int>(log_alpha.size()); }
  double alpha1(int d) const { return std::exp(log_alpha[d]); }
  double alpha2(int d) const { return kappa * alpha1(d); }
  void validate() const;

  // log_alpha set so the kernel length scale is about twice the grid
  // spacing; rho starts near the identity.
  static InterpParams init(int D, double kappa, double grid_spacing, Rng& rng);
};

// Interpolation output for one case: three D x T channels on the grid.
struct ChannelGrid {
  int D = 0;
  int T = 0;
  std::vector<double> smooth;     // cross-dimension layer-2 interpolant
  std::vector<double> transient;  // kappa-bandwidth residual
  std::vector<double> intensity;  // RBF observation density
};

// First-layer per-dimension RBF interpolation evaluated at arbitrary query
// times. out is D x Q. A dimension with no (unmasked) observations, or a
// query where every weight underflows, yields exactly 0. mask overrides
// c.observed when nonempty (used to drop held-out points).
void layer1_interpolate(const DenseCase& c, std::span<const double> queries,
                        std::span<const double> alpha, std::span<double> out,
                        std::span<const uint8_t> mask = {});

// Unnormalized kernel density of observations per dimension; shares its
// bandwidths with the smooth channel.
void intensity(const DenseCase& c, std::span<const double> queries,
               std::span<const double> alpha, std::span<double> out,
               std::span<const uint8_t> mask = {});

// Second layer: intensity-weighted cross-dimension merge with coefficients
// rho. Queries where the total intensity is 0 yield exactly 0.
void layer2_interpolate(std::span<const double> layer1,
                        std::span<const double> intens,
                        std::span<const double> rho, int D, int Q,
                        std::span<double> out);

void transient_residual(std::span<const double> nonsmooth,
                        std::span<const double> smooth, std::span<double> out);

// Full three-channel pipeline on the reference grid:
//   smooth    = layer2(layer1(alpha1), intensity(alpha1), rho)
//   transient = layer1(kappa * alpha1) - smooth
//   intensity = intensity(alpha1)
ChannelGrid interpolate_batch(const DenseCase& c, const ReferenceGrid& grid,
                              const InterpParams& p);

// Forward/backward evaluator for training. Caches the RBF weights from the
// forward pass so backward needs no exp() recomputation. One instance per
// worker thread; buffers are reused across calls.
class InterpEvaluator {
 public:
  // with_transient=false skips the kappa-bandwidth pass (the reconstruction
  // path only needs the smooth channel).
  void forward(const DenseCase& c, std::span<const double> queries,
               const InterpParams& p, std::span<const uint8_t> mask,
               bool with_transient);

  int D() const { return D_; }
  int Q() const { return Q_; }
  std::span<const double> smooth() const { return {smooth_.data(), smooth_.size()}; }
  std::span<const double> transient() const { return {transient_.data(), transient_.size()}; }
  std::span<const double> intens() const { return {intens_.data(), intens_.size()}; }

  // Accumulates d(loss)/d(log_alpha) and d(loss)/d(rho) for the loss whose
  // gradients w.r.t. the three channels are given. d_transient/d_intensity
  // may be empty (treated as zero, e.g. on the reconstruction path).
  void backward(std::span<const double> d_smooth,
                std::span<const double> d_transient,
                std::span<const double> d_intensity,
                std::span<double> d_log_alpha, std::span<double> d_rho) const;

 private:
  const DenseCase* case_ = nullptr;  // must outlive the backward call
  InterpParams params_;              // copied; small relative to the caches
  std::vector<double> queries_;
  std::vector<uint8_t> mask_;
  bool with_transient_ = false;
  int D_ = 0, Q_ = 0, U_ = 0;

  std::vector<double> w1_, w2_;           // D x Q x U kernel weights
  std::vector<double> s1_, n1_, l1_;      // D x Q: weight sum, value sum, ratio
  std::vector<double> s2_, n2_, l2_;      // kappa-bandwidth pass
  std::vector<double> total_intens_;      // Q: sum of s1_ over dims
  std::vector<double> smooth_, transient_, intens_;
};

}  // namespace ipnet
