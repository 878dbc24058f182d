#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ipnet/series.hpp"

namespace ipnet {

// Weight views for one GRU layer. The network does not own parameters;
// spans point into a ParamStore. Matrices are row-major: W* are H x F,
// U* are H x H, biases are H.
struct GruSpans {
  int F = 0;
  int H = 0;
  std::span<const double> Wz, Uz, bz;  // update gate
  std::span<const double> Wr, Ur, br;  // reset gate
  std::span<const double> Wh, Uh, bh;  // candidate
};

struct GruGradSpans {
  std::span<double> Wz, Uz, bz;
  std::span<double> Wr, Ur, br;
  std::span<double> Wh, Uh, bh;
};

// Per-step activations cached by the forward pass for backpropagation
// through time.
struct GruCache {
  int T = 0, F = 0, H = 0;
  std::vector<double> x;  // T x F input copy
  std::vector<double> z, r, c, h;  // T x H each

  std::span<const double> final_hidden() const {
    return {h.data() + static_cast<size_t>(T - 1) * H, static_cast<size_t>(H)};
  }
};

// z_t = sigmoid(Wz x_t + Uz h_{t-1} + bz)
// r_t = sigmoid(Wr x_t + Ur h_{t-1} + br)
// c_t = tanh(Wh x_t + Uh (r_t * h_{t-1}) + bh)
// h_t = (1 - z_t) * h_{t-1} + z_t * c_t,  h_0 = 0
// Throws if the input contains a non-finite entry, naming the step.
void gru_forward(std::span<const double> seq, int T, const GruSpans& w,
                 GruCache& cache);

// Backpropagates a gradient on the final hidden state through the
// recurrence, accumulating parameter gradients. d_seq, when nonempty
// (T x F), receives d(loss)/d(input) for chaining into upstream modules.
void gru_backward(const GruCache& cache, const GruSpans& w,
                  std::span<const double> d_final, GruGradSpans& g,
                  std::span<double> d_seq);

// Classification head: one linear score, squashed by the caller.
double cls_head_forward(std::span<const double> hidden,
                        std::span<const double> w, double b);
void cls_head_backward(std::span<const double> hidden,
                       std::span<const double> w, double d_score,
                       std::span<double> dw, std::span<double> db,
                       std::span<double> d_hidden);

// Regression head: hidden -> R tanh units -> scalar. W1 is R x H.
struct RegHeadSpans {
  int H = 0;
  int R = 0;
  std::span<const double> W1, b1;  // R x H, R
  std::span<const double> w2;      // R
  double b2 = 0.0;
};

struct RegHeadCache {
  std::vector<double> a;  // R, tanh activations
};

double reg_head_forward(std::span<const double> hidden, const RegHeadSpans& p,
                        RegHeadCache& cache);
void reg_head_backward(std::span<const double> hidden, const RegHeadSpans& p,
                       const RegHeadCache& cache, double d_out,
                       std::span<double> dW1, std::span<double> db1,
                       std::span<double> dw2, std::span<double> db2,
                       std::span<double> d_hidden);

// Imputed regular sequences consumed by the GRU baselines.
enum class BaselineVariant { mean, forward, simple, decay };

const char* baseline_name(BaselineVariant v);

// Regular T x F sequence for one case plus the per-cell quantities the
// decay variant needs for its parameter gradient. Feature layout per step:
// mean/forward: [values 0..D-1]; simple/decay: [values | observed mask |
// hours since last observation].
struct BaselineInput {
  BaselineVariant variant = BaselineVariant::mean;
  int T = 0, D = 0, F = 0;
  std::vector<double> seq;         // T x F
  std::vector<double> last_value;  // T x D (decay only)
  std::vector<double> dt;          // T x D (simple and decay)
  std::vector<uint8_t> has_prior;  // T x D (decay only)
};

// Bins observations to the nearest grid point (latest observation wins
// within a bin) and fills missing cells per variant. dim_means are the
// training-fold per-dimension means. decay_w/decay_b (length D) are only
// read by the decay variant: value = g * last + (1-g) * mean with
// g = exp(-max(0, w * dt + b)), and g = 0 before the first observation.
BaselineInput build_baseline_input(const DenseCase& c,
                                   const ReferenceGrid& grid,
                                   BaselineVariant variant,
                                   std::span<const double> dim_means,
                                   std::span<const double> decay_w = {},
                                   std::span<const double> decay_b = {});

// Routes d(loss)/d(sequence value cells) into the decay parameters.
void decay_backward(const BaselineInput& in, std::span<const double> d_seq,
                    std::span<const double> dim_means,
                    std::span<const double> decay_w,
                    std::span<const double> decay_b, std::span<double> d_w,
                    std::span<double> d_b);

// Per-dimension mean of each case's observed values (training mean where a
// dimension is empty); the input row for the linear baselines.
std::vector<double> mean_features(const DenseCase& c,
                                  std::span<const double> dim_means);

}  // namespace ipnet
