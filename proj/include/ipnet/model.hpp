#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ipnet/interp.hpp"
#include "ipnet/objective.hpp"
#include "ipnet/optim.hpp"
#include "ipnet/prednet.hpp"
#include "ipnet/series.hpp"

namespace ipnet {

enum class ModelKind {
  proposed,    // interpolation network + GRU
  gru_mean,    // GRU over mean-imputed grid sequence
  gru_forward, // GRU over forward-filled grid sequence
  gru_simple,  // GRU over [value, mask, time-since-last]
  gru_decay,   // GRU over mean-decayed values + mask + time-since-last
  mean_logreg, // logistic regression on per-dim observed means
  mean_linreg, // linear regression on per-dim observed means
};

const char* model_name(ModelKind k);
ModelKind model_from_name(const std::string& name);

// Which interpolation channels the proposed model feeds to the GRU.
struct ChannelSet {
  bool smooth = true;
  bool transient = true;
  bool intensity = true;

  int count() const {
    return (smooth ? 1 : 0) + (transient ? 1 : 0) + (intensity ? 1 : 0);
  }
  std::string tag() const;  // e.g. "smooth+transient+intensity"
};

ChannelSet channel_set_from_tag(const std::string& tag);

struct ModelConfig {
  ModelKind kind = ModelKind::proposed;
  Task task = Task::classification;
  int D = 0;
  int grid_size = 33;
  double window = 48.0;
  double kappa = 10.0;
  int hidden = 64;
  int reg_hidden = 50;
  ChannelSet channels;
  LossConfig loss;

  void validate() const;
};

// Scratch buffers for one worker; forward/backward never allocate on the
// steady path and never touch shared state.
struct Workspace {
  InterpEvaluator ev;
  InterpEvaluator recon_ev;
  GruCache gru;
  RegHeadCache reg_head;
  BaselineInput bl;
  std::vector<double> feat;
  std::vector<double> seq, d_seq, d_hidden;
  std::vector<double> d_smooth, d_transient, d_intensity, d_recon;
};

// Per-case data terms of the composite objective, before regularizers.
struct CaseTerms {
  double supervised = 0.0;
  double recon_sq = 0.0;  // unweighted sum of squared reconstruction errors
  int recon_count = 0;
};

// A model instance: configuration, parameter store, and the normalization
// statistics it was trained with. Cases passed to the *_normalized methods
// must already be in normalized space; `predict` normalizes a copy.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  void init_params(uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

  void set_normalization(Normalizer norm, std::vector<double> dim_means);
  const Normalizer& normalizer() const { return norm_; }
  std::span<const double> dim_means() const { return dim_means_; }

  // Probability (classification) or log-days (regression).
  double predict(const DenseCase& raw, Workspace& ws) const;
  double predict_normalized(const DenseCase& c, Workspace& ws) const;

  // Data terms at the current parameters; no gradient.
  CaseTerms case_terms(const DenseCase& c, const HeldMask* mask,
                       Workspace& ws) const;

  // Accumulates scale * d(supervised + delta * recon)/d(params) into gbuf,
  // a flat buffer aligned with the store layout. Returns the terms.
  CaseTerms case_loss_grad(const DenseCase& c, const HeldMask* mask,
                           double scale, std::span<double> gbuf,
                           Workspace& ws) const;

  // Masked reconstruction only applies to the interpolation model.
  bool uses_reconstruction() const { return cfg_.kind == ModelKind::proposed; }

  InterpParams interp_params() const;  // materialized from the store

  std::string to_json() const;         // config + params + optimizer state
  static Model from_json(const std::string& text);

 private:
  double forward(const DenseCase& c, Workspace& ws, bool for_grad) const;
  double head_out(std::span<const double> hidden, Workspace& ws) const;
  void head_backward(std::span<const double> hidden, double d_out,
                     std::span<double> gbuf, std::span<double> d_hidden,
                     Workspace& ws) const;
  GruSpans gru_spans() const;
  GruGradSpans gru_grad_spans(std::span<double> gbuf) const;
  int gru_input_size() const;
  void proposed_seq(const DenseCase& c, Workspace& ws) const;

  ModelConfig cfg_;
  ReferenceGrid grid_;
  ParamStore store_;
  Normalizer norm_;
  std::vector<double> dim_means_;
};

}  // namespace ipnet
