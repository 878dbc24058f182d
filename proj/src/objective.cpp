#include "ipnet/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ipnet/rng.hpp"

namespace ipnet {

std::vector<uint8_t> HeldMask::input_mask(const DenseCase& c) const {
  const int n = static_cast<int>(c.observed.size());
  std::vector<uint8_t> out(n, 0);
  for (int i = 0; i < n; ++i) {
    out[i] = (c.observed[i] != 0 && held[i] == 0) ? 1 : 0;
  }
  return out;
}

HeldMask sample_masks(const DenseCase& c, double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("sample_masks: fraction must be in [0,1), got " +
                                std::to_string(fraction));
  }
  // Pool all observed (d,u) slots, then draw floor(fraction*count) of them
  // without replacement via a partial Fisher-Yates pass.
  std::vector<int> slots;
  slots.reserve(c.observed.size());
  for (int i = 0; i < static_cast<int>(c.observed.size()); ++i) {
    if (c.observed[i] != 0) slots.push_back(i);
  }
  const int n = static_cast<int>(slots.size());
  const int k = static_cast<int>(std::floor(fraction * n));

  HeldMask m;
  m.held.assign(c.observed.size(), 0);
  m.count = k;
  if (k == 0) return m;

  Rng rng(seed);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(n - i));
    std::swap(slots[i], slots[j]);
    m.held[slots[i]] = 1;
  }
  return m;
}

ReconPlan plan_reconstruction(const DenseCase& c, const HeldMask& mask) {
  ReconPlan plan;
  plan.input = mask.input_mask(c);
  for (int u = 0; u < c.U(); ++u) {
    for (int d = 0; d < c.D; ++d) {
      if (mask.held[static_cast<size_t>(d) * c.U() + u] != 0) {
        plan.query_u.push_back(u);
        break;
      }
    }
  }
  plan.queries.resize(plan.query_u.size());
  for (size_t q = 0; q < plan.query_u.size(); ++q) {
    plan.queries[q] = c.times[plan.query_u[q]];
  }
  return plan;
}

std::vector<ReconTerm> reconstruct_heldout(const DenseCase& c,
                                           const HeldMask& mask,
                                           const InterpParams& params) {
  std::vector<ReconTerm> terms;
  if (mask.count == 0) return terms;
  terms.reserve(mask.count);

  const ReconPlan plan = plan_reconstruction(c, mask);
  InterpEvaluator ev;
  ev.forward(c, plan.queries, params, plan.input, /*with_transient=*/false);

  const int K = static_cast<int>(plan.queries.size());
  for (int q = 0; q < K; ++q) {
    const int u = plan.query_u[q];
    for (int d = 0; d < c.D; ++d) {
      if (mask.held[static_cast<size_t>(d) * c.U() + u] == 0) continue;
      ReconTerm t;
      t.d = d;
      t.u = u;
      t.target = c.value_at(d, u);
      t.predicted = ev.smooth()[static_cast<size_t>(d) * K + q];
      terms.push_back(t);
    }
  }
  return terms;
}

void LossConfig::validate() const {
  if (delta < 0.0 || !std::isfinite(delta)) {
    throw std::invalid_argument("LossConfig: delta must be finite and >= 0");
  }
  if (lambda_interp < 0.0 || !std::isfinite(lambda_interp)) {
    throw std::invalid_argument("LossConfig: lambda_interp must be finite and >= 0");
  }
  if (lambda_pred < 0.0 || !std::isfinite(lambda_pred)) {
    throw std::invalid_argument("LossConfig: lambda_pred must be finite and >= 0");
  }
}

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

LossBreakdown composite_loss(double pred_loss,
                             std::span<const ReconTerm> recon_terms,
                             std::span<const double> interp_params,
                             std::span<const double> pred_params,
                             const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown b;
  b.supervised = pred_loss;

  double recon = 0.0;
  for (const ReconTerm& t : recon_terms) {
    const double e = t.predicted - t.target;
    recon += e * e;
  }
  b.reconstruction = cfg.delta * recon;
  b.reg_interp = cfg.lambda_interp * squared_norm(interp_params);
  b.reg_pred = cfg.lambda_pred * squared_norm(pred_params);
  b.total = b.supervised + b.reg_interp + b.reg_pred + b.reconstruction;

  if (!std::isfinite(b.supervised)) {
    throw std::runtime_error("composite_loss: supervised term is non-finite");
  }
  if (!std::isfinite(b.reconstruction)) {
    throw std::runtime_error("composite_loss: reconstruction term is non-finite");
  }
  if (!std::isfinite(b.reg_interp) || !std::isfinite(b.reg_pred)) {
    throw std::runtime_error("composite_loss: regularization term is non-finite");
  }
  return b;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_from_logit(double logit, double label) {
  // -[y log p + (1-y) log(1-p)] computed via the log-sum-exp form:
  // log(1+exp(-|z|)) + max(z,0) - y*z
  const double z = logit;
  return std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - label * z;
}

double bce_grad_logit(double logit, double label) {
  return sigmoid(logit) - label;
}

}  // namespace ipnet
