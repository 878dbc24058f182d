#include "ipnet/optim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ipnet {

size_t ParamStore::add(const std::string& name, size_t size, RegGroup reg) {
  if (has(name)) throw std::invalid_argument("duplicate parameter: " + name);
  Entry e;
  e.name = name;
  e.offset = value_.size();
  e.size = size;
  e.reg = reg;
  entries_.push_back(e);
  value_.resize(value_.size() + size, 0.0);
  grad_.resize(value_.size(), 0.0);
  m_.resize(value_.size(), 0.0);
  v_.resize(value_.size(), 0.0);
  return e.offset;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return e;
  throw std::invalid_argument("unknown parameter: " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return true;
  return false;
}

std::span<double> ParamStore::value(const std::string& name) {
  const Entry& e = entry(name);
  return {value_.data() + e.offset, e.size};
}

std::span<const double> ParamStore::value(const std::string& name) const {
  const Entry& e = entry(name);
  return {value_.data() + e.offset, e.size};
}

std::span<double> ParamStore::grad(const std::string& name) {
  const Entry& e = entry(name);
  return {grad_.data() + e.offset, e.size};
}

void ParamStore::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), 0.0);
}

double ParamStore::squared_norm(RegGroup group) const {
  double total = 0.0;
  for (const Entry& e : entries_) {
    if (e.reg != group) continue;
    for (size_t i = e.offset; i < e.offset + e.size; ++i)
      total += value_[i] * value_[i];
  }
  return total;
}

void ParamStore::add_l2_grad(RegGroup group, double lambda) {
  if (lambda == 0.0) return;
  for (const Entry& e : entries_) {
    if (e.reg != group) continue;
    for (size_t i = e.offset; i < e.offset + e.size; ++i)
      grad_[i] += 2.0 * lambda * value_[i];
  }
}

std::string ParamStore::coordinate_name(size_t flat_index) const {
  for (const Entry& e : entries_)
    if (flat_index >= e.offset && flat_index < e.offset + e.size)
      return e.name + "[" + std::to_string(flat_index - e.offset) + "]";
  return "param[" + std::to_string(flat_index) + "]";
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  store.step_ += 1;
  const double t = static_cast<double>(store.step_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t i = 0; i < store.value_.size(); ++i) {
    const double g = store.grad_[i];
    store.m_[i] = cfg.beta1 * store.m_[i] + (1.0 - cfg.beta1) * g;
    store.v_[i] = cfg.beta2 * store.v_[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = store.m_[i] / c1;
    const double vhat = store.v_[i] / c2;
    store.value_[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  store.zero_grad();
}

double compute_gradients(LossProgram& prog, ParamStore& store) {
  store.zero_grad();
  const double loss = prog.loss_and_grad();
  if (!std::isfinite(loss))
    throw std::runtime_error("compute_gradients: non-finite loss");
  const auto g = store.grads();
  for (size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw std::runtime_error("compute_gradients: non-finite gradient for " +
                               store.coordinate_name(i));
  return loss;
}

std::string FdReport::summary() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " max_rel_err=" << max_rel_err
     << " worst=" << worst_name << " analytic=" << worst_analytic
     << " numeric=" << worst_numeric;
  return os.str();
}

FdReport finite_diff_check(LossProgram& prog, ParamStore& store, double h,
                           double tol, double abs_tol) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: h must be > 0");
  compute_gradients(prog, store);
  std::vector<double> analytic(store.grads().begin(), store.grads().end());

  FdReport report;
  auto values = store.values();
  for (size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = prog.loss();
    values[i] = saved - h;
    const double down = prog.loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
    const double rel = err / (scale + abs_tol);
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.worst_name = store.coordinate_name(i);
      report.worst_analytic = analytic[i];
      report.worst_numeric = numeric;
    }
    if (err > tol * scale + abs_tol) report.pass = false;
  }
  return report;
}

}  // namespace ipnet
