#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ipnet {

// Which l2 penalty a parameter belongs to: lambda_interp covers the
// interpolation-network parameters, lambda_pred the prediction-network
// weights. Biases are not penalized.
enum class RegGroup { none, interp, pred };

// Flat collection of named parameter arrays with gradient slots and Adam
// moments. All arrays live in one contiguous buffer so gradient checking
// and the optimizer can treat the model as a single vector.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    size_t offset = 0;
    size_t size = 0;
    RegGroup reg = RegGroup::none;
  };

  size_t add(const std::string& name, size_t size, RegGroup reg);

  size_t size() const { return value_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  const Entry& entry(const std::string& name) const;
  bool has(const std::string& name) const;

  std::span<double> value(const std::string& name);
  std::span<const double> value(const std::string& name) const;
  std::span<double> grad(const std::string& name);

  std::span<double> values() { return {value_.data(), value_.size()}; }
  std::span<const double> values() const { return {value_.data(), value_.size()}; }
  std::span<double> grads() { return {grad_.data(), grad_.size()}; }
  std::span<const double> grads() const { return {grad_.data(), grad_.size()}; }
  std::span<double> moment1() { return {m_.data(), m_.size()}; }
  std::span<double> moment2() { return {v_.data(), v_.size()}; }
  std::span<const double> moment1() const { return {m_.data(), m_.size()}; }
  std::span<const double> moment2() const { return {v_.data(), v_.size()}; }

  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }

  void zero_grad();
  // Sum of squared values over entries in the given group.
  double squared_norm(RegGroup group) const;
  // Adds 2 * lambda * value to the gradient of every entry in the group.
  void add_l2_grad(RegGroup group, double lambda);

  // The name owning a flat coordinate, as "name[i]"; for diagnostics.
  std::string coordinate_name(size_t flat_index) const;

  friend void adam_step(ParamStore&, const struct AdamConfig&);

 private:
  std::vector<Entry> entries_;
  std::vector<double> value_, grad_, m_, v_;
  int64_t step_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam update with bias correction; increments the step counter
// and clears the gradients.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// A differentiable program: `loss` evaluates the objective at the store's
// current values; `loss_and_grad` also fills the gradient slots.
struct LossProgram {
  virtual ~LossProgram() = default;
  virtual double loss() = 0;
  virtual double loss_and_grad() = 0;
};

// Fills gradients via the program's analytic backward pass; throws,
// naming the parameter, if any gradient coordinate is non-finite.
double compute_gradients(LossProgram& prog, ParamStore& store);

struct FdReport {
  bool pass = true;
  double max_rel_err = 0.0;
  size_t worst_index = 0;
  std::string worst_name;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string summary() const;
};

// Compares the analytic gradient with central finite differences over every
// parameter coordinate. A coordinate passes when
//   |analytic - numeric| <= tol * max(|analytic|, |numeric|) + abs_tol.
FdReport finite_diff_check(LossProgram& prog, ParamStore& store, double h,
                           double tol, double abs_tol = 1e-8);

}  // namespace ipnet
