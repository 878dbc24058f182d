#include "ipnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ipnet/objective.hpp"
#include "ipnet/parallel.hpp"
#include "ipnet/rng.hpp"

namespace ipnet {

using nlohmann::json;

namespace {

// Seed tags separating the independent random streams of a run.
constexpr uint64_t kTagShuffle = 0xe9;
constexpr uint64_t kTagStepMask = 0x3a5c;
constexpr uint64_t kTagValMask = 0x7a11;

double val_composite(const Model& model, const DenseBatch& data,
                     std::span<const int> val_idx, const TrainConfig& cfg,
                     std::vector<Workspace>& ws) {
  if (val_idx.empty()) return 0.0;
  const auto& loss_cfg = model.config().loss;
  std::vector<double> sup(val_idx.size()), rec(val_idx.size());
  parallel_for(static_cast<int>(val_idx.size()), cfg.threads,
               [&](int i, int w) {
                 const DenseCase& c = data[val_idx[i]];
                 HeldMask mask;
                 const HeldMask* mp = nullptr;
                 if (model.uses_reconstruction()) {
                   // fixed per case so epochs are comparable
                   mask = sample_masks(
                       c, cfg.holdout_fraction,
                       derive_seed(cfg.seed, kTagValMask, val_idx[i]));
                   mp = &mask;
                 }
                 const CaseTerms t = model.case_terms(c, mp, ws[w]);
                 sup[i] = t.supervised;
                 rec[i] = t.recon_sq;
               });
  double total_sup = 0.0, total_rec = 0.0;
  for (size_t i = 0; i < val_idx.size(); ++i) {
    total_sup += sup[i];
    total_rec += rec[i];
  }
  const double n = static_cast<double>(val_idx.size());
  return total_sup / n + loss_cfg.delta * total_rec / n +
         loss_cfg.lambda_interp * model.store().squared_norm(RegGroup::interp) +
         loss_cfg.lambda_pred * model.store().squared_norm(RegGroup::pred);
}

}  // namespace

TrainResult train_model(Model& model, const DenseBatch& data,
                        std::span<const int> train_idx,
                        std::span<const int> val_idx, const TrainConfig& cfg,
                        TrainState* resume_state, std::ostream* step_log) {
  if (train_idx.empty()) {
    throw std::invalid_argument("train_model: empty training set");
  }
  if (cfg.batch_size <= 0 || cfg.max_epochs <= 0 || cfg.patience < 0) {
    throw std::invalid_argument("train_model: bad batch/epoch/patience config");
  }

  ParamStore& store = model.store();
  const auto& loss_cfg = model.config().loss;
  AdamConfig adam;
  adam.lr = cfg.lr;

  TrainResult res;
  TrainState& st = res.state;
  if (resume_state != nullptr) st = *resume_state;
  if (st.best_params.empty()) {
    auto v = store.values();
    st.best_params.assign(v.begin(), v.end());
  }

  const int workers = std::max(1, cfg.threads);
  std::vector<Workspace> ws(workers);
  std::vector<std::vector<double>> grad_slots;
  std::vector<int> order(train_idx.begin(), train_idx.end());
  bool logged_first = resume_state != nullptr && st.global_step > 0;

  auto restore_best = [&] {
    std::copy(st.best_params.begin(), st.best_params.end(),
              store.values().begin());
  };

  for (int epoch = st.completed_epochs; epoch < cfg.max_epochs && !st.stopped;
       ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, kTagShuffle, epoch));
    std::copy(train_idx.begin(), train_idx.end(), order.begin());
    shuffle_rng.shuffle(order);

    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const int B = static_cast<int>(
          std::min(order.size() - start, static_cast<size_t>(cfg.batch_size)));
      grad_slots.resize(B);
      std::vector<CaseTerms> terms(B);

      parallel_for(B, cfg.threads, [&](int i, int w) {
        grad_slots[i].assign(store.size(), 0.0);
        const int ci = order[start + i];
        const DenseCase& c = data[ci];
        HeldMask mask;
        const HeldMask* mp = nullptr;
        if (model.uses_reconstruction()) {
          mask = sample_masks(c, cfg.holdout_fraction,
                              derive_seed(cfg.seed, kTagStepMask,
                                          static_cast<uint64_t>(st.global_step),
                                          static_cast<uint64_t>(ci)));
          mp = &mask;
        }
        terms[i] = model.case_loss_grad(c, mp, 1.0 / B, grad_slots[i], ws[w]);
      });

      // Reduce in case order so thread count never changes the result.
      auto g = store.grads();
      for (int i = 0; i < B; ++i) {
        for (size_t j = 0; j < g.size(); ++j) g[j] += grad_slots[i][j];
      }
      store.add_l2_grad(RegGroup::interp, loss_cfg.lambda_interp);
      store.add_l2_grad(RegGroup::pred, loss_cfg.lambda_pred);

      double sup = 0.0, rec = 0.0;
      for (const CaseTerms& t : terms) {
        sup += t.supervised;
        rec += t.recon_sq;
      }
      sup /= B;
      rec = loss_cfg.delta * rec / B;
      const double reg_i =
          loss_cfg.lambda_interp * store.squared_norm(RegGroup::interp);
      const double reg_p =
          loss_cfg.lambda_pred * store.squared_norm(RegGroup::pred);
      const double total = sup + rec + reg_i + reg_p;

      if (!std::isfinite(total)) {
        restore_best();
        throw std::runtime_error(
            "training diverged (non-finite loss) at step " +
            std::to_string(st.global_step) +
            "; model restored to best validated parameters");
      }
      if (step_log != nullptr) {
        char row[160];
        std::snprintf(row, sizeof row, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                      static_cast<long long>(st.global_step), sup, rec, reg_i,
                      reg_p, total);
        (*step_log) << row;
      }
      if (!logged_first) {
        res.first_step_total = total;
        logged_first = true;
      }
      res.last_step_total = total;

      adam_step(store, adam);
      ++st.global_step;
    }

    // Early stopping on the validation composite loss.
    if (!val_idx.empty()) {
      const double val = val_composite(model, data, val_idx, cfg, ws);
      if (!std::isfinite(val)) {
        restore_best();
        throw std::runtime_error(
            "training diverged (non-finite validation loss) after epoch " +
            std::to_string(epoch) +
            "; model restored to best validated parameters");
      }
      if (val < st.best_val) {
        st.best_val = val;
        st.patience_used = 0;
        auto v = store.values();
        st.best_params.assign(v.begin(), v.end());
      } else {
        ++st.patience_used;
        if (st.patience_used > cfg.patience) {
          st.stopped = true;
          res.early_stopped = true;
        }
      }
    } else {
      auto v = store.values();
      st.best_params.assign(v.begin(), v.end());
    }
    st.completed_epochs = epoch + 1;

    if (!cfg.checkpoint_path.empty()) {
      save_checkpoint(cfg.checkpoint_path, model, st);
    }
  }

  restore_best();
  return res;
}

namespace {

json state_to_json(const TrainState& st) {
  json j;
  j["completed_epochs"] = st.completed_epochs;
  j["global_step"] = st.global_step;
  j["best_val"] = st.best_val;
  j["patience_used"] = st.patience_used;
  j["best_params"] = st.best_params;
  j["stopped"] = st.stopped;
  return j;
}

TrainState state_from_json(const json& j) {
  TrainState st;
  st.completed_epochs = j.at("completed_epochs").get<int>();
  st.global_step = j.at("global_step").get<int64_t>();
  st.best_val = j.at("best_val").is_null()
                    ? std::numeric_limits<double>::infinity()
                    : j.at("best_val").get<double>();
  st.patience_used = j.at("patience_used").get<int>();
  st.best_params = j.at("best_params").get<std::vector<double>>();
  st.stopped = j.at("stopped").get<bool>();
  return st;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m,
                     const TrainState& st) {
  json j;
  j["format"] = "ipnet-checkpoint-v1";
  j["model"] = json::parse(m.to_json());
  json sj = state_to_json(st);
  // JSON has no infinity literal; encode an untouched best as null.
  if (!std::isfinite(st.best_val)) sj["best_val"] = nullptr;
  j["trainer"] = sj;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  json j = json::parse(buf.str());
  if (j.value("format", "") != "ipnet-checkpoint-v1") {
    throw std::runtime_error(path + ": unknown checkpoint format");
  }
  return Checkpoint{Model::from_json(j.at("model").dump()),
                    state_from_json(j.at("trainer"))};
}

EvalReport evaluate_model(const Model& m, const DenseBatch& normalized,
                          std::span<const int> idx, int fold) {
  EvalReport rep;
  rep.task = m.config().task;
  rep.fold = fold;
  rep.n_cases = static_cast<int>(idx.size());
  Workspace ws;
  std::vector<double> scores(idx.size()), targets(idx.size());
  std::vector<int> labels(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) {
    const DenseCase& c = normalized[idx[i]];
    scores[i] = m.predict_normalized(c, ws);
    targets[i] = c.target.value;
    labels[i] = c.target.value == 1.0 ? 1 : 0;
  }
  if (rep.task == Task::classification) {
    rep.cls = evaluate_classification(scores, labels);
  } else {
    rep.reg = evaluate_regression(scores, targets);
  }
  return rep;
}

namespace {

std::vector<std::pair<std::string, double>> report_values(
    const EvalReport& r) {
  std::vector<std::pair<std::string, double>> v;
  if (r.task == Task::classification) {
    if (r.cls.auc) v.emplace_back("auc", *r.cls.auc);
    if (r.cls.auprc) v.emplace_back("auprc", *r.cls.auprc);
    v.emplace_back("ce", r.cls.ce);
  } else {
    v.emplace_back("medae_days", r.reg.medae_days);
    v.emplace_back("ev", r.reg.ev);
  }
  return v;
}

}  // namespace

std::string CvResult::table() const {
  std::ostringstream out;
  out << "model=" << model;
  if (!channels.empty()) out << " channels=" << channels;
  out << "\n";
  std::vector<std::string> keys;
  for (const auto& [k, v] : summary) keys.push_back(k);
  out << "fold";
  for (const auto& k : keys) out << '\t' << k;
  out << '\n';
  for (const auto& r : folds) {
    out << r.fold;
    for (const auto& k : keys) {
      bool found = false;
      for (const auto& [name, val] : report_values(r)) {
        if (name == k) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "\t%.4f", val);
          out << buf;
          found = true;
        }
      }
      if (!found) out << "\t-";
    }
    out << '\n';
  }
  out << "mean";
  for (const auto& k : keys) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "\t%.4f±%.4f", summary.at(k).mean,
                  summary.at(k).stdev);
    out << buf;
  }
  out << '\n';
  return out.str();
}

std::string CvResult::to_json() const {
  json j;
  j["task"] = task_name(task);
  j["model"] = model;
  if (!channels.empty()) j["channels"] = channels;
  json folds_j = json::array();
  for (const auto& r : folds) {
    json f;
    f["fold"] = r.fold;
    f["n_cases"] = r.n_cases;
    for (const auto& [name, val] : report_values(r)) f[name] = val;
    folds_j.push_back(f);
  }
  j["folds"] = folds_j;
  json s = json::object();
  for (const auto& [k, v] : summary) {
    s[k] = {{"mean", v.mean}, {"std", v.stdev}};
  }
  j["summary"] = s;
  return j.dump(1);
}

CvResult run_cv(const std::vector<SparseSeries>& data,
                const ModelConfig& mcfg, const TrainConfig& tcfg, int k,
                const std::string& log_dir) {
  mcfg.validate();
  const auto folds = kfold_split(data, k, tcfg.seed);

  DenseBatch raw;
  raw.reserve(data.size());
  for (const auto& s : data) raw.push_back(densify(s, mcfg.window));

  CvResult cv;
  cv.task = mcfg.task;
  cv.model = model_name(mcfg.kind);
  if (mcfg.kind == ModelKind::proposed) cv.channels = mcfg.channels.tag();

  for (int f = 0; f < k; ++f) {
    const FoldSplit& fold = folds[f];

    // Per-fold normalization, fit strictly on the training subset.
    const Normalizer norm = Normalizer::fit(raw, fold.train);
    DenseBatch normalized = raw;
    for (DenseCase& c : normalized) norm.apply(c);
    std::vector<double> dim_means(mcfg.D, 0.0);
    {
      std::vector<size_t> counts(mcfg.D, 0);
      for (int ci : fold.train) {
        const DenseCase& c = normalized[ci];
        for (int d = 0; d < c.D; ++d) {
          for (int u = 0; u < c.U(); ++u) {
            if (c.observed_at(d, u)) {
              dim_means[d] += c.value_at(d, u);
              ++counts[d];
            }
          }
        }
      }
      for (int d = 0; d < mcfg.D; ++d) {
        if (counts[d] > 0) dim_means[d] /= static_cast<double>(counts[d]);
      }
    }

    Model model(mcfg);
    model.init_params(derive_seed(tcfg.seed, 0x1417, f));
    model.set_normalization(norm, dim_means);

    TrainConfig fold_cfg = tcfg;
    if (!tcfg.checkpoint_path.empty()) {
      fold_cfg.checkpoint_path =
          tcfg.checkpoint_path + ".fold" + std::to_string(f);
    }
    std::ofstream log;
    std::ostream* log_ptr = nullptr;
    if (!log_dir.empty()) {
      log.open(log_dir + "/train-fold" + std::to_string(f) + ".csv");
      log << "step,supervised,reconstruction,reg_I,reg_P,total\n";
      log_ptr = &log;
    }
    try {
      train_model(model, normalized, fold.train, fold.val, fold_cfg, nullptr,
                  log_ptr);
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(f) + ": " + e.what());
    }
    cv.folds.push_back(evaluate_model(model, normalized, fold.test, f));
  }

  std::map<std::string, std::vector<double>> columns;
  for (const auto& r : cv.folds) {
    for (const auto& [name, val] : report_values(r)) columns[name].push_back(val);
  }
  for (const auto& [name, vals] : columns) cv.summary[name] = summarize(vals);
  return cv;
}

std::vector<CvResult> run_ablation(const std::vector<SparseSeries>& data,
                                   const ModelConfig& mcfg,
                                   const TrainConfig& tcfg, int k,
                                   const std::vector<ChannelSet>& subsets) {
  if (mcfg.kind != ModelKind::proposed) {
    throw std::invalid_argument("ablation requires the proposed model");
  }
  if (subsets.empty()) {
    throw std::invalid_argument("ablation requires at least one channel subset");
  }
  std::vector<CvResult> out;
  for (const ChannelSet& cs : subsets) {
    ModelConfig cfg = mcfg;
    cfg.channels = cs;
    out.push_back(run_cv(data, cfg, tcfg, k));
  }
  return out;
}

std::string ablation_table(const std::vector<CvResult>& results) {
  std::ostringstream out;
  std::vector<std::string> keys;
  if (!results.empty()) {
    for (const auto& [k, v] : results[0].summary) keys.push_back(k);
  }
  out << "channels";
  for (const auto& k : keys) out << '\t' << k;
  out << '\n';
  for (const auto& r : results) {
    out << r.channels;
    for (const auto& k : keys) {
      char buf[48];
      auto it = r.summary.find(k);
      if (it == r.summary.end()) {
        out << "\t-";
      } else {
        std::snprintf(buf, sizeof buf, "\t%.4f±%.4f", it->second.mean,
                      it->second.stdev);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace ipnet
