#include "ipnet/model.hpp"

#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "ipnet/rng.hpp"

namespace ipnet {

using nlohmann::json;

const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::proposed: return "proposed";
    case ModelKind::gru_mean: return "gru-m";
    case ModelKind::gru_forward: return "gru-f";
    case ModelKind::gru_simple: return "gru-s";
    case ModelKind::gru_decay: return "gru-d";
    case ModelKind::mean_logreg: return "mean-logreg";
    case ModelKind::mean_linreg: return "mean-linreg";
  }
  return "?";
}

ModelKind model_from_name(const std::string& name) {
  if (name == "proposed") return ModelKind::proposed;
  if (name == "gru-m") return ModelKind::gru_mean;
  if (name == "gru-f") return ModelKind::gru_forward;
  if (name == "gru-s") return ModelKind::gru_simple;
  if (name == "gru-d") return ModelKind::gru_decay;
  if (name == "mean-logreg") return ModelKind::mean_logreg;
  if (name == "mean-linreg") return ModelKind::mean_linreg;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected proposed|gru-m|gru-f|gru-s|gru-d|"
                              "mean-logreg|mean-linreg)");
}

std::string ChannelSet::tag() const {
  std::string s;
  auto append = [&s](const char* word) {
    if (!s.empty()) s += '+';
    s += word;
  };
  if (smooth) append("smooth");
  if (transient) append("transient");
  if (intensity) append("intensity");
  return s;
}

ChannelSet channel_set_from_tag(const std::string& tag) {
  ChannelSet cs{false, false, false};
  std::string token;
  std::istringstream in(tag);
  while (std::getline(in, token, '+')) {
    std::string t;
    for (char ch : token) t += static_cast<char>(std::tolower(ch));
    if (t == "smooth" || t == "si") cs.smooth = true;
    else if (t == "transient" || t == "t") cs.transient = true;
    else if (t == "intensity" || t == "i") cs.intensity = true;
    else if (!t.empty()) {
      throw std::invalid_argument("unknown channel '" + token +
                                  "' (expected smooth|transient|intensity)");
    }
  }
  if (cs.count() == 0) {
    throw std::invalid_argument("channel set must not be empty");
  }
  return cs;
}

void ModelConfig::validate() const {
  if (D <= 0) throw std::invalid_argument("ModelConfig: D must be positive");
  if (grid_size < 2) {
    throw std::invalid_argument("ModelConfig: grid_size must be >= 2");
  }
  if (!(window > 0.0)) {
    throw std::invalid_argument("ModelConfig: window must be positive");
  }
  if (!(kappa > 1.0)) {
    throw std::invalid_argument("ModelConfig: kappa must be > 1");
  }
  if (hidden <= 0 || reg_hidden <= 0) {
    throw std::invalid_argument("ModelConfig: hidden sizes must be positive");
  }
  if (kind == ModelKind::proposed && channels.count() == 0) {
    throw std::invalid_argument(
        "ModelConfig: proposed model needs a nonempty channel set");
  }
  if (loss.task != task) {
    throw std::invalid_argument("ModelConfig: loss task does not match task");
  }
  loss.validate();
}

namespace {

bool is_linear(ModelKind k) {
  return k == ModelKind::mean_logreg || k == ModelKind::mean_linreg;
}

bool is_gru(ModelKind k) { return !is_linear(k); }

std::span<double> slice(std::span<double> buf, const ParamStore::Entry& e) {
  return buf.subspan(e.offset, e.size);
}

void fill_uniform(std::span<double> v, double scale, Rng& rng) {
  for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * scale;
}

}  // namespace

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  grid_ = make_grid(cfg_.window, cfg_.grid_size);
  norm_ = Normalizer::identity(cfg_.D);
  dim_means_.assign(cfg_.D, 0.0);
}

int Model::gru_input_size() const {
  switch (cfg_.kind) {
    case ModelKind::proposed: return cfg_.channels.count() * cfg_.D;
    case ModelKind::gru_mean:
    case ModelKind::gru_forward: return cfg_.D;
    case ModelKind::gru_simple:
    case ModelKind::gru_decay: return 3 * cfg_.D;
    default: return 0;
  }
}

void Model::init_params(uint64_t seed) {
  store_ = ParamStore();
  Rng rng(derive_seed(seed, 0x9d, static_cast<uint64_t>(cfg_.kind)));
  const int D = cfg_.D;
  const int H = cfg_.hidden;
  const int R = cfg_.reg_hidden;

  if (cfg_.kind == ModelKind::proposed) {
    store_.add("interp.log_alpha", D, RegGroup::interp);
    store_.add("interp.rho", static_cast<size_t>(D) * D, RegGroup::interp);
  }
  if (cfg_.kind == ModelKind::gru_decay) {
    store_.add("decay.w", D, RegGroup::pred);
    store_.add("decay.b", D, RegGroup::none);
  }
  if (is_gru(cfg_.kind)) {
    const int F = gru_input_size();
    store_.add("gru.Wz", static_cast<size_t>(H) * F, RegGroup::pred);
    store_.add("gru.Uz", static_cast<size_t>(H) * H, RegGroup::pred);
    store_.add("gru.bz", H, RegGroup::none);
    store_.add("gru.Wr", static_cast<size_t>(H) * F, RegGroup::pred);
    store_.add("gru.Ur", static_cast<size_t>(H) * H, RegGroup::pred);
    store_.add("gru.br", H, RegGroup::none);
    store_.add("gru.Wh", static_cast<size_t>(H) * F, RegGroup::pred);
    store_.add("gru.Uh", static_cast<size_t>(H) * H, RegGroup::pred);
    store_.add("gru.bh", H, RegGroup::none);
    if (cfg_.task == Task::classification) {
      store_.add("head.w", H, RegGroup::pred);
      store_.add("head.b", 1, RegGroup::none);
    } else {
      store_.add("head.W1", static_cast<size_t>(R) * H, RegGroup::pred);
      store_.add("head.b1", R, RegGroup::none);
      store_.add("head.w2", R, RegGroup::pred);
      store_.add("head.b2", 1, RegGroup::none);
    }
  } else {
    store_.add("lin.w", D, RegGroup::pred);
    store_.add("lin.b", 1, RegGroup::none);
  }

  // Initial values. Linear models start at zero; GRU weights start uniform
  // at 1/sqrt(fan_in); decay starts with a small positive rate so the
  // max(0, a) hinge is not pinned at its kink.
  if (cfg_.kind == ModelKind::proposed) {
    InterpParams p = InterpParams::init(D, cfg_.kappa, grid_.spacing, rng);
    std::copy(p.log_alpha.begin(), p.log_alpha.end(),
              store_.value("interp.log_alpha").begin());
    std::copy(p.rho.begin(), p.rho.end(), store_.value("interp.rho").begin());
  }
  if (cfg_.kind == ModelKind::gru_decay) {
    for (double& w : store_.value("decay.w")) w = 0.1;
  }
  if (is_gru(cfg_.kind)) {
    const int F = gru_input_size();
    const double sw = 1.0 / std::sqrt(static_cast<double>(F));
    const double su = 1.0 / std::sqrt(static_cast<double>(H));
    fill_uniform(store_.value("gru.Wz"), sw, rng);
    fill_uniform(store_.value("gru.Uz"), su, rng);
    fill_uniform(store_.value("gru.Wr"), sw, rng);
    fill_uniform(store_.value("gru.Ur"), su, rng);
    fill_uniform(store_.value("gru.Wh"), sw, rng);
    fill_uniform(store_.value("gru.Uh"), su, rng);
    if (cfg_.task == Task::classification) {
      fill_uniform(store_.value("head.w"), su, rng);
    } else {
      fill_uniform(store_.value("head.W1"), su, rng);
      fill_uniform(store_.value("head.w2"),
                   1.0 / std::sqrt(static_cast<double>(cfg_.reg_hidden)), rng);
    }
  }
}

void Model::set_normalization(Normalizer norm, std::vector<double> dim_means) {
  if (static_cast<int>(norm.mean.size()) != cfg_.D ||
      static_cast<int>(dim_means.size()) != cfg_.D) {
    throw std::invalid_argument("set_normalization: dimension mismatch");
  }
  norm_ = std::move(norm);
  dim_means_ = std::move(dim_means);
}

InterpParams Model::interp_params() const {
  InterpParams p;
  p.kappa = cfg_.kappa;
  auto la = store_.value("interp.log_alpha");
  auto rho = store_.value("interp.rho");
  p.log_alpha.assign(la.begin(), la.end());
  p.rho.assign(rho.begin(), rho.end());
  return p;
}

GruSpans Model::gru_spans() const {
  GruSpans s;
  s.F = gru_input_size();
  s.H = cfg_.hidden;
  s.Wz = store_.value("gru.Wz");
  s.Uz = store_.value("gru.Uz");
  s.bz = store_.value("gru.bz");
  s.Wr = store_.value("gru.Wr");
  s.Ur = store_.value("gru.Ur");
  s.br = store_.value("gru.br");
  s.Wh = store_.value("gru.Wh");
  s.Uh = store_.value("gru.Uh");
  s.bh = store_.value("gru.bh");
  return s;
}

GruGradSpans Model::gru_grad_spans(std::span<double> gbuf) const {
  GruGradSpans g;
  g.Wz = slice(gbuf, store_.entry("gru.Wz"));
  g.Uz = slice(gbuf, store_.entry("gru.Uz"));
  g.bz = slice(gbuf, store_.entry("gru.bz"));
  g.Wr = slice(gbuf, store_.entry("gru.Wr"));
  g.Ur = slice(gbuf, store_.entry("gru.Ur"));
  g.br = slice(gbuf, store_.entry("gru.br"));
  g.Wh = slice(gbuf, store_.entry("gru.Wh"));
  g.Uh = slice(gbuf, store_.entry("gru.Uh"));
  g.bh = slice(gbuf, store_.entry("gru.bh"));
  return g;
}

void Model::proposed_seq(const DenseCase& c, Workspace& ws) const {
  const int T = cfg_.grid_size;
  const int D = cfg_.D;
  const int F = gru_input_size();
  (void)c;
  ws.seq.assign(static_cast<size_t>(T) * F, 0.0);
  int block = 0;
  auto put = [&](std::span<const double> chan) {
    for (int d = 0; d < D; ++d) {
      for (int t = 0; t < T; ++t) {
        ws.seq[static_cast<size_t>(t) * F + static_cast<size_t>(block) * D +
               d] = chan[static_cast<size_t>(d) * T + t];
      }
    }
    ++block;
  };
  if (cfg_.channels.smooth) put(ws.ev.smooth());
  if (cfg_.channels.transient) put(ws.ev.transient());
  if (cfg_.channels.intensity) put(ws.ev.intens());
}

double Model::head_out(std::span<const double> hidden, Workspace& ws) const {
  if (cfg_.task == Task::classification) {
    return cls_head_forward(hidden, store_.value("head.w"),
                            store_.value("head.b")[0]);
  }
  RegHeadSpans p;
  p.H = cfg_.hidden;
  p.R = cfg_.reg_hidden;
  p.W1 = store_.value("head.W1");
  p.b1 = store_.value("head.b1");
  p.w2 = store_.value("head.w2");
  p.b2 = store_.value("head.b2")[0];
  return reg_head_forward(hidden, p, ws.reg_head);
}

void Model::head_backward(std::span<const double> hidden, double d_out,
                          std::span<double> gbuf, std::span<double> d_hidden,
                          Workspace& ws) const {
  if (cfg_.task == Task::classification) {
    cls_head_backward(hidden, store_.value("head.w"), d_out,
                      slice(gbuf, store_.entry("head.w")),
                      slice(gbuf, store_.entry("head.b")), d_hidden);
    return;
  }
  RegHeadSpans p;
  p.H = cfg_.hidden;
  p.R = cfg_.reg_hidden;
  p.W1 = store_.value("head.W1");
  p.b1 = store_.value("head.b1");
  p.w2 = store_.value("head.w2");
  p.b2 = store_.value("head.b2")[0];
  reg_head_backward(hidden, p, ws.reg_head, d_out,
                    slice(gbuf, store_.entry("head.W1")),
                    slice(gbuf, store_.entry("head.b1")),
                    slice(gbuf, store_.entry("head.w2")),
                    slice(gbuf, store_.entry("head.b2")), d_hidden);
}

double Model::forward(const DenseCase& c, Workspace& ws, bool) const {
  if (c.D != cfg_.D) {
    throw std::invalid_argument("Model::forward: case '" + c.id + "' has " +
                                std::to_string(c.D) + " dims, model expects " +
                                std::to_string(cfg_.D));
  }
  if (is_linear(cfg_.kind)) {
    ws.feat = mean_features(c, dim_means_);
    return cls_head_forward(ws.feat, store_.value("lin.w"),
                            store_.value("lin.b")[0]);
  }
  if (cfg_.kind == ModelKind::proposed) {
    const InterpParams p = interp_params();
    ws.ev.forward(c, grid_.points, p, {}, cfg_.channels.transient);
    proposed_seq(c, ws);
  } else {
    BaselineVariant v = BaselineVariant::mean;
    if (cfg_.kind == ModelKind::gru_forward) v = BaselineVariant::forward;
    if (cfg_.kind == ModelKind::gru_simple) v = BaselineVariant::simple;
    if (cfg_.kind == ModelKind::gru_decay) v = BaselineVariant::decay;
    std::span<const double> dw, db;
    if (v == BaselineVariant::decay) {
      dw = store_.value("decay.w");
      db = store_.value("decay.b");
    }
    ws.bl = build_baseline_input(c, grid_, v, dim_means_, dw, db);
    ws.seq = ws.bl.seq;
  }
  gru_forward(ws.seq, cfg_.grid_size, gru_spans(), ws.gru);
  return head_out(ws.gru.final_hidden(), ws);
}

double Model::predict_normalized(const DenseCase& c, Workspace& ws) const {
  const double out = forward(c, ws, false);
  return cfg_.task == Task::classification ? sigmoid(out) : out;
}

double Model::predict(const DenseCase& raw, Workspace& ws) const {
  DenseCase c = raw;
  norm_.apply(c);
  return predict_normalized(c, ws);
}

CaseTerms Model::case_terms(const DenseCase& c, const HeldMask* mask,
                            Workspace& ws) const {
  CaseTerms terms;
  const double out = forward(c, ws, false);
  const double y = c.target.value;
  terms.supervised = cfg_.task == Task::classification
                         ? bce_from_logit(out, y)
                         : (out - y) * (out - y);
  if (uses_reconstruction() && mask != nullptr && mask->count > 0) {
    const auto recon = reconstruct_heldout(c, *mask, interp_params());
    for (const ReconTerm& t : recon) {
      const double e = t.predicted - t.target;
      terms.recon_sq += e * e;
      ++terms.recon_count;
    }
  }
  return terms;
}

CaseTerms Model::case_loss_grad(const DenseCase& c, const HeldMask* mask,
                                double scale, std::span<double> gbuf,
                                Workspace& ws) const {
  CaseTerms terms;
  const double out = forward(c, ws, true);
  const double y = c.target.value;
  double d_out;
  if (cfg_.task == Task::classification) {
    terms.supervised = bce_from_logit(out, y);
    d_out = bce_grad_logit(out, y);
  } else {
    const double e = out - y;
    terms.supervised = e * e;
    d_out = 2.0 * e;
  }
  d_out *= scale;

  if (is_linear(cfg_.kind)) {
    ws.d_hidden.assign(cfg_.D, 0.0);  // gradient w.r.t. features; unused
    cls_head_backward(ws.feat, store_.value("lin.w"), d_out,
                      slice(gbuf, store_.entry("lin.w")),
                      slice(gbuf, store_.entry("lin.b")), ws.d_hidden);
  } else {
    const int T = cfg_.grid_size;
    const int F = gru_input_size();
    const int H = cfg_.hidden;
    ws.d_hidden.assign(H, 0.0);
    head_backward(ws.gru.final_hidden(), d_out, gbuf, ws.d_hidden, ws);

    const bool need_dseq = cfg_.kind == ModelKind::proposed ||
                           cfg_.kind == ModelKind::gru_decay;
    std::span<double> d_seq;
    if (need_dseq) {
      ws.d_seq.assign(static_cast<size_t>(T) * F, 0.0);
      d_seq = {ws.d_seq.data(), ws.d_seq.size()};
    }
    GruGradSpans gg = gru_grad_spans(gbuf);
    gru_backward(ws.gru, gru_spans(), ws.d_hidden, gg, d_seq);

    if (cfg_.kind == ModelKind::proposed) {
      const int D = cfg_.D;
      const size_t dq = static_cast<size_t>(D) * T;
      auto scatter = [&](std::vector<double>& dst, int block, bool active) {
        dst.assign(active ? dq : 0, 0.0);
        if (!active) return;
        for (int d = 0; d < D; ++d) {
          for (int t = 0; t < T; ++t) {
            dst[static_cast<size_t>(d) * T + t] =
                ws.d_seq[static_cast<size_t>(t) * F +
                         static_cast<size_t>(block) * D + d];
          }
        }
      };
      int block = 0;
      scatter(ws.d_smooth, block, cfg_.channels.smooth);
      if (cfg_.channels.smooth) ++block;
      scatter(ws.d_transient, block, cfg_.channels.transient);
      if (cfg_.channels.transient) ++block;
      scatter(ws.d_intensity, block, cfg_.channels.intensity);
      ws.ev.backward(ws.d_smooth, ws.d_transient, ws.d_intensity,
                     slice(gbuf, store_.entry("interp.log_alpha")),
                     slice(gbuf, store_.entry("interp.rho")));
    } else if (cfg_.kind == ModelKind::gru_decay) {
      decay_backward(ws.bl, ws.d_seq, dim_means_, store_.value("decay.w"),
                     store_.value("decay.b"),
                     slice(gbuf, store_.entry("decay.w")),
                     slice(gbuf, store_.entry("decay.b")));
    }
  }

  if (uses_reconstruction() && mask != nullptr && mask->count > 0) {
    const ReconPlan plan = plan_reconstruction(c, *mask);
    const InterpParams p = interp_params();
    ws.recon_ev.forward(c, plan.queries, p, plan.input, false);
    const int K = static_cast<int>(plan.queries.size());
    const int D = cfg_.D;
    ws.d_recon.assign(static_cast<size_t>(D) * K, 0.0);
    for (int q = 0; q < K; ++q) {
      const int u = plan.query_u[q];
      for (int d = 0; d < D; ++d) {
        if (mask->held[static_cast<size_t>(d) * c.U() + u] == 0) continue;
        const double pred = ws.recon_ev.smooth()[static_cast<size_t>(d) * K + q];
        const double e = pred - c.value_at(d, u);
        terms.recon_sq += e * e;
        ++terms.recon_count;
        ws.d_recon[static_cast<size_t>(d) * K + q] =
            scale * cfg_.loss.delta * 2.0 * e;
      }
    }
    ws.recon_ev.backward(ws.d_recon, {}, {},
                         slice(gbuf, store_.entry("interp.log_alpha")),
                         slice(gbuf, store_.entry("interp.rho")));
  }
  return terms;
}

std::string Model::to_json() const {
  json j;
  j["format"] = "ipnet-model-v1";
  json cfg;
  cfg["model"] = model_name(cfg_.kind);
  cfg["task"] = task_name(cfg_.task);
  cfg["dims"] = cfg_.D;
  cfg["grid_size"] = cfg_.grid_size;
  cfg["window"] = cfg_.window;
  cfg["kappa"] = cfg_.kappa;
  cfg["hidden"] = cfg_.hidden;
  cfg["reg_hidden"] = cfg_.reg_hidden;
  cfg["channels"] = cfg_.channels.tag();
  cfg["delta"] = cfg_.loss.delta;
  cfg["lambda_interp"] = cfg_.loss.lambda_interp;
  cfg["lambda_pred"] = cfg_.loss.lambda_pred;
  j["config"] = cfg;

  json params = json::object();
  for (const auto& e : store_.entries()) {
    auto v = store_.value(e.name);
    params[e.name] = std::vector<double>(v.begin(), v.end());
  }
  j["params"] = params;

  auto m1 = store_.moment1();
  auto m2 = store_.moment2();
  j["adam"] = {{"step", store_.step()},
               {"m", std::vector<double>(m1.begin(), m1.end())},
               {"v", std::vector<double>(m2.begin(), m2.end())}};
  j["normalizer"] = {{"mean", norm_.mean}, {"stdev", norm_.stdev}};
  j["dim_means"] = dim_means_;
  return j.dump(1);
}

Model Model::from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("format", "") != "ipnet-model-v1") {
    throw std::runtime_error("model file has unknown format tag");
  }
  const json& cfg = j.at("config");
  ModelConfig mc;
  mc.kind = model_from_name(cfg.at("model").get<std::string>());
  mc.task = task_from_name(cfg.at("task").get<std::string>());
  mc.D = cfg.at("dims").get<int>();
  mc.grid_size = cfg.at("grid_size").get<int>();
  mc.window = cfg.at("window").get<double>();
  mc.kappa = cfg.at("kappa").get<double>();
  mc.hidden = cfg.at("hidden").get<int>();
  mc.reg_hidden = cfg.at("reg_hidden").get<int>();
  mc.channels = channel_set_from_tag(cfg.at("channels").get<std::string>());
  mc.loss.delta = cfg.at("delta").get<double>();
  mc.loss.lambda_interp = cfg.at("lambda_interp").get<double>();
  mc.loss.lambda_pred = cfg.at("lambda_pred").get<double>();
  mc.loss.task = mc.task;

  Model m(mc);
  m.init_params(0);
  for (const auto& e : m.store_.entries()) {
    const auto& arr = j.at("params").at(e.name);
    if (arr.size() != e.size) {
      throw std::runtime_error("model file entry '" + e.name +
                               "' has wrong size");
    }
    auto dst = m.store_.value(e.name);
    for (size_t i = 0; i < e.size; ++i) dst[i] = arr[i].get<double>();
  }
  const json& adam = j.at("adam");
  m.store_.set_step(adam.at("step").get<int64_t>());
  const auto mv = adam.at("m").get<std::vector<double>>();
  const auto vv = adam.at("v").get<std::vector<double>>();
  if (mv.size() != m.store_.size() || vv.size() != m.store_.size()) {
    throw std::runtime_error("model file optimizer state has wrong size");
  }
  std::copy(mv.begin(), mv.end(), m.store_.moment1().begin());
  std::copy(vv.begin(), vv.end(), m.store_.moment2().begin());

  Normalizer norm;
  norm.mean = j.at("normalizer").at("mean").get<std::vector<double>>();
  norm.stdev = j.at("normalizer").at("stdev").get<std::vector<double>>();
  m.set_normalization(std::move(norm),
                      j.at("dim_means").get<std::vector<double>>());
  return m;
}

}  // namespace ipnet
