// Command-line driver: synthetic data generation, training, evaluation,
// cross-validation, and channel ablation over one shared option set.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ipnet/dataio.hpp"
#include "ipnet/model.hpp"
#include "ipnet/train.hpp"

namespace {

using nlohmann::json;

struct CommonOpts {
  std::string task = "classification";
  std::string model = "proposed";
  std::string channels = "smooth+transient+intensity";
  int grid = 49;
  double window = 48.0;
  double kappa = 10.0;
  int hidden = 64;
  int reg_hidden = 50;
  double delta = 1.0;
  double lambda_interp = 1e-4;
  double lambda_pred = 1e-4;
  double lr = 1e-3;
  int batch = 32;
  int epochs = 30;
  int patience = 3;
  double holdout = 0.2;
  uint64_t seed = 1;
  int threads = 1;
  std::string config_path;
};

void add_model_options(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--task", o.task, "classification or regression")
      ->check(CLI::IsMember({"classification", "regression"}));
  sub->add_option("--model", o.model,
                  "proposed|gru-m|gru-f|gru-s|gru-d|mean-logreg|mean-linreg");
  sub->add_option("--channels", o.channels,
                  "interpolation channels for the proposed model, e.g. "
                  "smooth+intensity or SI+T+I");
  sub->add_option("--grid", o.grid, "reference grid size T");
  sub->add_option("--window", o.window, "observation window in hours");
  sub->add_option("--kappa", o.kappa, "transient bandwidth multiplier");
  sub->add_option("--hidden", o.hidden, "GRU hidden units");
  sub->add_option("--reg-hidden", o.reg_hidden, "regression head hidden units");
  sub->add_option("--delta", o.delta, "reconstruction loss weight");
  sub->add_option("--lambda-interp", o.lambda_interp,
                  "l2 weight on interpolation parameters");
  sub->add_option("--lambda-pred", o.lambda_pred,
                  "l2 weight on prediction weights");
  sub->add_option("--lr", o.lr, "Adam learning rate");
  sub->add_option("--batch", o.batch, "minibatch size");
  sub->add_option("--epochs", o.epochs, "maximum training epochs");
  sub->add_option("--patience", o.patience,
                  "validation non-improvements tolerated before stopping");
  sub->add_option("--holdout", o.holdout,
                  "fraction of observations masked for reconstruction");
  sub->add_option("--seed", o.seed, "master seed");
  sub->add_option("--threads", o.threads, "worker threads (1 = serial)");
  sub->add_option("--config", o.config_path,
                  "flat key=value file; command-line flags take precedence");
}

// Applies a flat key=value config file to the shared options. Keys mirror the
// long option names without the leading dashes; a key is skipped when the
// matching flag was given on the command line, so flags always win.
void apply_flat_config(CLI::App* sub, CommonOpts& o) {
  if (o.config_path.empty()) return;
  std::ifstream in(o.config_path);
  if (!in)
    throw std::invalid_argument("cannot open config file " + o.config_path);

  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
  };

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto at = [&] { return "config line " + std::to_string(lineno); };
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(at() + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(at() + ": empty key");
    const bool given = [&] {
      if (key == "config") return false;  // nested config files not supported
      try {
        return sub->count("--" + key) > 0;
      } catch (const CLI::Error&) {
        throw std::invalid_argument(at() + ": unknown key '" + key + "'");
      }
    }();
    if (given) continue;

    auto bad = [&](const char* what) {
      return std::invalid_argument(at() + ": key '" + key + "' expects " +
                                   what + ", got '" + value + "'");
    };
    auto as_int = [&] {
      size_t pos = 0;
      try {
        const int v = std::stoi(value, &pos);
        if (pos == value.size()) return v;
      } catch (...) {
      }
      throw bad("an integer");
    };
    auto as_double = [&] {
      size_t pos = 0;
      try {
        const double v = std::stod(value, &pos);
        if (pos == value.size()) return v;
      } catch (...) {
      }
      throw bad("a number");
    };

    if (key == "task") o.task = value;
    else if (key == "model") o.model = value;
    else if (key == "channels") o.channels = value;
    else if (key == "grid") o.grid = as_int();
    else if (key == "window") o.window = as_double();
    else if (key == "kappa") o.kappa = as_double();
    else if (key == "hidden") o.hidden = as_int();
    else if (key == "reg-hidden") o.reg_hidden = as_int();
    else if (key == "delta") o.delta = as_double();
    else if (key == "lambda-interp") o.lambda_interp = as_double();
    else if (key == "lambda-pred") o.lambda_pred = as_double();
    else if (key == "lr") o.lr = as_double();
    else if (key == "batch") o.batch = as_int();
    else if (key == "epochs") o.epochs = as_int();
    else if (key == "patience") o.patience = as_int();
    else if (key == "holdout") o.holdout = as_double();
    else if (key == "seed") {
      size_t pos = 0;
      try {
        const auto v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        o.seed = v;
      } catch (...) {
        throw bad("an unsigned integer");
      }
    } else if (key == "threads") o.threads = as_int();
    else throw std::invalid_argument(at() + ": unknown key '" + key + "'");
  }
}

ipnet::ModelConfig model_config(const CommonOpts& o, int D) {
  ipnet::ModelConfig mc;
  mc.kind = ipnet::model_from_name(o.model);
  mc.task = ipnet::task_from_name(o.task);
  mc.D = D;
  mc.grid_size = o.grid;
  mc.window = o.window;
  mc.kappa = o.kappa;
  mc.hidden = o.hidden;
  mc.reg_hidden = o.reg_hidden;
  mc.channels = ipnet::channel_set_from_tag(o.channels);
  mc.loss.delta = o.delta;
  mc.loss.lambda_interp = o.lambda_interp;
  mc.loss.lambda_pred = o.lambda_pred;
  mc.loss.task = mc.task;
  mc.validate();
  return mc;
}

ipnet::TrainConfig train_config(const CommonOpts& o) {
  ipnet::TrainConfig tc;
  tc.batch_size = o.batch;
  tc.max_epochs = o.epochs;
  tc.patience = o.patience;
  tc.lr = o.lr;
  tc.holdout_fraction = o.holdout;
  tc.seed = o.seed;
  tc.threads = o.threads;
  return tc;
}

json opts_json(const CommonOpts& o) {
  json j;
  j["task"] = o.task;
  j["model"] = o.model;
  j["channels"] = o.channels;
  j["grid"] = o.grid;
  j["window"] = o.window;
  j["kappa"] = o.kappa;
  j["hidden"] = o.hidden;
  j["reg_hidden"] = o.reg_hidden;
  j["delta"] = o.delta;
  j["lambda_interp"] = o.lambda_interp;
  j["lambda_pred"] = o.lambda_pred;
  j["lr"] = o.lr;
  j["batch"] = o.batch;
  j["epochs"] = o.epochs;
  j["patience"] = o.patience;
  j["holdout"] = o.holdout;
  j["seed"] = o.seed;
  j["threads"] = o.threads;
  return j;
}

// Every command leaves a manifest holding the fully resolved configuration
// so any output can be regenerated from its manifest alone.
void write_manifest(const std::string& path, const std::string& command,
                    const json& resolved) {
  json j;
  j["format"] = "ipnet-manifest-v1";
  j["command"] = command;
  j["resolved"] = resolved;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << j.dump(1) << '\n';
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<double> parse_rate_list(const std::string& csv) {
  std::vector<double> out;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

int cmd_synth(const std::string& obs, const std::string& labels,
              const CommonOpts& o, int cases, int dims,
              const std::string& rates_csv, const std::string& missing_csv,
              double balance, double trend, double transient, double intens,
              double noise) {
  ipnet::SynthConfig cfg;
  cfg.n_cases = cases;
  cfg.D = dims;
  cfg.window = o.window;
  cfg.task = ipnet::task_from_name(o.task);
  cfg.seed = o.seed;
  cfg.class_balance = balance;
  cfg.trend_signal = trend;
  cfg.transient_signal = transient;
  cfg.intensity_signal = intens;
  cfg.noise_sd = noise;
  if (!rates_csv.empty()) {
    cfg.rate_per_hour = parse_rate_list(rates_csv);
  } else if (!missing_csv.empty()) {
    for (double m : parse_rate_list(missing_csv)) {
      cfg.rate_per_hour.push_back(ipnet::SynthConfig::rate_for_missingness(m));
    }
  }
  cfg.fill_default_rates();
  cfg.validate();

  const auto data = ipnet::generate_synthetic(cfg);
  ipnet::write_dataset_csv(data, obs, labels);
  std::cout << ipnet::dataset_report(data).summary() << '\n';

  json resolved;
  resolved["cases"] = cfg.n_cases;
  resolved["dims"] = cfg.D;
  resolved["window"] = cfg.window;
  resolved["task"] = o.task;
  resolved["seed"] = cfg.seed;
  resolved["rates"] = cfg.rate_per_hour;
  resolved["balance"] = cfg.class_balance;
  resolved["trend"] = cfg.trend_signal;
  resolved["transient"] = cfg.transient_signal;
  resolved["intensity"] = cfg.intensity_signal;
  resolved["noise"] = cfg.noise_sd;
  resolved["obs"] = obs;
  resolved["labels"] = labels;
  write_manifest(obs + ".manifest.json", "synth-gen", resolved);
  return 0;
}

int cmd_train(const std::string& obs, const std::string& labels,
              const CommonOpts& o, const std::string& out,
              const std::string& log_path, const std::string& resume,
              double val_fraction) {
  ipnet::LoadReport report;
  const auto data = ipnet::load_dataset(
      obs, labels, ipnet::task_from_name(o.task), o.window, &report);
  std::cout << report.summary() << '\n';
  if (data.empty()) throw std::invalid_argument("dataset is empty");

  ipnet::DenseBatch raw;
  raw.reserve(data.size());
  for (const auto& s : data) raw.push_back(ipnet::densify(s, o.window));

  // Hold out a validation subset for early stopping; everything else trains.
  std::vector<int> all(data.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  ipnet::Rng rng(ipnet::derive_seed(o.seed, 0x59117ULL));
  rng.shuffle(all);
  const int n_val = static_cast<int>(val_fraction * all.size());
  std::vector<int> val(all.begin(), all.begin() + n_val);
  std::vector<int> train(all.begin() + n_val, all.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());

  ipnet::TrainConfig tc = train_config(o);
  tc.checkpoint_path = out;

  ipnet::TrainState st;
  ipnet::TrainState* stp = nullptr;
  ipnet::Model model = [&] {
    if (!resume.empty()) {
      auto ckpt = ipnet::load_checkpoint(resume);
      st = ckpt.state;
      stp = &st;
      return ckpt.model;
    }
    ipnet::Model m(model_config(o, raw.empty() ? 1 : raw[0].D));
    m.init_params(o.seed);
    const ipnet::Normalizer norm = ipnet::Normalizer::fit(raw, train);
    std::vector<double> dim_means(m.config().D, 0.0);
    // normalized-space training means for the baseline imputers
    {
      ipnet::DenseBatch tmp = raw;
      for (auto& c : tmp) norm.apply(c);
      std::vector<size_t> counts(m.config().D, 0);
      for (int ci : train) {
        const auto& c = tmp[ci];
        for (int d = 0; d < c.D; ++d)
          for (int u = 0; u < c.U(); ++u)
            if (c.observed_at(d, u)) {
              dim_means[d] += c.value_at(d, u);
              ++counts[d];
            }
      }
      for (int d = 0; d < m.config().D; ++d)
        if (counts[d] > 0) dim_means[d] /= static_cast<double>(counts[d]);
    }
    m.set_normalization(norm, dim_means);
    return m;
  }();

  ipnet::DenseBatch normalized = raw;
  for (auto& c : normalized) model.normalizer().apply(c);

  std::ofstream log;
  std::ostream* log_ptr = nullptr;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw std::runtime_error("cannot write training log " + log_path);
    log << "step,supervised,reconstruction,reg_I,reg_P,total\n";
    log_ptr = &log;
  }

  const auto res =
      ipnet::train_model(model, normalized, train, val, tc, stp, log_ptr);
  std::cout << "epochs=" << res.state.completed_epochs
            << " early_stopped=" << (res.early_stopped ? "yes" : "no")
            << " best_val=" << res.state.best_val << '\n';
  // train_model checkpoints once per epoch, so a resume that adds no epochs
  // would otherwise leave `out` unwritten; this also makes the final file
  // hold the best-validation parameters rather than the last epoch's.
  ipnet::save_checkpoint(out, model, res.state);
  std::cout << "checkpoint written to " << out << '\n';

  json resolved = opts_json(o);
  resolved["obs"] = obs;
  resolved["labels"] = labels;
  resolved["out"] = out;
  resolved["log"] = log_path;
  resolved["val_fraction"] = val_fraction;
  resolved["resume"] = resume;
  write_manifest(out + ".manifest.json", "train", resolved);
  return 0;
}

int cmd_eval(const std::string& obs, const std::string& labels,
             const std::string& model_path, const std::string& report_path) {
  const std::string text = slurp(model_path);
  const json j = json::parse(text);
  ipnet::Model model = j.contains("model")
                           ? ipnet::Model::from_json(j.at("model").dump())
                           : ipnet::Model::from_json(text);

  const auto data = ipnet::load_dataset(obs, labels, model.config().task,
                                        model.config().window);
  ipnet::DenseBatch normalized;
  normalized.reserve(data.size());
  for (const auto& s : data) {
    normalized.push_back(ipnet::densify(s, model.config().window));
    model.normalizer().apply(normalized.back());
  }
  std::vector<int> idx(normalized.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  const ipnet::EvalReport rep = ipnet::evaluate_model(model, normalized, idx);

  json out;
  out["n_cases"] = rep.n_cases;
  if (rep.task == ipnet::Task::classification) {
    if (rep.cls.auc) out["auc"] = *rep.cls.auc;
    if (rep.cls.auprc) out["auprc"] = *rep.cls.auprc;
    out["ce"] = rep.cls.ce;
  } else {
    out["medae_days"] = rep.reg.medae_days;
    out["ev"] = rep.reg.ev;  // explained variance, log space
  }
  std::cout << out.dump(1) << '\n';
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) throw std::runtime_error("cannot write report " + report_path);
    f << out.dump(1) << '\n';
    json resolved;
    resolved["obs"] = obs;
    resolved["labels"] = labels;
    resolved["model_file"] = model_path;
    resolved["report"] = report_path;
    write_manifest(report_path + ".manifest.json", "eval", resolved);
  }
  return 0;
}

int cmd_cv(const std::string& obs, const std::string& labels,
           const CommonOpts& o, int k, const std::string& report_path,
           const std::string& log_dir) {
  const auto data = ipnet::load_dataset(
      obs, labels, ipnet::task_from_name(o.task), o.window);
  if (data.empty()) throw std::invalid_argument("dataset is empty");
  const auto mc = model_config(o, data[0].num_dims());
  const auto cv = ipnet::run_cv(data, mc, train_config(o), k, log_dir);
  std::cout << cv.table();
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) throw std::runtime_error("cannot write report " + report_path);
    f << cv.to_json() << '\n';
    json resolved = opts_json(o);
    resolved["obs"] = obs;
    resolved["labels"] = labels;
    resolved["k"] = k;
    resolved["report"] = report_path;
    write_manifest(report_path + ".manifest.json", "cv", resolved);
  }
  return 0;
}

int cmd_ablate(const std::string& obs, const std::string& labels,
               const CommonOpts& o, int k, const std::string& subsets_csv,
               const std::string& report_path) {
  const auto data = ipnet::load_dataset(
      obs, labels, ipnet::task_from_name(o.task), o.window);
  if (data.empty()) throw std::invalid_argument("dataset is empty");

  std::vector<ipnet::ChannelSet> subsets;
  std::istringstream in(subsets_csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) subsets.push_back(ipnet::channel_set_from_tag(tok));
  }

  ipnet::ModelConfig mc = model_config(o, data[0].num_dims());
  mc.kind = ipnet::ModelKind::proposed;
  const auto results =
      ipnet::run_ablation(data, mc, train_config(o), k, subsets);
  std::cout << ipnet::ablation_table(results);
  if (!report_path.empty()) {
    json arr = json::array();
    for (const auto& r : results) arr.push_back(json::parse(r.to_json()));
    std::ofstream f(report_path);
    if (!f) throw std::runtime_error("cannot write report " + report_path);
    f << arr.dump(1) << '\n';
    json resolved = opts_json(o);
    resolved["obs"] = obs;
    resolved["labels"] = labels;
    resolved["k"] = k;
    resolved["subsets"] = subsets_csv;
    resolved["report"] = report_path;
    write_manifest(report_path + ".manifest.json", "ablate", resolved);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpolation-network time-series models: data generation, "
               "training, evaluation, cross-validation, channel ablation"};
  app.require_subcommand(1);

  CommonOpts o;

  // synth-gen
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic dataset");
  std::string s_obs = "synth.obs.csv", s_labels = "synth.labels.csv";
  int s_cases = 2000, s_dims = 6;
  std::string s_rates, s_missing;
  double s_balance = 0.5, s_trend = 1.0, s_transient = 0.0, s_intensity = 0.0,
         s_noise = 0.3;
  synth->add_option("--out-obs", s_obs, "observation CSV to write");
  synth->add_option("--out-labels", s_labels, "labels CSV to write");
  synth->add_option("--cases", s_cases, "number of cases");
  synth->add_option("--dims", s_dims, "number of dimensions");
  synth->add_option("--rates", s_rates, "per-dim obs/hour, comma separated");
  synth->add_option("--missing", s_missing,
                    "per-dim target missingness in (0,1); alternative to --rates");
  synth->add_option("--balance", s_balance, "P(class=1)");
  synth->add_option("--trend", s_trend, "class trend-shift signal");
  synth->add_option("--transient", s_transient, "class bump signal");
  synth->add_option("--intensity", s_intensity, "class sampling-rate signal");
  synth->add_option("--noise", s_noise, "observation noise sd");
  add_model_options(synth, o);

  // train
  auto* train = app.add_subcommand("train", "train one model");
  std::string t_obs, t_labels, t_out = "model.ckpt.json", t_log, t_resume;
  double t_val_fraction = 0.2;
  train->add_option("--obs", t_obs, "observation CSV")->required();
  train->add_option("--labels", t_labels, "labels CSV")->required();
  train->add_option("--out", t_out, "checkpoint path to write");
  train->add_option("--log", t_log, "training-log CSV path");
  train->add_option("--resume", t_resume, "checkpoint to resume from");
  train->add_option("--val-fraction", t_val_fraction,
                    "fraction held out for early stopping");
  add_model_options(train, o);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a saved model");
  std::string e_obs, e_labels, e_model, e_report;
  ev->add_option("--obs", e_obs, "observation CSV")->required();
  ev->add_option("--labels", e_labels, "labels CSV")->required();
  ev->add_option("--model-file", e_model, "model or checkpoint JSON")
      ->required();
  ev->add_option("--report", e_report, "report JSON path");

  // cv
  auto* cv = app.add_subcommand("cv", "k-fold cross validation");
  std::string c_obs, c_labels, c_report, c_logdir;
  int c_k = 5;
  cv->add_option("--obs", c_obs, "observation CSV")->required();
  cv->add_option("--labels", c_labels, "labels CSV")->required();
  cv->add_option("--k", c_k, "number of folds");
  cv->add_option("--report", c_report, "report JSON path");
  cv->add_option("--log-dir", c_logdir, "directory for per-fold training logs");
  add_model_options(cv, o);

  // ablate
  auto* ab = app.add_subcommand("ablate", "compare channel subsets");
  std::string a_obs, a_labels, a_report;
  std::string a_subsets = "SI,I,SI+I,SI+T+I";
  int a_k = 5;
  ab->add_option("--obs", a_obs, "observation CSV")->required();
  ab->add_option("--labels", a_labels, "labels CSV")->required();
  ab->add_option("--k", a_k, "number of folds");
  ab->add_option("--subsets", a_subsets,
                 "comma-separated channel subsets, e.g. SI,I,SI+T+I");
  ab->add_option("--report", a_report, "report JSON path");
  add_model_options(ab, o);

  CLI11_PARSE(app, argc, argv);

  try {
    for (CLI::App* sub : {synth, train, cv, ab})
      if (sub->parsed()) apply_flat_config(sub, o);
    if (synth->parsed()) {
      return cmd_synth(s_obs, s_labels, o, s_cases, s_dims, s_rates, s_missing,
                       s_balance, s_trend, s_transient, s_intensity, s_noise);
    }
    if (train->parsed()) {
      return cmd_train(t_obs, t_labels, o, t_out, t_log, t_resume,
                       t_val_fraction);
    }
    if (ev->parsed()) return cmd_eval(e_obs, e_labels, e_model, e_report);
    if (cv->parsed()) return cmd_cv(c_obs, c_labels, o, c_k, c_report, c_logdir);
    if (ab->parsed()) {
      return cmd_ablate(a_obs, a_labels, o, a_k, a_subsets, a_report);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
