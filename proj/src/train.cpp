#include "diffks/train.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace diffks {

void TrainConfig::validate() const {
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw InputError("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw InputError("Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw InputError("eps must be positive");
  parse_activation(activation);
  grid_level_spec(grid_level);
}

TrainConfig load_train_config(const std::string &path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::BadFile &) {
    throw InputError("cannot open config '" + path + "'");
  } catch (const YAML::Exception &e) {
    throw InputError(path + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) + ": " +
                     e.msg);
  }
  TrainConfig c;
  if (root.IsNull()) return c;
  auto where = [&](const YAML::Node &n) {
    return path + ":" + std::to_string(n.Mark().line + 1) + ":" + std::to_string(n.Mark().column + 1);
  };
  if (!root.IsMap()) throw InputError(where(root) + ": config must be a mapping");
  static const std::set<std::string> keys = {"epochs", "learning_rate", "beta1",      "beta2",     "eps",
                                             "seed",   "functional",    "layers",     "activation", "grid_level"};
  for (const auto &kv : root) {
    const auto k = kv.first.Scalar();
    if (!keys.count(k)) throw InputError(where(kv.first) + ": unknown config key '" + k + "'");
    const auto &v = kv.second;
    try {
      if (k == "epochs") c.epochs = v.as<int>();
      else if (k == "learning_rate") c.learning_rate = v.as<double>();
      else if (k == "beta1") c.beta1 = v.as<double>();
      else if (k == "beta2") c.beta2 = v.as<double>();
      else if (k == "eps") c.eps = v.as<double>();
      else if (k == "seed") c.seed = v.as<std::uint64_t>();
      else if (k == "functional") c.functional = v.as<std::string>();
      else if (k == "layers") c.layers = v.as<std::vector<int>>();
      else if (k == "activation") c.activation = v.as<std::string>();
      else if (k == "grid_level") c.grid_level = v.as<int>();
    } catch (const YAML::Exception &) {
      throw InputError(where(v) + ": bad value for '" + k + "'");
    }
  }
  try {
    c.validate();
  } catch (const InputError &e) {
    throw InputError(path + ": " + e.what());
  }
  return c;
}

nlohmann::json config_json(const TrainConfig &c) {
  return {{"epochs", c.epochs},         {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2},           {"eps", c.eps},                     {"seed", c.seed},
          {"functional", c.functional}, {"layers", c.layers},               {"activation", c.activation},
          {"grid_level", c.grid_level}};
}

namespace {

TrainConfig config_from_json(const nlohmann::json &j) {
  TrainConfig c;
  c.epochs = j.at("epochs");
  c.learning_rate = j.at("learning_rate");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.eps = j.at("eps");
  c.seed = j.at("seed");
  c.functional = j.at("functional");
  c.layers = j.at("layers").get<std::vector<int>>();
  c.activation = j.at("activation");
  c.grid_level = j.at("grid_level");
  return c;
}

std::vector<double> to_std(const Vec &v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec to_vec(const std::vector<double> &v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

}  // namespace

HybridXC initial_model(const TrainConfig &c) {
  c.validate();
  return make_functional(c.functional, c.seed, parse_activation(c.activation), c.layers);
}

void adam_step(Vec &theta, const Vec &grad, AdamState &s, const TrainConfig &c) {
  if (grad.size() != theta.size()) throw InputError("gradient length does not match theta");
  if (s.m.size() == 0) {
    s.m = Vec::Zero(theta.size());
    s.v = Vec::Zero(theta.size());
  }
  ++s.step;
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * grad;
  s.v = c.beta2 * s.v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double b1t = 1.0 - std::pow(c.beta1, static_cast<double>(s.step));
  const double b2t = 1.0 - std::pow(c.beta2, static_cast<double>(s.step));
  for (Eigen::Index k = 0; k < theta.size(); ++k)
    theta[k] -= c.learning_rate * (s.m[k] / b1t) / (std::sqrt(s.v[k] / b2t) + c.eps);
}

double entry_loss(const Entry &e, const Prediction &p) {
  if (e.is_energy()) {
    if (!e.true_scalar) throw InputError(e.describe() + ": entry has no label");
    const double r = std::get<double>(p) - *e.true_scalar;
    return e.weight * r * r;
  }
  if (!e.true_matrix) throw InputError(e.describe() + ": entry has no label");
  const Mat &P = std::get<Mat>(p);
  if (P.rows() != e.true_matrix->rows() || P.cols() != e.true_matrix->cols())
    throw InputError(e.describe() + ": label is " + std::to_string(e.true_matrix->rows()) + "x" +
                     std::to_string(e.true_matrix->cols()) + " but the basis has " + std::to_string(P.rows()) +
                     " AOs");
  return e.weight * (P - *e.true_matrix).squaredNorm();
}

LossGrad loss_and_grad(const Dataset &ds, const HybridXC &h, Engine &engine, bool with_grad) {
  struct Solved {
    SCFSolution sol;
    Vec grad;
  };
  std::map<std::string, Solved> memo;
  auto solved = [&](const System &s, bool energy_grad) -> Solved & {
    auto [it, fresh] = memo.try_emplace(s.key());
    if (fresh) it->second.sol = engine.solve(s, h);
    if (energy_grad && it->second.grad.size() == 0)
      it->second.grad = energy_grad_stationary(engine.system(s, h.needs_grid()), it->second.sol, h);
    return it->second;
  };

  LossGrad out;
  if (with_grad) out.grad = Vec::Zero(theta_size(h));
  for (const auto &e : ds.entries) {
    if (!e.has_label()) throw InputError(e.describe() + ": entry has no label");
    try {
      const bool g = with_grad && e.weight != 0.0;
      switch (e.type) {
        case EntryType::ae:
        case EntryType::ip: {
          // pred = sum_i sign_i E_i
          std::vector<std::pair<const System *, double>> terms;
          if (e.type == EntryType::ae) {
            for (std::size_t i = 1; i < e.systems.size(); ++i) terms.push_back({&e.systems[i], 1.0});
            terms.push_back({&e.systems[0], -1.0});
          } else {
            terms = {{&e.systems[1], 1.0}, {&e.systems[0], -1.0}};
          }
          double pred = 0.0;
          Vec dpred = g ? Vec::Zero(theta_size(h)) : Vec();
          for (auto [s, sign] : terms) {
            const auto &r = solved(*s, g);
            pred += sign * r.sol.e_total;
            if (g) dpred += sign * r.grad;
          }
          out.loss += entry_loss(e, pred);
          if (g) out.grad += 2.0 * e.weight * (pred - *e.true_scalar) * dpred;
          out.predictions.push_back(pred);
          break;
        }
        case EntryType::dm: {
          const auto &r = solved(e.systems[0], false);
          const Mat P = r.sol.P_total();
          out.loss += entry_loss(e, P);
          if (g) {
            const Mat gP = 2.0 * e.weight * (P - *e.true_matrix);
            out.grad += implicit_grad(engine.system(e.systems[0], h.needs_grid()), r.sol, h, {gP, gP}).grad;
          }
          out.predictions.push_back(P);
          break;
        }
        case EntryType::dens:
          entry_prediction(e, h, engine);  // throws NotImplementedError
          break;
      }
    } catch (const NumericalError &err) {
      throw NumericalError(e.describe() + ": " + err.what());
    }
  }
  return out;
}

std::string history_csv(const std::vector<HistoryRow> &rows) {
  std::string out = "epoch,loss,alpha,beta,theta_norm\n";
  char buf[160];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.loss, r.alpha, r.beta, r.theta_norm);
    out += buf;
  }
  return out;
}

void write_history_csv(const std::string &path, const std::vector<HistoryRow> &rows) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << history_csv(rows);
}

Checkpoint fresh_checkpoint(const TrainConfig &c) {
  Checkpoint cp;
  cp.config = c;
  cp.model = initial_model(c);
  return cp;
}

nlohmann::json checkpoint_json(const Checkpoint &c) {
  const auto &h = c.model;
  nlohmann::json model = {{"name", h.name},
                          {"layer_sizes", h.nn.layer_sizes},
                          {"activation", activation_name(h.nn.activation)},
                          {"params", h.nn.params},
                          {"alpha", h.alpha},
                          {"beta", h.beta}};
  return {{"format", "diffks-checkpoint"},
          {"version", kCheckpointVersion},
          {"epoch", c.epoch},
          {"model", model},
          {"optimizer", {{"name", "adam"}, {"step", c.adam.step}, {"m", to_std(c.adam.m)}, {"v", to_std(c.adam.v)}}},
          {"config", config_json(c.config)}};
}

void save_checkpoint(const std::string &path, const Checkpoint &c) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint '" + path + "'");
  out << checkpoint_json(c).dump(1) << "\n";
  if (!out) throw InputError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  Checkpoint c;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", std::string()) != "diffks-checkpoint") throw InputError("not a diffks checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw InputError("checkpoint version " + j.at("version").dump() + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
    c.epoch = j.at("epoch");
    c.config = config_from_json(j.at("config"));
    const auto &m = j.at("model");
    const auto act = parse_activation(m.at("activation"));
    const std::string name = m.at("name");
    const auto sizes = m.at("layer_sizes").get<std::vector<int>>();
    if (name == "nnlda" || name == "nnpbe") {
      // initialization values are overwritten below; only the shape matters
      c.model = make_functional(name, 0, act, sizes);
    } else {
      c.model = make_functional(name);
    }
    c.model.nn.params = m.at("params").get<std::vector<double>>();
    c.model.alpha = m.at("alpha");
    c.model.beta = m.at("beta");
    c.model.validate();
    const auto &o = j.at("optimizer");
    c.adam.step = o.at("step");
    c.adam.m = to_vec(o.at("m").get<std::vector<double>>());
    c.adam.v = to_vec(o.at("v").get<std::vector<double>>());
    const auto n = static_cast<Eigen::Index>(theta_size(c.model));
    if (c.adam.step > 0 && (c.adam.m.size() != n || c.adam.v.size() != n))
      throw InputError("optimizer state length does not match the model");
  } catch (const nlohmann::json::exception &e) {
    throw InputError("corrupt checkpoint '" + path + "': " + e.what());
  } catch (const InputError &e) {
    throw InputError("checkpoint '" + path + "': " + e.what());
  }
  return c;
}

Checkpoint load_checkpoint(const std::string &path, const HybridXC &expected) {
  auto c = load_checkpoint(path);
  const auto &h = c.model;
  if (h.name != expected.name || h.nn.layer_sizes != expected.nn.layer_sizes ||
      (h.has_network() && h.nn.activation != expected.nn.activation)) {
    auto arch = [](const HybridXC &x) {
      std::string s = x.name;
      if (x.has_network()) {
        s += " [";
        for (std::size_t i = 0; i < x.nn.layer_sizes.size(); ++i)
          s += (i ? "-" : "") + std::to_string(x.nn.layer_sizes[i]);
        s += " " + activation_name(x.nn.activation) + "]";
      }
      return s;
    };
    throw InputError("checkpoint '" + path + "' holds " + arch(h) + " but " + arch(expected) + " was requested");
  }
  return c;
}

TrainResult train(const Dataset &ds, Checkpoint state, Engine &engine,
                  const std::function<void(const HistoryRow &)> &on_epoch) {
  state.config.validate();
  state.model.validate();
  if (ds.entries.empty()) throw InputError("training dataset is empty");
  for (const auto &e : ds.entries)
    if (!e.has_label()) throw InputError(e.describe() + ": training entries need labels");
  if (state.epoch >= state.config.epochs)
    throw InputError("checkpoint is at epoch " + std::to_string(state.epoch) + ", nothing to do for " +
                     std::to_string(state.config.epochs) + " epochs");

  TrainResult res;
  Vec theta = theta_of(state.model);
  auto lg = loss_and_grad(ds, state.model, engine, true);
  res.initial_loss = lg.loss;
  for (int epoch = state.epoch + 1; epoch <= state.config.epochs; ++epoch) {
    adam_step(theta, lg.grad, state.adam, state.config);
    set_theta(state.model, theta);
    state.epoch = epoch;
    lg = loss_and_grad(ds, state.model, engine, epoch < state.config.epochs);
    if (!std::isfinite(lg.loss)) throw NumericalError("loss became non-finite at epoch " + std::to_string(epoch));
    HistoryRow row{epoch, lg.loss, state.model.alpha, state.model.beta, theta.norm()};
    res.history.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  res.state = std::move(state);
  return res;
}

double mean_abs(const std::vector<double> &v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s / static_cast<double>(v.size());
}

EvalReport evaluate(const Dataset &ds, const HybridXC &h, Engine &engine) {
  EvalReport rep;
  std::map<std::string, std::vector<double>> errs;
  std::vector<double> energy_errs;
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    const auto &e = ds.entries[i];
    if (!e.has_label()) throw InputError(e.describe() + ": evaluation needs labels");
    EntryReport r;
    r.index = i;
    r.type = e.type;
    r.label = e.systems.front().moldesc;
    const auto tname = entry_type_name(e.type);
    try {
      const auto p = entry_prediction(e, h, engine);
      if (e.is_energy()) {
        r.prediction = std::get<double>(p);
        r.reference = *e.true_scalar;
        r.error = (r.prediction - r.reference) * kKcalPerHartree;
        energy_errs.push_back(r.error);
      } else {
        entry_loss(e, p);  // shape check
        r.error = (std::get<Mat>(p) - *e.true_matrix).norm();
      }
      errs[tname].push_back(r.error);
    } catch (const NumericalError &err) {
      r.failed = true;
      r.message = err.what();
      ++rep.failed;
    }
    rep.entries.push_back(r);
  }
  for (const auto &[k, v] : errs) {
    rep.mae[k] = mean_abs(v);
    rep.counts[k] = static_cast<int>(v.size());
  }
  rep.energy_mae = mean_abs(energy_errs);
  rep.energy_count = static_cast<int>(energy_errs.size());
  return rep;
}

}  // namespace diffks
