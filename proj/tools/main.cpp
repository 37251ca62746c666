#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "nlm/bayesopt.hpp"
#include "nlm/data.hpp"
#include "nlm/metrics.hpp"
#include "nlm/serialize.hpp"
#include "nlm/trainer.hpp"

namespace fs = std::filesystem;
using namespace nlm;

namespace {

/// Thrown for bad flag values detected after parsing; maps to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string join_widths(const std::vector<std::size_t>& w) {
  std::string out;
  for (std::size_t v : w) out += (out.empty() ? "" : ",") + std::to_string(v);
  return out;
}

std::vector<double> parse_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw UsageError(flag + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  return out;
}

/// One line listing every option of the subcommand with its resolved value.
std::string resolved_config(const CLI::App* app, const std::string& extra = "") {
  std::ostringstream os;
  os << "nlm " << app->get_name();
  std::vector<const CLI::Option*> options = app->get_options();
  if (const CLI::App* parent = app->get_parent()) {
    const auto global = parent->get_options();
    options.insert(options.end(), global.begin(), global.end());
  }
  for (const CLI::Option* opt : options) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "help-all" || name == "config") continue;
    std::string value;
    if (opt->count() > 0) {
      for (const std::string& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    if (opt->get_items_expected_max() == 0 || (opt->get_type_size() == 0 && value.empty()))
      value = opt->count() ? "true" : "false";
    os << ' ' << name << '=' << (value.empty() ? "\"\"" : value);
  }
  if (!extra.empty()) os << ' ' << extra;
  return os.str();
}

fs::path resolve_output(const fs::path& out_dir, const std::string& name) {
  const fs::path p(name);
  const fs::path full = p.is_absolute() ? p : out_dir / p;
  if (full.has_parent_path()) fs::create_directories(full.parent_path());
  return full;
}

std::ofstream open_output(const fs::path& path, const std::string& comment) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "# " << comment << '\n' << std::setprecision(10);
  return os;
}

void add_train_options(CLI::App* sub, TrainConfig& cfg, std::string& objective,
                       std::string& hidden, std::string& activation, std::string& optimizer,
                       std::string& anneal, std::string& aggregation) {
  sub->add_option("--objective", objective, "mle, map, marginal or luna");
  sub->add_option("--hidden", hidden, "comma-separated hidden widths; the last is L");
  sub->add_option("--activation", activation, "relu or tanh");
  sub->add_option("--epochs", cfg.epochs);
  sub->add_option("--batch-size", cfg.batch_size, "0 = full batch");
  sub->add_option("--learning-rate", cfg.learning_rate);
  sub->add_option("--optimizer", optimizer, "adam or sgd");
  sub->add_option("--gamma", cfg.gamma);
  sub->add_option("--lambda", cfg.lambda);
  sub->add_option("--alpha", cfg.alpha);
  sub->add_option("--sigma2", cfg.sigma2);
  sub->add_option("--heads", cfg.heads);
  sub->add_option("--anneal", anneal, "sqrt, sigmoid, tanh or constant");
  sub->add_option("--restarts", cfg.restarts);
  sub->add_option("--seed", cfg.seed);
  sub->add_option("--perturb-fraction", cfg.perturb_fraction);
  sub->add_option("--aggregation", aggregation, "auto, pointwise or stacked diversity cosines");
}

void finish_train_config(TrainConfig& cfg, const std::string& objective, const std::string& hidden,
                         const std::string& activation, const std::string& optimizer,
                         const std::string& anneal, const std::string& aggregation) {
  try {
    apply_setting(cfg, "aggregation", aggregation);
    apply_setting(cfg, "objective", objective);
    apply_setting(cfg, "hidden", hidden);
    apply_setting(cfg, "activation", activation);
    apply_setting(cfg, "optimizer", optimizer);
    apply_setting(cfg, "anneal", anneal);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

/// Predictive and targets in data units for one split.
std::pair<PredictiveDistribution, Vector> split_predictive(const TrainedModel& model,
                                                           const GapDataset& data,
                                                           const Split& s) {
  PredictiveDistribution pred = predict(model, s.x);
  Vector y = s.y;
  if (data.stats.active) {
    pred = destandardize(pred, data.stats);
    y = destandardize_targets(y, data.stats);
  }
  return {pred, y};
}

void write_history(const fs::path& path, const std::string& comment, const TrainedModel& m) {
  auto os = open_output(path, comment);
  os << "epoch,fit_loss,diverse_loss,effective_lambda\n";
  for (const EpochRecord& r : m.history)
    os << r.epoch << ',' << r.fit_loss << ',' << r.diverse_loss << ',' << r.effective_lambda
       << '\n';
}

TrainedModel prior_only(const TrainConfig& cfg, const GapDataset& data) {
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> widths{static_cast<std::size_t>(data.train.x.cols())};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  TrainedModel m;
  m.config = cfg;
  m.features = FeatureMap::initialize(widths, cfg.activation, rng);
  const auto dim = static_cast<Eigen::Index>(m.features.feature_dim() + 1);
  m.posterior.mean = Vector::Zero(dim);
  m.posterior.covariance = cfg.alpha * Matrix::Identity(dim, dim);
  m.posterior.sigma2 = cfg.sigma2;
  m.posterior.alpha = cfg.alpha;
  m.epsilon = default_epsilon(data.train.x, cfg.perturb_fraction);
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural linear models with diversity-regularized feature training"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file whose keys mirror the flags");
  app.allow_config_extras(false);
  app.option_defaults()->always_capture_default();

  std::string out_dir = ".";
  if (const char* env = std::getenv("NLM_OUTPUT_DIR")) out_dir = env;
  app.add_option("--output-dir", out_dir, "directory for relative output paths (env NLM_OUTPUT_DIR)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a gap dataset");
  std::string gen_kind, gen_input, gen_out = "data";
  std::size_t gen_train = 100, gen_test = 100, gen_dim = 0;
  double gen_noise = 3.0;
  std::uint64_t gen_seed = 0;
  bool gen_standardize = false;
  gen->add_option("kind", gen_kind, "cubic, squiggle or ucigap")->required()
      ->check(CLI::IsMember({"cubic", "squiggle", "ucigap"}));
  gen->add_option("--seed", gen_seed);
  gen->add_option("--n-train", gen_train, "generated training points (20% become validation)");
  gen->add_option("--n-test", gen_test, "points per test split");
  gen->add_option("--noise-sd", gen_noise);
  gen->add_option("--input", gen_input, "delimited table for ucigap (last column = target)");
  gen->add_option("--dim", gen_dim, "gap dimension for ucigap");
  gen->add_flag("--standardize", gen_standardize, "z-score with training statistics");
  gen->add_option("--out", gen_out, "output directory");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  TrainConfig tcfg;
  std::string t_obj = to_string(tcfg.objective), t_hidden = join_widths(tcfg.hidden),
              t_act = to_string(tcfg.activation), t_opt = to_string(tcfg.optimizer),
              t_anneal = to_string(tcfg.anneal), t_agg = to_string(tcfg.aggregation);
  std::string t_data, t_out = "model.txt", t_hist = "history.csv", t_sel = "selection.csv";
  std::string t_gammas, t_lambdas, t_alphas;
  bool t_select = false, t_prior = false;
  tr->add_option("--data", t_data, "dataset directory")->required();
  add_train_options(tr, tcfg, t_obj, t_hidden, t_act, t_opt, t_anneal, t_agg);
  tr->add_flag("--select", t_select, "select among restarts (and grid points) with the LL+diversity rule");
  tr->add_option("--grid-gamma", t_gammas, "comma list; enables grid search");
  tr->add_option("--grid-lambda", t_lambdas, "comma list");
  tr->add_option("--grid-alpha", t_alphas, "comma list");
  tr->add_flag("--prior-only", t_prior, "skip training and keep the prior over the head");
  tr->add_option("--out", t_out, "model file");
  tr->add_option("--history", t_hist, "per-epoch loss file");
  tr->add_option("--selection-log", t_sel, "candidate log written with --select");

  // eval
  auto* ev = app.add_subcommand("eval", "metrics per split");
  std::string e_model, e_data, e_out = "metrics.csv";
  ev->add_option("--model", e_model)->required();
  ev->add_option("--data", e_data)->required();
  ev->add_option("--out", e_out);

  // curves
  auto* cu = app.add_subcommand("curves", "predictive bands and function samples on a 1-D grid");
  std::string c_model, c_out = "curves.csv", c_source = "posterior";
  std::size_t c_grid = 200, c_samples = 0;
  double c_lo = -6.0, c_hi = 6.0;
  std::uint64_t c_seed = 0;
  cu->add_option("--model", c_model)->required();
  cu->add_option("--grid", c_grid, "number of grid points")->check(CLI::PositiveNumber);
  cu->add_option("--lo", c_lo);
  cu->add_option("--hi", c_hi);
  cu->add_option("--samples", c_samples, "function samples per row");
  cu->add_option("--source", c_source, "prior or posterior")
      ->check(CLI::IsMember({"prior", "posterior"}));
  cu->add_option("--seed", c_seed);
  cu->add_option("--out", c_out);

  // blowup
  auto* bl = app.add_subcommand("blowup", "marginal likelihood under last-layer scaling");
  std::string b_data, b_cs = "1,10,100,1000", b_hidden = "50,20", b_act = "relu",
              b_out = "blowup.csv";
  double b_alpha = 1.0, b_sigma2 = 9.0;
  std::uint64_t b_seed = 0;
  bl->add_option("--data", b_data)->required();
  bl->add_option("--c", b_cs, "comma list of scalings");
  bl->add_option("--hidden", b_hidden);
  bl->add_option("--activation", b_act);
  bl->add_option("--alpha", b_alpha);
  bl->add_option("--sigma2", b_sigma2);
  bl->add_option("--seed", b_seed);
  bl->add_option("--out", b_out);

  // bayesopt
  auto* bo = app.add_subcommand("bayesopt", "sequential optimization of a benchmark");
  std::string o_bench, o_surr = "gp", o_out = "trace.csv";
  BoOptions o_opts;
  std::size_t o_init = 0;
  int o_epochs = 500;
  SurrogateSpec o_spec;
  bo->add_option("benchmark", o_bench, "branin or hartmann6")->required()
      ->check(CLI::IsMember({"branin", "hartmann6"}));
  bo->add_option("--surrogate", o_surr, "gp, luna or map")->check(CLI::IsMember({"gp", "luna", "map"}));
  bo->add_option("--steps", o_opts.steps);
  bo->add_option("--init", o_init, "initial random points (0 = 5 for branin, 10 for hartmann6)");
  bo->add_option("--seed", o_opts.seed);
  bo->add_option("--epochs", o_epochs, "training epochs per step for network surrogates");
  bo->add_option("--gamma", o_spec.train.gamma, "network surrogate regularization");
  bo->add_option("--lambda", o_spec.train.lambda, "LUNA surrogate diversity weight");
  bo->add_option("--alpha", o_spec.train.alpha, "network surrogate prior variance");
  bo->add_option("--sigma2", o_spec.train.sigma2, "network surrogate noise (standardized units)");
  bo->add_option("--learning-rate", o_spec.train.learning_rate);
  bo->add_option("--heads", o_spec.train.heads);
  bo->add_option("--out", o_out);

  // transfer
  auto* tf = app.add_subcommand("transfer", "refit the Bayesian head on new data with frozen features");
  std::string f_model, f_data, f_split = "test_gap", f_out = "transfer.txt";
  tf->add_option("--model", f_model)->required();
  tf->add_option("--data", f_data)->required();
  tf->add_option("--split", f_split, "split used for the refit")
      ->check(CLI::IsMember({"train", "val", "test_not_gap", "test_gap"}));
  tf->add_option("--out", f_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const fs::path od(out_dir);
    if (gen->parsed()) {
      GapDataset d;
      if (gen_kind == "cubic") {
        d = gen_cubic_gap(gen_train, gen_test, gen_noise, gen_seed);
      } else if (gen_kind == "squiggle") {
        d = gen_squiggle_gap(gen_train, gen_test, gen_noise, gen_seed);
      } else {
        if (gen_input.empty()) throw UsageError("--input: required for ucigap");
        const XyTable t = load_table(gen_input);
        d = make_gap_split(t.x, t.y, gen_dim, gen_seed, fs::path(gen_input).stem().string());
      }
      if (gen_standardize) d = standardize(d);
      const fs::path dir = resolve_output(od, gen_out);
      fs::create_directories(dir);
      save_dataset(dir, d, resolved_config(gen));
      std::cout << "wrote " << dir.string() << '\n';
    } else if (tr->parsed()) {
      finish_train_config(tcfg, t_obj, t_hidden, t_act, t_opt, t_anneal, t_agg);
      const GapDataset data = load_dataset(t_data);
      const std::string comment = resolved_config(tr);
      TrainedModel model;
      if (t_prior) {
        model = prior_only(tcfg, data);
      } else if (t_select || !t_gammas.empty()) {
        const std::vector<double> gs = t_gammas.empty() ? std::vector<double>{tcfg.gamma}
                                                        : parse_list("--grid-gamma", t_gammas);
        const std::vector<double> ls = t_lambdas.empty() ? std::vector<double>{tcfg.lambda}
                                                         : parse_list("--grid-lambda", t_lambdas);
        const std::vector<double> as = t_alphas.empty() ? std::vector<double>{tcfg.alpha}
                                                        : parse_list("--grid-alpha", t_alphas);
        const SearchResult res = hyper_search(make_grid(gs, ls, as), tcfg, data);
        model = res.best;
        auto os = open_output(resolve_output(od, t_sel), comment);
        os << "candidate,gamma,lambda,alpha,seed,status,val_ll,diversity,retained,selected\n";
        for (const SearchEntry& e : res.log) {
          os << (e.failed ? std::string("-") : std::to_string(e.candidate)) << ',' << e.point.gamma
             << ',' << e.point.lambda << ',' << e.point.alpha << ',' << e.seed << ',';
          if (e.failed) {
            os << "failed,,,,\n";
            continue;
          }
          const CandidateScore& s = res.selection.scores[e.candidate];
          os << "ok," << s.val_ll << ',' << s.diversity << ',' << (s.retained ? 1 : 0) << ','
             << (e.candidate == res.selection.index ? 1 : 0) << '\n';
        }
      } else {
        model = train(tcfg, data);
      }
      save_model(resolve_output(od, t_out), model, comment);
      write_history(resolve_output(od, t_hist), comment, model);
      std::cout << "wrote " << resolve_output(od, t_out).string() << '\n';
    } else if (ev->parsed()) {
      const TrainedModel model = load_model(e_model);
      const GapDataset data = load_dataset(e_data);
      auto os = open_output(resolve_output(od, e_out), resolved_config(ev, "seed=" + std::to_string(model.config.seed)));
      os << "split,avg_ll,rmse,epistemic_sd\n";
      double eu_gap = 0.0, eu_not = 0.0;
      const std::pair<const char*, const Split*> splits[] = {
          {"train", &data.train}, {"val", &data.val}, {"test_not_gap", &data.test_not_gap},
          {"test_gap", &data.test_gap}};
      for (const auto& [name, s] : splits) {
        if (s->size() == 0) continue;
        const auto [pred, y] = split_predictive(model, data, *s);
        const MetricsReport r = evaluate(pred, y, name);
        os << r.split << ',' << r.avg_ll << ',' << r.rmse << ',' << r.avg_epistemic_sd << '\n';
        if (r.split == "test_gap") eu_gap = r.avg_epistemic_sd;
        if (r.split == "test_not_gap") eu_not = r.avg_epistemic_sd;
      }
      os << "eurc," << eurc(eu_gap, eu_not) << ",,\n";
    } else if (cu->parsed()) {
      const TrainedModel model = load_model(c_model);
      if (model.features.input_dim() != 1) throw UsageError("--model: curves needs a 1-D model");
      Matrix grid(static_cast<Eigen::Index>(c_grid), 1);
      for (std::size_t i = 0; i < c_grid; ++i)
        grid(static_cast<Eigen::Index>(i), 0) =
            c_grid == 1 ? c_lo : c_lo + (c_hi - c_lo) * static_cast<double>(i) / static_cast<double>(c_grid - 1);
      const PredictiveDistribution pred = predict(model, grid);
      Matrix samples(0, grid.rows());
      if (c_samples > 0) {
        const FunctionSource src = c_source == "prior" ? FunctionSource{PriorSource{}}
                                                       : FunctionSource{model.posterior};
        samples = sample_functions(model.features, model.posterior.alpha, grid, c_samples, src, c_seed);
      }
      auto os = open_output(resolve_output(od, c_out), resolved_config(cu));
      os << "x,mean,total_sd,epistemic_sd";
      for (std::size_t s = 0; s < c_samples; ++s) os << ",sample_" << s + 1;
      os << '\n';
      for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        os << grid(i, 0) << ',' << pred.mean[i] << ',' << std::sqrt(pred.total_var[i]) << ','
           << std::sqrt(pred.epistemic_var[i]);
        for (std::size_t s = 0; s < c_samples; ++s) os << ',' << samples(static_cast<Eigen::Index>(s), i);
        os << '\n';
      }
    } else if (bl->parsed()) {
      const std::vector<double> cs = parse_list("--c", b_cs);
      for (double c : cs)
        if (!(c > 0.0)) throw UsageError("--c: scalings must be > 0");
      TrainConfig cfg;
      finish_train_config(cfg, "mle", b_hidden, b_act, "adam", "sqrt", "auto");
      const GapDataset data = load_dataset(b_data);
      std::mt19937_64 rng(b_seed);
      std::vector<std::size_t> widths{static_cast<std::size_t>(data.train.x.cols())};
      widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
      const FeatureMap net = FeatureMap::initialize(widths, cfg.activation, rng);
      auto os = open_output(resolve_output(od, b_out), resolved_config(bl));
      os << "c,marginal_ll\n";
      for (double c : cs) {
        const Matrix design = design_matrix(scale_last_layer(net, c), data.train.x);
        os << c << ',' << log_marginal_likelihood(design, data.train.y, b_sigma2, b_alpha) << '\n';
      }
    } else if (bo->parsed()) {
      const Benchmark bench = benchmark_by_name(o_bench);
      o_opts.init_count = o_init > 0 ? o_init : (o_bench == "branin" ? 5 : 10);
      SurrogateSpec spec = o_spec;
      spec.kind = parse_surrogate(o_surr);
      spec.train.epochs = o_epochs;
      const BoTrace trace = optimize(spec, bench, o_opts);
      auto os = open_output(resolve_output(od, o_out),
                            resolved_config(bo, "init_used=" + std::to_string(o_opts.init_count)));
      os << "step";
      for (std::size_t d = 0; d < bench.dimension; ++d) os << ",x" << d;
      os << ",f,best,regret\n";
      for (const BoRow& r : trace.rows) {
        os << r.step;
        for (Eigen::Index d = 0; d < r.x.size(); ++d) os << ',' << r.x[d];
        os << ',' << r.value << ',' << r.best << ',' << r.regret << '\n';
      }
      std::cout << "final regret " << trace.final_regret() << '\n';
    } else if (tf->parsed()) {
      const TrainedModel model = load_model(f_model);
      const GapDataset data = load_dataset(f_data);
      const Split& s = f_split == "train" ? data.train
                       : f_split == "val" ? data.val
                       : f_split == "test_not_gap" ? data.test_not_gap
                                                   : data.test_gap;
      if (s.size() == 0) throw UsageError("--split: split '" + f_split + "' is empty");
      const TrainedModel refit = refit_head(model, s.x, s.y);
      save_model(resolve_output(od, f_out), refit, resolved_config(tf));
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
