// Command-line entry point for the DSMT-AE experiment framework: synthetic
// dataset generation, training, evaluation, ablation, ensemble search and
// gradient verification, all driven by one JSON config.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dsmt/config.hpp"
#include "dsmt/evaluation.hpp"
#include "dsmt/plots.hpp"
#include "dsmt/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dsmt;

namespace {

// Exit codes: 0 ok, 1 usage, 2 config, 3 data, 4 training, 5 i/o.
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;
constexpr int kExitIo = 5;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string checkpoint;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool force = false;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_checkpoint) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")
      ->required();
  cmd->add_option("--out", args.out_dir,
                  "output directory (default: <eval.out_dir>/<name>-<cmd>-"
                  "<hash>-<timestamp>)");
  cmd->add_option("--seed", args.seed, "override every seed in the config")
      ->each([&args](const std::string&) { args.seed_set = true; });
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
  cmd->add_flag("--deterministic", args.deterministic,
                "force deterministic mode");
  auto* opt = cmd->add_option("--checkpoint", args.checkpoint,
                              "model checkpoint path");
  if (needs_checkpoint) opt->required();
}

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = load_experiment_config(args.config_path);
  if (args.seed_set) {
    cfg.train.seed = args.seed;
    cfg.data.split_seed = args.seed;
    cfg.data.synth.phantom.rng_seed = args.seed;
  }
  if (args.deterministic) cfg.train.deterministic = true;
  return cfg;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&t));
  return buf;
}

fs::path experiment_dir(const ExperimentConfig& cfg, const CommonArgs& args,
                        const std::string& command) {
  fs::path dir;
  if (!args.out_dir.empty()) {
    dir = args.out_dir;
  } else {
    dir = fs::path(cfg.eval.out_dir) /
          (cfg.name + "-" + command + "-" + cfg.config_hash + "-" +
           timestamp());
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir))
    throw IoError("cannot create output directory " + dir.string());
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("short write to " + path.string());
}

json ensemble_to_json(const EnsembleSearchResult& res) {
  json omega = json::object();
  for (const auto& [d, v] : res.weights.omega)
    omega[std::to_string(d)] = v;
  return json{{"rho", res.weights.rho},
              {"omega", omega},
              {"val_mae", res.val_mae},
              {"final_head_mae", res.final_head_mae}};
}

json report_to_json(const StratifiedReport& rep) {
  auto metrics = [](const MetricsReport& m) {
    json j{{"n", m.n}};
    if (m.n > 0) {
      j["mae"] = m.mae;
      j["sd"] = m.sd;
      j["rmse"] = m.rmse;
      if (m.r2) j["r2"] = *m.r2;
    }
    return j;
  };
  json brackets = json::array();
  for (std::size_t b = 0; b < rep.by_bracket.size(); ++b)
    brackets.push_back(json{{"bracket", rep.bracket_labels[b]},
                            {"metrics", metrics(rep.by_bracket[b])}});
  return json{{"overall", metrics(rep.overall)},
              {"female", metrics(rep.by_sex.female)},
              {"male", metrics(rep.by_sex.male)},
              {"by_bracket", brackets}};
}

// ---------------------------------------------------------------------------

int cmd_synth(const CommonArgs& args) {
  auto cfg = load_config(args);
  if (cfg.data.manifest.empty())
    throw ConfigError("synth: data.manifest must name the target manifest");

  const fs::path manifest_path(cfg.data.manifest);
  const fs::path root = manifest_path.parent_path();
  const fs::path vol_dir = root / "phantoms";
  if (fs::exists(vol_dir) && !fs::is_empty(vol_dir) && !args.force)
    throw IoError("synth: " + vol_dir.string() +
                  " is not empty (use --force to overwrite)");
  fs::create_directories(vol_dir);

  const auto& spec = cfg.data.synth;
  const auto& pc = spec.phantom;
  const std::uint64_t seed = pc.rng_seed;
  const double lo = pc.age_range[0], hi = pc.age_range[1];

  std::vector<VolumeSample> samples;
  std::vector<ManifestEntry> entries;
  std::vector<LabelRow> labels;
  for (int i = 0; i < spec.count; ++i) {
    // Stratified ages: one draw per equal slice of the range, so every run
    // covers the whole age span.
    auto rng = make_rng(seed, 0xa9e5ULL, i);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double age =
        lo + (i + uni(rng)) * (hi - lo) / static_cast<double>(spec.count);
    const int sex = i % 2;
    auto s = generate_phantom(age, sex, pc, derive_seed(seed, 0x7031ULL, i));
    char name[32];
    std::snprintf(name, sizeof(name), "phantom_%05d", i);
    s.subject_id = name;
    samples.push_back(std::move(s));
  }

  std::vector<double> bins = cfg.data.age_bins;
  if (bins.empty()) bins = default_age_bins(lo, hi);
  auto split = make_split(samples, cfg.data.val_fraction, bins,
                          cfg.data.split_seed);
  std::set<std::string> val_ids(split.val_ids.begin(), split.val_ids.end());

  for (const auto& s : samples) {
    const std::string file = s.subject_id + ".dsmt";
    write_phantom((vol_dir / file).string(), s);
    const std::string membership =
        val_ids.count(s.subject_id) ? "val" : "train";
    entries.push_back({"phantoms/" + file, s.subject_id, membership});
    labels.push_back({s.subject_id, s.age, s.sex, "synthetic", membership});
  }
  write_manifest(manifest_path.string(), entries);
  write_label_table((root / "labels.csv").string(), labels);

  std::cout << "synth: wrote " << samples.size() << " phantoms under "
            << vol_dir.string() << "\n"
            << "synth: manifest " << manifest_path.string() << " ("
            << split.train_ids.size() << " train / " << split.val_ids.size()
            << " val)\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  auto cfg = load_config(args);
  const auto dir = experiment_dir(cfg, args, "train");

  DsmtModel model(cfg.model, cfg.train.seed);
  AdamOptimizer adam(cfg.train.adam_beta1, cfg.train.adam_beta2,
                     cfg.train.adam_eps);
  TrainState resume_state;
  TrainOptions opts;
  opts.best_checkpoint_path = (dir / "best.ckpt").string();
  opts.last_checkpoint_path = (dir / "last.ckpt").string();
  opts.log_prefix = (dir / "train").string();
  if (!args.checkpoint.empty()) {
    resume_state = load_checkpoint_into(args.checkpoint, model, &adam);
    opts.resume = &resume_state;
    opts.resume_optimizer = &adam;
    std::cout << "train: resuming from " << args.checkpoint << " at epoch "
              << resume_state.epoch << "\n";
  }

  auto data = load_dataset(cfg.data, cfg.model.side);
  std::cout << "train: " << data.split.train_ids.size() << " train / "
            << data.split.val_ids.size() << " val samples, variant "
            << variant_name(cfg.model.variant) << ", "
            << model.count_parameters() << " parameters\n";

  auto state = train(model, data, cfg.train, opts);

  write_json(dir / "train_summary.json",
             json{{"epochs_run", state.epoch},
                  {"best_val_mae", state.best_val_mae},
                  {"best_epoch", state.best_epoch},
                  {"parameters", model.count_parameters()},
                  {"variant", variant_name(cfg.model.variant)}});
  std::cout << "train: best val MAE " << state.best_val_mae << " at epoch "
            << state.best_epoch << "; artifacts in " << dir.string() << "\n";
  return 0;
}

DsmtModel load_model_for_eval(const ExperimentConfig& cfg,
                              const std::string& checkpoint) {
  DsmtModel model(cfg.model, 0);
  load_checkpoint_into(checkpoint, model);  // ConfigError on mismatch
  return model;
}

int cmd_eval(const CommonArgs& args, bool dump_only) {
  auto cfg = load_config(args);
  const auto dir = experiment_dir(cfg, args, dump_only ? "predict" : "eval");

  DsmtModel model = load_model_for_eval(cfg, args.checkpoint);
  auto data = load_dataset(cfg.data, cfg.model.side);
  auto preds = evaluate_predictions(model, data, cfg.train.batch_val);

  write_prediction_dump((dir / "predictions.csv").string(), preds);
  if (dump_only) {
    std::cout << "predict: wrote " << preds.heads.y_true.size()
              << " rows to " << (dir / "predictions.csv").string() << "\n";
    return 0;
  }

  auto report = stratify(preds.heads.y_true, preds.y_pred, preds.heads.sexes,
                         cfg.eval.brackets);
  json report_json = report_to_json(report);
  report_json["variant"] = variant_name(cfg.model.variant);
  report_json["prediction_source"] =
      preds.used_ensemble ? "self_ensemble" : "final_head";
  if (preds.used_ensemble) {
    report_json["ensemble"] = ensemble_to_json(preds.ensemble);
    write_json(dir / "ensemble.json", ensemble_to_json(preds.ensemble));
  }
  write_json(dir / "report.json", report_json);

  {
    std::ofstream txt(dir / "report.txt");
    txt << format_stratified_report(report);
  }
  write_stratified_csv((dir / "report.csv").string(), report);
  emit_plots(preds.heads.y_true, preds.y_pred, preds.heads.sexes,
             dir.string(), cfg.eval.brackets,
             variant_label(cfg.model.variant));

  std::cout << format_stratified_report(report);
  std::cout << "eval: artifacts in " << dir.string() << "\n";
  return 0;
}

int cmd_ablate(const CommonArgs& args) {
  auto cfg = load_config(args);
  const auto dir = experiment_dir(cfg, args, "ablate");

  AblationConfig acfg;
  acfg.model = cfg.model;
  acfg.train = cfg.train;
  acfg.bracket_edges = cfg.eval.brackets;
  auto data = load_dataset(cfg.data, cfg.model.side);
  auto result = run_ablation(data, acfg);

  const std::string table = format_ablation_table(result);
  std::cout << table;
  {
    std::ofstream f(dir / "ablation_table.txt");
    f << table;
  }
  write_ablation_csv((dir / "ablation_table.csv").string(), result);

  // Grouped MAE-per-bracket chart over the variants that trained.
  std::vector<BracketSeries> series;
  std::vector<std::string> labels;
  for (const auto& row : result.rows) {
    if (!row.ok) continue;
    BracketSeries s;
    s.label = variant_label(row.variant);
    for (const auto& m : row.report.by_bracket) {
      s.mae.push_back(m.n ? m.mae : std::numeric_limits<double>::quiet_NaN());
      s.sd.push_back(m.n ? m.sd : std::numeric_limits<double>::quiet_NaN());
      s.n.push_back(m.n);
    }
    series.push_back(std::move(s));
    if (labels.empty()) labels = row.report.bracket_labels;
  }
  if (!series.empty())
    emit_bracket_bars((dir / "mae_by_bracket.svg").string(),
                      (dir / "mae_by_bracket_data.csv").string(), labels,
                      series);

  int failures = 0;
  for (const auto& row : result.rows)
    if (!row.ok) ++failures;
  std::cout << "ablate: artifacts in " << dir.string() << "\n";
  return failures == 0 ? 0 : kExitTraining;
}

int cmd_gradcheck(const CommonArgs& args) {
  auto cfg = load_config(args);
  if (cfg.model.side > 16)
    throw ConfigError("gradcheck: use a tiny model (side <= 16)");

  double corrupt = 0.0;
  if (const char* hook = std::getenv("DSMT_TEST_CORRUPT_GRAD"))
    corrupt = std::atof(hook);

  DsmtModel model(cfg.model, cfg.train.seed);
  const auto full = gradient_check(model, cfg.train.loss_weights, 20,
                                   cfg.train.seed, 1e-5, corrupt);
  std::cout << "gradcheck[full loss]   sampled=" << full.sampled
            << " max_rel_error=" << full.max_rel_error
            << " loss=" << full.loss << "\n";
  bool ok = full.max_rel_error < 1e-3;

  if (has_decoder(cfg.model.variant)) {
    LossWeights recon = cfg.train.loss_weights;
    recon.alpha = 1.0;
    DsmtModel model2(cfg.model, cfg.train.seed + 1);
    const auto pure = gradient_check(model2, recon, 20, cfg.train.seed + 1,
                                     1e-5, corrupt);
    std::cout << "gradcheck[alpha=1 AE]  sampled=" << pure.sampled
              << " max_rel_error=" << pure.max_rel_error
              << " loss=" << pure.loss << "\n";
    ok = ok && pure.max_rel_error < 1e-4;
  }
  std::cout << (ok ? "gradcheck: PASS\n" : "gradcheck: FAIL\n");
  return ok ? 0 : kExitTraining;
}

int cmd_ensemble_search(const CommonArgs& args) {
  auto cfg = load_config(args);
  const auto dir = experiment_dir(cfg, args, "ensemble");

  if (!has_shallow_heads(cfg.model.variant))
    throw ConfigError("ensemble-search: variant has no shallow heads");
  DsmtModel model = load_model_for_eval(cfg, args.checkpoint);
  auto data = load_dataset(cfg.data, cfg.model.side);
  auto heads = predict_heads(model, data, cfg.train.batch_val);
  auto res = search_weights(heads);
  write_json(dir / "ensemble.json", ensemble_to_json(res));
  std::cout << "ensemble-search: rho=" << res.weights.rho
            << " val_mae=" << res.val_mae
            << " final_head_mae=" << res.final_head_mae << "\n"
            << "ensemble-search: wrote "
            << (dir / "ensemble.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef _OPENMP
  if (const char* workers = std::getenv("DSMT_WORKERS")) {
    const int n = std::atoi(workers);
    if (n > 0) omp_set_num_threads(n);
  }
#endif

  CLI::App app{"DSMT-AE brain-age experiment framework"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, eval_args, predict_args, ablate_args,
      grad_args, ens_args;
  add_common(app.add_subcommand("synth", "generate a phantom dataset"),
             synth_args, false);
  add_common(app.add_subcommand("train", "train a model"), train_args, false);
  add_common(app.add_subcommand("eval", "evaluate a checkpoint"), eval_args,
             true);
  add_common(app.add_subcommand("predict", "write a prediction dump"),
             predict_args, true);
  add_common(app.add_subcommand("ablate", "run the five-variant comparison"),
             ablate_args, false);
  add_common(app.add_subcommand("gradcheck",
                                "verify gradients by finite differences"),
             grad_args, false);
  add_common(app.add_subcommand("ensemble-search",
                                "fit self-ensemble weights on validation"),
             ens_args, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("synth")) return cmd_synth(synth_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args, false);
    if (app.got_subcommand("predict")) return cmd_eval(predict_args, true);
    if (app.got_subcommand("ablate")) return cmd_ablate(ablate_args);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck(grad_args);
    if (app.got_subcommand("ensemble-search"))
      return cmd_ensemble_search(ens_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
