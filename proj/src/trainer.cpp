#include "dsmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dsmt/metrics.hpp"
#include "dsmt/phantom.hpp"
#include "dsmt/rng.hpp"

namespace dsmt {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kAugmentStream = 0x6175676dULL;
constexpr std::uint64_t kDropoutStream = 0x64726f70ULL;

}  // namespace

// ---------------------------------------------------------------------------
// Adam

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::attach(const std::vector<Param*>& params) {
  m_.clear();
  v_.clear();
  for (auto* p : params) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
  t_ = 0;
}

void AdamOptimizer::step(const std::vector<Param*>& params, double lr) {
  if (m_.size() != params.size()) attach(params);
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    if (!p.grad.same_shape(p.value)) continue;  // no gradient this step
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const std::size_t n = p.value.numel();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

// ---------------------------------------------------------------------------
// Schedule and stopping

double cosine_lr(int epoch, int total_epochs, double lr0) {
  if (total_epochs < 1) throw ParameterError("cosine_lr: total must be >= 1");
  if (epoch < 0 || epoch > total_epochs)
    throw ParameterError("cosine_lr: epoch outside [0, total]");
  return lr0 * 0.5 *
         (1.0 + std::cos(M_PI * static_cast<double>(epoch) /
                         static_cast<double>(total_epochs)));
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw ParameterError("patience must be >= 1");
}

bool EarlyStopper::observe(int epoch, double metric) {
  improved_ = metric < best_;
  if (improved_) {
    best_ = metric;
    best_epoch_ = epoch;
    since_ = 0;
  } else {
    since_ = epoch - best_epoch_;
  }
  return since_ >= patience_;
}

// ---------------------------------------------------------------------------
// Loss evaluation for one forward pass

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("train: epochs must be >= 1");
  if (patience < 1) throw ParameterError("train: patience must be >= 1");
  if (!(lr0 > 0.0)) throw ParameterError("train: lr0 must be positive");
  if (batch_train < 1 || batch_val < 1)
    throw ParameterError("train: batch sizes must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    throw ParameterError("train: bad optimizer constants");
}

LossEval evaluate_loss(const ModelOutputs& outputs, const Tensor& input,
                       const BatchTargets& targets, const LossWeights& w,
                       Variant variant, bool with_grads) {
  std::vector<int> depths;
  for (const auto& [d, _] : outputs.age_shallow) depths.push_back(d);
  const auto coeff = loss_coefficients(w, variant, depths);

  LossEval ev;
  LossComponents c;

  if (!outputs.reconstruction.empty()) {
    Tensor d_recon;
    const bool want = with_grads && coeff.ae != 0.0;
    c.l_ae = reconstruction_loss(input, outputs.reconstruction,
                                 want ? &d_recon : nullptr);
    if (want) {
      for (std::size_t i = 0; i < d_recon.numel(); ++i) d_recon[i] *= coeff.ae;
      ev.grads.d_reconstruction = std::move(d_recon);
    }
  }

  auto scaled = [&](const std::vector<double>& y,
                    const std::vector<double>& yhat, double k, bool bce,
                    std::vector<double>* out_grad) {
    std::vector<double> g;
    const bool want = with_grads && k != 0.0;
    const double value = bce ? sex_loss(y, yhat, want ? &g : nullptr)
                             : age_loss(y, yhat, want ? &g : nullptr);
    if (want) {
      for (auto& v : g) v *= k;
      *out_grad = std::move(g);
    }
    return value;
  };

  c.l_ba_final = scaled(targets.age, outputs.age_final, coeff.ba_final, false,
                        &ev.grads.d_age_final);
  if (!outputs.sex_final.empty())
    c.l_gc_final = scaled(targets.sex, outputs.sex_final, coeff.gc_final,
                          true, &ev.grads.d_sex_final);
  for (const auto& [d, yhat] : outputs.age_shallow)
    c.l_ba_shallow[d] =
        scaled(targets.age, yhat, coeff.ba_shallow.count(d)
                                      ? coeff.ba_shallow.at(d)
                                      : 0.0,
               false, &ev.grads.d_age_shallow[d]);
  for (const auto& [d, phat] : outputs.sex_shallow)
    c.l_gc_shallow[d] =
        scaled(targets.sex, phat, coeff.gc_shallow.count(d)
                                      ? coeff.gc_shallow.at(d)
                                      : 0.0,
               true, &ev.grads.d_sex_shallow[d]);

  ev.breakdown = total_loss(c, w, variant);
  return ev;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<const VolumeSample*> collect_split(
    const TrainData& data, const std::vector<std::string>& ids, int side) {
  std::map<std::string, const VolumeSample*> by_id;
  for (const auto& s : data.samples) by_id[s.subject_id] = &s;
  std::vector<const VolumeSample*> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw DataError("split references unknown subject: " + id);
    const auto& v = it->second->voxels;
    if (v.rank() != 3 || v.dim(0) != side || v.dim(1) != side ||
        v.dim(2) != side)
      throw DataError("sample " + id + " is not preprocessed to side " +
                      std::to_string(side));
    out.push_back(it->second);
  }
  return out;
}

Tensor build_batch(const std::vector<const VolumeSample*>& set,
                   const std::vector<int>& order, std::size_t start,
                   std::size_t count, const TrainConfig* aug_cfg, int epoch,
                   BatchTargets& targets) {
  const int side = set[0]->voxels.dim(0);
  Tensor x({static_cast<int>(count), 1, side, side, side});
  targets.age.clear();
  targets.sex.clear();
  for (std::size_t b = 0; b < count; ++b) {
    const int idx = order[start + b];
    const VolumeSample* s = set[idx];
    Tensor vox = s->voxels;
    if (aug_cfg && aug_cfg->augment_enabled) {
      auto rng = make_rng(aug_cfg->seed, kAugmentStream,
                          static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(idx));
      vox = augment_volume(vox, aug_cfg->augmentation, rng);
    }
    std::copy(vox.data(), vox.data() + vox.numel(),
              x.data() + b * vox.numel());
    targets.age.push_back(s->age);
    targets.sex.push_back(static_cast<double>(s->sex));
  }
  return x;
}

double final_head_mae(DsmtModel& model,
                      const std::vector<const VolumeSample*>& val_set,
                      int batch_size) {
  ForwardCtx eval;
  std::vector<double> y, yhat;
  std::vector<int> order(val_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t start = 0; start < val_set.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(batch_size, val_set.size() - start);
    BatchTargets targets;
    Tensor x = build_batch(val_set, order, start, count, nullptr, 0, targets);
    auto out = model.forward(x, eval);
    for (std::size_t b = 0; b < count; ++b) {
      y.push_back(targets.age[b]);
      yhat.push_back(out.age_final[b]);
    }
  }
  return mae(y, yhat);
}

std::string loss_header(const std::vector<int>& depths) {
  std::ostringstream os;
  os << "epoch,step,l_ae,l_ba_final";
  for (int d : depths) os << ",l_ba_d" << d;
  os << ",l_gc_final";
  for (int d : depths) os << ",l_gc_d" << d;
  os << ",l_ba,l_gc,l_dst,l_total,lr";
  return os.str();
}

void write_loss_row(std::ostream& os, int epoch, int step,
                    const LossBreakdown& b, const std::vector<int>& depths,
                    double lr) {
  os << epoch << ',' << step << ',' << b.l_ae << ',' << b.l_ba_final;
  for (int d : depths)
    os << ',' << (b.l_ba_shallow.count(d) ? b.l_ba_shallow.at(d) : 0.0);
  os << ',' << b.l_gc_final;
  for (int d : depths)
    os << ',' << (b.l_gc_shallow.count(d) ? b.l_gc_shallow.at(d) : 0.0);
  os << ',' << b.l_ba << ',' << b.l_gc << ',' << b.l_dst << ',' << b.l_total
     << ',' << lr << '\n';
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  acc.l_ae += b.l_ae;
  acc.l_ba_final += b.l_ba_final;
  acc.l_gc_final += b.l_gc_final;
  for (const auto& [d, v] : b.l_ba_shallow) acc.l_ba_shallow[d] += v;
  for (const auto& [d, v] : b.l_gc_shallow) acc.l_gc_shallow[d] += v;
  acc.l_ba += b.l_ba;
  acc.l_gc += b.l_gc;
  acc.l_dst += b.l_dst;
  acc.l_total += b.l_total;
}

void scale(LossBreakdown& acc, double k) {
  acc.l_ae *= k;
  acc.l_ba_final *= k;
  acc.l_gc_final *= k;
  for (auto& [d, v] : acc.l_ba_shallow) v *= k;
  for (auto& [d, v] : acc.l_gc_shallow) v *= k;
  acc.l_ba *= k;
  acc.l_gc *= k;
  acc.l_dst *= k;
  acc.l_total *= k;
}

}  // namespace

double validation_mae(DsmtModel& model, const TrainData& data,
                      int batch_size) {
  auto val_set =
      collect_split(data, data.split.val_ids, model.config().side);
  if (val_set.empty()) throw ParameterError("validation set is empty");
  return final_head_mae(model, val_set, batch_size);
}

TrainState train(DsmtModel& model, const TrainData& data,
                 const TrainConfig& cfg, const TrainOptions& opts) {
  cfg.validate();
  const auto& mc = model.config();
  // Validates the weight/variant combination up front.
  loss_coefficients(cfg.loss_weights, mc.variant, mc.active_depths());

  auto train_set = collect_split(data, data.split.train_ids, mc.side);
  auto val_set = collect_split(data, data.split.val_ids, mc.side);
  if (train_set.empty()) throw ParameterError("train: empty training set");
  if (val_set.empty()) throw ParameterError("train: empty validation set");

  auto params = model.params();
  AdamOptimizer local_adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  AdamOptimizer* adam = opts.resume_optimizer ? opts.resume_optimizer
                                              : &local_adam;
  if (!opts.resume) adam->attach(params);

  TrainState state = opts.resume ? *opts.resume : TrainState{};
  EarlyStopper stopper(cfg.patience);
  if (opts.resume && state.best_epoch >= 0)
    stopper.observe(state.best_epoch, state.best_val_mae);

  // Exact in-memory snapshot of the best weights seen this session.
  auto buffers = model.buffers();
  std::vector<Tensor> best_params, best_buffers;
  auto snapshot = [&]() {
    best_params.clear();
    best_buffers.clear();
    for (auto* p : params) best_params.push_back(p->value);
    for (auto* b : buffers) best_buffers.push_back(b->value);
  };
  auto restore = [&]() {
    if (best_params.empty()) return;
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i]->value = best_params[i];
    for (std::size_t i = 0; i < buffers.size(); ++i)
      buffers[i]->value = best_buffers[i];
  };
  snapshot();

  const auto depths = mc.active_depths();
  std::ofstream steps_log, epochs_log;
  if (!opts.log_prefix.empty()) {
    const bool append = opts.resume != nullptr;
    const auto mode = append ? std::ios::app : std::ios::out;
    steps_log.open(opts.log_prefix + "_steps.csv", mode);
    epochs_log.open(opts.log_prefix + "_epochs.csv", mode);
    if (!steps_log || !epochs_log)
      throw IoError("cannot open training logs at prefix " + opts.log_prefix);
    if (!append) {
      steps_log << loss_header(depths) << '\n';
      epochs_log << "epoch,steps,mean_l_total,val_mae,best_val_mae,"
                    "epochs_since_improvement,lr\n";
    }
  }

  for (int t = state.epoch; t < cfg.epochs; ++t) {
    const double lr = cosine_lr(t, cfg.epochs, cfg.lr0);

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = make_rng(cfg.seed, kShuffleStream,
                                static_cast<std::uint64_t>(t));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossBreakdown epoch_acc;
    int steps = 0;
    for (std::size_t start = 0; start < train_set.size();
         start += static_cast<std::size_t>(cfg.batch_train)) {
      const std::size_t count =
          std::min<std::size_t>(cfg.batch_train, train_set.size() - start);
      BatchTargets targets;
      Tensor x = build_batch(train_set, order, start, count, &cfg, t, targets);

      ForwardCtx ctx;
      ctx.training = true;
      ctx.update_running_stats = true;
      ctx.dropout_enabled = true;
      ctx.dropout_seed = derive_seed(cfg.seed, kDropoutStream,
                                     static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(steps));
      auto outputs = model.forward(x, ctx);
      auto ev = evaluate_loss(outputs, x, targets, cfg.loss_weights,
                              mc.variant, /*with_grads=*/true);
      if (!std::isfinite(ev.breakdown.l_total)) {
        std::ostringstream os;
        os << "training diverged at epoch " << t << " step " << steps
           << ": l_total=" << ev.breakdown.l_total
           << " l_ae=" << ev.breakdown.l_ae
           << " l_ba=" << ev.breakdown.l_ba
           << " l_gc=" << ev.breakdown.l_gc << " lr=" << lr;
        throw TrainingError(os.str());
      }
      model.zero_grads();
      model.backward(ev.grads);
      adam->step(params, lr);

      if (steps_log.is_open())
        write_loss_row(steps_log, t, steps, ev.breakdown, depths, lr);
      accumulate(epoch_acc, ev.breakdown);
      ++steps;
    }
    scale(epoch_acc, 1.0 / std::max(1, steps));

    const double vmae = final_head_mae(model, val_set, cfg.batch_val);
    const bool stop = stopper.observe(t, vmae);
    if (stopper.improved()) {
      state.best_val_mae = stopper.best();
      state.best_epoch = stopper.best_epoch();
      snapshot();
    }
    state.epochs_since_improvement = stopper.epochs_since_improvement();
    state.epoch = t + 1;
    state.history.push_back({t, epoch_acc, vmae, lr});

    if (stopper.improved() && !opts.best_checkpoint_path.empty())
      save_checkpoint(opts.best_checkpoint_path, model, state, adam);
    if (epochs_log.is_open())
      epochs_log << t << ',' << steps << ',' << epoch_acc.l_total << ','
                 << vmae << ',' << state.best_val_mae << ','
                 << state.epochs_since_improvement << ',' << lr << '\n';
    if (stop) break;
  }

  restore();
  if (!opts.last_checkpoint_path.empty())
    save_checkpoint(opts.last_checkpoint_path, model, state, adam);
  return state;
}

// ---------------------------------------------------------------------------
// Grid search

GridSearchResult grid_search(const ModelConfig& model_cfg,
                             const TrainData& data, const TrainConfig& base) {
  const GridSpec& spec = base.grid;
  if (spec.alpha.empty() || spec.beta.empty() || spec.gamma.empty())
    throw ParameterError("grid_search: empty grid axis");
  if (spec.epochs_per_point < 1)
    throw ParameterError("grid_search: epochs_per_point must be >= 1");

  auto evaluate = [&](double a, double b, double g) {
    TrainConfig cfg = base;
    cfg.epochs = spec.epochs_per_point;
    cfg.loss_weights.alpha = a;
    cfg.loss_weights.beta = b;
    cfg.loss_weights.gamma = g;
    DsmtModel model(model_cfg, cfg.seed);
    TrainState st = train(model, data, cfg, {});
    return st.best_val_mae;
  };

  auto sweep = [&](const std::vector<double>& as, const std::vector<double>& bs,
                   const std::vector<double>& gs,
                   std::vector<GridPoint>& log) -> GridPoint {
    GridPoint best;
    best.val_mae = std::numeric_limits<double>::infinity();
    for (double a : as)
      for (double b : bs)
        for (double g : gs) {
          GridPoint p{a, b, g, evaluate(a, b, g)};
          log.push_back(p);
          if (p.val_mae < best.val_mae) best = p;  // lexicographic tie-break
        }
    return best;
  };

  auto sorted_unique = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  };

  GridSearchResult result;
  const GridPoint coarse_best =
      sweep(sorted_unique(spec.alpha), sorted_unique(spec.beta),
            sorted_unique(spec.gamma), result.coarse);

  auto refine = [&](double center) {
    std::vector<double> vals = {center};
    for (double off : spec.fine_offsets)
      vals.push_back(std::clamp(center + off, 0.0, 1.0));
    return sorted_unique(vals);
  };
  GridPoint fine_best =
      sweep(refine(coarse_best.alpha), refine(coarse_best.beta),
            refine(coarse_best.gamma), result.fine);
  if (coarse_best.val_mae < fine_best.val_mae) fine_best = coarse_best;

  result.best = base.loss_weights;
  result.best.alpha = fine_best.alpha;
  result.best.beta = fine_best.beta;
  result.best.gamma = fine_best.gamma;
  result.best_val_mae = fine_best.val_mae;
  return result;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult gradient_check(DsmtModel& model, const LossWeights& w,
                               int n_params_sampled, std::uint64_t seed,
                               double fd_step, double corrupt_analytic) {
  const auto& mc = model.config();
  PhantomConfig pc;
  pc.side = mc.side;

  const int batch = 2;
  Tensor x({batch, 1, mc.side, mc.side, mc.side});
  BatchTargets targets;
  auto rng = make_rng(seed, 0x67636bULL);
  std::uniform_real_distribution<double> age_dist(pc.age_range[0],
                                                  pc.age_range[1]);
  for (int b = 0; b < batch; ++b) {
    const double age = age_dist(rng);
    const int sex = b % 2;
    auto s = generate_phantom(age, sex, pc, derive_seed(seed, 77, b));
    std::copy(s.voxels.data(), s.voxels.data() + s.voxels.numel(),
              x.data() + b * s.voxels.numel());
    targets.age.push_back(age);
    targets.sex.push_back(sex);
  }

  ForwardCtx ctx;
  ctx.training = true;
  ctx.update_running_stats = false;
  ctx.dropout_enabled = false;

  auto loss_value = [&]() {
    auto out = model.forward(x, ctx);
    return evaluate_loss(out, x, targets, w, mc.variant, false)
        .breakdown.l_total;
  };

  auto outputs = model.forward(x, ctx);
  auto ev = evaluate_loss(outputs, x, targets, w, mc.variant, true);
  model.zero_grads();
  model.backward(ev.grads);

  auto params = model.params();
  std::size_t total = 0;
  for (auto* p : params) total += p->value.numel();

  GradCheckResult result;
  result.loss = ev.breakdown.l_total;
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int k = 0; k < n_params_sampled; ++k) {
    std::size_t flat = pick(rng);
    std::size_t pi = 0;
    while (flat >= params[pi]->value.numel()) {
      flat -= params[pi]->value.numel();
      ++pi;
    }
    double* slot = &params[pi]->value[flat];
    const double analytic = params[pi]->grad[flat] + corrupt_analytic;
    const double orig = *slot;
    *slot = orig + fd_step;
    const double lp = loss_value();
    *slot = orig - fd_step;
    const double lm = loss_value();
    *slot = orig;
    const double numeric = (lp - lm) / (2.0 * fd_step);
    const double rel = std::fabs(analytic - numeric) /
                       std::max({std::fabs(analytic), std::fabs(numeric),
                                 1e-6});
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.sampled;
  }
  return result;
}

}  // namespace dsmt
