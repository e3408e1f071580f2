#include "dsmt/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace dsmt {

namespace {

std::vector<const VolumeSample*> val_samples(const TrainData& data,
                                             int side) {
  std::map<std::string, const VolumeSample*> by_id;
  for (const auto& s : data.samples) by_id[s.subject_id] = &s;
  std::vector<const VolumeSample*> out;
  for (const auto& id : data.split.val_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end())
      throw DataError("split references unknown subject: " + id);
    out.push_back(it->second);
  }
  return out;
}

std::string fmt(double v, int prec = 2) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

std::string metric_cell(const MetricsReport& m) {
  if (m.n == 0) return "n=0";
  std::ostringstream os;
  os << fmt(m.mae) << " +/- " << fmt(m.sd) << "  " << fmt(m.rmse) << "  "
     << (m.r2 ? fmt(*m.r2) : std::string("-"));
  return os.str();
}

}  // namespace

HeadPredictions predict_heads(DsmtModel& model, const TrainData& data,
                              int batch_size) {
  const auto& mc = model.config();
  auto set = val_samples(data, mc.side);
  if (set.empty()) throw ParameterError("predict_heads: empty validation set");

  HeadPredictions preds;
  ForwardCtx eval;
  for (std::size_t start = 0; start < set.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count =
        std::min<std::size_t>(batch_size, set.size() - start);
    Tensor x({static_cast<int>(count), 1, mc.side, mc.side, mc.side});
    for (std::size_t b = 0; b < count; ++b) {
      const auto& v = set[start + b]->voxels;
      if (v.dim(0) != mc.side)
        throw DataError("sample not preprocessed to model side");
      std::copy(v.data(), v.data() + v.numel(), x.data() + b * v.numel());
    }
    auto out = model.forward(x, eval);
    for (std::size_t b = 0; b < count; ++b) {
      const auto* s = set[start + b];
      preds.subject_ids.push_back(s->subject_id);
      preds.y_true.push_back(s->age);
      preds.sexes.push_back(s->sex);
      preds.final_head.push_back(out.age_final[b]);
      for (const auto& [d, v] : out.age_shallow)
        preds.shallow[d].push_back(v[b]);
      if (!out.sex_final.empty())
        preds.sex_prob_final.push_back(out.sex_final[b]);
    }
  }
  return preds;
}

EvalPredictions evaluate_predictions(DsmtModel& model, const TrainData& data,
                                     int batch_size) {
  EvalPredictions ev;
  ev.heads = predict_heads(model, data, batch_size);
  if (!ev.heads.shallow.empty()) {
    ev.ensemble = search_weights(ev.heads);
    ev.used_ensemble = true;
    ev.y_pred.resize(ev.heads.y_true.size());
    for (std::size_t i = 0; i < ev.y_pred.size(); ++i) {
      std::map<int, double> shallow;
      for (const auto& [d, v] : ev.heads.shallow) shallow[d] = v[i];
      ev.y_pred[i] =
          ensemble_predict(ev.heads.final_head[i], shallow, ev.ensemble.weights);
    }
  } else {
    ev.y_pred = ev.heads.final_head;
  }
  return ev;
}

void write_prediction_dump(const std::string& path,
                           const EvalPredictions& preds) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write prediction dump " + path);
  f << "subject_id,y_true,y_pred_final";
  for (const auto& [d, _] : preds.heads.shallow) f << ",y_pred_d" << d;
  f << ",y_pred_ensemble,sex\n";
  f << std::setprecision(10);
  for (std::size_t i = 0; i < preds.heads.y_true.size(); ++i) {
    f << preds.heads.subject_ids[i] << ',' << preds.heads.y_true[i] << ','
      << preds.heads.final_head[i];
    for (const auto& [d, v] : preds.heads.shallow) f << ',' << v[i];
    f << ',' << preds.y_pred[i] << ',' << preds.heads.sexes[i] << '\n';
  }
  if (!f) throw IoError("short write to prediction dump " + path);
}

std::string format_stratified_report(const StratifiedReport& rep) {
  std::ostringstream os;
  os << "group            n     MAE +/- SD     RMSE    R2\n";
  auto row = [&](const std::string& name, const MetricsReport& m) {
    os << std::left << std::setw(14) << name << std::right << std::setw(5)
       << m.n << "   ";
    if (m.n == 0) {
      os << "-\n";
      return;
    }
    os << fmt(m.mae) << " +/- " << fmt(m.sd) << "   " << fmt(m.rmse) << "   "
       << (m.r2 ? fmt(*m.r2) : std::string("-")) << '\n';
  };
  row("overall", rep.overall);
  row("female", rep.by_sex.female);
  row("male", rep.by_sex.male);
  for (std::size_t b = 0; b < rep.by_bracket.size(); ++b)
    row("age " + rep.bracket_labels[b], rep.by_bracket[b]);
  return os.str();
}

void write_stratified_csv(const std::string& path,
                          const StratifiedReport& rep) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write report " + path);
  f << "group,n,mae,sd,rmse,r2\n";
  f << std::setprecision(10);
  auto row = [&](const std::string& name, const MetricsReport& m) {
    f << name << ',' << m.n << ',';
    if (m.n == 0) {
      f << ",,,\n";
      return;
    }
    f << m.mae << ',' << m.sd << ',' << m.rmse << ',';
    if (m.r2) f << *m.r2;
    f << '\n';
  };
  row("overall", rep.overall);
  row("female", rep.by_sex.female);
  row("male", rep.by_sex.male);
  for (std::size_t b = 0; b < rep.by_bracket.size(); ++b)
    row(rep.bracket_labels[b], rep.by_bracket[b]);
  if (!f) throw IoError("short write to report " + path);
}

AblationResult run_ablation(const TrainData& data, const AblationConfig& cfg) {
  AblationResult result;
  const Variant variants[] = {Variant::kBaseline, Variant::kAe,
                              Variant::kMtlAe, Variant::kDsAe,
                              Variant::kDsmtAe};
  for (Variant v : variants) {
    VariantResult row;
    row.variant = v;
    try {
      ModelConfig mc = cfg.model;
      mc.variant = v;
      mc.validate();
      DsmtModel model(mc, cfg.train.seed);
      train(model, data, cfg.train);
      auto preds = evaluate_predictions(model, data, cfg.train.batch_val);
      row.report = stratify(preds.heads.y_true, preds.y_pred,
                            preds.heads.sexes, cfg.bracket_edges);
      row.used_ensemble = preds.used_ensemble;
      if (preds.used_ensemble) row.ensemble = preds.ensemble.weights;
      row.y_true = preds.heads.y_true;
      row.y_pred = preds.y_pred;
      row.sexes = preds.heads.sexes;
      row.ok = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::string format_ablation_table(const AblationResult& result) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "Model"
     << " | " << std::setw(26) << "Overall: MAE+/-SD RMSE R2"
     << " | " << std::setw(26) << "Male: MAE+/-SD RMSE R2"
     << " | " << std::setw(26) << "Female: MAE+/-SD RMSE R2" << '\n';
  os << std::string(10, '-') << "-+-" << std::string(26, '-') << "-+-"
     << std::string(26, '-') << "-+-" << std::string(26, '-') << '\n';
  for (const auto& row : result.rows) {
    os << std::left << std::setw(10) << variant_label(row.variant) << " | ";
    if (!row.ok) {
      os << "ERROR: " << row.error << '\n';
      continue;
    }
    os << std::setw(26) << metric_cell(row.report.overall) << " | "
       << std::setw(26) << metric_cell(row.report.by_sex.male) << " | "
       << std::setw(26) << metric_cell(row.report.by_sex.female) << '\n';
  }
  return os.str();
}

void write_ablation_csv(const std::string& path,
                        const AblationResult& result) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write ablation table " + path);
  f << "model,status,overall_mae,overall_sd,overall_rmse,overall_r2,"
       "male_mae,male_sd,male_rmse,male_r2,"
       "female_mae,female_sd,female_rmse,female_r2\n";
  f << std::setprecision(10);
  for (const auto& row : result.rows) {
    f << variant_label(row.variant) << ',';
    if (!row.ok) {
      f << "error:" << row.error << ",,,,,,,,,,,,\n";
      continue;
    }
    f << "ok";
    for (const MetricsReport* m :
         {&row.report.overall, &row.report.by_sex.male,
          &row.report.by_sex.female}) {
      f << ',' << m->mae << ',' << m->sd << ',' << m->rmse << ',';
      if (m->r2) f << *m->r2;
    }
    f << '\n';
  }
  if (!f) throw IoError("short write to ablation table " + path);
}

}  // namespace dsmt
