#include "symcons/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "symcons/errors.hpp"

namespace symcons {

std::pair<double, double> mean_and_std(std::span<const double> xs) {
  if (xs.empty()) throw ContractError("mean_and_std: empty sample");
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(xs.size());
  return {m, std::sqrt(v)};
}

std::string format_mean_std(double mean, double stddev) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f ± %.2f", mean, stddev);
  return buf;
}

ConsistencyReport summarize(const ModelRuns& runs) {
  if (runs.seeds.empty()) throw ContractError("summarize: cell " + runs.model + "/" + runs.dataset + " has no seeds");
  ConsistencyReport r;
  r.model = runs.model;
  r.dataset = runs.dataset;
  r.n_examples = runs.seeds[0].outputs.size();

  std::vector<double> pcs, accs, f1s, xs, ys;
  for (const auto& s : runs.seeds) {
    if (s.gold.size() != s.outputs.size()) throw ContractError("summarize: gold labels not aligned with outputs");
    SeedMetrics m;
    m.seed = s.seed;
    m.prediction_consistency = prediction_consistency(s.outputs);
    const auto cc = confidence_consistency(s.outputs);
    m.pearson_x100 = cc.pearson_x100;
    m.mse_x1000 = cc.mse_x1000;
    std::vector<int> pred;
    for (const auto& o : s.outputs) {
      pred.push_back(o.label_l2r);
      xs.push_back(o.p_l2r[1]);
      ys.push_back(o.p_r2l[1]);
    }
    const auto cm = classification_metrics(pred, s.gold);
    m.accuracy = cm.accuracy;
    m.f1 = cm.f1;
    pcs.push_back(m.prediction_consistency);
    accs.push_back(m.accuracy);
    f1s.push_back(m.f1);
    r.per_seed.push_back(m);
  }
  std::tie(r.prediction_consistency, r.prediction_consistency_std) = mean_and_std(pcs);
  std::tie(r.accuracy, r.accuracy_std) = mean_and_std(accs);
  r.f1 = mean_and_std(f1s).first;
  const auto pooled = confidence_consistency(xs, ys);
  r.pearson_x100 = pooled.pearson_x100;
  r.mse_x1000 = pooled.mse_x1000;
  return r;
}

namespace {

bool aligned(const ModelRuns& a, const ModelRuns& b) {
  if (a.seeds.size() != b.seeds.size()) return false;
  for (std::size_t s = 0; s < a.seeds.size(); ++s) {
    if (a.seeds[s].seed != b.seeds[s].seed) return false;
    const auto& x = a.seeds[s].outputs;
    const auto& y = b.seeds[s].outputs;
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].example_id != y[i].example_id) return false;
    }
  }
  return true;
}

}  // namespace

ReportSet build_report(std::span<const ModelRuns> runs, const std::string& baseline_model) {
  ReportSet set;
  set.baseline_model = baseline_model;
  for (const auto& cell : runs) set.cells.push_back(summarize(cell));

  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (runs[i].model == baseline_model) continue;
    for (std::size_t j = 0; j < runs.size(); ++j) {
      if (runs[j].model != baseline_model || runs[j].dataset != runs[i].dataset) continue;
      if (!aligned(runs[i], runs[j])) break;
      std::vector<bool> agree_base, agree_model, right_base, right_model;
      for (std::size_t s = 0; s < runs[i].seeds.size(); ++s) {
        const auto& mb = runs[j].seeds[s];
        const auto& mm = runs[i].seeds[s];
        for (std::size_t e = 0; e < mm.outputs.size(); ++e) {
          agree_base.push_back(mb.outputs[e].label_l2r == mb.outputs[e].label_r2l);
          agree_model.push_back(mm.outputs[e].label_l2r == mm.outputs[e].label_r2l);
          right_base.push_back(mb.outputs[e].label_l2r == mb.gold[e]);
          right_model.push_back(mm.outputs[e].label_l2r == mm.gold[e]);
        }
      }
      set.cells[i].mcnemar_consistency = mcnemar_test(agree_base, agree_model, kSignificanceLevels);
      set.cells[i].mcnemar_accuracy = mcnemar_test(right_base, right_model, kSignificanceLevels);
      break;
    }
  }
  return set;
}

namespace {

std::string num(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

std::string opt_num(const std::optional<double>& x, int decimals) {
  return x ? num(*x, decimals) : std::string("undefined");
}

std::string p_text(double p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", p);
  return buf;
}

}  // namespace

std::string report_csv(const ReportSet& report) {
  std::ostringstream os;
  os << "model,dataset,pred_consistency_mean,pred_consistency_std,pearson_x100,mse_x1000,accuracy,f1,mcnemar_p\n";
  for (const auto& c : report.cells) {
    os << c.model << ',' << c.dataset << ',' << num(c.prediction_consistency, 4) << ','
       << num(c.prediction_consistency_std, 4) << ',' << opt_num(c.pearson_x100, 4) << ',' << num(c.mse_x1000, 4)
       << ',' << num(c.accuracy, 4) << ',' << num(c.f1, 4) << ','
       << (c.mcnemar_accuracy ? p_text(c.mcnemar_accuracy->p_value) : std::string("NA")) << '\n';
  }
  return os.str();
}

std::string report_table(const ReportSet& report) {
  std::ostringstream os;
  os << "# spreads are population standard deviations over seeds\n";
  char line[512];
  std::snprintf(line, sizeof line, "%-16s %-12s %-16s %-18s %-14s %-8s %-10s\n", "model", "dataset",
                "pred. consistency", "pearson [mse]", "acc / f1", "seeds", "mcnemar p");
  os << line;
  for (const auto& c : report.cells) {
    const std::string conf = opt_num(c.pearson_x100, 1) + " [" + num(c.mse_x1000, 2) + "]";
    const std::string cls = num(c.accuracy, 1) + " / " + num(c.f1, 1);
    const std::string p = c.mcnemar_consistency ? p_text(c.mcnemar_consistency->p_value) : "-";
    std::snprintf(line, sizeof line, "%-16s %-12s %-17s %-18s %-14s %-8zu %-10s\n", c.model.c_str(), c.dataset.c_str(),
                  format_mean_std(c.prediction_consistency, c.prediction_consistency_std).c_str(), conf.c_str(),
                  cls.c_str(), c.per_seed.size(), p.c_str());
    os << line;
  }
  return os.str();
}

namespace {

nlohmann::json opt_json(const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); }

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::json mcnemar_json(const std::optional<McNemarResult>& m) {
  if (!m) return nullptr;
  nlohmann::json sig = nlohmann::json::array();
  for (const auto& [a, s] : m->significant_at) sig.push_back({{"alpha", a}, {"significant", s}});
  return {{"b", m->b}, {"c", m->c}, {"statistic", m->statistic}, {"p_value", m->p_value},
          {"exact", m->exact}, {"significant_at", sig}};
}

std::optional<McNemarResult> mcnemar_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  McNemarResult m;
  m.b = j.at("b").get<std::size_t>();
  m.c = j.at("c").get<std::size_t>();
  m.statistic = j.at("statistic").get<double>();
  m.p_value = j.at("p_value").get<double>();
  m.exact = j.at("exact").get<bool>();
  for (const auto& s : j.at("significant_at")) {
    m.significant_at.emplace_back(s.at("alpha").get<double>(), s.at("significant").get<bool>());
  }
  return m;
}

}  // namespace

nlohmann::json report_to_json(const ReportSet& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : c.per_seed) {
      seeds.push_back({{"seed", s.seed},
                       {"prediction_consistency", s.prediction_consistency},
                       {"pearson_x100", opt_json(s.pearson_x100)},
                       {"mse_x1000", s.mse_x1000},
                       {"accuracy", s.accuracy},
                       {"f1", s.f1}});
    }
    cells.push_back({{"model", c.model},
                     {"dataset", c.dataset},
                     {"n_examples", c.n_examples},
                     {"prediction_consistency", c.prediction_consistency},
                     {"prediction_consistency_std", c.prediction_consistency_std},
                     {"pearson_x100", opt_json(c.pearson_x100)},
                     {"mse_x1000", c.mse_x1000},
                     {"accuracy", c.accuracy},
                     {"accuracy_std", c.accuracy_std},
                     {"f1", c.f1},
                     {"per_seed", seeds},
                     {"mcnemar_consistency", mcnemar_json(c.mcnemar_consistency)},
                     {"mcnemar_accuracy", mcnemar_json(c.mcnemar_accuracy)}});
  }
  nlohmann::json dis = nlohmann::json::array();
  for (const auto& d : report.disagreements) {
    dis.push_back({{"example_id", d.example_id},
                   {"text_a", d.text_a},
                   {"text_b", d.text_b},
                   {"gold", d.gold ? nlohmann::json(*d.gold) : nlohmann::json(nullptr)},
                   {"labels_l2r", d.labels_l2r},
                   {"labels_r2l", d.labels_r2l},
                   {"confidence_l2r", d.confidence_l2r},
                   {"confidence_r2l", d.confidence_r2l}});
  }
  return {{"stddev_convention", "population"},
          {"baseline_model", report.baseline_model},
          {"cells", cells},
          {"disagreements", dis}};
}

ReportSet report_from_json(const nlohmann::json& j) {
  ReportSet r;
  r.baseline_model = j.at("baseline_model").get<std::string>();
  for (const auto& c : j.at("cells")) {
    ConsistencyReport cr;
    cr.model = c.at("model").get<std::string>();
    cr.dataset = c.at("dataset").get<std::string>();
    cr.n_examples = c.at("n_examples").get<std::size_t>();
    cr.prediction_consistency = c.at("prediction_consistency").get<double>();
    cr.prediction_consistency_std = c.at("prediction_consistency_std").get<double>();
    cr.pearson_x100 = opt_from(c.at("pearson_x100"));
    cr.mse_x1000 = c.at("mse_x1000").get<double>();
    cr.accuracy = c.at("accuracy").get<double>();
    cr.accuracy_std = c.at("accuracy_std").get<double>();
    cr.f1 = c.at("f1").get<double>();
    for (const auto& s : c.at("per_seed")) {
      SeedMetrics m;
      m.seed = s.at("seed").get<std::uint64_t>();
      m.prediction_consistency = s.at("prediction_consistency").get<double>();
      m.pearson_x100 = opt_from(s.at("pearson_x100"));
      m.mse_x1000 = s.at("mse_x1000").get<double>();
      m.accuracy = s.at("accuracy").get<double>();
      m.f1 = s.at("f1").get<double>();
      cr.per_seed.push_back(m);
    }
    cr.mcnemar_consistency = mcnemar_from(c.at("mcnemar_consistency"));
    cr.mcnemar_accuracy = mcnemar_from(c.at("mcnemar_accuracy"));
    r.cells.push_back(std::move(cr));
  }
  for (const auto& d : j.at("disagreements")) {
    DisagreementRecord rec;
    rec.example_id = d.at("example_id").get<std::string>();
    rec.text_a = d.at("text_a").get<std::string>();
    rec.text_b = d.at("text_b").get<std::string>();
    if (!d.at("gold").is_null()) rec.gold = d.at("gold").get<int>();
    rec.labels_l2r = d.at("labels_l2r").get<std::vector<int>>();
    rec.labels_r2l = d.at("labels_r2l").get<std::vector<int>>();
    rec.confidence_l2r = d.at("confidence_l2r").get<std::vector<double>>();
    rec.confidence_r2l = d.at("confidence_r2l").get<std::vector<double>>();
    r.disagreements.push_back(std::move(rec));
  }
  return r;
}

void write_report_files(const ReportSet& report, const std::filesystem::path& json_path,
                        const std::filesystem::path& csv_path) {
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw DataError("cannot write report " + json_path.string());
  js << report_to_json(report).dump(2) << '\n';
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw DataError("cannot write report " + csv_path.string());
  csv << report_csv(report);
}

}  // namespace symcons
