#include "flowplug/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "flowplug/errors.hpp"

namespace flowplug {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman_rho: inputs differ in length");
  if (a.size() < 2) throw UndefinedResultError("spearman_rho: need at least two points");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;  // average ranks always sum to n(n+1)/2
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean, db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedResultError("spearman_rho: constant ranking");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

AttributeTable::AttributeTable(std::size_t m) : size(m), values(m * m, 0.0) {
  for (std::size_t i = 0; i < m; ++i) values[i * m + i] = kNaN;
}

double AttributeTable::off_diagonal_mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
      if (r != c && std::isfinite(at(r, c))) {
        sum += at(r, c);
        ++n;
      }
  return n ? sum / static_cast<double>(n) : kNaN;
}

double AttributeTable::row_mean(std::size_t row) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < size; ++c)
    if (c != row && std::isfinite(at(row, c))) {
      sum += at(row, c);
      ++n;
    }
  return n ? sum / static_cast<double>(n) : kNaN;
}

AccuracyResult accuracy_protocol(const FlowModel& model, const ProbeModel& probe,
                                 std::span<const StyleStack> eval,
                                 const MinimalEditParams& params) {
  const std::size_t m = probe.num_attributes();
  if (eval.empty()) throw DimensionError("accuracy_protocol: no evaluation stacks");
  AccuracyResult res;
  res.table.retention = AttributeTable(m);
  res.table.modification.assign(m, 0.0);
  res.table.attempts.assign(m, eval.size());
  res.table.nonconverged.assign(m, 0);
  const Matrix pre = probe.scores(eval);

  for (std::size_t j = 0; j < m; ++j) {
    std::vector<int> dirs(eval.size());
    for (std::size_t i = 0; i < eval.size(); ++i) dirs[i] = -probe_decision(pre(i, j));
    auto edits = minimal_edit_batch(model, eval, j, dirs, probe, params);
    std::vector<StyleStack> edited;
    edited.reserve(edits.size());
    for (auto& e : edits) edited.push_back(e.stack);
    const Matrix post = probe.scores(edited);

    std::size_t flipped = 0;
    std::vector<std::size_t> kept(m, 0), scored(m, 0);
    for (std::size_t i = 0; i < eval.size(); ++i) {
      if (!edits[i].converged) {
        res.table.nonconverged[j] += 1;
        continue;
      }
      if (probe_decision(post(i, j)) == dirs[i]) ++flipped;
      for (std::size_t a = 0; a < m; ++a) {
        if (a == j) continue;
        const int before = probe_decision(pre(i, a));
        if (before != probe_decision(eval[i].labels.at(a))) continue;
        scored[a] += 1;
        if (probe_decision(post(i, a)) == before) kept[a] += 1;
      }
    }
    res.table.modification[j] = 100.0 * static_cast<double>(flipped) / static_cast<double>(eval.size());
    for (std::size_t a = 0; a < m; ++a)
      if (a != j)
        res.table.retention.at(j, a) =
            scored[a] ? 100.0 * static_cast<double>(kept[a]) / static_cast<double>(scored[a]) : kNaN;
    res.edited.push_back(std::move(edited));
  }
  return res;
}

AttributeTable rank_matrix(const ProbeModel& probe, std::span<const StyleStack> before,
                           const std::vector<std::vector<StyleStack>>& edited) {
  const std::size_t m = probe.num_attributes();
  if (edited.size() != m) throw DimensionError("rank_matrix: one edited set per attribute required");
  AttributeTable table(m);
  const Matrix pre = probe.scores(before);
  for (std::size_t j = 0; j < m; ++j) {
    if (edited[j].size() != before.size())
      throw DimensionError("rank_matrix: edited set size differs from the evaluation set");
    const Matrix post = probe.scores(edited[j]);
    for (std::size_t a = 0; a < m; ++a) {
      if (a == j) continue;
      std::vector<double> x(before.size()), y(before.size());
      for (std::size_t i = 0; i < before.size(); ++i) {
        x[i] = pre(i, a);
        y[i] = post(i, a);
      }
      try {
        table.at(j, a) = spearman_rho(x, y);
      } catch (const UndefinedResultError&) {
        table.at(j, a) = kNaN;
      }
    }
  }
  return table;
}

namespace {

std::vector<StyleStack> reconstruct(const FlowModel& model, std::span<const StyleStack> stacks) {
  std::vector<const StyleStack*> ptrs;
  for (const auto& s : stacks) ptrs.push_back(&s);
  std::vector<std::size_t> cond;
  const Matrix w = stack_rows(ptrs, &cond);
  return stacks_from_rows(flow_inverse(model, flow_forward(model, w, cond).z, cond), ptrs);
}

}  // namespace

AttributeTable rank_protocol(const FlowModel& model, const ProbeModel& probe,
                             std::span<const StyleStack> eval,
                             std::span<const AttributeEdit> edits,
                             const MinimalEditParams& params) {
  const std::size_t m = probe.num_attributes();
  if (edits.size() != m) throw DimensionError("rank_protocol: one edit per attribute required");
  const Matrix pre = probe.scores(eval);
  std::vector<std::vector<StyleStack>> edited(m);
  for (std::size_t j = 0; j < m; ++j) {
    switch (edits[j].kind) {
      case AttributeEdit::Kind::Keep:
        edited[j] = reconstruct(model, eval);
        break;
      case AttributeEdit::Kind::Absolute:
        for (const auto& s : eval)
          edited[j].push_back(edit_attribute(model, s, {j, edits[j].target, EditMode::Absolute}));
        break;
      case AttributeEdit::Kind::Flip: {
        std::vector<int> dirs(eval.size());
        for (std::size_t i = 0; i < eval.size(); ++i) dirs[i] = -probe_decision(pre(i, j));
        for (auto& r : minimal_edit_batch(model, eval, j, dirs, probe, params))
          edited[j].push_back(std::move(r.stack));
        break;
      }
    }
  }
  return rank_matrix(probe, eval, edited);
}

DriftStats identity_drift(const MockBackbone& backbone, const SyntheticConfig& cfg,
                          std::span<const StyleStack> before, std::span<const StyleStack> after) {
  if (before.size() != after.size()) throw DimensionError("identity_drift: list lengths differ");
  const std::size_t m = cfg.num_attributes;
  const std::size_t d = cfg.identity_dim;
  const std::size_t nuis = cfg.nuisance_dim();
  DriftStats st;
  st.pairs = before.size();
  if (before.empty()) return st;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto fb = backbone_invert(backbone, before[i].codes).mean;
    const auto fa = backbone_invert(backbone, after[i].codes).mean;
    double id = 0.0, nu = 0.0;
    for (std::size_t t = m; t < m + d; ++t) id += (fa[t] - fb[t]) * (fa[t] - fb[t]);
    for (std::size_t t = m + d; t < cfg.dim; ++t) nu += (fa[t] - fb[t]) * (fa[t] - fb[t]);
    if (d) st.identity_mse += id / static_cast<double>(d);
    if (nuis) st.nuisance_mse += nu / static_cast<double>(nuis);
  }
  st.identity_mse /= static_cast<double>(before.size());
  st.nuisance_mse /= static_cast<double>(before.size());
  return st;
}

void EvalConfig::validate() const {
  edit.validate();
  probe.validate();
  if (max_eval_stacks < 2) throw ConfigError("eval: max_eval_stacks must be at least 2");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("eval: holdout_fraction must be in (0, 1)");
}

double EvalReport::mean_modification() const {
  if (accuracy.modification.empty()) return kNaN;
  return std::accumulate(accuracy.modification.begin(), accuracy.modification.end(), 0.0) /
         static_cast<double>(accuracy.modification.size());
}

double EvalReport::mean_identity_drift() const {
  if (drift.empty()) return kNaN;
  double s = 0.0;
  for (const auto& d : drift) s += d.identity_mse;
  return s / static_cast<double>(drift.size());
}

std::vector<std::string> EvalReport::warnings() const {
  std::vector<std::string> out;
  for (std::size_t a = 0; a < accuracy.modification.size(); ++a) {
    if (accuracy.modification[a] < 75.0)
      out.push_back("attr" + std::to_string(a) + ": modification success " +
                    std::to_string(accuracy.modification[a]) +
                    "% is close to chance; the flow may be untrained");
    if (accuracy.nonconverged[a] > 0)
      out.push_back("attr" + std::to_string(a) + ": " + std::to_string(accuracy.nonconverged[a]) +
                    " of " + std::to_string(accuracy.attempts[a]) +
                    " minimal edits did not reach the confidence threshold");
  }
  for (std::size_t a = 0; a < probe_heldout_accuracy.size(); ++a)
    if (probe_heldout_accuracy[a] < 90.0)
      out.push_back("attr" + std::to_string(a) + ": probe held-out accuracy " +
                    std::to_string(probe_heldout_accuracy[a]) + "% is low");
  return out;
}

EvalReport evaluate_model(const FlowModel& model, const ProbeModel& probe,
                          const MockBackbone& backbone, const SyntheticConfig& data_cfg,
                          std::span<const StyleStack> eval, const MinimalEditParams& params) {
  EvalReport rep;
  rep.num_attributes = probe.num_attributes();
  rep.num_eval_stacks = eval.size();
  rep.probe_heldout_accuracy = probe.heldout_accuracy;
  auto acc = accuracy_protocol(model, probe, eval, params);
  rep.accuracy = std::move(acc.table);
  rep.spearman = rank_matrix(probe, eval, acc.edited);
  for (const auto& edited : acc.edited)
    rep.drift.push_back(identity_drift(backbone, data_cfg, eval, edited));
  return rep;
}

std::vector<StyleStack> select_eval_stacks(const SyntheticDataset& ds, const EvalConfig& cfg) {
  const auto split = split_by_identity(ds, cfg.holdout_fraction);
  std::vector<StyleStack> out;
  for (std::size_t i = 0; i < split.eval.size() && out.size() < cfg.max_eval_stacks; ++i)
    out.push_back(ds.stacks[split.eval[i]]);
  return out;
}

std::vector<StyleStack> select_train_stacks(const SyntheticDataset& ds, const EvalConfig& cfg) {
  const auto split = split_by_identity(ds, cfg.holdout_fraction);
  std::vector<StyleStack> out;
  for (std::size_t i : split.train) out.push_back(ds.stacks[i]);
  return out;
}

// ---- report files ------------------------------------------------------------

namespace {

std::string attr_name(std::size_t a) { return "attr" + std::to_string(a); }

std::string cell(double v) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << v;
  return os.str();
}

nlohmann::json table_json(const AttributeTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < t.size; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < t.size; ++c) row.push_back(t.at(r, c));  // NaN dumps as null
    rows.push_back(row);
  }
  return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& dir,
                  const std::string& run_json) {
  std::filesystem::create_directories(dir);
  const std::size_t m = report.num_attributes;
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t a = 0; a < m; ++a) names.push_back(attr_name(a));
  nlohmann::json drift = nlohmann::json::array();
  for (const auto& d : report.drift)
    drift.push_back({{"identity_mse", d.identity_mse}, {"nuisance_mse", d.nuisance_mse}, {"pairs", d.pairs}});
  nlohmann::json j{{"format", kReportFormat},
                   {"attributes", names},
                   {"num_eval_stacks", report.num_eval_stacks},
                   {"probe_heldout_accuracy", report.probe_heldout_accuracy},
                   {"accuracy",
                    {{"retention", table_json(report.accuracy.retention)},
                     {"modification", report.accuracy.modification},
                     {"attempts", report.accuracy.attempts},
                     {"nonconverged", report.accuracy.nonconverged}}},
                   {"spearman", table_json(report.spearman)},
                   {"identity_drift", drift},
                   {"summary",
                    {{"mean_retention", report.mean_retention()},
                     {"mean_modification", report.mean_modification()},
                     {"mean_spearman", report.mean_spearman()},
                     {"mean_identity_drift", report.mean_identity_drift()}}},
                   {"warnings", report.warnings()},
                   {"run", run_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(run_json)}};
  write_text(dir / "report.json", j.dump(2) + "\n");

  std::ostringstream t1;
  t1 << "# " << kReportFormat << " identity drift\n";
  t1 << "edited,identity_mse,nuisance_mse,pairs\n";
  for (std::size_t a = 0; a < report.drift.size(); ++a)
    t1 << attr_name(a) << ',' << cell(report.drift[a].identity_mse) << ','
       << cell(report.drift[a].nuisance_mse) << ',' << report.drift[a].pairs << '\n';
  t1 << "avg," << cell(report.mean_identity_drift()) << ",-,-\n";
  write_text(dir / "table1_identity.csv", t1.str());

  std::ostringstream t2;
  t2 << "# " << kReportFormat << " retention accuracy\n";
  t2 << "edited";
  for (std::size_t a = 0; a < m; ++a) t2 << ',' << attr_name(a);
  t2 << ",avg,acc_of_modif,nonconverged\n";
  for (std::size_t r = 0; r < m; ++r) {
    t2 << attr_name(r);
    for (std::size_t c = 0; c < m; ++c) t2 << ',' << cell(report.accuracy.retention.at(r, c));
    t2 << ',' << cell(report.accuracy.retention.row_mean(r)) << ','
       << cell(report.accuracy.modification[r]) << ',' << report.accuracy.nonconverged[r] << '\n';
  }
  t2 << "avg";
  for (std::size_t c = 0; c < m; ++c) t2 << ",-";
  t2 << ',' << cell(report.mean_retention()) << ',' << cell(report.mean_modification()) << ",-\n";
  write_text(dir / "table2_accuracy.csv", t2.str());

  std::ostringstream t3;
  t3 << "# " << kReportFormat << " spearman rank correlation\n";
  t3 << "edited";
  for (std::size_t a = 0; a < m; ++a) t3 << ',' << attr_name(a);
  t3 << ",avg\n";
  for (std::size_t r = 0; r < m; ++r) {
    t3 << attr_name(r);
    for (std::size_t c = 0; c < m; ++c) t3 << ',' << cell(report.spearman.at(r, c));
    t3 << ',' << cell(report.spearman.row_mean(r)) << '\n';
  }
  write_text(dir / "table3_spearman.csv", t3.str());
}

}  // namespace flowplug
