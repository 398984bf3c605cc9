#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "flowplug/editing.hpp"
#include "flowplug/flow.hpp"
#include "flowplug/probe.hpp"
#include "flowplug/synthetic.hpp"

namespace flowplug {

inline constexpr const char* kReportFormat = "flowplug-report-v1";

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

// Spearman's rho as the Pearson correlation of average ranks. Throws
// UndefinedResultError for fewer than two points or a constant input.
double spearman_rho(std::span<const double> a, std::span<const double> b);

// Square M x M table; the diagonal (edited == observed) is NaN.
struct AttributeTable {
  std::size_t size = 0;
  std::vector<double> values;

  explicit AttributeTable(std::size_t m = 0);
  double& at(std::size_t row, std::size_t col) { return values[row * size + col]; }
  double at(std::size_t row, std::size_t col) const { return values[row * size + col]; }
  double off_diagonal_mean() const;
  double row_mean(std::size_t row) const;
};

struct AccuracyTable {
  AttributeTable retention;           // percent, rows = edited attribute
  std::vector<double> modification;   // percent of edits that flipped the decision
  std::vector<std::size_t> attempts;  // edits tried per attribute
  std::vector<std::size_t> nonconverged;
};

struct AccuracyResult {
  AccuracyTable table;
  // edited[j][i] is eval stack i after the minimal flip of attribute j.
  std::vector<std::vector<StyleStack>> edited;
};

// For every attribute j and every stack, flip the probe's current decision on
// j with minimal_edit. Non-converged edits count as modification failures and
// are left out of the retention cells. Retention of attribute a is scored
// only on stacks whose pre-edit decision on a agreed with the label.
AccuracyResult accuracy_protocol(const FlowModel& model, const ProbeModel& probe,
                                 std::span<const StyleStack> eval,
                                 const MinimalEditParams& params);

// Spearman matrix from caller-supplied edited stacks: entry (j, a) compares
// the probe ranking on attribute a before and after the edit of attribute j.
AttributeTable rank_matrix(const ProbeModel& probe, std::span<const StyleStack> before,
                           const std::vector<std::vector<StyleStack>>& edited);

struct AttributeEdit {
  enum class Kind { Flip, Absolute, Keep };
  Kind kind = Kind::Flip;
  double target = 0.0;  // used by Absolute
};

// Applies edits[j] to attribute j of every eval stack and ranks as above.
// Keep reconstructs the stack through the flow without changing anything.
AttributeTable rank_protocol(const FlowModel& model, const ProbeModel& probe,
                             std::span<const StyleStack> eval,
                             std::span<const AttributeEdit> edits,
                             const MinimalEditParams& params);

struct DriftStats {
  double identity_mse = 0.0;  // mean over pairs of mean squared identity-embedding change
  double nuisance_mse = 0.0;
  std::size_t pairs = 0;
};

// Recovers factors of both stacks with the backbone inverse (averaged over
// layers) and compares identity embedding and nuisance blocks.
DriftStats identity_drift(const MockBackbone& backbone, const SyntheticConfig& cfg,
                          std::span<const StyleStack> before, std::span<const StyleStack> after);

struct EvalConfig {
  MinimalEditParams edit;
  ProbeConfig probe;
  std::size_t max_eval_stacks = 200;
  double holdout_fraction = 0.2;

  void validate() const;
  bool operator==(const EvalConfig&) const = default;
};

struct EvalReport {
  std::size_t num_attributes = 0;
  std::size_t num_eval_stacks = 0;
  std::vector<double> probe_heldout_accuracy;
  AccuracyTable accuracy;
  AttributeTable spearman;
  std::vector<DriftStats> drift;  // one row per edited attribute

  double mean_retention() const { return accuracy.retention.off_diagonal_mean(); }
  double mean_modification() const;
  double mean_spearman() const { return spearman.off_diagonal_mean(); }
  double mean_identity_drift() const;
  // Human-readable flags for results that should not be trusted at face
  // value: low modification success (e.g. an untrained flow), non-converged
  // edits, or a weak probe.
  std::vector<std::string> warnings() const;
};

// Runs all three protocols on the evaluation stacks using minimal flips.
EvalReport evaluate_model(const FlowModel& model, const ProbeModel& probe,
                          const MockBackbone& backbone, const SyntheticConfig& data_cfg,
                          std::span<const StyleStack> eval, const MinimalEditParams& params);

// First max_eval_stacks stacks of the held-out identities.
std::vector<StyleStack> select_eval_stacks(const SyntheticDataset& ds, const EvalConfig& cfg);
std::vector<StyleStack> select_train_stacks(const SyntheticDataset& ds, const EvalConfig& cfg);

// Writes report.json plus one CSV per table into dir. `extra` is merged into
// the JSON under "run" (config snapshot, seeds).
void write_report(const EvalReport& report, const std::filesystem::path& dir,
                  const std::string& run_json);

}  // namespace flowplug
