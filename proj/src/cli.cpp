#include "flowplug/cli.hpp"

#include <filesystem>
#include <optional>

#include <CLI11.hpp>

#include "flowplug/config.hpp"
#include "flowplug/errors.hpp"
#include "flowplug/pipeline.hpp"
#include "flowplug/selftest.hpp"

namespace flowplug::cli {

namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--seed", f.seed, "Global seed (overrides the config file)");
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--out", f.out, "Output directory (overrides the config file)");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw fs::filesystem_error("config file not found", fs::path(f.config),
                                                          std::make_error_code(std::errc::no_such_file_or_directory));
    cfg = load_run_config(f.config);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out_dir = f.out;
  cfg.finalize();
  return cfg;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p))
    throw fs::filesystem_error(std::string(what) + " not found", p,
                               std::make_error_code(std::errc::no_such_file_or_directory));
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Identity-aware latent disentanglement with a conditional normalizing flow",
               "flowplug"};
  app.require_subcommand(1, 1);

  CommonFlags gen_f, train_f, edit_f, eval_f, self_f;
  std::string train_data, edit_data, edit_ckpt, edit_spec, eval_data, eval_ckpt;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset and its ground truth");
  add_common(gen, gen_f);

  auto* trn = app.add_subcommand("train", "Train the flow; writes checkpoint and loss CSV");
  add_common(trn, train_f);
  trn->add_option("--data", train_data, "Dataset JSONL (default: <out>/dataset.jsonl)");

  auto* edt = app.add_subcommand("edit", "Apply an edit spec to dataset stacks");
  add_common(edt, edit_f);
  edt->add_option("--data", edit_data, "Dataset JSONL (default: <out>/dataset.jsonl)");
  edt->add_option("--checkpoint", edit_ckpt, "Checkpoint (default: <out>/checkpoint.json)");
  edt->add_option("--spec", edit_spec, "Edit spec JSON")->required();

  auto* evl = app.add_subcommand("evaluate", "Run the evaluation protocols; writes report files");
  add_common(evl, eval_f);
  evl->add_option("--data", eval_data, "Dataset JSONL (default: <out>/dataset.jsonl)");
  evl->add_option("--checkpoint", eval_ckpt, "Checkpoint (default: <out>/checkpoint.json)");

  auto* slf = app.add_subcommand("selftest", "Check the numerical invariants of this build");
  add_common(slf, self_f);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  auto default_path = [](const std::string& given, const fs::path& fallback) {
    return given.empty() ? fallback : fs::path(given);
  };

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve_config(gen_f);
      const auto ds = run_gen_data(cfg);
      out << "wrote " << ds.stacks.size() << " stacks to " << run_paths(cfg.out_dir).dataset.string()
          << '\n';
    } else if (trn->parsed()) {
      const RunConfig cfg = resolve_config(train_f);
      const auto data = default_path(train_data, run_paths(cfg.out_dir).dataset);
      require_file(data, "dataset");
      const auto res = run_train(cfg, data, &out);
      out << "final loss " << res.checkpoint.final_loss << "; checkpoint "
          << run_paths(cfg.out_dir).checkpoint.string() << '\n';
    } else if (edt->parsed()) {
      const RunConfig cfg = resolve_config(edit_f);
      const auto paths = run_paths(cfg.out_dir);
      const auto data = default_path(edit_data, paths.dataset);
      const auto ckpt = default_path(edit_ckpt, paths.checkpoint);
      require_file(data, "dataset");
      require_file(ckpt, "checkpoint");
      require_file(edit_spec, "edit spec");
      const auto n = run_edit(cfg, data, ckpt, load_edit_spec(edit_spec));
      out << "wrote " << n << " edited stacks to " << paths.edited.string() << '\n';
    } else if (evl->parsed()) {
      const RunConfig cfg = resolve_config(eval_f);
      const auto paths = run_paths(cfg.out_dir);
      const auto data = default_path(eval_data, paths.dataset);
      const auto ckpt = default_path(eval_ckpt, paths.checkpoint);
      require_file(data, "dataset");
      require_file(ckpt, "checkpoint");
      const auto rep = run_evaluate(cfg, data, ckpt);
      out << "retention " << rep.mean_retention() << " modification " << rep.mean_modification()
          << " spearman " << rep.mean_spearman() << " identity drift " << rep.mean_identity_drift()
          << "; report in " << paths.report_dir.string() << '\n';
      for (const auto& w : rep.warnings()) err << "warning: " << w << '\n';
    } else if (slf->parsed()) {
      resolve_config(self_f);
      if (!run_selftest(out)) {
        err << "selftest failed\n";
        return kFailed;
      }
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const fs::filesystem_error& e) {
    err << "missing file: " << e.what() << '\n';
    return kMissingFile;
  } catch (const CorruptFileError& e) {
    err << "corrupt input: " << e.what() << '\n';
    return kBadInput;
  } catch (const VersionError& e) {
    err << "unsupported format: " << e.what() << '\n';
    return kBadInput;
  } catch (const ShapeError& e) {
    err << "shape mismatch: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}

}  // namespace flowplug::cli
