#include <string>

#include <CLI11.hpp>

#include "asymm/config.hpp"
#include "asymm/driver.hpp"

namespace {

void add_common_flags(CLI::App* app, asymm::run_config& cfg, std::string& config_path) {
  app->add_option("--config", config_path, "key=value config file; flags override it");
  app->add_option("--scenario", cfg.scenario, "digit_parity | document | toy_consensus");
  app->add_option("--seed", cfg.seed, "run seed");
  app->add_option("--iters", cfg.iterations, "total awakening events");
  app->add_option("--alpha", cfg.alpha, "gradient stepsize");
  app->add_option("--gamma", cfg.gamma, "penalty growth factor");
  app->add_option("--beta", cfg.beta, "tolerance shrink factor");
  app->add_option("--eps0", cfg.eps0, "initial gradient tolerance");
  app->add_option("--eps-min", cfg.eps_min, "tolerance floor");
  app->add_option("--penalty-cap", cfg.penalty_cap, "penalty parameter cap");
  app->add_option("--weight-decay", cfg.weight_decay, "weight decay coefficient");
  app->add_option("--output-bias", cfg.output_bias, "initial output bias");
  app->add_option("--repeats", cfg.repeats, "repeated runs with varied data seeds");
  app->add_option("--out", cfg.out_dir, "output directory");
  app->add_option("--graph", cfg.graph_spec, "ring | path | complete | random | file:<path>");
  app->add_option("--data", cfg.data, "synthetic | <dir> | idx:<images>:<labels>");
  app->add_option("--sup-per-node", cfg.sup_per_node, "digit: supervised samples per node");
  app->add_option("--unsup-per-node", cfg.unsup_per_node, "digit: unsupervised samples per node");
  app->add_option("--feature-dim", cfg.feature_dim, "digit: synthetic feature dimension");
  app->add_option("--hidden", cfg.hidden, "digit: hidden units");
  app->add_option("--test-per-class", cfg.test_per_class, "digit: held-out samples per class");
  app->add_option("--blob-sigma", cfg.blob_sigma, "digit: class blob spread");
  app->add_flag("--supervised-only", [&cfg](std::int64_t) { cfg.use_unsupervised = false; },
                "digit: drop the unsupervised samples");
  app->add_option("--doc-sup-per-node", cfg.doc_sup_per_node, "document: positives per node");
  app->add_option("--doc-unsup-total", cfg.doc_unsup_total, "document: unsupervised pool size");
  app->add_option("--doc-hidden", cfg.doc_hidden, "document: hidden units (0 = single layer)");
  app->add_option("--words-per-class", cfg.words_per_class, "document: vocabulary block size");
  app->add_flag("--no-diagnostics", [&cfg](std::int64_t) { cfg.diagnostics = false; },
                "skip per-event diagnostics");
  app->add_option("--mm-schedule", cfg.mm_schedule_file, "compare: explicit block schedule file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asymm: asynchronous method of multipliers for distributed learning from constraints"};
  app.require_subcommand(1);

  asymm::run_config cfg;
  std::string config_path;

  auto* run = app.add_subcommand("run", "build a scenario, run the distributed optimizer");
  auto* compare = app.add_subcommand("compare", "run distributed and centralized side by side");
  auto* gen = app.add_subcommand("gen-data", "write synthetic scenario data files");
  auto* check = app.add_subcommand("check-grad", "finite-difference gradient verification");
  for (auto* sub : {run, compare, gen, check}) add_common_flags(sub, cfg, config_path);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      // flags already parsed into cfg win over file values: parse file
      // into a fresh config, then re-parse argv on top of it
      asymm::run_config file_cfg = asymm::load_config_file(config_path);
      cfg = file_cfg;
      CLI::App reparse{"asymm"};
      reparse.require_subcommand(1);
      std::string ignored;
      auto* r2 = reparse.add_subcommand("run", "");
      auto* c2 = reparse.add_subcommand("compare", "");
      auto* g2 = reparse.add_subcommand("gen-data", "");
      auto* k2 = reparse.add_subcommand("check-grad", "");
      for (auto* sub : {r2, c2, g2, k2}) add_common_flags(sub, cfg, ignored);
      try {
        reparse.parse(argc, argv);
      } catch (const CLI::ParseError& e) {
        return reparse.exit(e);
      }
    }
  } catch (const asymm::invalid_config& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  if (app.got_subcommand(run)) return asymm::cmd_run(cfg);
  if (app.got_subcommand(compare)) return asymm::cmd_compare(cfg);
  if (app.got_subcommand(gen)) return asymm::cmd_gen_data(cfg);
  if (app.got_subcommand(check)) return asymm::cmd_check_grad(cfg);
  return 2;
}
