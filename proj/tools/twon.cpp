#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "twon/config.hpp"
#include "twon/harness.hpp"

namespace h = twon::harness;

namespace {

struct Overrides {
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> n;
  std::optional<int> k;
  std::optional<std::string> provider;
};

h::ExperimentConfig load(const std::string& path, const Overrides& o) {
  auto c = h::load_config(path);
  if (o.output_dir) c.output_dir = *o.output_dir;
  if (o.seed) {
    c.seed = *o.seed;
    c.metrics.seed = *o.seed;
    c.scorer.train.seed = *o.seed;
  }
  if (o.n) c.metrics.n = *o.n;
  if (o.k) c.metrics.k = *o.k;
  if (o.provider) {
    if (*o.provider != "stub" && *o.provider != "markov" && *o.provider != "remote")
      throw twon::ConfigError("unknown provider kind '" + *o.provider + "'");
    c.provider.kind = *o.provider;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twon: social network twin simulation and benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config (TOML)")->required();
    sub->add_option("-o,--output-dir", o.output_dir, "override output_dir");
    sub->add_option("--seed", o.seed, "override seed");
  };

  auto* evaluate = app.add_subcommand("evaluate", "score generated text against held-out references");
  add_common(evaluate);
  evaluate->add_option("--n", o.n, "samples per repetition");
  evaluate->add_option("--k", o.k, "repetitions");
  evaluate->add_option("--provider", o.provider, "stub | markov | remote");
  auto* train = app.add_subcommand("train-scorer", "train the reply-likelihood scorer");
  add_common(train);
  auto* simulate = app.add_subcommand("simulate", "run a simulation and emit the result bundle");
  add_common(simulate);
  simulate->add_option("--provider", o.provider, "stub | markov | remote");
  auto* fit = app.add_subcommand("fit-mechanics", "select the mechanics config closest to observed feeds");
  add_common(fit);
  auto* ingest = app.add_subcommand("ingest", "filter a raw corpus and split it by user");
  add_common(ingest);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto c = load(config_path, o);
    nlohmann::ordered_json out;
    out["status"] = "ok";
    out["output_dir"] = c.output_dir.string();
    if (*evaluate) {
      const auto r = h::cmd_evaluate(c);
      out["report"] = r.json_path.string();
      out["table"] = r.table_path.string();
      std::cout << twon::metrics::to_table(r.report);
    } else if (*train) {
      const auto r = h::cmd_train_scorer(c);
      out["params"] = r.params_path.string();
      out["train_f1"] = r.train_metrics.f1;
      out["test_f1"] = r.test_metrics.f1;
    } else if (*simulate) {
      const auto r = h::cmd_simulate(c);
      out["bundle"] = r.bundle_path.string();
      out["q"] = r.q;
      out["messages"] = r.run.transcript.size();
    } else if (*fit) {
      const auto r = h::cmd_fit_mechanics(c);
      out["config"] = twon::to_json(r.config);
      out["loss"] = r.loss;
    } else if (*ingest) {
      const auto r = h::cmd_ingest(c);
      out["kept"] = r.filtered.samples.size();
      out["train"] = r.train.samples.size();
      out["test"] = r.test.samples.size();
    }
    std::cout << out.dump() << '\n';
    return 0;
  } catch (const twon::Error& e) {
    std::cerr << h::error_json(e) << '\n';
    return h::exit_code(e.kind());
  } catch (const std::exception& e) {
    nlohmann::ordered_json j;
    j["error"] = {{"kind", "runtime"}, {"message", e.what()}, {"exit_code", 4}};
    std::cerr << j.dump() << '\n';
    return 4;
  }
}
