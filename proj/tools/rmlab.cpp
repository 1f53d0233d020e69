#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rmlab/error.hpp"
#include "rmlab/experiment.hpp"

namespace {

int fail(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rmlab: robust mean loss estimation for noisy-label training"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string suite = "all";

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Run seed (overrides run.seed)");
    sub->add_option("--out", out_dir, "Output directory (overrides out)");
  };
  CLI::App* inject = app.add_subcommand("inject", "Corrupt labels and write dataset containers");
  CLI::App* train = app.add_subcommand("train", "Train ce / rml / rml_semi");
  CLI::App* verify = app.add_subcommand("verify", "Run statistical checks");
  CLI::App* ablate = app.add_subcommand("ablate", "Estimator ablation over seeds");
  for (CLI::App* sub : {inject, train, verify, ablate}) add_common(sub);
  verify->add_option("--suite", suite, "prop1 | prop2 | cor1 | mom | all")
      ->check(CLI::IsMember({"prop1", "prop2", "cor1", "mom", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    rmlab::ExperimentConfig config = rmlab::load_config(config_path);
    if (seed) config.run.seed = *seed;
    if (!out_dir.empty()) config.out = out_dir;

    rmlab::CommandResult result;
    if (inject->parsed()) {
      result = rmlab::cmd_inject(config);
    } else if (train->parsed()) {
      result = rmlab::cmd_train(config);
    } else if (verify->parsed()) {
      result = rmlab::cmd_verify(config, suite);
    } else {
      result = rmlab::cmd_ablate(config);
    }
    std::cout << result.report.dump(2) << '\n';
    return result.exit_code;
  } catch (const rmlab::Error& e) {
    return fail(e.kind(), e.what());
  } catch (const std::exception& e) {
    return fail("internal", e.what());
  }
}
