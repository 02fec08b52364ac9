#include <optional>
#include <string>

#include <CLI11.hpp>

#include <symrl/cli.hpp>

int main(int argc, char** argv) {
  CLI::App app{"symrl: train, evaluate, and inspect mirror-regularized policies"};
  app.require_subcommand(1);

  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  int ckpt_every = 10;
  auto* train = app.add_subcommand("train", "run training per a JSON config");
  train->add_option("--config", train_config, "training config JSON")->required();
  train->add_option("--seed", train_seed, "override the config seed");
  train->add_option("--out", train_out, "output directory for this run")->required();
  train->add_option("--ckpt-every", ckpt_every, "checkpoint cadence in updates");

  std::string eval_ckpt, eval_env;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 0;
  std::optional<std::string> eval_out;
  auto* eval = app.add_subcommand("eval", "roll out a checkpoint with mean actions");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--env", eval_env, "environment kind")->required();
  eval->add_option("--episodes", eval_episodes, "number of episodes");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--out", eval_out, "directory for episodes.csv and replay.jsonl");

  std::string cg_config;
  bool cg_corrupt = false;
  auto* cg = app.add_subcommand("checkgrad", "finite-difference check of every loss term");
  cg->add_option("--config", cg_config, "training config JSON")->required();
  cg->add_flag("--corrupt", cg_corrupt, "perturb one analytic coordinate (must fail)")
      ->group("");  // hidden: negative-control hook for tests

  std::string exp_run, exp_what;
  auto* exp = app.add_subcommand("export", "derive CSV artifacts from a run directory");
  exp->add_option("--run", exp_run, "run or eval output directory")->required();
  exp->add_option("--what", exp_what, "curves or heatmap")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? symrl::kExitOk : symrl::kExitFail;
  }

  if (train->parsed()) return symrl::run_train(train_config, train_seed, train_out, ckpt_every);
  if (eval->parsed()) return symrl::run_eval(eval_ckpt, eval_env, eval_episodes, eval_seed, eval_out);
  if (cg->parsed()) return symrl::run_checkgrad(cg_config, cg_corrupt);
  if (exp->parsed()) return symrl::run_export(exp_run, exp_what);
  return symrl::kExitFail;
}
