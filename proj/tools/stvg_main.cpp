#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "stvg/checkpoint.hpp"
#include "stvg/errors.hpp"
#include "stvg/gradcheck.hpp"
#include "stvg/harness.hpp"
#include "stvg/tape.hpp"

namespace {

using namespace stvg;

int cmd_gen_data(const std::string& config_path, const std::string& out_path,
                 std::size_t n_override, bool n_set, std::uint64_t seed_override,
                 bool seed_set) {
  harness::TrainConfig cfg = harness::load_config(config_path);
  const std::size_t n = n_set ? n_override : cfg.n_train;
  const std::uint64_t seed = seed_set ? seed_override : cfg.seed;
  auto samples = data::generate_dataset(cfg.dataset, n, seed);
  data::write_jsonl(out_path, samples);

  std::size_t solvable = 0;
  for (const auto& s : samples) {
    if (data::matched_filter_tiou(s, cfg.dataset) >= 0.9) ++solvable;
  }
  std::cout << "wrote " << samples.size() << " samples to " << out_path
            << " (seed " << seed << "); matched-filter tIoU >= 0.9 on "
            << 100.0 * static_cast<double>(solvable) / static_cast<double>(samples.size())
            << "% of them\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_prefix, const std::string& val_path) {
  harness::TrainConfig cfg = harness::load_config(config_path);
  auto train_set = data::read_jsonl(data_path);
  std::vector<data::SyntheticSample> val_set;
  if (!val_path.empty()) val_set = data::read_jsonl(val_path);

  auto result = harness::train(cfg, train_set, val_set, &std::cout);
  ckpt::save(out_prefix, result.model.named_params(), harness::config_to_json(cfg));
  std::cout << "finished " << cfg.steps << " steps: loss " << result.initial_loss << " -> "
            << result.final_loss << "; checkpoint at " << out_prefix << ".json/.bin\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_prefix, const std::string& data_path,
             const std::string& report_path) {
  auto loaded = ckpt::load(ckpt_prefix);
  harness::TrainConfig cfg = harness::config_from_json(loaded.config_json);
  Model model = Model::build(cfg.model, cfg.seed);
  loaded.load_into(model.named_params());

  auto samples = data::read_jsonl(data_path);
  auto report = harness::evaluate(model, samples);
  harness::write_report(report_path, report);
  std::cout << harness::report_to_json(report) << "\n";
  return 0;
}

int cmd_gradcheck(const std::string& config_path, double tol) {
  harness::TrainConfig cfg = harness::load_config(config_path);
  Model model = Model::build(cfg.model, cfg.seed);
  auto samples = data::generate_dataset(cfg.dataset, 2, Rng::mix(cfg.seed, 0x6c));

  // A few optimizer steps move the zero-initialized projections off their
  // exact zeros so every gradient path is live at the checked point.
  harness::Adam opt(model.trainable_params(), cfg.lr);
  for (int warm = 0; warm < 3; ++warm) {
    Tape tape;
    Tensor acc;
    for (const auto& s : samples) {
      auto lb = sample_loss(model.forward(s.batch), s.gt, cfg.weights, cfg.sigma);
      acc = acc.defined() ? ops::add(acc, lb.total) : lb.total;
    }
    tape.backward(acc);
    opt.step();
    model.zero_grads();
  }

  auto objective = [&] {
    Tensor acc;
    for (const auto& s : samples) {
      auto lb = sample_loss(model.forward(s.batch), s.gt, cfg.weights, cfg.sigma);
      acc = acc.defined() ? ops::add(acc, lb.total) : lb.total;
    }
    return acc;
  };
  GradCheckOptions opt_gc;
  opt_gc.tol = tol;
  auto params = model.trainable_params();
  auto report = grad_check(objective, params, opt_gc);
  std::cout << report.summary() << "\n";
  for (const auto& f : report.failures) {
    std::cout << "  " << f.tensor << "[" << f.index << "]: analytic " << f.analytic << " vs fd "
              << f.fd << " (rel " << f.rel_err << ")\n";
  }
  return report.pass ? 0 : 1;
}

int cmd_count_params(const std::string& config_path) {
  harness::TrainConfig cfg = harness::load_config(config_path);
  Model model = Model::build(cfg.model, cfg.seed);
  auto params = model.named_params();
  const std::size_t trainable = metrics::count_trainable_params(params);
  const std::size_t total = metrics::count_total_params(params);
  std::cout << "total " << total << "\n"
            << "frozen " << (total - trainable) << "\n"
            << "trainable " << trainable << "\n"
            << "trainable_fraction " << static_cast<double>(trainable) / static_cast<double>(total)
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parameter-efficient spatio-temporal video grounding, desk scale"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_path, val_path, ckpt_prefix, report_path;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double tol = 1e-4;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic JSONL dataset");
  gen->add_option("--config", config_path, "JSON training config")->required();
  gen->add_option("--out", out_path, "output JSONL path")->required();
  auto* n_opt = gen->add_option("--n", n, "sample count (default: n_train from the config)");
  auto* seed_opt = gen->add_option("--seed", seed, "dataset seed (default: seed from the config)");

  auto* train = app.add_subcommand("train", "Train adapters and heads on a dataset");
  train->add_option("--config", config_path, "JSON training config")->required();
  train->add_option("--data", data_path, "training JSONL")->required();
  train->add_option("--out", ckpt_prefix, "checkpoint prefix (writes .json and .bin)")
      ->required();
  train->add_option("--val", val_path, "optional validation JSONL for periodic metrics");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ckpt_prefix, "checkpoint prefix")->required();
  eval_cmd->add_option("--data", data_path, "evaluation JSONL")->required();
  eval_cmd->add_option("--report", report_path, "output report JSON")->required();

  auto* gc = app.add_subcommand("gradcheck",
                                "Check model gradients against finite differences");
  gc->add_option("--config", config_path, "JSON training config")->required();
  gc->add_option("--tol", tol, "max relative error")->capture_default_str();

  auto* cp = app.add_subcommand("count-params", "Print parameter counts for a config");
  cp->add_option("--config", config_path, "JSON training config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(config_path, out_path, n, !n_opt->empty(), seed, !seed_opt->empty());
    }
    if (train->parsed()) return cmd_train(config_path, data_path, ckpt_prefix, val_path);
    if (eval_cmd->parsed()) return cmd_eval(ckpt_prefix, data_path, report_path);
    if (gc->parsed()) return cmd_gradcheck(config_path, tol);
    if (cp->parsed()) return cmd_count_params(config_path);
  } catch (const stvg::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
