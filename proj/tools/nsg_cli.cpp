// nsg: variant generation, training, evaluation and analysis.

#include <CLI11.hpp>

#include <ext/stdio_filebuf.h>
#include <sys/wait.h>
#include <unistd.h>

#include <iostream>
#include <memory>

#include "nsg/experiment.hpp"

namespace {

using nsg::Experiment;
using nsg::ExperimentConfig;

/// Child process speaking the ExternalAgent line protocol on stdin/stdout.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw std::runtime_error("pipe failed");
    pid_ = fork();
    if (pid_ < 0) throw std::runtime_error("fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    out_buf_ = std::make_unique<__gnu_cxx::stdio_filebuf<char>>(to_child[1], std::ios::out);
    in_buf_ = std::make_unique<__gnu_cxx::stdio_filebuf<char>>(from_child[0], std::ios::in);
    out_ = std::make_unique<std::ostream>(out_buf_.get());
    in_ = std::make_unique<std::istream>(in_buf_.get());
  }

  ~ChildProcess() {
    out_.reset();
    out_buf_.reset();  // closes the child's stdin
    in_.reset();
    in_buf_.reset();
    int status = 0;
    waitpid(pid_, &status, 0);
  }

  std::istream& from() { return *in_; }
  std::ostream& to() { return *out_; }

 private:
  pid_t pid_ = -1;
  std::unique_ptr<__gnu_cxx::stdio_filebuf<char>> out_buf_;
  std::unique_ptr<__gnu_cxx::stdio_filebuf<char>> in_buf_;
  std::unique_ptr<std::ostream> out_;
  std::unique_ptr<std::istream> in_;
};

void print_metrics(const std::string& label, const nsg::RunMetrics& m) {
  std::cout << label << ": episodes=" << m.episodes << " win_rate=" << m.win_rate << " (+/- " << m.win_rate_std
            << ") return=" << m.mean_return << " steps=" << m.mean_steps << " win_steps=" << m.mean_win_steps << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network attack simulation: train and evaluate attacker agents"};
  app.require_subcommand(1);

  std::string config_path = "configs/experiment.json";
  std::string out_root = "out";
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "experiment config (JSON)");
  app.add_option("--out", out_root, "output root; results go to <out>/<experiment name>");
  app.add_option("--seed", seed, "override the master seed");

  auto* gen = app.add_subcommand("gen-variants", "write the six IP-range variants");
  auto* oracle = app.add_subcommand("oracle-check", "scripted oracle must win every variant in 5 steps");

  std::string agent;
  std::optional<int> episodes;
  std::optional<int> train_variant;
  auto* train = app.add_subcommand("train", "train an agent on the five training variants");
  train->add_option("--agent", agent, "agent name")->required();
  train->add_option("--episodes", episodes, "training budget (per variant; meta agents: total episodes)");
  train->add_option("--train-variant", train_variant, "train on this single variant instead");

  int variant = ExperimentConfig::kTestVariant;
  std::string adapt = "on";
  std::string agent_cmd;
  std::optional<std::string> checkpoint;
  auto* eval = app.add_subcommand("eval", "frozen evaluation on one variant");
  eval->add_option("--agent", agent, "agent name")->required();
  eval->add_option("--episodes", episodes, "evaluation episodes");
  eval->add_option("--variant", variant, "variant index (5 = held-out test variant)");
  eval->add_option("--train-variant", train_variant, "use the checkpoint trained on this single variant");
  eval->add_option("--adapt", adapt, "meta agents: test-time adaptation on|off")->check(CLI::IsMember({"on", "off"}));
  eval->add_option("--agent-cmd", agent_cmd, "command for the external agent");
  eval->add_option("--checkpoint", checkpoint, "checkpoint path");

  std::vector<std::string> inputs;
  auto* analyze = app.add_subcommand("analyze", "behavioral signatures and comparison table from traces");
  analyze->add_option("traces", inputs, "trace files or directories")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = ExperimentConfig::load(config_path);
    if (seed) cfg.master_seed = *seed;
    const Experiment exp(cfg, out_root);

    if (gen->parsed()) {
      for (const auto& p : exp.gen_variants()) std::cout << p.string() << '\n';
    } else if (oracle->parsed()) {
      exp.oracle_check();
      std::cout << "oracle: all " << exp.variants().size() << " variants won in 5 steps with return 95\n";
    } else if (train->parsed()) {
      std::cout << exp.train(agent, episodes, train_variant).string() << '\n';
    } else if (eval->parsed()) {
      nsg::EvalOptions opt;
      opt.episodes = episodes;
      opt.variant = variant;
      opt.train_variant = train_variant;
      opt.adapt = adapt == "on";
      if (checkpoint) opt.checkpoint = *checkpoint;
      std::unique_ptr<ChildProcess> child;
      std::unique_ptr<nsg::ExternalAgent> external;
      if (agent == "external") {
        if (agent_cmd.empty()) throw nsg::UsageError("external agent needs --agent-cmd");
        child = std::make_unique<ChildProcess>(agent_cmd);
        external = std::make_unique<nsg::ExternalAgent>(child->from(), child->to());
        opt.external = external.get();
      }
      print_metrics(agent + " on variant " + std::to_string(variant), exp.eval(agent, opt));
    } else if (analyze->parsed()) {
      std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
      for (const auto& [name, m] : exp.analyze(paths)) print_metrics(name, m);
    }
  } catch (const nsg::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
