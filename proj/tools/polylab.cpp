// polylab: command-line driver. Each subcommand writes a run directory holding its CSVs,
// summary.json and manifest.txt, and exits 0 (checks pass), 2 (a check failed) or 1 (error).
#include <cstdio>
#include <exception>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "polylab/cli/commands.hpp"

namespace {

using namespace polylab;

int execute(const std::string& sub, const std::string& config_path, const std::vector<std::string>& sets,
            const std::string& run_dir, const cli::Options& opt) {
  Config cfg = cli::defaults_for(sub);
  if (!config_path.empty()) cfg.load(config_path);
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      throw ConfigError("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1), "--set");
  }

  auto dir = std::make_unique<RunDir>(run_dir.empty() ? RunDir(cfg.str("out.dir"), sub, cfg.seed("mc.seed"))
                                                       : RunDir::at(run_dir));

  try {
    cli::Outcome out = cli::dispatch(sub, cfg, opt);
    out.summary.subcommand = sub;
    out.summary.config_hash = config_hash(cfg);
    for (const auto& [name, content] : out.files) dir->write(name, content);
    dir->write("summary.json", out.summary.json());
    write_manifest(*dir, sub, cfg);
    std::cout << dir->path().string() << "\n" << (out.summary.pass ? "PASS " : "FAIL ") << sub << "\n";
    return out.summary.pass ? 0 : 2;
  } catch (const std::exception& e) {
    dir->write("error.txt", std::string(e.what()) + "\n");
    throw;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polylab: polymer-measure laboratory"};
  app.require_subcommand(1, 1);
  std::string config_path, run_dir;
  std::vector<std::string> sets;
  cli::Options opt;

  for (const auto& name : cli::subcommands()) {
    auto* s = app.add_subcommand(name);
    s->add_option("--config", config_path, "config file (key = value, [section] headers allowed)");
    s->add_option("--set", sets, "override one config key: --set model.beta=0.3");
    s->add_option("--run-dir", run_dir, "write outputs here instead of <out.dir>/<name>-<stamp>-s<seed>");
    if (name == "rd-scaling") {
      s->add_option("--p", opt.p, "moment order");
      s->add_option("--t-max", opt.t_max, "final time (overrides time.T)");
      s->add_option("--t-min", opt.t_min, "start of the fit window");
    }
    if (name == "qn-estimate" || name == "hierarchy-check") s->add_option("--n", opt.n, "correlation order");
    if (name == "hierarchy-check" || name == "generator-check" || name == "error-form")
      s->add_option("--f", opt.f, "test function: gaussian, square, constant, ramp");
    if (name == "error-form") s->add_option("--eps", opt.eps, "diffusive scale");
    if (name == "generator-check" || name == "msd-trend") s->add_option("--T-list", opt.T_list, "times")->delimiter(',');
    if (name == "closure-compare") s->add_option("--betas", opt.betas, "coupling sweep")->delimiter(',');
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    return execute(sub, config_path, sets, run_dir, opt);
  } catch (const std::exception& e) {
    std::cerr << "polylab " << sub << ": error: " << e.what() << "\n";
    return 1;
  }
}
