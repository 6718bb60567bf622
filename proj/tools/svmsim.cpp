// svmsim command line: simulate, compile, selftest.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "oracles/reference_rb.hpp"
#include "oracles/split_oracle.hpp"
#include "oracles/tlb_replay.hpp"
#include "svmsim/dsl/parser.hpp"
#include "svmsim/dsl/printer.hpp"
#include "svmsim/harness.hpp"
#include "svmsim/pht/compiler.hpp"
#include "svmsim/retirement_buffer.hpp"

// Test-only mutation: a build with this set reissues failed bursts youngest
// first, which selftest must catch.
#ifndef SVMSIM_MUTATE_REISSUE_ORDER
#define SVMSIM_MUTATE_REISSUE_ORDER 0
#endif

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2 };

int simulate(const std::string& config_path, const std::vector<std::string>& overrides) {
  svmsim::harness::Config cfg;
  try {
    cfg = svmsim::harness::load_file(config_path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "svmsim: invalid config: " << e.what() << "\n";
    return kUsage;
  }
  const auto rows = svmsim::harness::run_sweep(cfg);
  const auto path = svmsim::harness::output_path(cfg, std::getenv(svmsim::harness::kOutputDirEnv));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) {
    std::cerr << "svmsim: cannot write " << path << "\n";
    return kFailure;
  }
  svmsim::harness::write_csv(out, cfg.workload, rows);
  std::cout << cfg.workload << ": " << rows.size() << " rows -> " << path.string() << "\n";
  svmsim::harness::write_summary(std::cout, rows);
  int rc = kOk;
  for (const auto& r : rows)
    if (!r.metrics.ok) {
      std::cerr << "failed point " << to_string(r.setup.mode) << " " << r.setup.label() << " @ " << r.intensity
                << ": " << r.metrics.status << ": " << r.metrics.detail << "\n";
      rc = kFailure;
    }
  return rc;
}

int compile(const std::string& file, const std::string& emit) {
  std::ifstream in(file);
  if (!in) {
    std::cerr << "svmsim: cannot open '" << file << "'\n";
    return kUsage;
  }
  std::stringstream text;
  text << in.rdbuf();
  try {
    const auto kernel = svmsim::dsl::parse(text.str());
    if (emit == "ast") {
      std::cout << svmsim::dsl::dump_ast(kernel);
      return kOk;
    }
    const auto compiled = svmsim::pht::compile(kernel);
    if (emit == "ddg") std::cout << compiled.ddg.dump(kernel.name);
    else std::cout << svmsim::dsl::to_source(compiled.helper);
  } catch (const svmsim::dsl::CompileError& e) {
    std::cerr << file << ":" << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}

struct Check {
  std::string name;
  std::string failure;  // empty when passed
  std::string note;
};

int selftest(const std::string& config_path, const std::vector<std::string>& overrides, std::uint64_t seed) {
  svmsim::harness::Config cfg;
  try {
    cfg = config_path.empty() ? svmsim::harness::load(nlohmann::json::object(), overrides)
                              : svmsim::harness::load_file(config_path, overrides);
  } catch (const std::exception& e) {
    std::cerr << "svmsim: invalid config: " << e.what() << "\n";
    return kUsage;
  }
  std::vector<Check> checks;

  {
    const auto r = oracle::fuzz_retirement_buffer(seed, 20000, 60, cfg.sim.dma.max_in_flight,
                                                  SVMSIM_MUTATE_REISSUE_ORDER != 0);
    checks.push_back({"retirement-buffer fuzz", r.failure,
                      std::to_string(r.sequences) + " sequences, " + std::to_string(r.reissues) + " reissues"});
  }
  {
    const auto d = oracle::tlb_replay_divergence(seed, 100000);
    checks.push_back({"tlb replay", d ? "diverged at access " + std::to_string(*d) : "", "100000 accesses"});
  }
  {
    const auto s = oracle::sweep_split();
    checks.push_back({"burst split", s.first_failure, std::to_string(s.cases) + " cases"});
  }
  {
    // Independent recomputation from the field widths of one entry.
    const std::uint64_t entry_bits = 32 + 16 + 3 + 8 + 3;
    const std::uint64_t entries = cfg.sim.dma.max_in_flight;
    const std::uint64_t meta = entries * ((entry_bits + 7) / 8);
    const std::uint64_t data = entries * cfg.sim.dma.max_burst;
    const auto f = svmsim::rb_footprint(cfg.sim.dma);
    std::string bad;
    if (f.metadata_bits != entries * entry_bits || f.metadata_bytes != meta || f.data_bytes != data ||
        f.factor != data / meta)
      bad = "metadata arithmetic mismatch";
    checks.push_back({"memory arithmetic", bad,
                      std::to_string(meta) + " B metadata vs " + std::to_string(data) + " B data, factor " +
                          std::to_string(data / meta)});
  }

  int rc = kOk;
  for (const auto& c : checks) {
    if (c.failure.empty()) {
      std::cout << "PASS " << c.name << " (" << c.note << ")\n";
    } else {
      std::cout << "FAIL " << c.name << ": " << c.failure << "\n";
      rc = kFailure;
    }
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid-IOMMU shared virtual memory simulator"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  auto* sim = app.add_subcommand("simulate", "Run a configuration sweep and write the results CSV");
  sim->add_option("--config", config, "Config document (JSON)")->required();
  sim->add_option("--override", overrides, "dotted.key=value, applied after the config file");

  std::string kernel, emit = "pht";
  auto* comp = app.add_subcommand("compile", "Print the AST, DDG or generated helper of a kernel");
  comp->add_option("kernel", kernel, "Kernel source file")->required();
  comp->add_option("--emit", emit, "ast | ddg | pht")->check(CLI::IsMember({"ast", "ddg", "pht"}));

  std::string st_config;
  std::vector<std::string> st_overrides;
  std::uint64_t seed = 1;
  auto* st = app.add_subcommand("selftest", "Run the built-in mechanism checks");
  st->add_option("--config", st_config, "Config document whose DMA parameters are checked");
  st->add_option("--override", st_overrides, "dotted.key=value");
  st->add_option("--seed", seed, "Fuzz seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }
  if (*sim) return simulate(config, overrides);
  if (*comp) return compile(kernel, emit);
  return selftest(st_config, st_overrides, seed);
}
