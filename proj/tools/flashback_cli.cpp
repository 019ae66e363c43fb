#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "flashback/config_io.hpp"
#include "flashback/data.hpp"
#include "flashback/experiments.hpp"

namespace fs = std::filesystem;
using namespace flashback;

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const std::string item = text.substr(start, end - start);
    if (item.empty()) throw std::invalid_argument("empty entry in --seeds");
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad seed '" + item + "'");
    seeds.push_back(v);
    start = end + 1;
  }
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flashback PBS auction simulator and analytics"};
  app.option_defaults()->always_capture_default(false);

  std::string preset_name = "baseline";
  std::string config_path;
  std::string out_dir = "out";
  std::string seeds_text;
  std::int64_t rounds = -1;
  unsigned threads = 0;
  bool no_round_logs = false;
  std::string dataset_dir;
  std::string fixture_dir;

  app.add_option("--preset", preset_name, "Experiment preset")
      ->check(CLI::IsMember(experiments::preset_names()));
  app.add_option("--config", config_path, "Config file (key = value per line)")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--seeds", seeds_text, "Comma-separated seeds, one replication each (default 1..10)");
  app.add_option("--rounds", rounds, "Rounds per run")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");
  app.add_flag("--no-round-logs", no_round_logs, "Skip the per-round CSV files");
  app.add_option("--dataset", dataset_dir,
                 "Fit fee distributions from DIR/transactions.csv, DIR/blocks.csv, DIR/private_labels.txt");
  app.add_option("--write-fixture", fixture_dir, "Write a synthetic dataset to DIR and exit");

  std::map<std::string, std::string> field_values;
  for (const auto& key : config_field_names()) {
    if (key == "rounds" || key == "seed") continue;
    app.add_option("--" + key, field_values[key], "Config override");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (!fixture_dir.empty()) {
      fs::create_directories(fixture_dir);
      const auto ds = data::generate_fixture({});
      data::write_dataset(ds, fixture_dir + "/transactions.csv", fixture_dir + "/blocks.csv",
                          fixture_dir + "/private_labels.txt");
      std::cout << "wrote " << ds.txs.size() << " transactions (" << ds.private_hashes.size() << " private) to "
                << fixture_dir << "\n";
      return 0;
    }

    auto preset = experiments::make_preset(experiments::parse_preset_name(preset_name));
    if (!seeds_text.empty()) {
      preset.seeds = parse_seeds(seeds_text);
      preset.replications = static_cast<std::int64_t>(preset.seeds.size());
    }

    SimConfig config = experiments::preset_base(preset);
    if (!dataset_dir.empty()) {
      const auto loaded = data::load_dataset(dataset_dir + "/transactions.csv", dataset_dir + "/blocks.csv",
                                             dataset_dir + "/private_labels.txt");
      for (const auto& h : loaded.unknown_labels) std::cerr << "warning: label " << h << " matches no transaction\n";
      const auto fit = data::derive_sim_distributions(loaded.records);
      config = data::apply_fit(fit, config);
      std::cerr << "fitted: private fraction " << format_double(fit.private_count_fraction) << ", fee share "
                << format_double(fit.private_fee_share) << ", q " << format_double(config.q) << "\n";
    }
    if (!config_path.empty()) config = load_config_file(config_path, config);
    for (const auto& [key, value] : field_values)
      if (app.count("--" + key)) set_field(config, key, value);
    if (rounds >= 0) config.rounds = rounds;

    experiments::RunOptions options;
    options.write_round_logs = !no_round_logs;
    options.threads = threads;
    const auto outcome = experiments::run_preset(preset, out_dir, config, options);
    for (const auto& c : outcome.checks)
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << format_double(c.value) << ") " << c.detail
                << "\n";
    if (outcome.exit_status != 0 && preset.name == experiments::PresetName::analytic_check) {
      for (const auto& check : outcome.summary["checks"])
        for (const auto& f : check["failures"]) std::cerr << "failing point: " << f.dump() << "\n";
    }
    return outcome.exit_status;
  } catch (const ConfigError& e) {
    for (const auto& fe : e.errors()) std::cerr << "config error: " << fe.field << ": " << fe.message << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
