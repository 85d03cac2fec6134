// Command-line front end: `sweepnet run <config>` and `sweepnet scan <config>`.
// Exit codes: 0 success, 2 bad config or model, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sweepnet/sweepnet.hpp"

namespace {

constexpr int kConfigFailure = 2;
constexpr int kNumericalFailure = 3;

struct Common {
  std::string config;
  std::string out = ".";
  double tolerance = 0.0;
  unsigned threads = 1;
};

sweepnet::ScenarioConfig load(const Common& o) {
  auto c = sweepnet::load_config(o.config);
  if (o.tolerance > 0.0) {
    // Re-resolve so scan overrides inherit the command-line tolerance.
    c.root["solver"]["tolerance"] = o.tolerance;
    c = sweepnet::detail::resolve(c.root, o.config);
  }
  return c;
}

int report(const sweepnet::RunSummary& s, const std::string& out) {
  for (const auto& f : s.files) std::cout << (std::filesystem::path(out) / f).string() << "\n";
  if (!s.identity_ok) {
    std::cerr << "error: current identity residual exceeds " << sweepnet::kIdentityTolerance
              << " (see manifest)\n";
    return kNumericalFailure;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Charge pumping through a dot coupled to a network of levels"};
  app.set_version_flag("--version", std::string(sweepnet::kVersion));
  app.require_subcommand(1);

  Common run_opt, scan_opt;
  auto add_common = [](CLI::App* sub, Common& o) {
    sub->add_option("config", o.config, "YAML scenario file")->required();
    sub->add_option("-o,--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--tolerance", o.tolerance,
                    "Local error bound per integrator step (overrides solver.tolerance)")
        ->check(CLI::PositiveNumber);
  };
  auto* run = app.add_subcommand("run", "Run one scenario");
  add_common(run, run_opt);
  auto* scan = app.add_subcommand("scan", "Run a scenario for every value of scan.values");
  add_common(scan, scan_opt);
  scan->add_option("-j,--threads", scan_opt.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigFailure;
  }

  try {
    if (*run) {
      const auto c = load(run_opt);
      return report(sweepnet::run_to_directory(c, run_opt.out), run_opt.out);
    }
    const auto c = load(scan_opt);
    if (!c.scan) throw sweepnet::ConfigError(c.source + ": field 'scan': is required for scan");
    return report(sweepnet::scan_to_directory(c, scan_opt.out, scan_opt.threads), scan_opt.out);
  } catch (const sweepnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const sweepnet::InvalidModel& e) {
    std::cerr << "invalid model: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const sweepnet::QuadratureError& e) {
    std::cerr << "numerical failure: " << e.what() << " (error estimate " << e.estimate() << ")\n";
    return kNumericalFailure;
  } catch (const sweepnet::PropagationError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const sweepnet::PoleError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const sweepnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
