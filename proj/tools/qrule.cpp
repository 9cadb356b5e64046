#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qrule/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Exact quantization rule: spectra and rule verification"};
  std::string config_path;
  std::string job;
  std::string csv;
  bool quiet = false;
  app.add_option("config", config_path, "Config file")->required();
  app.add_option("--job", job, "Override job.type (spectrum|verify|scan|films)");
  app.add_option("--csv", csv, "Override output.csv");
  app.add_flag("--quiet", quiet, "No table on stdout");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : qrule::cli::kExitConfig;
  }

  qrule::cli::JobConfig cfg;
  try {
    cfg = qrule::cli::load_config(config_path);
    if (!job.empty()) cfg.job = qrule::cli::parse_job_type(job, "--job", 0);
  } catch (const qrule::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return qrule::cli::kExitConfig;
  }
  if (!csv.empty()) cfg.csv_path = csv;
  return qrule::cli::run(cfg, std::cout, std::cerr, quiet);
}
