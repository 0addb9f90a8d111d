// sifm — synthetic sea-ice concentration forecasting pipeline.
//
// Subcommands: gen, train, eval, forecast, gradcheck, ablate. Global flags
// --config/--seed/--threads are accepted before or after the subcommand.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 checkpoint error,
// 5 internal check failure.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sifm/checkpoint.hpp"
#include "sifm/config.hpp"
#include "sifm/errors.hpp"
#include "sifm/gradcheck.hpp"
#include "sifm/metrics.hpp"
#include "sifm/model.hpp"
#include "sifm/pgm.hpp"
#include "sifm/sicio.hpp"
#include "sifm/trainer.hpp"

namespace fs = std::filesystem;
using namespace sifm;

namespace {

std::string pick_path(const std::string& flag, const std::string& from_config,
                      const char* need) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  throw ConfigError(need);
}

void ensure_parent_dir(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw FormatError("write failed for '" + path + "'");
}

// A config problem should exit 2 even when the underlying failure is an
// unreadable file, so the loader's FormatError is re-branded here.
RunConfig load_config_or_die(const std::string& path, const std::optional<std::uint64_t>& seed) {
  if (path.empty()) throw ConfigError("--config is required for this command");
  RunConfig cfg;
  try {
    cfg = load_run_config(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  if (seed) {
    cfg.synth.rng_seed = *seed;
    cfg.train.rng_seed = *seed;
  }
  cfg.validate();
  return cfg;
}

// Checkpoint bytes that fail to parse are still a checkpoint problem (exit 4),
// not a data problem.
Checkpoint load_checkpoint_or_die(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const FormatError& e) {
    throw CheckpointError(e.what());
  }
}

ModelConfig model_config_for(const RunConfig& cfg, const SicSeries& series) {
  ModelConfig m;
  m.height = series.height();
  m.width = series.width();
  m.codec = cfg.codec;
  m.fusion = cfg.fusion;
  return m;
}

void check_grid_matches(const Checkpoint& ck, const SicSeries& series) {
  if (series.height() != ck.config.height || series.width() != ck.config.width) {
    throw CheckpointError("checkpoint expects a " + std::to_string(ck.config.height) + "x" +
                          std::to_string(ck.config.width) + " grid, data is " +
                          std::to_string(series.height()) + "x" +
                          std::to_string(series.width()));
  }
}

void cmd_gen(const RunConfig& cfg, const std::string& out_flag) {
  const std::string out = pick_path(out_flag, cfg.data_path, "gen: set --out or paths.data");
  const SicSeries series = synth_generate(cfg.synth);
  ensure_parent_dir(out);
  save_grid_file(series, out);
  std::cout << "wrote " << out << ": " << series.num_days() << " days, " << series.height()
            << "x" << series.width() << ", seed " << cfg.synth.rng_seed << "\n";
}

void cmd_train(const RunConfig& cfg, const std::string& data_flag, const std::string& out_flag,
               std::string log_path) {
  const std::string data = pick_path(data_flag, cfg.data_path, "train: set --data or paths.data");
  const std::string out =
      pick_path(out_flag, cfg.checkpoint_path, "train: set --out or paths.checkpoint");
  const SicSeries series = load_grid_file(data);
  const ModelConfig mcfg = model_config_for(cfg, series);

  TrainResult res = train(series, mcfg, cfg.train, &std::cout);

  ensure_parent_dir(out);
  save_checkpoint(out, mcfg, cfg.train.granularity_mode, res.params, &res.opt);
  if (log_path.empty()) log_path = out + ".log.csv";
  write_text(log_path, train_log_csv(res.log));
  std::cout << "wrote " << out << " (best epoch " << res.best_epoch << ", val loss "
            << format_double(res.best_val) << ")\nwrote " << log_path << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::string& ckpt_flag, const std::string& data_flag,
              const std::string& dir_flag, int threads) {
  const std::string ckpt_path =
      pick_path(ckpt_flag, cfg.checkpoint_path, "eval: set --checkpoint or paths.checkpoint");
  const std::string data = pick_path(data_flag, cfg.data_path, "eval: set --data or paths.data");
  const std::string out_dir = pick_path(dir_flag, cfg.out_dir, "eval: set --out-dir or paths.out_dir");

  const Checkpoint ck = load_checkpoint_or_die(ckpt_path);
  const SicSeries series = load_grid_file(data);
  check_grid_matches(ck, series);
  const SplitIndices split = split_anchors(series, cfg.train);

  // One forecast pass feeds both the metric rows and the residual maps.
  const std::size_t n = split.test.size();
  std::vector<GranularityForecast> preds(n), truths(n);
  auto work = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      auto sample = make_sample(series, split.test[i]);
      preds[i] = forecast_sifm(sample.inputs, ck.params, ck.config, ck.mode);
      truths[i] = std::move(sample.targets);
      for (Granularity g : kGranularities)
        if (!mode_active(ck.mode, g)) truths[i][g].clear();
    }
  };
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back(work, n * w / workers, n * (w + 1) / workers);
    for (auto& t : pool) t.join();
  }

  const auto reports = evaluate_forecast(preds, truths, series.mask);
  fs::create_directories(out_dir);
  const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
  write_text(csv_path, metrics_csv(reports));
  std::cout << "wrote " << csv_path << " (" << reports.size() << " rows over " << n
            << " test anchors)\n";

  for (Granularity g : kGranularities) {
    if (!mode_active(ck.mode, g)) continue;
    SicGrid residual(series.height(), series.width());
    std::int64_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t lead = 0; lead < preds[i][g].size(); ++lead) {
        const auto pv = preds[i][g][lead].values;
        const auto tv = truths[i][g][lead].values;
        for (std::size_t c = 0; c < residual.values.size(); ++c)
          residual.values[c] += pv[c] - tv[c];
        ++count;
      }
    }
    for (double& v : residual.values) v /= static_cast<double>(count);
    const std::string pgm_path =
        (fs::path(out_dir) / (std::string("residual_") + granularity_name(g) + ".pgm")).string();
    write_residual_pgm(pgm_path, residual);
    std::cout << "wrote " << pgm_path << "\n";
  }

  for (const MetricReport& r : reports)
    if (r.lead < 0)
      std::cout << granularity_name(r.granularity) << " rmse " << format_double(r.rmse)
                << "  mae " << format_double(r.mae) << "  iiee " << format_double(r.iiee)
                << "\n";
}

void cmd_forecast(const std::string& ckpt_path, const std::string& data,
                  std::optional<std::int64_t> anchor_flag, const std::string& out_flag) {
  const Checkpoint ck = load_checkpoint_or_die(ckpt_path);
  const SicSeries series = load_grid_file(data);
  check_grid_matches(ck, series);

  const std::int64_t anchor = anchor_flag ? *anchor_flag : series.t0 + series.num_days() - 1;
  const auto inputs = make_input_windows(series, anchor);
  const auto pred = forecast_sifm(inputs, ck.params, ck.config, ck.mode);

  std::string base = out_flag;
  if (base.size() > 5 && base.ends_with(".sicg")) base.resize(base.size() - 5);
  for (Granularity g : kGranularities) {
    if (pred[g].empty()) continue;
    SicSeries out;
    out.t0 = anchor + 1;  // horizon starts the day after the anchor
    out.frames = pred[g];
    out.mask = series.mask;
    const std::string path = base + "." + granularity_name(g) + ".sicg";
    ensure_parent_dir(path);
    save_grid_file(out, path);
    std::cout << "wrote " << path << ": " << out.num_days() << " steps from t0 " << out.t0
              << "\n";
  }
}

void cmd_gradcheck(bool self_test, std::int64_t model_coords) {
  GradcheckOptions opts;
  opts.inject_fault = self_test;
  opts.model_coords_per_leaf = model_coords;
  const auto reports = run_gradcheck(opts);
  print_gradcheck(std::cout, reports);

  if (self_test) {
    bool fault_caught = false;
    bool rest_pass = true;
    for (const FdReport& r : reports) {
      if (r.name == kFaultCaseName) fault_caught = !r.pass;
      else rest_pass &= r.pass;
    }
    if (!fault_caught)
      throw ContractError("self-test: the planted sign error was NOT flagged");
    if (!rest_pass) throw ContractError("self-test: an unplanted case failed");
    std::cout << "self-test ok: the planted sign error was flagged\n";
    return;
  }
  if (!gradcheck_passed(reports)) throw ContractError("gradient check failed");
}

void cmd_ablate(const RunConfig& cfg, const std::string& data_flag, const std::string& dir_flag,
                int threads) {
  const std::string data = pick_path(data_flag, cfg.data_path, "ablate: set --data or paths.data");
  const std::string out_dir =
      pick_path(dir_flag, cfg.out_dir, "ablate: set --out-dir or paths.out_dir");
  const SicSeries series = load_grid_file(data);
  const ModelConfig mcfg = model_config_for(cfg, series);

  const auto runs = run_ablation(series, mcfg, cfg.train, &std::cout, threads);

  std::string summary = "method,mode,granularity,lead,rmse,mae,r2,nse,iiee,sie_dif\n";
  for (const AblationRun& run : runs) {
    std::string label = run.label;
    std::replace(label.begin(), label.end(), '/', '_');
    const fs::path dir = fs::path(out_dir) / label;
    fs::create_directories(dir);
    write_text((dir / "train_log.csv").string(), train_log_csv(run.result.log));
    const std::string csv = metrics_csv(run.metrics);
    write_text((dir / "metrics.csv").string(), csv);

    const std::string prefix =
        std::string(backbone_name(run.backbone)) + "," + mode_name(run.mode) + ",";
    std::size_t line_start = csv.find('\n') + 1;  // skip the header
    while (line_start < csv.size()) {
      std::size_t line_end = csv.find('\n', line_start);
      summary += prefix + csv.substr(line_start, line_end - line_start) + "\n";
      line_start = line_end + 1;
    }
    std::cout << "wrote " << (dir / "metrics.csv").string() << "\n";
  }
  const std::string summary_path = (fs::path(out_dir) / "summary.csv").string();
  write_text(summary_path, summary);
  std::cout << "wrote " << summary_path << " (" << runs.size() << " runs)\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic sea-ice concentration forecasting pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file");
    cmd->add_option("--seed", seed, "override the config's synth/train rng seeds");
    cmd->add_option("--threads", threads, "worker threads for evaluation passes");
  };
  add_globals(&app);

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic SICG data file");
  std::string gen_out;
  gen->add_option("--out", gen_out, "output SICG path (default: paths.data)");
  add_globals(gen);

  CLI::App* train_cmd = app.add_subcommand("train", "train a model, write checkpoint + log CSV");
  std::string train_data, train_out, train_log;
  train_cmd->add_option("--data", train_data, "input SICG path (default: paths.data)");
  train_cmd->add_option("--out", train_out, "checkpoint path (default: paths.checkpoint)");
  train_cmd->add_option("--log", train_log, "log CSV path (default: <checkpoint>.log.csv)");
  add_globals(train_cmd);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint: metrics CSV + residual maps");
  std::string eval_ckpt, eval_data, eval_dir;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path (default: paths.checkpoint)");
  eval_cmd->add_option("--data", eval_data, "input SICG path (default: paths.data)");
  eval_cmd->add_option("--out-dir", eval_dir, "output directory (default: paths.out_dir)");
  add_globals(eval_cmd);

  CLI::App* fc = app.add_subcommand("forecast", "forecast from a checkpoint at an anchor day");
  std::string fc_ckpt, fc_data, fc_out;
  std::optional<std::int64_t> fc_anchor;
  fc->add_option("--checkpoint", fc_ckpt, "checkpoint path")->required();
  fc->add_option("--data", fc_data, "input SICG path")->required();
  fc->add_option("--anchor", fc_anchor, "anchor day (default: last day in the data)");
  fc->add_option("--out", fc_out, "output base path; .<granularity>.sicg is appended")->required();
  add_globals(fc);

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference audit of every op");
  bool gc_self_test = false;
  std::int64_t gc_coords = 3;
  gc->add_flag("--self-test", gc_self_test,
               "plant a sign error in a backward rule; the audit must flag it");
  gc->add_option("--model-coords", gc_coords,
                 "parameter probes per tensor for the end-to-end case (0 = all)");
  add_globals(gc);

  CLI::App* ab = app.add_subcommand("ablate", "run the 6-way mode/backbone ablation matrix");
  std::string ab_data, ab_dir;
  ab->add_option("--data", ab_data, "input SICG path (default: paths.data)");
  ab->add_option("--out-dir", ab_dir, "output directory (default: paths.out_dir)");
  add_globals(ab);

  gen->callback([&] { cmd_gen(load_config_or_die(config_path, seed), gen_out); });
  train_cmd->callback(
      [&] { cmd_train(load_config_or_die(config_path, seed), train_data, train_out, train_log); });
  eval_cmd->callback([&] {
    cmd_eval(load_config_or_die(config_path, seed), eval_ckpt, eval_data, eval_dir, threads);
  });
  fc->callback([&] { cmd_forecast(fc_ckpt, fc_data, fc_anchor, fc_out); });
  gc->callback([&] { cmd_gradcheck(gc_self_test, gc_coords); });
  ab->callback(
      [&] { cmd_ablate(load_config_or_die(config_path, seed), ab_data, ab_dir, threads); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 4;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const RangeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
