#pragma once

#include <cstdint>
#include <string>

#include "sifm/grid.hpp"
#include "sifm/model.hpp"

namespace sifm {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 4;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t rng_seed = 7;
  GranularityMode granularity_mode = GranularityMode::multi;
  int early_stop_patience = 5;
  int anchor_stride = 7;    // days between sample anchors
  double train_frac = 0.7;  // chronological split; remainder after val is test
  double val_frac = 0.1;

  void validate() const;
};

// Everything a run needs, parsed from a `key = value` document. Lines are
// `section.field = value`; '#' starts a comment; unknown keys are rejected
// with their line number. Paths are optional defaults that CLI flags
// override.
struct RunConfig {
  SynthConfig synth;
  CodecConfig codec;
  FusionConfig fusion;
  TrainConfig train;
  std::string data_path;
  std::string checkpoint_path;
  std::string out_dir;

  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);  // FormatError if unreadable
// Canonical form: fixed key order, shortest round-trip number formatting.
// parse(serialize(c)) reproduces c exactly.
std::string serialize_run_config(const RunConfig& cfg);

// The model descriptor embedded in checkpoints: grid dims + codec + fusion
// + granularity mode, same syntax and canonicalization as RunConfig.
std::string serialize_model_descriptor(const ModelConfig& cfg, GranularityMode mode);
std::pair<ModelConfig, GranularityMode> parse_model_descriptor(const std::string& text);

// Shortest decimal that round-trips to the same double (std::to_chars).
std::string format_double(double v);

}  // namespace sifm
