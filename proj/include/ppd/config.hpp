#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ppd/dpo.hpp"
#include "ppd/rewards.hpp"
#include "ppd/schedule.hpp"

namespace ppd {

enum class UserKind : uint8_t { onehot = 0, mixture = 1 };
UserKind user_kind_from_string(const std::string& name);
const char* to_string(UserKind kind);

// Everything an experiment run needs, grouped by section. Unknown keys are
// rejected; absent keys fall back to these defaults (each applied default is
// reported). The canonical serialization below defines the config digest.
struct ExperimentConfig {
  uint64_t seed = 42;

  struct Data {
    int dim = 8;
    int n_contexts = 64;
    int n_users = 3;
    int pairs_per_user = 667;
    LabelMode label_mode = LabelMode::deterministic;
    UserKind user_kind = UserKind::onehot;
    double mixture_alpha = 0.3;
    double data_noise = 0.1;
    int gen_steps = 30;
    double unseen_user_frac = 0.2;
    double heldout_context_frac = 0.25;
  } data;

  struct Model {
    int width = 32;
    int attn_dim = 16;
    int time_dim = 8;
    int n_tokens = 4;
    int token_dim = 8;
    int user_dim = 3;
    int encoder_hidden = 32;
    int encoder_dim = 16;
    double encoder_temperature = 0.1;
    int shots = 4;
  } model;

  struct Schedule {
    int T = 64;
    ScheduleKind kind = ScheduleKind::cosine;
    double omega = 1.0;
  } schedule;

  struct Train {
    Objective objective = Objective::ppd;
    TrainableSet trainable = TrainableSet::adapter_only;
    double beta = 0.5;
    double lr = 1e-3;
    double weight_decay = 0.0;
    int batch_pairs = 16;
    int epochs = 1;
    double user_dropout_p = 0.1;
    int pretrain_steps = 2000;
    int pretrain_batch = 16;
    double pretrain_lr = 1e-3;
    int encoder_steps = 600;
    int encoder_batch_users = 8;
    double encoder_lr = 1e-3;
    int probe_steps = 400;
    double probe_lr = 0.05;
    int probe_sets_per_user = 8;
  } train;

  struct Eval {
    int sample_steps = 30;
    int n_contexts = 400;
    int n_per_context = 1;
    int context_offset = -1;  // -1: directly after the training contexts
    int sweep_points = 5;
    int sweep_contexts = 64;
    std::vector<int> topk = {1, 4, 16};
  } eval;
};

struct ParsedConfig {
  ExperimentConfig config;
  std::vector<std::string> applied_defaults;  // "section.key = value"
};

// Text format: "[section]" headers, "key = value" lines, '#' comments.
// Errors carry line numbers; duplicates report both lines. Overrides are
// "section.key=value" (or "seed=value") strings applied on top.
ParsedConfig parse_config_text(const std::string& text,
                               const std::vector<std::string>& overrides = {});
ParsedConfig parse_config_file(const std::filesystem::path& path,
                               const std::vector<std::string>& overrides = {});

// Canonical serialization: every field in fixed order, locale-independent
// formatting. Equal configs produce equal bytes regardless of source layout.
std::string canonical_config_text(const ExperimentConfig& config);

// Digest over the full canonical text: identifies the run configuration.
std::string config_digest(const ExperimentConfig& config);

// Digest over seed + data + model + schedule: artifact compatibility. Stages
// chained on the same artifacts must agree on this even if train/eval knobs
// differ.
std::string compat_digest(const ExperimentConfig& config);

}  // namespace ppd
