#include "ppd/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "ppd/csv.hpp"
#include "ppd/manifest.hpp"

namespace ppd {

UserKind user_kind_from_string(const std::string& name) {
  if (name == "onehot") return UserKind::onehot;
  if (name == "mixture") return UserKind::mixture;
  fail(ErrorKind::invalid_argument, "unknown user kind '" + name + "'");
}

const char* to_string(UserKind kind) {
  return kind == UserKind::onehot ? "onehot" : "mixture";
}

namespace {

struct RawValue {
  std::string value;
  std::string where;  // "line N" or "override 'x'"
};

using RawMap = std::map<std::string, RawValue>;  // "section.key" -> value

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void parse_fail(const std::string& where, const std::string& message) {
  fail(ErrorKind::parse_error, "config: " + message + " (" + where + ")");
}

RawMap scan_text(const std::string& text) {
  RawMap raw;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::string section;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_fail(where, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) parse_fail(where, "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) parse_fail(where, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) parse_fail(where, "empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    auto it = raw.find(full);
    if (it != raw.end()) {
      parse_fail(where, "duplicate key '" + full + "', first set at " + it->second.where);
    }
    raw[full] = RawValue{value, where};
  }
  return raw;
}

void apply_overrides(RawMap& raw, const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const std::string where = "override '" + item + "'";
    const auto eq = item.find('=');
    if (eq == std::string::npos) parse_fail(where, "expected KEY=VALUE");
    const std::string key = trim(item.substr(0, eq));
    const std::string value = trim(item.substr(eq + 1));
    if (key.empty()) parse_fail(where, "empty key");
    raw[key] = RawValue{value, where};  // overrides replace config values
  }
}

// Typed extraction: consumes known keys, records defaults for absent ones,
// rejects anything left over.
class Extractor {
 public:
  Extractor(RawMap raw, std::vector<std::string>& defaults)
      : raw_(std::move(raw)), defaults_(defaults) {}

  template <typename Parse>
  void with(const std::string& full_key, const std::string& default_text, Parse&& parse) {
    auto it = raw_.find(full_key);
    if (it == raw_.end()) {
      defaults_.push_back(full_key + " = " + default_text);
      return;
    }
    parse(it->second.value, it->second.where);
    raw_.erase(it);
  }

  void integer(const std::string& key, int& slot, int lo, int hi,
               const std::string& constraint) {
    with(key, std::to_string(slot), [&, lo, hi](const std::string& v, const std::string& w) {
      int out = 0;
      const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        parse_fail(w, "'" + key + "' expects an integer, got '" + v + "'");
      }
      if (out < lo || out > hi) {
        parse_fail(w, "'" + key + "' out of range: " + constraint);
      }
      slot = out;
    });
  }

  void real(const std::string& key, double& slot, const std::string& constraint,
            const std::function<bool(double)>& ok) {
    with(key, format_double(slot), [&](const std::string& v, const std::string& w) {
      char* end = nullptr;
      const double out = std::strtod(v.c_str(), &end);
      if (end != v.c_str() + v.size() || v.empty()) {
        parse_fail(w, "'" + key + "' expects a real number, got '" + v + "'");
      }
      if (!ok(out)) parse_fail(w, "'" + key + "' out of range: " + constraint);
      slot = out;
    });
  }

  void seed(const std::string& key, uint64_t& slot) {
    with(key, std::to_string(slot), [&](const std::string& v, const std::string& w) {
      uint64_t out = 0;
      const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        parse_fail(w, "'" + key + "' expects an unsigned integer, got '" + v + "'");
      }
      slot = out;
    });
  }

  template <typename Enum, typename FromString>
  void choice(const std::string& key, Enum& slot, FromString&& from_string) {
    with(key, to_string(slot), [&](const std::string& v, const std::string& w) {
      try {
        slot = from_string(v);
      } catch (const Error& e) {
        parse_fail(w, e.what());
      }
    });
  }

  void int_list(const std::string& key, std::vector<int>& slot) {
    std::string def;
    for (size_t i = 0; i < slot.size(); ++i) {
      if (i) def += ",";
      def += std::to_string(slot[i]);
    }
    with(key, def, [&](const std::string& v, const std::string& w) {
      std::vector<int> out;
      std::istringstream in(v);
      std::string item;
      while (std::getline(in, item, ',')) {
        item = trim(item);
        int value = 0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), value);
        if (res.ec != std::errc{} || res.ptr != item.data() + item.size() || value < 1) {
          parse_fail(w, "'" + key + "' expects positive integers, got '" + item + "'");
        }
        out.push_back(value);
      }
      if (out.empty()) parse_fail(w, "'" + key + "' is empty");
      slot = std::move(out);
    });
  }

  void finish() const {
    if (!raw_.empty()) {
      const auto& [key, value] = *raw_.begin();
      parse_fail(value.where, "unknown key '" + key + "'");
    }
  }

 private:
  RawMap raw_;
  std::vector<std::string>& defaults_;
};

}  // namespace

ParsedConfig parse_config_text(const std::string& text,
                               const std::vector<std::string>& overrides) {
  RawMap raw = scan_text(text);
  apply_overrides(raw, overrides);

  ParsedConfig parsed;
  ExperimentConfig& c = parsed.config;
  Extractor ex(std::move(raw), parsed.applied_defaults);

  ex.seed("seed", c.seed);

  ex.integer("data.dim", c.data.dim, 2, 4096, "dim >= 2");
  ex.integer("data.n_contexts", c.data.n_contexts, 2, 1 << 20, "n_contexts >= 2");
  ex.integer("data.n_users", c.data.n_users, 1, 1 << 20, "n_users >= 1");
  ex.integer("data.pairs_per_user", c.data.pairs_per_user, 1, 1 << 24, "pairs_per_user >= 1");
  ex.choice("data.label_mode", c.data.label_mode, label_mode_from_string);
  ex.choice("data.user_kind", c.data.user_kind, user_kind_from_string);
  ex.real("data.mixture_alpha", c.data.mixture_alpha, "mixture_alpha > 0",
          [](double v) { return v > 0.0; });
  ex.real("data.data_noise", c.data.data_noise, "data_noise > 0",
          [](double v) { return v > 0.0; });
  ex.integer("data.gen_steps", c.data.gen_steps, 1, 1 << 16, "gen_steps >= 1");
  ex.real("data.unseen_user_frac", c.data.unseen_user_frac, "0 <= unseen_user_frac < 1",
          [](double v) { return v >= 0.0 && v < 1.0; });
  ex.real("data.heldout_context_frac", c.data.heldout_context_frac,
          "0 < heldout_context_frac < 1", [](double v) { return v > 0.0 && v < 1.0; });

  ex.integer("model.width", c.model.width, 1, 4096, "width >= 1");
  ex.integer("model.attn_dim", c.model.attn_dim, 1, 4096, "attn_dim >= 1");
  ex.integer("model.time_dim", c.model.time_dim, 1, 4096, "time_dim >= 1");
  ex.integer("model.n_tokens", c.model.n_tokens, 1, 4096, "n_tokens >= 1");
  ex.integer("model.token_dim", c.model.token_dim, 1, 4096, "token_dim >= 1");
  ex.integer("model.user_dim", c.model.user_dim, 1, 4096, "user_dim >= 1");
  ex.integer("model.encoder_hidden", c.model.encoder_hidden, 1, 4096, "encoder_hidden >= 1");
  ex.integer("model.encoder_dim", c.model.encoder_dim, 1, 4096, "encoder_dim >= 1");
  ex.real("model.encoder_temperature", c.model.encoder_temperature,
          "encoder_temperature > 0", [](double v) { return v > 0.0; });
  ex.integer("model.shots", c.model.shots, 1, 1024, "shots >= 1");

  ex.integer("schedule.T", c.schedule.T, 2, 1 << 16, "T >= 2");
  ex.choice("schedule.kind", c.schedule.kind, schedule_kind_from_string);
  ex.real("schedule.omega", c.schedule.omega, "omega > 0", [](double v) { return v > 0.0; });

  ex.choice("train.objective", c.train.objective, objective_from_string);
  ex.choice("train.trainable", c.train.trainable, trainable_set_from_string);
  ex.real("train.beta", c.train.beta, "beta > 0", [](double v) { return v > 0.0; });
  ex.real("train.lr", c.train.lr, "lr > 0", [](double v) { return v > 0.0; });
  ex.real("train.weight_decay", c.train.weight_decay, "weight_decay >= 0",
          [](double v) { return v >= 0.0; });
  ex.integer("train.batch_pairs", c.train.batch_pairs, 1, 1 << 16, "batch_pairs >= 1");
  ex.integer("train.epochs", c.train.epochs, 1, 1 << 16, "epochs >= 1");
  ex.real("train.user_dropout_p", c.train.user_dropout_p, "0 <= user_dropout_p < 1",
          [](double v) { return v >= 0.0 && v < 1.0; });
  ex.integer("train.pretrain_steps", c.train.pretrain_steps, 1, 1 << 24, "pretrain_steps >= 1");
  ex.integer("train.pretrain_batch", c.train.pretrain_batch, 1, 1 << 16, "pretrain_batch >= 1");
  ex.real("train.pretrain_lr", c.train.pretrain_lr, "pretrain_lr > 0",
          [](double v) { return v > 0.0; });
  ex.integer("train.encoder_steps", c.train.encoder_steps, 1, 1 << 24, "encoder_steps >= 1");
  ex.integer("train.encoder_batch_users", c.train.encoder_batch_users, 2, 1 << 16,
             "encoder_batch_users >= 2");
  ex.real("train.encoder_lr", c.train.encoder_lr, "encoder_lr > 0",
          [](double v) { return v > 0.0; });
  ex.integer("train.probe_steps", c.train.probe_steps, 1, 1 << 24, "probe_steps >= 1");
  ex.real("train.probe_lr", c.train.probe_lr, "probe_lr > 0", [](double v) { return v > 0.0; });
  ex.integer("train.probe_sets_per_user", c.train.probe_sets_per_user, 1, 1 << 16,
             "probe_sets_per_user >= 1");

  ex.integer("eval.sample_steps", c.eval.sample_steps, 1, 1 << 16, "sample_steps >= 1");
  ex.integer("eval.n_contexts", c.eval.n_contexts, 1, 1 << 20, "n_contexts >= 1");
  ex.integer("eval.n_per_context", c.eval.n_per_context, 1, 1 << 16, "n_per_context >= 1");
  ex.integer("eval.context_offset", c.eval.context_offset, -1, 1 << 30, "context_offset >= -1");
  ex.integer("eval.sweep_points", c.eval.sweep_points, 2, 1 << 10, "sweep_points >= 2");
  ex.integer("eval.sweep_contexts", c.eval.sweep_contexts, 1, 1 << 20, "sweep_contexts >= 1");
  ex.int_list("eval.topk", c.eval.topk);

  ex.finish();

  if (c.data.user_kind == UserKind::onehot && c.data.n_users != kRewardFamilyCount) {
    fail(ErrorKind::parse_error,
         "config: onehot user kind requires data.n_users = " +
             std::to_string(kRewardFamilyCount));
  }
  if (c.eval.sample_steps > c.schedule.T || c.data.gen_steps > c.schedule.T) {
    fail(ErrorKind::parse_error, "config: sampling steps cannot exceed schedule.T");
  }
  return parsed;
}

ParsedConfig parse_config_file(const std::filesystem::path& path,
                               const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io_error, "cannot open config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), overrides);
}

namespace {

void dump_compat_sections(std::ostream& out, const ExperimentConfig& c) {
  out << "seed = " << c.seed << "\n";
  out << "[data]\n";
  out << "dim = " << c.data.dim << "\n";
  out << "n_contexts = " << c.data.n_contexts << "\n";
  out << "n_users = " << c.data.n_users << "\n";
  out << "pairs_per_user = " << c.data.pairs_per_user << "\n";
  out << "label_mode = " << to_string(c.data.label_mode) << "\n";
  out << "user_kind = " << to_string(c.data.user_kind) << "\n";
  out << "mixture_alpha = " << format_double(c.data.mixture_alpha) << "\n";
  out << "data_noise = " << format_double(c.data.data_noise) << "\n";
  out << "gen_steps = " << c.data.gen_steps << "\n";
  out << "unseen_user_frac = " << format_double(c.data.unseen_user_frac) << "\n";
  out << "heldout_context_frac = " << format_double(c.data.heldout_context_frac) << "\n";
  out << "[model]\n";
  out << "width = " << c.model.width << "\n";
  out << "attn_dim = " << c.model.attn_dim << "\n";
  out << "time_dim = " << c.model.time_dim << "\n";
  out << "n_tokens = " << c.model.n_tokens << "\n";
  out << "token_dim = " << c.model.token_dim << "\n";
  out << "user_dim = " << c.model.user_dim << "\n";
  out << "encoder_hidden = " << c.model.encoder_hidden << "\n";
  out << "encoder_dim = " << c.model.encoder_dim << "\n";
  out << "encoder_temperature = " << format_double(c.model.encoder_temperature) << "\n";
  out << "shots = " << c.model.shots << "\n";
  out << "[schedule]\n";
  out << "T = " << c.schedule.T << "\n";
  out << "kind = " << to_string(c.schedule.kind) << "\n";
  out << "omega = " << format_double(c.schedule.omega) << "\n";
}

}  // namespace

std::string canonical_config_text(const ExperimentConfig& c) {
  std::ostringstream out;
  dump_compat_sections(out, c);
  out << "[train]\n";
  out << "objective = " << to_string(c.train.objective) << "\n";
  out << "trainable = " << to_string(c.train.trainable) << "\n";
  out << "beta = " << format_double(c.train.beta) << "\n";
  out << "lr = " << format_double(c.train.lr) << "\n";
  out << "weight_decay = " << format_double(c.train.weight_decay) << "\n";
  out << "batch_pairs = " << c.train.batch_pairs << "\n";
  out << "epochs = " << c.train.epochs << "\n";
  out << "user_dropout_p = " << format_double(c.train.user_dropout_p) << "\n";
  out << "pretrain_steps = " << c.train.pretrain_steps << "\n";
  out << "pretrain_batch = " << c.train.pretrain_batch << "\n";
  out << "pretrain_lr = " << format_double(c.train.pretrain_lr) << "\n";
  out << "encoder_steps = " << c.train.encoder_steps << "\n";
  out << "encoder_batch_users = " << c.train.encoder_batch_users << "\n";
  out << "encoder_lr = " << format_double(c.train.encoder_lr) << "\n";
  out << "probe_steps = " << c.train.probe_steps << "\n";
  out << "probe_lr = " << format_double(c.train.probe_lr) << "\n";
  out << "probe_sets_per_user = " << c.train.probe_sets_per_user << "\n";
  out << "[eval]\n";
  out << "sample_steps = " << c.eval.sample_steps << "\n";
  out << "n_contexts = " << c.eval.n_contexts << "\n";
  out << "n_per_context = " << c.eval.n_per_context << "\n";
  out << "context_offset = " << c.eval.context_offset << "\n";
  out << "sweep_points = " << c.eval.sweep_points << "\n";
  out << "sweep_contexts = " << c.eval.sweep_contexts << "\n";
  out << "topk = ";
  for (size_t i = 0; i < c.eval.topk.size(); ++i) {
    if (i) out << ",";
    out << c.eval.topk[i];
  }
  out << "\n";
  return out.str();
}

std::string config_digest(const ExperimentConfig& config) {
  return hex64(fnv1a64(canonical_config_text(config)));
}

std::string compat_digest(const ExperimentConfig& config) {
  std::ostringstream out;
  dump_compat_sections(out, config);
  return hex64(fnv1a64(out.str()));
}

}  // namespace ppd
