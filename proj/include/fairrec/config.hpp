#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fairrec/encoders.hpp"
#include "fairrec/simulator.hpp"
#include "fairrec/training.hpp"

namespace fairrec {

// Everything a run needs beyond file paths. The desk preset keeps model and
// corpus small enough that a full train-and-evaluate cycle stays interactive.
struct RunConfig {
  std::uint64_t seed = 1;
  EncoderConfig encoder;
  TrainConfig train;
  SimulatorConfig sim;
};

inline RunConfig desk_config() {
  RunConfig cfg;
  cfg.encoder.title_len = 12;
  cfg.encoder.history_len = 20;
  cfg.encoder.word_dim = 24;
  cfg.encoder.heads = 3;
  cfg.encoder.head_dim = 8;
  cfg.encoder.provider_dim = 12;
  cfg.encoder.attn_hidden = 16;
  cfg.encoder.disc_hidden = 32;
  cfg.encoder.num_classes = 8;
  cfg.train.negatives = 4;
  cfg.train.batch_size = 32;
  cfg.train.epochs = 3;
  cfg.train.lr = 1e-3;
  return cfg;
}

namespace detail {

inline long long parse_int(const std::string& key, const std::string& value, long long lo,
                           long long hi) {
  long long out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  if (out < lo || out > hi) {
    throw ConfigError(key + ": " + value + " is outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + value + "'");
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

inline bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + value + "'");
}

inline std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

// One row per option: how to print the current value and how to set it.
struct ConfigKey {
  const char* name;
  std::string (*get)(const RunConfig&);
  void (*set)(RunConfig&, const std::string&);
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      {"backbone", [](const RunConfig& c) { return std::string(backbone_name(c.encoder.backbone)); },
       [](RunConfig& c, const std::string& v) { c.encoder.backbone = parse_backbone(v); }},
      {"title_len", [](const RunConfig& c) { return std::to_string(c.encoder.title_len); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.title_len = static_cast<std::size_t>(parse_int("title_len", v, 1, 1000000));
       }},
      {"history_len", [](const RunConfig& c) { return std::to_string(c.encoder.history_len); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.history_len = static_cast<std::size_t>(parse_int("history_len", v, 1, 1000000));
       }},
      {"word_dim", [](const RunConfig& c) { return std::to_string(c.encoder.word_dim); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.word_dim = static_cast<std::size_t>(parse_int("word_dim", v, 1, 1000000));
       }},
      {"heads", [](const RunConfig& c) { return std::to_string(c.encoder.heads); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.heads = static_cast<std::size_t>(parse_int("heads", v, 1, 1000000));
       }},
      {"head_dim", [](const RunConfig& c) { return std::to_string(c.encoder.head_dim); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.head_dim = static_cast<std::size_t>(parse_int("head_dim", v, 1, 1000000));
       }},
      {"provider_dim", [](const RunConfig& c) { return std::to_string(c.encoder.provider_dim); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.provider_dim = static_cast<std::size_t>(parse_int("provider_dim", v, 1, 1000000));
       }},
      {"attn_hidden", [](const RunConfig& c) { return std::to_string(c.encoder.attn_hidden); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.attn_hidden = static_cast<std::size_t>(parse_int("attn_hidden", v, 1, 1000000));
       }},
      {"disc_hidden", [](const RunConfig& c) { return std::to_string(c.encoder.disc_hidden); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.disc_hidden = static_cast<std::size_t>(parse_int("disc_hidden", v, 1, 1000000));
       }},
      {"num_classes", [](const RunConfig& c) { return std::to_string(c.encoder.num_classes); },
       [](RunConfig& c, const std::string& v) {
         c.encoder.num_classes = static_cast<std::size_t>(parse_int("num_classes", v, 2, 1000000));
       }},
      {"negatives", [](const RunConfig& c) { return std::to_string(c.train.negatives); },
       [](RunConfig& c, const std::string& v) {
         c.train.negatives = static_cast<int>(parse_int("negatives", v, 1, 1000000));
       }},
      {"batch_size", [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
       [](RunConfig& c, const std::string& v) {
         c.train.batch_size = static_cast<std::size_t>(parse_int("batch_size", v, 1, 1000000000));
       }},
      {"epochs", [](const RunConfig& c) { return std::to_string(c.train.epochs); },
       [](RunConfig& c, const std::string& v) {
         c.train.epochs = static_cast<int>(parse_int("epochs", v, 0, 1000000));
       }},
      {"lr", [](const RunConfig& c) { return format_double(c.train.lr); },
       [](RunConfig& c, const std::string& v) { c.train.lr = parse_real("lr", v); }},
      {"clip_norm", [](const RunConfig& c) { return format_double(c.train.clip_norm); },
       [](RunConfig& c, const std::string& v) { c.train.clip_norm = parse_real("clip_norm", v); }},
      {"disc_inner_steps",
       [](const RunConfig& c) { return std::to_string(c.train.disc_inner_steps); },
       [](RunConfig& c, const std::string& v) {
         c.train.disc_inner_steps = static_cast<int>(parse_int("disc_inner_steps", v, 0, 1000000));
       }},
      {"lambda_click", [](const RunConfig& c) { return format_double(c.train.weights.lambda_c); },
       [](RunConfig& c, const std::string& v) {
         c.train.weights.lambda_c = parse_real("lambda_click", v);
       }},
      {"lambda_user", [](const RunConfig& c) { return format_double(c.train.weights.lambda_u); },
       [](RunConfig& c, const std::string& v) {
         c.train.weights.lambda_u = parse_real("lambda_user", v);
       }},
      {"lambda_news", [](const RunConfig& c) { return format_double(c.train.weights.lambda_n); },
       [](RunConfig& c, const std::string& v) {
         c.train.weights.lambda_n = parse_real("lambda_news", v);
       }},
      {"lambda_adv", [](const RunConfig& c) { return format_double(c.train.weights.lambda_a); },
       [](RunConfig& c, const std::string& v) {
         c.train.weights.lambda_a = parse_real("lambda_adv", v);
       }},
      {"zero_biased", [](const RunConfig& c) { return std::string(c.train.zero_biased ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) {
         c.train.zero_biased = parse_flag("zero_biased", v);
       }},
      {"sim_users", [](const RunConfig& c) { return std::to_string(c.sim.users); },
       [](RunConfig& c, const std::string& v) {
         c.sim.users = static_cast<int>(parse_int("sim_users", v, 1, 1000000000));
       }},
      {"sim_news", [](const RunConfig& c) { return std::to_string(c.sim.news); },
       [](RunConfig& c, const std::string& v) {
         c.sim.news = static_cast<int>(parse_int("sim_news", v, 1, 1000000000));
       }},
      {"sim_providers", [](const RunConfig& c) { return std::to_string(c.sim.providers); },
       [](RunConfig& c, const std::string& v) {
         c.sim.providers = static_cast<int>(parse_int("sim_providers", v, 1, 1000000000));
       }},
      {"sim_topics", [](const RunConfig& c) { return std::to_string(c.sim.topics); },
       [](RunConfig& c, const std::string& v) {
         c.sim.topics = static_cast<int>(parse_int("sim_topics", v, 1, 1000000000));
       }},
      {"sim_zipf", [](const RunConfig& c) { return format_double(c.sim.provider_zipf); },
       [](RunConfig& c, const std::string& v) { c.sim.provider_zipf = parse_real("sim_zipf", v); }},
      {"sim_topic_skew", [](const RunConfig& c) { return format_double(c.sim.topic_skew); },
       [](RunConfig& c, const std::string& v) {
         c.sim.topic_skew = parse_real("sim_topic_skew", v);
       }},
      {"sim_alpha", [](const RunConfig& c) { return format_double(c.sim.alpha); },
       [](RunConfig& c, const std::string& v) { c.sim.alpha = parse_real("sim_alpha", v); }},
      {"sim_beta", [](const RunConfig& c) { return format_double(c.sim.beta); },
       [](RunConfig& c, const std::string& v) { c.sim.beta = parse_real("sim_beta", v); }},
      {"sim_gamma", [](const RunConfig& c) { return format_double(c.sim.gamma); },
       [](RunConfig& c, const std::string& v) { c.sim.gamma = parse_real("sim_gamma", v); }},
      {"sim_offset", [](const RunConfig& c) { return format_double(c.sim.click_offset); },
       [](RunConfig& c, const std::string& v) { c.sim.click_offset = parse_real("sim_offset", v); }},
      {"sim_impressions", [](const RunConfig& c) { return std::to_string(c.sim.impressions_per_user); },
       [](RunConfig& c, const std::string& v) {
         c.sim.impressions_per_user = static_cast<int>(parse_int("sim_impressions", v, 1, 1000000000));
       }},
      {"sim_candidates",
       [](const RunConfig& c) { return std::to_string(c.sim.candidates_per_impression); },
       [](RunConfig& c, const std::string& v) {
         c.sim.candidates_per_impression =
             static_cast<int>(parse_int("sim_candidates", v, 1, 1000000000));
       }},
      {"sim_title_words", [](const RunConfig& c) { return std::to_string(c.sim.title_words); },
       [](RunConfig& c, const std::string& v) {
         c.sim.title_words = static_cast<int>(parse_int("sim_title_words", v, 1, 1000000000));
       }},
      {"sim_provider_words", [](const RunConfig& c) { return std::to_string(c.sim.provider_words); },
       [](RunConfig& c, const std::string& v) {
         c.sim.provider_words = static_cast<int>(parse_int("sim_provider_words", v, 0, 1000000000));
       }},
      {"sim_quality_words", [](const RunConfig& c) { return std::to_string(c.sim.quality_words); },
       [](RunConfig& c, const std::string& v) {
         c.sim.quality_words = static_cast<int>(parse_int("sim_quality_words", v, 0, 1000000000));
       }},
  };
  return keys;
}

}  // namespace detail

// Sets one option by key. Throws ConfigError for unknown keys or malformed
// values; range/semantic validation beyond syntax stays with the consumers.
inline void apply_option(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const detail::ConfigKey& k : detail::config_keys()) {
    if (key == k.name) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown option '" + key + "'");
}

// Canonical (key, value) listing; order is fixed so output is deterministic.
inline std::vector<std::pair<std::string, std::string>> config_items(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const detail::ConfigKey& k : detail::config_keys()) out.push_back({k.name, k.get(cfg)});
  return out;
}

inline std::string write_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : config_items(cfg)) out += key + " = " + value + "\n";
  return out;
}

// key = value per line; '#' starts a comment, blank lines are skipped.
inline RunConfig parse_config_file(const std::string& path, RunConfig base) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trimmed(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value, got '" +
                        line + "'");
    }
    std::string key = detail::trimmed(line.substr(0, eq));
    std::string value = detail::trimmed(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": missing key");
    }
    try {
      apply_option(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

}  // namespace fairrec
