#include "capmatch/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <vector>

namespace capmatch {

namespace {

struct Key {
  const char* name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad number '" + v + "'");
  return x;
}

long long to_int(const std::string& v) {
  std::size_t pos = 0;
  const long long x = std::stoll(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("bad boolean '" + v + "'");
}

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"variant",
       [](ExperimentConfig& c, const std::string& v) {
         c.variant = variant_from_string(v);
       },
       [](const ExperimentConfig& c) { return to_string(c.variant); }},
      {"seed",
       [](ExperimentConfig& c, const std::string& v) {
         c.seed = static_cast<std::uint64_t>(std::stoull(v));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
      {"total",
       [](ExperimentConfig& c, const std::string& v) {
         c.total = static_cast<std::size_t>(to_int(v));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.total); }},
      {"paired_fraction",
       [](ExperimentConfig& c, const std::string& v) {
         c.paired_fraction = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.paired_fraction); }},
      {"noise_std",
       [](ExperimentConfig& c, const std::string& v) {
         c.noise_std = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.noise_std); }},
      {"novel_words",
       [](ExperimentConfig& c, const std::string& v) {
         c.novel_words = to_bool(v);
       },
       [](const ExperimentConfig& c) {
         return std::string(c.novel_words ? "1" : "0");
       }},
      {"domain_shift",
       [](ExperimentConfig& c, const std::string& v) {
         c.domain_shift = to_bool(v);
       },
       [](const ExperimentConfig& c) {
         return std::string(c.domain_shift ? "1" : "0");
       }},
      {"eval_size",
       [](ExperimentConfig& c, const std::string& v) {
         c.eval_size = static_cast<std::size_t>(to_int(v));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.eval_size); }},
      {"epochs",
       [](ExperimentConfig& c, const std::string& v) {
         c.epochs = static_cast<int>(to_int(v));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.epochs); }},
      {"batch_size",
       [](ExperimentConfig& c, const std::string& v) {
         c.batch_size = static_cast<std::size_t>(to_int(v));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.batch_size); }},
      {"pretrain_steps",
       [](ExperimentConfig& c, const std::string& v) {
         c.pretrain_steps = static_cast<int>(to_int(v));
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.pretrain_steps);
       }},
      {"disc_real_samples",
       [](ExperimentConfig& c, const std::string& v) {
         c.disc_real_samples = static_cast<std::size_t>(to_int(v));
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.disc_real_samples);
       }},
      {"clip_norm",
       [](ExperimentConfig& c, const std::string& v) {
         c.clip_norm = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.clip_norm); }},
      {"triplet_clip",
       [](ExperimentConfig& c, const std::string& v) {
         c.triplet_clip = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.triplet_clip); }},
      {"lr",
       [](ExperimentConfig& c, const std::string& v) {
         c.adam.lr = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.adam.lr); }},
      {"beta1",
       [](ExperimentConfig& c, const std::string& v) {
         c.adam.beta1 = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.adam.beta1); }},
      {"beta2",
       [](ExperimentConfig& c, const std::string& v) {
         c.adam.beta2 = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.adam.beta2); }},
      {"adam_eps",
       [](ExperimentConfig& c, const std::string& v) {
         c.adam.epsilon = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.adam.epsilon); }},
      {"lambda_x",
       [](ExperimentConfig& c, const std::string& v) {
         c.weights.lambda_x = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.weights.lambda_x); }},
      {"lambda_y",
       [](ExperimentConfig& c, const std::string& v) {
         c.weights.lambda_y = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.weights.lambda_y); }},
      {"lambda_reg",
       [](ExperimentConfig& c, const std::string& v) {
         c.weights.lambda_reg = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.weights.lambda_reg); }},
      {"lambda_1",
       [](ExperimentConfig& c, const std::string& v) {
         c.weights.lambda_1 = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.weights.lambda_1); }},
      {"lambda_2",
       [](ExperimentConfig& c, const std::string& v) {
         c.weights.lambda_2 = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.weights.lambda_2); }},
      {"lambda_3",
       [](ExperimentConfig& c, const std::string& v) {
         c.weights.lambda_3 = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.weights.lambda_3); }},
      {"pool_fraction",
       [](ExperimentConfig& c, const std::string& v) {
         c.pool_fraction = to_double(v);
       },
       [](const ExperimentConfig& c) { return fmt(c.pool_fraction); }},
      {"retrieval_pool",
       [](ExperimentConfig& c, const std::string& v) {
         c.retrieval_pool = static_cast<std::size_t>(to_int(v));
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.retrieval_pool);
       }},
      {"beam_width",
       [](ExperimentConfig& c, const std::string& v) {
         c.beam_width = static_cast<int>(to_int(v));
       },
       [](const ExperimentConfig& c) { return std::to_string(c.beam_width); }},
      {"dump_assignments",
       [](ExperimentConfig& c, const std::string& v) {
         c.dump_assignments = to_bool(v);
       },
       [](const ExperimentConfig& c) {
         return std::string(c.dump_assignments ? "1" : "0");
       }},
      {"latent_dim",
       [](ExperimentConfig& c, const std::string& v) {
         c.model.latent_dim = static_cast<std::size_t>(to_int(v));
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.model.latent_dim);
       }},
      {"ablation_seeds",
       [](ExperimentConfig& c, const std::string& v) {
         c.ablation_seeds = static_cast<int>(to_int(v));
       },
       [](const ExperimentConfig& c) {
         return std::to_string(c.ablation_seeds);
       }},
  };
  return k;
}

}  // namespace

void apply_override(ExperimentConfig& cfg, const std::string& key,
                    const std::string& value) {
  for (const Key& k : keys()) {
    if (key == k.name) {
      try {
        k.set(cfg, value);
      } catch (const std::exception& e) {
        throw std::invalid_argument("config key '" + key + "': " + e.what());
      }
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("config: cannot open " + path.string());
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    // trim
    const std::size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const std::size_t end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto trim = [](std::string& s) {
      const std::size_t b = s.find_first_not_of(" \t");
      const std::size_t e = s.find_last_not_of(" \t");
      s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    apply_override(cfg, key, value);
  }
  return cfg;
}

std::string config_to_string(const ExperimentConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) {
    out += k.name;
    out += '=';
    out += k.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace capmatch
