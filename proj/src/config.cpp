#include "kgf/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "kgf/errors.hpp"

namespace kgf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects an unsigned integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, p};
}

void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key,
                   const std::string& value) {
  const std::string full = section + "." + key;
  if (section == "dataset") {
    if (key == "path") {
      cfg.dataset = value;
    } else if (key == "mode") {
      if (value == "transductive") {
        cfg.mode = SplitMode::kTransductive;
      } else if (value == "inductive") {
        cfg.mode = SplitMode::kInductive;
      } else {
        throw ConfigError("dataset.mode must be transductive or inductive, got '" + value + "'");
      }
    } else {
      throw ConfigError("unknown config key '" + full + "'");
    }
  } else if (section == "model") {
    ModelConfig& m = cfg.model;
    if (key == "hidden_dim") m.hidden_dim = to_size(full, value);
    else if (key == "attention_layers") m.attention_layers = to_size(full, value);
    else if (key == "query_layers") m.query_layers = to_size(full, value);
    else if (key == "value_layers") m.value_layers = to_size(full, value);
    else if (key == "mlp_depth") m.mlp_depth = to_size(full, value);
    else if (key == "ffn_depth") m.ffn_depth = to_size(full, value);
    else if (key == "ffn_expansion") m.ffn_expansion = to_size(full, value);
    else if (key == "scorer_depth") m.scorer_depth = to_size(full, value);
    else if (key == "heads") m.heads = to_size(full, value);
    else if (key == "kernel") m.kernel = parse_kernel_mode(value);
    else if (key == "noise") m.noise = parse_noise_mode(value);
    else throw ConfigError("unknown config key '" + full + "'");
  } else if (section == "train") {
    TrainConfig& t = cfg.train;
    if (key == "learning_rate") t.learning_rate = to_double(full, value);
    else if (key == "weight_decay") t.weight_decay = to_double(full, value);
    else if (key == "num_negatives") t.num_negatives = to_size(full, value);
    else if (key == "epochs") t.epochs = to_size(full, value);
    else if (key == "batch_size") t.batch_size = to_size(full, value);
    else if (key == "seed") t.seed = to_u64(full, value);
    else if (key == "adam_beta1") t.adam_beta1 = to_double(full, value);
    else if (key == "adam_beta2") t.adam_beta2 = to_double(full, value);
    else if (key == "adam_eps") t.adam_eps = to_double(full, value);
    else if (key == "eval_interval") t.eval_interval = to_size(full, value);
    else if (key == "patience") t.patience = to_size(full, value);
    else if (key == "threads") t.threads = to_size(full, value);
    else if (key == "target_valid_mrr") {
      if (value == "none") t.target_valid_mrr.reset();
      else t.target_valid_mrr = to_double(full, value);
    } else if (key == "record_wall_time") t.record_wall_time = to_bool(full, value);
    else throw ConfigError("unknown config key '" + full + "'");
  } else if (section == "output") {
    if (key == "dir") cfg.output_dir = value;
    else if (key == "verbosity") cfg.verbosity = value;
    else throw ConfigError("unknown config key '" + full + "'");
  } else {
    throw ConfigError("unknown config section '" + section + "'");
  }
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": key outside a section");
    apply_setting(base, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::string format_model_train(const ModelConfig& m, const TrainConfig& t) {
  std::ostringstream os;
  os << "[model]\n"
     << "hidden_dim = " << m.hidden_dim << "\n"
     << "attention_layers = " << m.attention_layers << "\n"
     << "query_layers = " << m.query_layers << "\n"
     << "value_layers = " << m.value_layers << "\n"
     << "mlp_depth = " << m.mlp_depth << "\n"
     << "ffn_depth = " << m.ffn_depth << "\n"
     << "ffn_expansion = " << m.ffn_expansion << "\n"
     << "scorer_depth = " << m.scorer_depth << "\n"
     << "heads = " << m.heads << "\n"
     << "kernel = " << to_string(m.kernel) << "\n"
     << "noise = " << to_string(m.noise) << "\n\n"
     << "[train]\n"
     << "learning_rate = " << format_double(t.learning_rate) << "\n"
     << "weight_decay = " << format_double(t.weight_decay) << "\n"
     << "num_negatives = " << t.num_negatives << "\n"
     << "epochs = " << t.epochs << "\n"
     << "batch_size = " << t.batch_size << "\n"
     << "seed = " << t.seed << "\n"
     << "adam_beta1 = " << format_double(t.adam_beta1) << "\n"
     << "adam_beta2 = " << format_double(t.adam_beta2) << "\n"
     << "adam_eps = " << format_double(t.adam_eps) << "\n"
     << "eval_interval = " << t.eval_interval << "\n"
     << "patience = " << t.patience << "\n"
     << "threads = " << t.threads << "\n"
     << "target_valid_mrr = "
     << (t.target_valid_mrr ? format_double(*t.target_valid_mrr) : std::string("none")) << "\n"
     << "record_wall_time = " << (t.record_wall_time ? "true" : "false") << "\n";
  return os.str();
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "[dataset]\n"
     << "path = " << cfg.dataset.string() << "\n"
     << "mode = " << (cfg.mode == SplitMode::kTransductive ? "transductive" : "inductive") << "\n\n"
     << format_model_train(cfg.model, cfg.train) << "\n"
     << "[output]\n"
     << "dir = " << cfg.output_dir.string() << "\n"
     << "verbosity = " << cfg.verbosity << "\n";
  return os.str();
}

}  // namespace kgf
