#include "ddm/config.hpp"

#include <charconv>
#include <set>

#include "ddm/binary_io.hpp"
#include "ddm/error.hpp"

namespace ddm {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorCode::Config,
       "config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" + std::string(value) + "'");
}

template <class T>
T parse_integral(std::string_view key, std::string_view value) {
  T v{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

double parse_real(std::string_view key, std::string_view value) {
  double v = 0.0;
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) bad_value(key, value, "a real number");
  return v;
}

std::vector<int> parse_widths(std::string_view key, std::string_view value) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    const auto comma = value.find(',', pos);
    out.push_back(parse_integral<int>(key, trim(value.substr(pos, comma - pos))));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string widths_text(const std::vector<int>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

}  // namespace

void apply_setting(ExperimentConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  auto& d = c.data;
  if (key == "K") d.clusters = parse_integral<int>(key, value);
  else if (key == "F") d.frames = parse_integral<int>(key, value);
  else if (key == "D") d.dim = parse_integral<int>(key, value);
  else if (key == "C") d.cond_dim = parse_integral<int>(key, value);
  else if (key == "P") d.pooled_dim = parse_integral<int>(key, value);
  else if (key == "sigma_c") d.sigma_c = parse_real(key, value);
  else if (key == "n_train") c.n_train = parse_integral<long>(key, value);
  else if (key == "n_eval") c.n_eval = parse_integral<long>(key, value);
  else if (key == "total_steps") c.total_steps = parse_integral<long>(key, value);
  else if (key == "batch") c.batch = parse_integral<int>(key, value);
  else if (key == "p_drop") c.p_drop = parse_real(key, value);
  else if (key == "lr") c.lr = parse_real(key, value);
  else if (key == "expert_hidden") c.expert_hidden = parse_widths(key, value);
  else if (key == "router_steps") c.router_steps = parse_integral<long>(key, value);
  else if (key == "router_batch") c.router_batch = parse_integral<int>(key, value);
  else if (key == "router_hidden") c.router_hidden = parse_widths(key, value);
  else if (key == "n_steps") c.n_steps = parse_integral<int>(key, value);
  else if (key == "cfg_scale") c.cfg_scale = parse_real(key, value);
  else if (key == "top_k") c.top_k = parse_integral<int>(key, value);
  else if (key == "guidance") {
    if (value == "per_expert") c.guidance = GuidanceOrder::PerExpert;
    else if (value == "post_mix") c.guidance = GuidanceOrder::PostMix;
    else bad_value(key, value, "per_expert or post_mix");
  }
  else if (key == "data_seed") c.data_seed = parse_integral<std::uint64_t>(key, value);
  else if (key == "train_seed") c.train_seed = parse_integral<std::uint64_t>(key, value);
  else if (key == "eval_seed") c.eval_seed = parse_integral<std::uint64_t>(key, value);
  else if (key == "switch_prompts") c.switch_prompts = parse_integral<int>(key, value);
  else if (key == "switch_skew") c.switch_skew = parse_real(key, value);
  else if (key == "switch_steps") c.switch_steps = parse_integral<long>(key, value);
  else if (key == "probe_prompts") c.probe_prompts = parse_integral<long>(key, value);
  else if (key == "probe_lambda") c.probe_lambda = parse_real(key, value);
  else if (key == "frechet_reg") c.frechet_reg = parse_real(key, value);
  else if (key == "out_dir") c.out_dir = std::string(value);
  else fail(ErrorCode::Config, "unknown config key '" + std::string(key) + "'");
}

void ExperimentConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::Config, "invalid config: " + what);
  };
  try {
    data.validate();
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("invalid config: ") + e.what());
  }
  check(n_train >= 1, "n_train must be >= 1");
  check(n_eval >= data.clusters && n_eval >= 2, "n_eval must cover every cluster");
  check(total_steps >= 0 && total_steps % data.clusters == 0, "total_steps must be a non-negative multiple of K");
  check(batch >= 1, "batch must be >= 1");
  check(p_drop >= 0.0 && p_drop < 1.0, "p_drop must lie in [0, 1)");
  check(lr > 0.0, "lr must be > 0");
  check(!expert_hidden.empty() && !router_hidden.empty(), "hidden widths must be non-empty");
  for (int w : expert_hidden) check(w > 0, "expert_hidden widths must be positive");
  for (int w : router_hidden) check(w > 0, "router_hidden widths must be positive");
  check(router_steps >= 0 && router_batch >= 1, "router_steps/router_batch invalid");
  check(n_steps >= 1, "n_steps must be >= 1");
  check(cfg_scale >= 0.0, "cfg_scale must be >= 0");
  check(top_k >= 1 && top_k <= data.clusters, "top_k must lie in [1, K]");
  check(switch_prompts >= 2, "switch_prompts must be >= 2");
  check(switch_skew > 0.0, "switch_skew must be > 0");
  check(switch_steps >= 0, "switch_steps must be >= 0");
  check(probe_prompts >= 2, "probe_prompts must be >= 2");
  check(probe_lambda > 0.0, "probe_lambda must be > 0");
  check(frechet_reg >= 0.0, "frechet_reg must be >= 0");
}

std::string ExperimentConfig::canonical() const {
  std::string s;
  auto kv = [&s](const char* k, const std::string& v) { s += std::string(k) + "=" + v + "\n"; };
  kv("K", std::to_string(data.clusters));
  kv("F", std::to_string(data.frames));
  kv("D", std::to_string(data.dim));
  kv("C", std::to_string(data.cond_dim));
  kv("P", std::to_string(data.pooled_dim));
  kv("sigma_c", format_double(data.sigma_c));
  kv("n_train", std::to_string(n_train));
  kv("n_eval", std::to_string(n_eval));
  kv("total_steps", std::to_string(total_steps));
  kv("batch", std::to_string(batch));
  kv("p_drop", format_double(p_drop));
  kv("lr", format_double(lr));
  kv("expert_hidden", widths_text(expert_hidden));
  kv("router_steps", std::to_string(router_steps));
  kv("router_batch", std::to_string(router_batch));
  kv("router_hidden", widths_text(router_hidden));
  kv("n_steps", std::to_string(n_steps));
  kv("cfg_scale", format_double(cfg_scale));
  kv("top_k", std::to_string(top_k));
  kv("guidance", guidance == GuidanceOrder::PerExpert ? "per_expert" : "post_mix");
  kv("data_seed", std::to_string(data_seed));
  kv("train_seed", std::to_string(train_seed));
  kv("eval_seed", std::to_string(eval_seed));
  kv("switch_prompts", std::to_string(switch_prompts));
  kv("switch_skew", format_double(switch_skew));
  kv("switch_steps", std::to_string(switch_steps));
  kv("probe_prompts", std::to_string(probe_prompts));
  kv("probe_lambda", format_double(probe_lambda));
  kv("frechet_reg", format_double(frechet_reg));
  return s;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical()); }

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCode::Config, "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (!seen.insert(key).second) fail(ErrorCode::Config, "config key '" + key + "' set twice");
    apply_setting(cfg, key, line.substr(eq + 1));
  }
  for (const auto& k : kRequiredConfigKeys)
    if (!seen.count(k)) fail(ErrorCode::Config, "config is missing required key '" + k + "'");
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::Io, std::string("cannot read config: ") + e.what());
  }
  return parse_config(text);
}

}  // namespace ddm
