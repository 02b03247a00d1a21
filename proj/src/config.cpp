#include "trb/config.hpp"

#include <cstdio>
#include <functional>
#include <vector>

namespace trb {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Parsing helpers reject trailing junk so "8x" or "1.5 extra" fail loudly.
long long to_int(const std::string& v) {
  std::size_t pos = 0;
  long long x = std::stoll(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return x;
}

double to_float(const std::string& v) {
  std::size_t pos = 0;
  double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("trailing characters");
  return x;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false");
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    auto add = [&](std::string key, auto setter, auto getter) {
      t.push_back({std::move(key), setter, getter});
    };
    auto add_int = [&](std::string key, auto member) {
      add(std::move(key),
          [member](RunConfig& c, const std::string& v) { c.*member = static_cast<int>(to_int(v)); },
          [member](const RunConfig& c) { return std::to_string(c.*member); });
    };
    auto add_bool = [&](std::string key, auto member) {
      add(std::move(key), [member](RunConfig& c, const std::string& v) { c.*member = to_bool(v); },
          [member](const RunConfig& c) { return c.*member ? "true" : "false"; });
    };
    auto add_str = [&](std::string key, auto member) {
      add(std::move(key), [member](RunConfig& c, const std::string& v) { c.*member = v; },
          [member](const RunConfig& c) { return c.*member; });
    };

    // [net]
    auto net_int = [&](std::string key, auto member) {
      add(std::move(key),
          [member](RunConfig& c, const std::string& v) {
            c.net.*member = static_cast<int>(to_int(v));
          },
          [member](const RunConfig& c) { return std::to_string(c.net.*member); });
    };
    auto net_float = [&](std::string key, auto member) {
      add(std::move(key),
          [member](RunConfig& c, const std::string& v) {
            c.net.*member = static_cast<float>(to_float(v));
          },
          [member](const RunConfig& c) { return fmt_float(c.net.*member); });
    };
    net_int("net.stacks", &NetConfig::n_stacks);
    net_int("net.channels", &NetConfig::base_channels);
    net_int("net.dc_grid", &NetConfig::dc_grid);
    net_int("net.dc_kernel", &NetConfig::dc_kernel);
    net_int("net.pm_hidden", &NetConfig::pm_hidden);
    add("net.mp",
        [](RunConfig& c, const std::string& v) { c.net.mp = mp_mode_from(v); },
        [](const RunConfig& c) { return to_string(c.net.mp); });
    add("net.branch",
        [](RunConfig& c, const std::string& v) { c.net.branch = branch_mode_from(v); },
        [](const RunConfig& c) { return to_string(c.net.branch); });
    net_float("net.w_skeleton", &NetConfig::w_skeleton);
    net_float("net.w_contour", &NetConfig::w_contour);
    net_float("net.w_pairwise", &NetConfig::w_pairwise);
    net_float("net.lr", &NetConfig::lr);
    net_float("net.beta1", &NetConfig::beta1);
    net_float("net.beta2", &NetConfig::beta2);
    net_float("net.adam_eps", &NetConfig::adam_eps);
    net_int("net.batch", &NetConfig::batch_size);
    net_int("net.epochs", &NetConfig::epochs);
    net_int("net.val_subset", &NetConfig::val_subset);
    net_float("net.sigma", &NetConfig::sigma);
    add("net.seed",
        [](RunConfig& c, const std::string& v) {
          c.net.seed = static_cast<std::uint64_t>(to_int(v));
        },
        [](const RunConfig& c) { return std::to_string(c.net.seed); });

    // [gen]
    auto gen_float = [&](std::string key, auto member) {
      add(std::move(key),
          [member](RunConfig& c, const std::string& v) {
            c.gen.*member = static_cast<float>(to_float(v));
          },
          [member](const RunConfig& c) { return fmt_float(c.gen.*member); });
    };
    add("gen.image_size",
        [](RunConfig& c, const std::string& v) { c.gen.image_size = static_cast<int>(to_int(v)); },
        [](const RunConfig& c) { return std::to_string(c.gen.image_size); });
    gen_float("gen.body_gray", &GenConfig::body_gray);
    gen_float("gen.bg_gray", &GenConfig::bg_gray);
    gen_float("gen.noise_amp", &GenConfig::noise_amp);
    gen_float("gen.scale_lo", &GenConfig::scale_lo);
    gen_float("gen.scale_hi", &GenConfig::scale_hi);
    gen_float("gen.lean", &GenConfig::lean);
    gen_float("gen.shift", &GenConfig::shift);
    gen_float("gen.width_jitter", &GenConfig::width_jitter);

    // [aug]
    auto aug_float = [&](std::string key, auto member) {
      add(std::move(key),
          [member](RunConfig& c, const std::string& v) {
            c.aug.*member = static_cast<float>(to_float(v));
          },
          [member](const RunConfig& c) { return fmt_float(c.aug.*member); });
    };
    aug_float("aug.max_rot_deg", &AugmentConfig::max_rot_deg);
    aug_float("aug.scale_lo", &AugmentConfig::scale_lo);
    aug_float("aug.scale_hi", &AugmentConfig::scale_hi);
    aug_float("aug.flip_p", &AugmentConfig::flip_p);

    // [run]
    add_str("run.data", &RunConfig::data_dir);
    add_str("run.out", &RunConfig::out_dir);
    add_str("run.checkpoint", &RunConfig::checkpoint);
    add_str("run.resume", &RunConfig::resume);
    add_str("run.arms", &RunConfig::arms);
    add_int("run.n_train", &RunConfig::n_train);
    add_int("run.n_val", &RunConfig::n_val);
    add("run.data_seed",
        [](RunConfig& c, const std::string& v) {
          c.data_seed = static_cast<std::uint64_t>(to_int(v));
        },
        [](const RunConfig& c) { return std::to_string(c.data_seed); });
    add_int("run.seeds", &RunConfig::seeds);
    add_bool("run.force", &RunConfig::force);
    add_int("run.checkpoint_every", &RunConfig::checkpoint_every);
    add_bool("run.save_opt_state", &RunConfig::save_opt_state);
    add_int("run.log_every", &RunConfig::log_every);
    add_int("run.limit", &RunConfig::limit);
    add_int("run.n_render", &RunConfig::n_render);
    add_bool("run.oracle", &RunConfig::oracle);
    return t;
  }();
  return table;
}

}  // namespace

KvMap parse_ini(const std::string& text) {
  KvMap kv;
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++lineno;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                        "' outside any [section]");
    kv[section + "." + key] = value;
  }
  return kv;
}

void apply_config(RunConfig& cfg, const KvMap& kv) {
  const auto& table = entries();
  for (const auto& [key, value] : kv) {
    const Entry* hit = nullptr;
    for (const Entry& e : table)
      if (e.key == key) {
        hit = &e;
        break;
      }
    if (!hit) throw ConfigError("unknown config key: " + key);
    try {
      hit->set(cfg, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& ex) {
      throw ConfigError("bad value for " + key + ": '" + value + "' (" + ex.what() + ")");
    }
  }
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const Entry& e : entries()) {
    const std::string sec = e.key.substr(0, e.key.find('.'));
    if (sec != section) {
      if (!out.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += e.key.substr(sec.size() + 1) + " = " + e.get(cfg) + "\n";
  }
  return out;
}

}  // namespace trb
