#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "trb/net.hpp"
#include "trb/synth.hpp"

namespace trb {

// Configuration problems get a distinct type so the entry points can exit
// with a different code than runtime failures use.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Flattened "section.key" -> value. The file format is one level of
// [section] headers over key = value lines; blank lines and lines starting
// with '#' or ';' are ignored; later duplicates win.
using KvMap = std::map<std::string, std::string>;

KvMap parse_ini(const std::string& text);

// Everything a command run needs, with defaults matching the library.
struct RunConfig {
  NetConfig net;
  GenConfig gen;
  AugmentConfig aug;
  std::string data_dir;   // dataset root with train/ and val/
  std::string out_dir;    // artifacts land here
  std::string checkpoint; // model input for eval/render
  std::string resume;     // checkpoint to continue training from
  std::string arms;       // comma-separated ablation subset, empty = all
  int n_train = 2000;
  int n_val = 500;
  std::uint64_t data_seed = 7;
  int seeds = 1;          // ablation repeats
  bool force = false;     // allow writing into a non-empty directory
  int checkpoint_every = 0;
  bool save_opt_state = false;
  int log_every = 0;
  int limit = -1;         // evaluation sample cap, < 0 = all
  int n_render = 4;
  bool oracle = false;    // score ground truth against itself
};

// Applies entries onto cfg. Unknown keys and unparsable values throw
// ConfigError naming the offending field.
void apply_config(RunConfig& cfg, const KvMap& kv);

// Every known key with its current value; parse_ini + apply_config on the
// result reproduces cfg.
std::string serialize_config(const RunConfig& cfg);

}  // namespace trb
