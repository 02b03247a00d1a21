#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trb/config.hpp"
#include "trb/gradsuite.hpp"
#include "trb/heatmap.hpp"
#include "trb/metrics.hpp"
#include "trb/render.hpp"
#include "trb/train.hpp"

// Exit codes: 0 success, 2 config / usage error, 3 runtime failure.

namespace fs = std::filesystem;
using namespace trb;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

// One string slot per flag; only flags the user actually passed override
// the config file, so file values survive unrelated flags.
struct CliOpts {
  std::string config, seed, out, data, n_train, n_val, image_size, mode, mp, branch;
  std::string epochs, batch, lr, stacks, channels, seeds, limit, n, arms, checkpoint;
  std::string resume, checkpoint_every, log_every;
  bool force = false, oracle = false, save_opt_state = false;
};

std::pair<std::string, std::string> mode_to_branch_mp(const std::string& mode) {
  if (mode == "skeleton" || mode == "skeleton-only") return {"skeleton-only", "none"};
  if (mode == "contour" || mode == "contour-only") return {"contour-only", "none"};
  if (mode == "multitask") return {"multitask", "none"};
  for (const char* m : {"xs", "normal-conv", "dc-no-adaptive", "dc", "pm", "dc+pm"})
    if (mode == m) return {"multitask", mode};
  throw ConfigError("unknown mode '" + mode +
                    "' (expected skeleton, contour, multitask, xs, normal-conv, "
                    "dc-no-adaptive, dc, pm or dc+pm)");
}

// seed_key: --seed means the data seed for gen-data, the net seed elsewhere
RunConfig resolve(const CLI::App* sub, const CliOpts& o, const char* seed_key) {
  KvMap kv;
  if (sub->count("--config")) kv = parse_ini(read_file(o.config));
  auto put = [&](const char* flag, const char* key, const std::string& v) {
    if (sub->get_option_no_throw(flag) && sub->count(flag)) kv[key] = v;
  };
  put("--seed", seed_key, o.seed);
  put("--out", "run.out", o.out);
  put("--data", "run.data", o.data);
  put("--n-train", "run.n_train", o.n_train);
  put("--n-val", "run.n_val", o.n_val);
  put("--image-size", "gen.image_size", o.image_size);
  put("--mp", "net.mp", o.mp);
  put("--branch", "net.branch", o.branch);
  put("--epochs", "net.epochs", o.epochs);
  put("--batch", "net.batch", o.batch);
  put("--lr", "net.lr", o.lr);
  put("--stacks", "net.stacks", o.stacks);
  put("--channels", "net.channels", o.channels);
  put("--seeds", "run.seeds", o.seeds);
  put("--limit", "run.limit", o.limit);
  put("--n", "run.n_render", o.n);
  put("--arms", "run.arms", o.arms);
  put("--checkpoint", "run.checkpoint", o.checkpoint);
  put("--resume", "run.resume", o.resume);
  put("--checkpoint-every", "run.checkpoint_every", o.checkpoint_every);
  put("--log-every", "run.log_every", o.log_every);
  if (sub->get_option_no_throw("--force") && o.force) kv["run.force"] = "true";
  if (sub->get_option_no_throw("--oracle") && o.oracle) kv["run.oracle"] = "true";
  if (sub->get_option_no_throw("--save-opt-state") && o.save_opt_state)
    kv["run.save_opt_state"] = "true";
  if (sub->get_option_no_throw("--mode") && sub->count("--mode")) {
    auto [branch, mp] = mode_to_branch_mp(o.mode);
    kv["net.branch"] = branch;
    kv["net.mp"] = mp;
  }
  RunConfig rc;
  apply_config(rc, kv);
  return rc;
}

void check_net(const NetConfig& cfg) {
  try {
    validate(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

// Creates the output directory, refusing to reuse a non-empty one without
// --force, and drops the resolved config beside the future artifacts.
void prepare_out_dir(const RunConfig& rc) {
  if (rc.out_dir.empty()) throw ConfigError("run.out is required (--out DIR)");
  const fs::path p = rc.out_dir;
  if (fs::exists(p) && !fs::is_empty(p) && !rc.force)
    throw std::runtime_error("output directory " + rc.out_dir +
                             " is not empty; pass --force to write into it");
  fs::create_directories(p);
  write_file(p / "config.ini", serialize_config(rc));
}

TrainSet load_split(const std::string& data_dir, const char* split) {
  if (data_dir.empty()) throw ConfigError("run.data is required (--data DIR)");
  if (fs::exists(fs::path(data_dir) / "annotations.json")) return read_dataset_dir(data_dir);
  const fs::path sub = fs::path(data_dir) / split;
  if (fs::exists(sub / "annotations.json")) return read_dataset_dir(sub.string());
  throw std::runtime_error("no dataset at " + data_dir + " (expected annotations.json or " +
                           split + "/annotations.json)");
}

void check_trainable(const TrainSet& ts, const NetConfig& cfg) {
  if (ts.samples.empty()) throw std::runtime_error("dataset is empty");
  const ImageU8& img = ts.samples[0].image;
  if (img.w != img.h || img.w % 16 != 0)
    throw std::runtime_error("images must be square with side divisible by 16, got " +
                             std::to_string(img.w) + "x" + std::to_string(img.h));
  if (img.w / kNetStride < cfg.dc_grid)
    throw std::runtime_error("image side " + std::to_string(img.w) +
                             " leaves the feature map smaller than net.dc_grid");
}

Model<float> model_from_checkpoint(const std::string& path, const KeypointSchema& schema) {
  if (path.empty()) throw ConfigError("run.checkpoint is required (--checkpoint FILE)");
  Checkpoint ck = load_checkpoint(path);
  if (ck.config_text.empty()) throw std::runtime_error(path + " carries no config text");
  RunConfig stored;
  try {
    apply_config(stored, parse_ini(ck.config_text));
  } catch (const std::exception& e) {
    throw std::runtime_error(path + " has an unreadable config: " + e.what());
  }
  Model<float> m = build_model<float>(stored.net, schema);
  checkpoint_into_model(m, ck);  // fails loudly on a schema mismatch
  return m;
}

PersonAnnotation decode_final(Model<float>& m, const StackOut<float>& so, int bi,
                              const std::string& image_id) {
  const Tensor<float>& ske = m.has_pm() ? so.ske_fine : so.ske;
  const Tensor<float>& con = m.has_pm() ? so.con_fine : so.con;
  PersonAnnotation pa;
  pa.image_id = image_id;
  pa.keypoints.assign(m.schema.n_keypoints(), Keypoint{0, 0, Visibility::Visible});
  if (ske.defined()) {
    std::vector<DecodedPoint> pts = decode(ske, kNetStride);
    for (int c = 0; c < m.n_ske(); ++c) {
      const DecodedPoint& d = pts[static_cast<std::size_t>(bi) * m.n_ske() + c];
      pa.keypoints[c] = {d.x, d.y, Visibility::Visible};
    }
  }
  if (con.defined()) {
    std::vector<DecodedPoint> pts = decode(con, kNetStride);
    for (int c = 0; c < m.n_con(); ++c) {
      const DecodedPoint& d = pts[static_cast<std::size_t>(bi) * m.n_con() + c];
      pa.keypoints[m.n_ske() + c] = {d.x, d.y, Visibility::Visible};
    }
  }
  return pa;
}

// ---------------------------------------------------------------- commands

void cmd_gen_data(const RunConfig& rc) {
  if (rc.n_train < 0 || rc.n_val < 0) throw ConfigError("run.n_train/run.n_val must be >= 0");
  prepare_out_dir(rc);
  const KeypointSchema schema = default_schema();
  const std::string cfg_text = serialize_config(rc);
  TrainSet train = generate_train_set(rc.n_train, rc.data_seed, rc.gen, schema);
  write_dataset_dir(train, (fs::path(rc.out_dir) / "train").string(), rc.data_seed, cfg_text);
  const std::uint64_t val_seed = rc.data_seed + static_cast<std::uint64_t>(rc.n_train);
  TrainSet val = generate_train_set(rc.n_val, val_seed, rc.gen, schema);
  write_dataset_dir(val, (fs::path(rc.out_dir) / "val").string(), val_seed, cfg_text);
  std::printf("wrote %d train + %d val samples (%dpx) to %s\n", rc.n_train, rc.n_val,
              rc.gen.image_size, rc.out_dir.c_str());
}

void cmd_train(const RunConfig& rc) {
  check_net(rc.net);
  TrainSet train = load_split(rc.data_dir, "train");
  TrainSet val = load_split(rc.data_dir, "val");
  if (train.schema.names != val.schema.names)
    throw std::runtime_error("train and val splits disagree on the keypoint schema");
  check_trainable(train, rc.net);
  prepare_out_dir(rc);

  Model<float> m = build_model<float>(rc.net, train.schema);
  std::printf("training %s / %s: %lld parameters, %d epochs\n", to_string(rc.net.branch).c_str(),
              to_string(rc.net.mp).c_str(), static_cast<long long>(m.param_count()),
              rc.net.epochs);
  TrainOptions opt;
  opt.out_dir = rc.out_dir;
  opt.config_text = serialize_config(rc);
  opt.checkpoint_every = rc.checkpoint_every;
  opt.save_opt_state = rc.save_opt_state;
  opt.log_every = rc.log_every;
  opt.resume_from = rc.resume;
  TrainingHistory hist = train_model(m, train, val, opt);
  if (!hist.rows.empty())
    std::printf("loss %.5f -> %.5f, val pckh %.2f\n", hist.rows.front().l, hist.rows.back().l,
                hist.rows.back().val_pckh);
  std::printf("artifacts in %s\n", rc.out_dir.c_str());
}

// A single-branch model emits placeholder (0, 0) predictions for the other
// branch so annotation vectors stay uniform; hide those columns here.
void print_eval(const EvalResult& er, const Model<float>& m) {
  const bool s = m.has_skeleton(), c = m.has_contour();
  if (s && c) {
    std::fputs(report_table(er.pckh_final, "PCKh@0.5").c_str(), stdout);
    std::fputs(report_table(er.pck_final, "PCK@0.2").c_str(), stdout);
  } else {
    const char* col = s ? "Ske." : "Con.";
    std::printf("PCKh@0.5  %s %.2f\n", col, s ? er.pckh_final.ske : er.pckh_final.con);
    std::printf("PCK@0.2   %s %.2f\n", col, s ? er.pck_final.ske : er.pck_final.con);
  }
  std::printf("AUC(PCKh, 0..0.5)  %.2f\n", er.auc_pckh);
  auto stack_line = [&](const char* kind, std::size_t i, const EvalReport& r) {
    std::printf("stack%zu-%s ", i + 1, kind);
    if (s) std::printf(" Ske. %.2f", r.ske);
    if (c) std::printf(" Con. %.2f", r.con);
    if (s && c) std::printf("  Mean %.2f", r.mean);
    std::printf("\n");
  };
  for (std::size_t i = 0; i < er.coarse.size(); ++i) {
    stack_line("c", i, er.coarse[i]);
    if (m.has_pm()) stack_line("f", i, er.fine[i]);
  }
}

void cmd_eval(const RunConfig& rc) {
  TrainSet data = load_split(rc.data_dir, "val");
  std::string summary;
  if (rc.oracle) {
    std::vector<PersonAnnotation> annos;
    const int lim = rc.limit < 0 ? static_cast<int>(data.samples.size())
                                 : std::min<int>(rc.limit, data.samples.size());
    for (int i = 0; i < lim; ++i) annos.push_back(data.samples[i].anno);
    EvalReport rh = pckh(annos, annos, data.schema);
    EvalReport rp = pck(annos, annos, data.schema);
    std::fputs(report_table(rh, "PCKh@0.5 (ground truth vs itself)").c_str(), stdout);
    std::fputs(report_table(rp, "PCK@0.2 (ground truth vs itself)").c_str(), stdout);
    if (!rc.out_dir.empty()) {
      prepare_out_dir(rc);
      write_file(fs::path(rc.out_dir) / "pckh.csv", report_csv(rh, data.schema));
      write_file(fs::path(rc.out_dir) / "pck.csv", report_csv(rp, data.schema));
    }
    return;
  }
  Model<float> m = model_from_checkpoint(rc.checkpoint, data.schema);
  EvalResult er = evaluate_model(m, data, rc.limit);
  print_eval(er, m);
  if (!rc.out_dir.empty()) {
    prepare_out_dir(rc);
    write_file(fs::path(rc.out_dir) / "pckh.csv", report_csv(er.pckh_final, data.schema));
    write_file(fs::path(rc.out_dir) / "pck.csv", report_csv(er.pck_final, data.schema));
    std::ostringstream os;
    os << report_table(er.pckh_final, "PCKh@0.5") << report_table(er.pck_final, "PCK@0.2")
       << "AUC(PCKh, 0..0.5)  " << er.auc_pckh << "\n";
    write_file(fs::path(rc.out_dir) / "summary.txt", os.str());
  }
}

struct Cell {
  double sum = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  int n = 0;
  void add(double v) {
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    ++n;
  }
  // spread = half the min-to-max range across seeds
  std::string fmt() const {
    char buf[48];
    if (n <= 1)
      std::snprintf(buf, sizeof buf, "%.2f", n ? sum : 0.0);
    else
      std::snprintf(buf, sizeof buf, "%.2f ± %.2f", sum / n, (hi - lo) / 2.0);
    return buf;
  }
};

struct RowAgg {
  Cell ske, con, mean;
  // single-branch arms leave the other branch's column out of the table;
  // the placeholder predictions it would score are meaningless
  bool has_ske = true, has_con = true;
  void add(const EvalReport& r) {
    ske.add(r.ske);
    con.add(r.con);
    mean.add(r.mean);
  }
  std::string col_ske() const { return has_ske ? ske.fmt() : "-"; }
  std::string col_con() const { return has_con ? con.fmt() : "-"; }
  std::string col_mean() const { return has_ske && has_con ? mean.fmt() : "-"; }
};

const std::vector<std::string>& all_arms() {
  static const std::vector<std::string> arms{"skeleton",       "contour", "multitask",
                                             "xs",             "normal-conv",
                                             "dc-no-adaptive", "dc",      "pm",
                                             "dc+pm"};
  return arms;
}

void cmd_ablate(const RunConfig& rc) {
  TrainSet train = load_split(rc.data_dir, "train");
  TrainSet val = load_split(rc.data_dir, "val");
  if (train.schema.names != val.schema.names)
    throw std::runtime_error("train and val splits disagree on the keypoint schema");
  if (rc.seeds < 1) throw ConfigError("run.seeds must be >= 1");

  std::vector<std::string> arms;
  if (rc.arms.empty()) {
    arms = all_arms();
  } else {
    std::stringstream ss(rc.arms);
    std::string item;
    while (std::getline(ss, item, ',')) {
      mode_to_branch_mp(item);  // validates the name
      arms.push_back(item);
    }
    if (arms.empty()) throw ConfigError("run.arms lists no arms");
  }
  prepare_out_dir(rc);

  std::vector<std::string> row_order;
  std::map<std::string, RowAgg> rows;  // map keeps references stable across inserts
  auto row = [&](const std::string& label) -> RowAgg& {
    auto it = rows.find(label);
    if (it == rows.end()) {
      row_order.push_back(label);
      it = rows.emplace(label, RowAgg{}).first;
    }
    return it->second;
  };

  for (const std::string& arm : arms) {
    for (int si = 0; si < rc.seeds; ++si) {
      RunConfig arc = rc;
      auto [branch, mp] = mode_to_branch_mp(arm);
      arc.net.branch = branch_mode_from(branch);
      arc.net.mp = mp_mode_from(mp);
      arc.net.seed = rc.net.seed + static_cast<std::uint64_t>(si);
      check_net(arc.net);
      check_trainable(train, arc.net);

      const fs::path arm_dir = fs::path(rc.out_dir) / arm / ("s" + std::to_string(si));
      fs::create_directories(arm_dir);
      arc.out_dir = arm_dir.string();
      write_file(arm_dir / "config.ini", serialize_config(arc));

      std::printf("[%s seed %llu] training...\n", arm.c_str(),
                  static_cast<unsigned long long>(arc.net.seed));
      std::fflush(stdout);
      Model<float> m = build_model<float>(arc.net, train.schema);
      TrainOptions opt;
      opt.out_dir = arc.out_dir;
      opt.config_text = serialize_config(arc);
      opt.log_every = rc.log_every;
      train_model(m, train, val, opt);
      EvalResult er = evaluate_model(m, val, rc.limit);
      auto mark = [&](RowAgg& agg) {
        agg.has_ske = m.has_skeleton();
        agg.has_con = m.has_contour();
      };
      RowAgg& main_row = row(arm);
      mark(main_row);
      main_row.add(er.pckh_final);
      if (m.has_pm())
        for (std::size_t st = 0; st < er.coarse.size(); ++st) {
          RowAgg& rc_row = row(arm + ":stack" + std::to_string(st + 1) + "-c");
          RowAgg& rf_row = row(arm + ":stack" + std::to_string(st + 1) + "-f");
          mark(rc_row);
          mark(rf_row);
          rc_row.add(er.coarse[st]);
          rf_row.add(er.fine[st]);
        }
    }
  }

  std::ostringstream txt, csv;
  txt << "PCKh@0.5 on " << (rc.limit < 0 ? static_cast<int>(val.samples.size()) : rc.limit)
      << " val samples, " << rc.seeds << " seed(s)\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-24s %-16s %-16s %-16s\n", "arm", "Ske.", "Con.", "Mean");
  txt << line;
  csv << "arm,ske,con,mean\n";
  for (const std::string& label : row_order) {
    const RowAgg& agg = row(label);
    std::snprintf(line, sizeof line, "%-24s %-16s %-16s %-16s\n", label.c_str(),
                  agg.col_ske().c_str(), agg.col_con().c_str(), agg.col_mean().c_str());
    txt << line;
    csv << label << "," << agg.col_ske() << "," << agg.col_con() << "," << agg.col_mean()
        << "\n";
  }
  std::fputs(txt.str().c_str(), stdout);
  write_file(fs::path(rc.out_dir) / "table.txt", txt.str());
  write_file(fs::path(rc.out_dir) / "table.csv", csv.str());
}

void cmd_gradcheck() {
  std::vector<GradSuiteEntry> entries = run_gradient_suite();
  int failed = 0;
  for (const GradSuiteEntry& e : entries) {
    std::printf("%-24s max rel err %.3e  (tol %.0e)  [%s]\n", e.name.c_str(), e.err, e.tol,
                e.pass ? "PASS" : "FAIL");
    if (!e.pass) ++failed;
  }
  std::printf("%zu checks, %d failed\n", entries.size(), failed);
  if (failed) throw std::runtime_error("gradient checks failed");
}

void cmd_render(const RunConfig& rc) {
  TrainSet data = load_split(rc.data_dir, "val");
  if (rc.n_render < 1) throw ConfigError("run.n_render must be >= 1");
  prepare_out_dir(rc);
  const int n = std::min<int>(rc.n_render, static_cast<int>(data.samples.size()));

  Model<float> m;
  const bool with_preds = !rc.checkpoint.empty();
  if (with_preds) m = model_from_checkpoint(rc.checkpoint, data.schema);

  Rng scratch(0);
  char name[64];
  for (int i = 0; i < n; ++i) {
    const Sample& s = data.samples[i];
    ImageU8 gt = render_overlay(s.image, s.anno, data.schema);
    std::snprintf(name, sizeof name, "gt_%06d.ppm", i);
    save_image(gt, (fs::path(rc.out_dir) / name).string());
    if (with_preds) {
      BatchTensors bt = make_batch(data, {i}, false, scratch, AugmentConfig{}, m.cfg.sigma);
      Tape<float> tape;
      tape.set_recording(false);
      ForwardOut<float> fo = forward(tape, m, bt.images);
      PersonAnnotation pred = decode_final(m, fo.stacks.back(), 0, s.anno.image_id);
      ImageU8 ov = render_overlay(s.image, pred, data.schema);
      std::snprintf(name, sizeof name, "pred_%06d.ppm", i);
      save_image(ov, (fs::path(rc.out_dir) / name).string());
    }
  }
  std::printf("wrote %d overlay(s) to %s\n", n, rc.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"triplet-representation body model toolkit"};
  app.require_subcommand(1);
  auto o = std::make_shared<CliOpts>();

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o->config, "INI config file; flags override its values");
  };

  CLI::App* gd = app.add_subcommand("gen-data", "generate a synthetic dataset");
  common(gd);
  gd->add_option("--seed", o->seed, "data seed");
  gd->add_option("--out", o->out, "output directory");
  gd->add_option("--n-train", o->n_train, "training samples");
  gd->add_option("--n-val", o->n_val, "validation samples");
  gd->add_option("--image-size", o->image_size, "square image side, px");
  gd->add_flag("--force", o->force, "allow writing into a non-empty directory");
  gd->callback([&, gd] { cmd_gen_data(resolve(gd, *o, "run.data_seed")); });

  CLI::App* tr = app.add_subcommand("train", "train a model on a generated dataset");
  common(tr);
  tr->add_option("--data", o->data, "dataset root (train/ + val/)");
  tr->add_option("--out", o->out, "run directory");
  tr->add_option("--seed", o->seed, "net seed");
  tr->add_option("--mode", o->mode, "arm shorthand: branch plus message passing");
  tr->add_option("--mp", o->mp, "message passing mode");
  tr->add_option("--branch", o->branch, "skeleton-only | contour-only | multitask");
  tr->add_option("--epochs", o->epochs, "training epochs");
  tr->add_option("--batch", o->batch, "batch size");
  tr->add_option("--lr", o->lr, "learning rate");
  tr->add_option("--stacks", o->stacks, "hourglass stacks");
  tr->add_option("--channels", o->channels, "feature channels");
  tr->add_option("--resume", o->resume, "checkpoint to continue from");
  tr->add_option("--checkpoint-every", o->checkpoint_every, "epochs between checkpoints");
  tr->add_option("--log-every", o->log_every, "steps between progress lines");
  tr->add_flag("--save-opt-state", o->save_opt_state, "store optimizer state in checkpoints");
  tr->add_flag("--force", o->force, "allow writing into a non-empty directory");
  tr->callback([&, tr] { cmd_train(resolve(tr, *o, "net.seed")); });

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  common(ev);
  ev->add_option("--data", o->data, "dataset root or split directory");
  ev->add_option("--checkpoint", o->checkpoint, "model checkpoint");
  ev->add_option("--out", o->out, "report directory (optional)");
  ev->add_option("--limit", o->limit, "cap on evaluated samples");
  ev->add_flag("--oracle", o->oracle, "score the ground truth against itself");
  ev->add_flag("--force", o->force, "allow writing into a non-empty directory");
  ev->callback([&, ev] { cmd_eval(resolve(ev, *o, "net.seed")); });

  CLI::App* ab = app.add_subcommand("ablate", "train and compare all arms");
  common(ab);
  ab->add_option("--data", o->data, "dataset root (train/ + val/)");
  ab->add_option("--out", o->out, "ablation directory");
  ab->add_option("--seed", o->seed, "base net seed");
  ab->add_option("--seeds", o->seeds, "repeats per arm");
  ab->add_option("--arms", o->arms, "comma-separated arm subset");
  ab->add_option("--epochs", o->epochs, "training epochs");
  ab->add_option("--batch", o->batch, "batch size");
  ab->add_option("--lr", o->lr, "learning rate");
  ab->add_option("--stacks", o->stacks, "hourglass stacks");
  ab->add_option("--channels", o->channels, "feature channels");
  ab->add_option("--limit", o->limit, "cap on evaluated samples");
  ab->add_option("--log-every", o->log_every, "steps between progress lines");
  ab->add_flag("--force", o->force, "allow writing into a non-empty directory");
  ab->callback([&, ab] { cmd_ablate(resolve(ab, *o, "net.seed")); });

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gc->callback([] { cmd_gradcheck(); });

  CLI::App* rd = app.add_subcommand("render", "draw keypoint overlays");
  common(rd);
  rd->add_option("--data", o->data, "dataset root or split directory");
  rd->add_option("--out", o->out, "image directory");
  rd->add_option("--n", o->n, "samples to render");
  rd->add_option("--checkpoint", o->checkpoint, "also render model predictions");
  rd->add_flag("--force", o->force, "allow writing into a non-empty directory");
  rd->callback([&, rd] { cmd_render(resolve(rd, *o, "net.seed")); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {  // --help and friends
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
