#include "trb/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "trb/heatmap.hpp"

namespace trb {

namespace fs = std::filesystem;

namespace {

std::string index_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", i);
  return buf;
}

void append_float(std::string& out, float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  out += buf;
}

}  // namespace

TrainSet generate_train_set(int n, std::uint64_t seed, const GenConfig& gcfg,
                            const KeypointSchema& schema) {
  TrainSet ts;
  ts.schema = schema;
  ts.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    RenderResult rr = generate_sample(seed + static_cast<std::uint64_t>(i), gcfg, schema);
    rr.anno.image_id = index_id(i);
    ts.samples.push_back({std::move(rr.image), std::move(rr.anno)});
  }
  return ts;
}

void write_dataset_dir(const TrainSet& ts, const std::string& dir, std::uint64_t seed,
                       const std::string& config_text) {
  fs::create_directories(fs::path(dir) / "images");
  Dataset ds;
  ds.schema = ts.schema;
  for (const Sample& s : ts.samples) {
    ds.annotations.push_back(s.anno);
    save_image(s.image, (fs::path(dir) / "images" / (s.anno.image_id + ".pgm")).string());
  }
  save_dataset((fs::path(dir) / "annotations.json").string(), ds);
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["count"] = ts.samples.size();
  manifest["config"] = config_text;
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

TrainSet read_dataset_dir(const std::string& dir) {
  Dataset ds = load_dataset((fs::path(dir) / "annotations.json").string());
  TrainSet ts;
  ts.schema = ds.schema;
  ts.samples.reserve(ds.annotations.size());
  for (PersonAnnotation& a : ds.annotations) {
    Sample s;
    s.image = load_image((fs::path(dir) / "images" / (a.image_id + ".pgm")).string());
    s.anno = std::move(a);
    ts.samples.push_back(std::move(s));
  }
  return ts;
}

BatchTensors make_batch(const TrainSet& ts, const std::vector<int>& idx, bool augment_on,
                        Rng& rng, const AugmentConfig& acfg, float sigma) {
  if (idx.empty()) throw std::invalid_argument("make_batch: empty index list");
  const int b = static_cast<int>(idx.size());
  const int size = ts.samples[idx[0]].image.w;
  const int hm = size / kNetStride;
  const int k = ts.schema.n_keypoints();

  BatchTensors bt;
  bt.images = TensorF::zeros(Shape{b, 3, size, size});
  bt.targets = TensorF::zeros(Shape{b, k, hm, hm});
  bt.mask01 = TensorF::zeros(Shape{b, k, hm, hm});
  bt.annos.reserve(b);

  for (int bi = 0; bi < b; ++bi) {
    const Sample& s = ts.samples[idx[bi]];
    if (s.image.w != size || s.image.h != size || s.image.channels != 1)
      throw std::invalid_argument("make_batch: inconsistent image geometry");
    ImageU8 img = s.image;
    PersonAnnotation anno = s.anno;
    if (augment_on) std::tie(img, anno) = augment(img, anno, ts.schema, rng, acfg);

    float* ip = bt.images.data() + bt.images.index(bi, 0, 0, 0);
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (std::size_t p = 0; p < plane; ++p) {
      const float v = static_cast<float>(img.data[p]) / 255.0f;
      ip[p] = v;
      ip[plane + p] = v;
      ip[2 * plane + p] = v;
    }

    HeatmapSet hs = render_targets(anno, ts.schema, hm, hm, kNetStride, sigma);
    const std::size_t hplane = static_cast<std::size_t>(hm) * hm;
    for (int c = 0; c < k; ++c) {
      const float* src = hs.maps.data() + hs.maps.index(0, c, 0, 0);
      float* tp = bt.targets.data() + bt.targets.index(bi, c, 0, 0);
      std::copy(src, src + hplane, tp);
      if (hs.mask[c]) {
        float* mp = bt.mask01.data() + bt.mask01.index(bi, c, 0, 0);
        std::fill(mp, mp + hplane, 1.0f);
      }
    }
    bt.annos.push_back(std::move(anno));
  }
  return bt;
}

std::string history_csv(const TrainingHistory& h) {
  std::string out = "epoch,L,L_S,L_C,L_P,val_pckh\n";
  for (const EpochRow& r : h.rows) {
    out += std::to_string(r.epoch);
    for (float v : {r.l, r.ls, r.lc, r.lp, r.val_pckh}) {
      out += ',';
      append_float(out, v);
    }
    out += '\n';
  }
  return out;
}

Checkpoint model_checkpoint(const Model<float>& m, const std::string& config_text,
                            const std::string& rng_state, int epoch) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.rng_state = rng_state;
  ck.epoch = epoch;
  for (const auto& [name, t] : m.registry) {
    TensorBlob b;
    b.name = name;
    const Shape s = t.shape();
    b.shape = {s.n, s.c, s.h, s.w};
    b.data = t.values();
    ck.params.push_back(std::move(b));
  }
  return ck;
}

void checkpoint_into_model(Model<float>& m, const Checkpoint& ck) {
  if (ck.params.size() != m.registry.size())
    throw std::runtime_error("checkpoint has " + std::to_string(ck.params.size()) +
                             " tensors, model expects " + std::to_string(m.registry.size()));
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    const TensorBlob& b = ck.params[i];
    auto& [name, t] = m.registry[i];
    const Shape s = t.shape();
    if (b.name != name)
      throw std::runtime_error("checkpoint tensor " + b.name + " does not match model " + name);
    if (b.shape != std::array<int, 4>{s.n, s.c, s.h, s.w} || b.data.size() != t.numel())
      throw std::runtime_error("checkpoint tensor " + b.name + " has mismatched shape");
    std::copy(b.data.begin(), b.data.end(), t.data());
  }
}

namespace {

struct AdamState {
  std::vector<std::vector<float>> m, v;
  std::int64_t t = 0;
};

void adam_step(Model<float>& model, AdamState& st) {
  const NetConfig& cfg = model.cfg;
  if (st.m.empty()) {
    st.m.resize(model.registry.size());
    st.v.resize(model.registry.size());
    for (std::size_t i = 0; i < model.registry.size(); ++i) {
      st.m[i].assign(model.registry[i].second.numel(), 0.0f);
      st.v[i].assign(model.registry[i].second.numel(), 0.0f);
    }
  }
  ++st.t;
  const float c1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(st.t));
  const float c2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(st.t));
  for (std::size_t i = 0; i < model.registry.size(); ++i) {
    Tensor<float>& p = model.registry[i].second;
    if (!p.has_grad()) continue;  // parameters unused by the active mode
    const std::vector<float>& g = p.grad_values();
    float* pv = p.data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      st.m[i][j] = cfg.beta1 * st.m[i][j] + (1.0f - cfg.beta1) * g[j];
      st.v[i][j] = cfg.beta2 * st.v[i][j] + (1.0f - cfg.beta2) * g[j] * g[j];
      const float mh = st.m[i][j] / c1;
      const float vh = st.v[i][j] / c2;
      pv[j] -= cfg.lr * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
  }
}

void check_finite(const LossReport& rep, int epoch, int step) {
  auto fail = [&](const char* term, int stack, float v) {
    throw std::runtime_error("training diverged: " + std::string(term) + " in stack " +
                             std::to_string(stack + 1) + " is " + std::to_string(v) +
                             " at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(step + 1));
  };
  for (std::size_t i = 0; i < rep.stacks.size(); ++i) {
    if (!std::isfinite(rep.stacks[i].ls)) fail("skeleton loss", static_cast<int>(i), rep.stacks[i].ls);
    if (!std::isfinite(rep.stacks[i].lc)) fail("contour loss", static_cast<int>(i), rep.stacks[i].lc);
    if (!std::isfinite(rep.stacks[i].lp)) fail("pairwise loss", static_cast<int>(i), rep.stacks[i].lp);
  }
  if (!std::isfinite(rep.total))
    throw std::runtime_error("training diverged: total loss is " + std::to_string(rep.total) +
                             " at epoch " + std::to_string(epoch + 1) + ", step " +
                             std::to_string(step + 1));
}

double branch_score(const Model<float>& m, const EvalReport& r) {
  if (m.cfg.branch == BranchMode::SkeletonOnly) return r.ske;
  if (m.cfg.branch == BranchMode::ContourOnly) return r.con;
  return r.mean;
}

}  // namespace

TrainingHistory train_model(Model<float>& m, const TrainSet& train, const TrainSet& val,
                            const TrainOptions& opt) {
  const NetConfig& cfg = m.cfg;
  const int n = static_cast<int>(train.samples.size());
  const int b = cfg.batch_size;
  const int steps = n / b;
  if (steps < 1) throw std::invalid_argument("train set smaller than one batch");

  Rng data_rng(cfg.seed ^ 0xda7a5eedULL);
  AugmentConfig acfg;
  AdamState adam;
  TrainingHistory hist;

  int start_epoch = 0;
  if (!opt.resume_from.empty()) {
    Checkpoint ck = load_checkpoint(opt.resume_from);
    checkpoint_into_model(m, ck);
    if (ck.opt.size() != 2 * m.registry.size())
      throw std::runtime_error("resume checkpoint carries no optimizer state");
    adam.m.resize(m.registry.size());
    adam.v.resize(m.registry.size());
    for (std::size_t i = 0; i < m.registry.size(); ++i) {
      const auto& [name, t] = m.registry[i];
      const TensorBlob& bm = ck.opt[2 * i];
      const TensorBlob& bv = ck.opt[2 * i + 1];
      if (bm.name != "m." + name || bv.name != "v." + name || bm.data.size() != t.numel() ||
          bv.data.size() != t.numel())
        throw std::runtime_error("resume checkpoint optimizer state does not match " + name);
      adam.m[i] = bm.data;
      adam.v[i] = bv.data;
    }
    adam.t = ck.adam_t;
    data_rng.set_state(ck.rng_state);
    start_epoch = ck.epoch;
  }

  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);

  std::vector<int> order(n);
  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    // shuffling a fresh identity order makes each epoch's batching a pure
    // function of the rng state, which is what lets a resume replay it
    for (int i = 0; i < n; ++i) order[i] = i;
    data_rng.shuffle(order);
    double sum_l = 0, sum_ls = 0, sum_lc = 0, sum_lp = 0;
    for (int step = 0; step < steps; ++step) {
      std::vector<int> idx(order.begin() + static_cast<std::size_t>(step) * b,
                           order.begin() + static_cast<std::size_t>(step + 1) * b);
      BatchTensors bt = make_batch(train, idx, true, data_rng, acfg, cfg.sigma);
      Tape<float> tape;
      ForwardOut<float> fo = forward(tape, m, bt.images);
      auto [rep, total] = total_loss(tape, m, fo, bt.targets, bt.mask01);
      check_finite(rep, epoch, step);
      tape.backward(total);
      adam_step(m, adam);
      for (auto& [name, t] : m.registry) t.zero_grad();

      sum_l += rep.total;
      for (const auto& st : rep.stacks) {
        sum_ls += st.ls;
        sum_lc += st.lc;
        sum_lp += st.lp;
      }
      if (opt.log_every > 0 && (step + 1) % opt.log_every == 0)
        std::fprintf(stderr, "epoch %d step %d/%d loss %.5f\n", epoch + 1, step + 1, steps,
                     rep.total);
    }

    EpochRow row;
    row.epoch = epoch + 1;
    row.l = static_cast<float>(sum_l / steps);
    row.ls = static_cast<float>(sum_ls / steps);
    row.lc = static_cast<float>(sum_lc / steps);
    row.lp = static_cast<float>(sum_lp / steps);
    if (!val.samples.empty()) {
      const int lim = cfg.val_subset > 0
                          ? std::min<int>(cfg.val_subset, static_cast<int>(val.samples.size()))
                          : -1;
      EvalResult er = evaluate_model(m, val, lim);
      row.val_pckh = static_cast<float>(branch_score(m, er.pckh_final));
    }
    hist.rows.push_back(row);
    if (opt.log_every > 0)
      std::fprintf(stderr, "epoch %d done: loss %.5f val_pckh %.2f\n", epoch + 1, row.l,
                   row.val_pckh);

    auto snap = [&](int epochs_done) {
      Checkpoint ck = model_checkpoint(m, opt.config_text, data_rng.state(), epochs_done);
      ck.adam_t = adam.t;
      if (opt.save_opt_state && !adam.m.empty()) {
        for (std::size_t i = 0; i < m.registry.size(); ++i) {
          const Shape s = m.registry[i].second.shape();
          ck.opt.push_back({"m." + m.registry[i].first, {s.n, s.c, s.h, s.w}, adam.m[i]});
          ck.opt.push_back({"v." + m.registry[i].first, {s.n, s.c, s.h, s.w}, adam.v[i]});
        }
      }
      return ck;
    };
    if (!opt.out_dir.empty() && opt.checkpoint_every > 0 &&
        (epoch + 1) % opt.checkpoint_every == 0) {
      save_checkpoint(snap(epoch + 1),
                      (fs::path(opt.out_dir) /
                       ("ckpt_epoch_" + std::to_string(epoch + 1) + ".trb"))
                          .string());
    }
    if (!opt.out_dir.empty() && epoch + 1 == cfg.epochs) {
      save_checkpoint(snap(cfg.epochs), (fs::path(opt.out_dir) / "model.trb").string());
      std::ofstream hf(fs::path(opt.out_dir) / "history.csv");
      hf << history_csv(hist);
    }
  }
  return hist;
}

EvalResult evaluate_model(Model<float>& m, const TrainSet& data, int limit) {
  const int n = static_cast<int>(data.samples.size());
  const int lim = limit < 0 ? n : std::min(limit, n);
  if (lim < 1) throw std::invalid_argument("evaluate_model: empty evaluation set");
  const int b = m.cfg.batch_size;
  const int k_total = m.schema.n_keypoints();
  const int ks = m.n_ske();

  std::vector<PersonAnnotation> gts;
  gts.reserve(lim);
  std::vector<std::vector<PersonAnnotation>> coarse_preds(m.cfg.n_stacks),
      fine_preds(m.cfg.n_stacks);

  Rng scratch(0);
  AugmentConfig acfg;
  for (int start = 0; start < lim; start += b) {
    std::vector<int> idx;
    for (int i = start; i < std::min(lim, start + b); ++i) idx.push_back(i);
    BatchTensors bt = make_batch(data, idx, false, scratch, acfg, m.cfg.sigma);
    for (const auto& a : bt.annos) gts.push_back(a);

    Tape<float> tape;
    ForwardOut<float> fo = forward(tape, m, bt.images);
    const int nb = static_cast<int>(idx.size());

    auto collect = [&](const Tensor<float>& ske, const Tensor<float>& con,
                       std::vector<PersonAnnotation>& sink) {
      std::vector<DecodedPoint> pts_s, pts_c;
      if (ske.defined()) pts_s = decode(ske, kNetStride);
      if (con.defined()) pts_c = decode(con, kNetStride);
      for (int bi = 0; bi < nb; ++bi) {
        PersonAnnotation pa;
        pa.image_id = bt.annos[bi].image_id;
        pa.keypoints.assign(k_total, Keypoint{0, 0, Visibility::Visible});
        if (ske.defined())
          for (int c = 0; c < ks; ++c) {
            const DecodedPoint& d = pts_s[static_cast<std::size_t>(bi) * ks + c];
            pa.keypoints[c] = {d.x, d.y, Visibility::Visible};
          }
        if (con.defined()) {
          const int kc = con.shape().c;
          for (int c = 0; c < kc; ++c) {
            const DecodedPoint& d = pts_c[static_cast<std::size_t>(bi) * kc + c];
            pa.keypoints[ks + c] = {d.x, d.y, Visibility::Visible};
          }
        }
        sink.push_back(std::move(pa));
      }
    };

    for (int s = 0; s < m.cfg.n_stacks; ++s) {
      collect(fo.stacks[s].ske, fo.stacks[s].con, coarse_preds[s]);
      if (m.has_pm()) collect(fo.stacks[s].ske_fine, fo.stacks[s].con_fine, fine_preds[s]);
    }
  }

  EvalResult er;
  for (int s = 0; s < m.cfg.n_stacks; ++s) {
    er.coarse.push_back(pckh(coarse_preds[s], gts, m.schema));
    if (m.has_pm()) er.fine.push_back(pckh(fine_preds[s], gts, m.schema));
  }
  const auto& final_preds = m.has_pm() ? fine_preds.back() : coarse_preds.back();
  er.pckh_final = pckh(final_preds, gts, m.schema);
  er.pck_final = pck(final_preds, gts, m.schema);
  er.auc_pckh = auc(final_preds, gts, m.schema, RefMetric::Pckh);
  return er;
}

}  // namespace trb
