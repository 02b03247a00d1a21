#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "trb/train.hpp"

using namespace trb;

TEST_SUITE_BEGIN("train");

namespace {

NetConfig tiny_cfg(MpMode mp, BranchMode branch, int stacks, std::uint64_t seed) {
  NetConfig cfg;
  cfg.n_stacks = stacks;
  cfg.base_channels = 4;
  cfg.pm_hidden = 4;
  cfg.mp = mp;
  cfg.branch = branch;
  cfg.batch_size = 2;
  cfg.epochs = 1;
  cfg.seed = seed;
  return cfg;
}

const TrainSet& shared_set() {
  static TrainSet ts = generate_train_set(8, 400, GenConfig{}, default_schema());
  return ts;
}

std::vector<std::vector<float>> snapshot(const Model<float>& m) {
  std::vector<std::vector<float>> out;
  for (const auto& [name, t] : m.registry)
    out.emplace_back(t.data(), t.data() + t.numel());
  return out;
}

}  // namespace

TEST_CASE("generated sets are deterministic and shift with the base seed") {
  KeypointSchema s = default_schema();
  TrainSet a = generate_train_set(3, 100, GenConfig{}, s);
  TrainSet b = generate_train_set(5, 100, GenConfig{}, s);
  REQUIRE(a.samples.size() == 3);
  REQUIRE(b.samples.size() == 5);
  for (int i = 0; i < 3; ++i)
    CHECK(a.samples[i].image.data == b.samples[i].image.data);
  TrainSet c = generate_train_set(3, 101, GenConfig{}, s);
  CHECK(c.samples[0].image.data == a.samples[1].image.data);  // seed 101 == 100 + 1
}

TEST_CASE("batches carry normalized images and masked targets") {
  TrainSet ts = generate_train_set(3, 200, GenConfig{}, default_schema());
  ts.samples[0].anno.keypoints[6].v = Visibility::NotLabeled;
  Rng rng(1);
  BatchTensors bt = make_batch(ts, {0, 2}, false, rng, AugmentConfig{}, 2.0f);
  const int kk = ts.schema.n_keypoints();
  CHECK(bt.images.shape() == Shape{2, 3, 256, 256});
  CHECK(bt.targets.shape() == Shape{2, kk, 64, 64});
  CHECK(bt.mask01.shape() == bt.targets.shape());
  REQUIRE(bt.annos.size() == 2);

  const float* px = bt.images.data();
  const std::size_t plane = 256 * 256;
  bool in_range = true, channels_equal = true;
  for (std::size_t i = 0; i < plane; ++i) {
    const float v = px[i];
    in_range &= v >= 0.0f && v <= 1.0f;
    channels_equal &= px[i] == px[plane + i] && px[i] == px[2 * plane + i];
  }
  CHECK(in_range);
  CHECK(channels_equal);
  // the grayscale range of the synthetic scenes actually spans the scale
  float lo = 1.0f, hi = 0.0f;
  for (std::size_t i = 0; i < plane; ++i) lo = std::min(lo, px[i]), hi = std::max(hi, px[i]);
  CHECK(lo < 0.35f);
  CHECK(hi > 0.65f);

  // unlabeled channel 6 of sample 0: zero mask, zero target
  const std::size_t hw = 64 * 64;
  const float* t0 = bt.targets.data() + 6 * hw;
  const float* m0 = bt.mask01.data() + 6 * hw;
  for (std::size_t i = 0; i < hw; ++i) {
    CHECK(t0[i] == 0.0f);
    CHECK(m0[i] == 0.0f);
  }
  // a labeled channel peaks near 1 with a full mask
  const float* t1 = bt.targets.data() + 7 * hw;
  const float* m1 = bt.mask01.data() + 7 * hw;
  float peak = 0.0f;
  for (std::size_t i = 0; i < hw; ++i) peak = std::max(peak, t1[i]);
  CHECK(peak > 0.9f);
  for (std::size_t i = 0; i < hw; ++i) CHECK(m1[i] == 1.0f);

  // augmentation keeps the contracts and is rng-driven
  Rng r2(7);
  BatchTensors ba = make_batch(ts, {0, 1}, true, r2, AugmentConfig{}, 2.0f);
  CHECK(ba.images.shape() == Shape{2, 3, 256, 256});
  bool aug_in_range = true;
  for (std::size_t i = 0; i < ba.images.numel(); ++i)
    aug_in_range &= ba.images.data()[i] >= 0.0f && ba.images.data()[i] <= 1.0f;
  CHECK(aug_in_range);
  CHECK(std::memcmp(ba.images.data(), bt.images.data(), plane * sizeof(float)) != 0);
}

TEST_CASE("the loss falls over fifty steps") {
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::None, BranchMode::Multitask, 1, 42);
  cfg.batch_size = 4;
  cfg.epochs = 25;  // 2 steps per epoch
  cfg.lr = 1e-3f;
  Model<float> m = build_model<float>(cfg, ts.schema);
  TrainingHistory h = train_model(m, ts, ts, TrainOptions{});
  REQUIRE(h.rows.size() == 25);
  // the floor is dominated by the target bumps themselves, so fifty steps
  // buy a small but unambiguous drop
  CHECK(h.rows.back().l < h.rows.front().l);
  CHECK(h.rows.back().l < 0.99f * h.rows.front().l);
  for (const EpochRow& r : h.rows) {
    CHECK(std::isfinite(r.l));
    CHECK(r.lp == 0.0f);
  }
}

TEST_CASE("a zero learning rate leaves every parameter untouched") {
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::Dc, BranchMode::Multitask, 1, 43);
  cfg.lr = 0.0f;
  Model<float> m = build_model<float>(cfg, ts.schema);
  auto before = snapshot(m);
  train_model(m, ts, ts, TrainOptions{});
  auto after = snapshot(m);
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK(std::memcmp(before[i].data(), after[i].data(), before[i].size() * sizeof(float)) == 0);
}

TEST_CASE("identical seeds reproduce the history byte for byte") {
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::Dc, BranchMode::Multitask, 1, 44);
  cfg.epochs = 2;
  Model<float> m1 = build_model<float>(cfg, ts.schema);
  Model<float> m2 = build_model<float>(cfg, ts.schema);
  TrainingHistory h1 = train_model(m1, ts, ts, TrainOptions{});
  TrainingHistory h2 = train_model(m2, ts, ts, TrainOptions{});
  const std::string c1 = history_csv(h1), c2 = history_csv(h2);
  CHECK(c1 == c2);
  CHECK(c1.rfind("epoch,L,L_S,L_C,L_P,val_pckh\n", 0) == 0);
  CHECK(std::count(c1.begin(), c1.end(), '\n') == 3);

  NetConfig other = cfg;
  other.seed = 45;
  Model<float> m3 = build_model<float>(other, ts.schema);
  CHECK(history_csv(train_model(m3, ts, ts, TrainOptions{})) != c1);
}

TEST_CASE("supervising every stack changes the early gradients") {
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::None, BranchMode::Multitask, 2, 46);
  Rng rng(2);
  BatchTensors bt = make_batch(ts, {0, 1}, false, rng, AugmentConfig{}, 2.0f);

  auto stem_grad = [&](bool all_stacks) {
    Model<float> m = build_model<float>(cfg, ts.schema);
    Tape<float> tape;
    ForwardOut<float> fo = forward(tape, m, bt.images);
    if (!all_stacks) fo.stacks.erase(fo.stacks.begin());
    auto [rep, total] = total_loss(tape, m, fo, bt.targets, bt.mask01);
    tape.backward(total);
    return m.stem1.weight.grad_values();
  };
  auto full = stem_grad(true);
  auto last_only = stem_grad(false);
  REQUIRE(full.size() == last_only.size());
  CHECK(std::memcmp(full.data(), last_only.data(), full.size() * sizeof(float)) != 0);
}

TEST_CASE("checkpoints restore a model exactly") {
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::DcPm, BranchMode::Multitask, 2, 47);
  Model<float> m = build_model<float>(cfg, ts.schema);
  Checkpoint ck = model_checkpoint(m, "some config", "1 2 3", 4);
  CHECK(checkpoint_param_count(ck) == m.param_count());
  CHECK(ck.epoch == 4);
  CHECK(ck.config_text == "some config");

  const std::string path = "/tmp/trb_test_model_ck.trb";
  save_checkpoint(ck, path);
  Checkpoint back = load_checkpoint(path);
  std::remove(path.c_str());

  NetConfig other = cfg;
  other.seed = 99;
  Model<float> m2 = build_model<float>(other, ts.schema);
  checkpoint_into_model(m2, back);
  Rng rng(3);
  BatchTensors bt = make_batch(ts, {2, 3}, false, rng, AugmentConfig{}, 2.0f);
  Tape<float> t1, t2;
  t1.set_recording(false);
  t2.set_recording(false);
  ForwardOut<float> f1 = forward(t1, m, bt.images);
  ForwardOut<float> f2 = forward(t2, m2, bt.images);
  for (int i = 0; i < 2; ++i) {
    CHECK(std::memcmp(f1.stacks[i].ske.data(), f2.stacks[i].ske.data(),
                      f1.stacks[i].ske.numel() * sizeof(float)) == 0);
    CHECK(std::memcmp(f1.stacks[i].con_fine.data(), f2.stacks[i].con_fine.data(),
                      f1.stacks[i].con_fine.numel() * sizeof(float)) == 0);
  }

  Checkpoint renamed = back;
  renamed.params[3].name = "imposter";
  CHECK_THROWS_AS(checkpoint_into_model(m2, renamed), std::runtime_error);
  Checkpoint reshaped = back;
  reshaped.params[0].data.pop_back();
  CHECK_THROWS_AS(checkpoint_into_model(m2, reshaped), std::runtime_error);
}

TEST_CASE("resuming a checkpoint replays the uninterrupted run bit for bit") {
  namespace fs = std::filesystem;
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::None, BranchMode::Multitask, 1, 51);
  cfg.epochs = 4;
  const std::string dir = "/tmp/trb_test_resume";
  fs::remove_all(dir);

  TrainOptions save;
  save.out_dir = dir;
  save.checkpoint_every = 2;
  save.save_opt_state = true;
  Model<float> full = build_model<float>(cfg, ts.schema);
  TrainingHistory ha = train_model(full, ts, ts, save);
  REQUIRE(ha.rows.size() == 4);

  Model<float> resumed = build_model<float>(cfg, ts.schema);
  TrainOptions cont;
  cont.resume_from = dir + "/ckpt_epoch_2.trb";
  TrainingHistory hb = train_model(resumed, ts, ts, cont);
  REQUIRE(hb.rows.size() == 2);
  for (int i = 0; i < 2; ++i) {
    const EpochRow &a = ha.rows[2 + i], &b = hb.rows[i];
    CHECK(a.epoch == b.epoch);
    CHECK(a.l == b.l);
    CHECK(a.ls == b.ls);
    CHECK(a.lc == b.lc);
    CHECK(a.val_pckh == b.val_pckh);
  }
  for (std::size_t i = 0; i < full.registry.size(); ++i) {
    const auto& tf = full.registry[i].second;
    const auto& tr = resumed.registry[i].second;
    CHECK(std::memcmp(tf.data(), tr.data(), tf.numel() * sizeof(float)) == 0);
  }

  // a checkpoint without optimizer state cannot continue a run
  Checkpoint bare = model_checkpoint(full, "", "1 2", 2);
  const std::string bare_path = dir + "/bare.trb";
  save_checkpoint(bare, bare_path);
  Model<float> m3 = build_model<float>(cfg, ts.schema);
  TrainOptions bad;
  bad.resume_from = bare_path;
  CHECK_THROWS_AS(train_model(m3, ts, ts, bad), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::None, BranchMode::Multitask, 1, 48);
  Model<float> m = build_model<float>(cfg, ts.schema);
  // a NaN weight would be clipped by relu; a huge bias overflows the
  // squared error to infinity no matter what the masks look like
  m.stacks[0].head_s.bias.data()[0] = 1e30f;
  try {
    train_model(m, ts, ts, TrainOptions{});
    FAIL("expected a divergence error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("dataset directories round-trip") {
  namespace fs = std::filesystem;
  KeypointSchema s = default_schema();
  TrainSet ts = generate_train_set(3, 500, GenConfig{}, s);
  ts.samples[1].anno.keypoints[0].v = Visibility::NotLabeled;
  const std::string dir = "/tmp/trb_test_ds";
  fs::remove_all(dir);
  write_dataset_dir(ts, dir, 500, "image_size = 256\n");
  TrainSet back = read_dataset_dir(dir);
  REQUIRE(back.samples.size() == 3);
  CHECK(back.schema.names == s.names);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.samples[i].image.data == ts.samples[i].image.data);
    REQUIRE(back.samples[i].anno.keypoints.size() == ts.samples[i].anno.keypoints.size());
    for (std::size_t k = 0; k < ts.samples[i].anno.keypoints.size(); ++k) {
      CHECK(back.samples[i].anno.keypoints[k].x == ts.samples[i].anno.keypoints[k].x);
      CHECK(back.samples[i].anno.keypoints[k].y == ts.samples[i].anno.keypoints[k].y);
      CHECK(back.samples[i].anno.keypoints[k].v == ts.samples[i].anno.keypoints[k].v);
    }
    CHECK(back.samples[i].anno.bbox == ts.samples[i].anno.bbox);
  }
  fs::remove_all(dir);
  CHECK_THROWS_AS(read_dataset_dir("/tmp/trb_missing_ds"), std::runtime_error);
}

TEST_CASE("evaluation reports per-stack coarse and refined accuracy") {
  const TrainSet& ts = shared_set();
  NetConfig cfg = tiny_cfg(MpMode::DcPm, BranchMode::Multitask, 2, 49);
  Model<float> m = build_model<float>(cfg, ts.schema);
  EvalResult er = evaluate_model(m, ts, 4);
  CHECK(er.coarse.size() == 2);
  CHECK(er.fine.size() == 2);
  // scores are percentages
  CHECK(er.pckh_final.mean >= 0.0);
  CHECK(er.pckh_final.mean <= 100.0);
  CHECK(er.auc_pckh >= 0.0);
  CHECK(er.auc_pckh <= 100.0);
  // untrained refinement is an exact pass-through, so the scores agree
  CHECK(er.fine[1].mean == doctest::Approx(er.coarse[1].mean));

  Model<float> ms =
      build_model<float>(tiny_cfg(MpMode::None, BranchMode::SkeletonOnly, 1, 50), ts.schema);
  EvalResult es = evaluate_model(ms, ts, 2);
  CHECK(es.fine.empty());
  CHECK(es.coarse.size() == 1);
  // contour keypoints all predict the origin, so only the skeleton group scores
  CHECK(es.pckh_final.ske == es.coarse[0].ske);
}

TEST_SUITE_END();
