#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "trb/gradcheck.hpp"
#include "trb/net.hpp"

using namespace trb;

TEST_SUITE_BEGIN("net");

namespace {

NetConfig small_cfg(MpMode mp, BranchMode branch, int stacks = 1, int c = 4) {
  NetConfig cfg;
  cfg.n_stacks = stacks;
  cfg.base_channels = c;
  cfg.dc_grid = 4;
  cfg.pm_hidden = 4;
  cfg.mp = mp;
  cfg.branch = branch;
  cfg.seed = 11;
  return cfg;
}

TensorF rand_input(int b, int side, Rng& rng) {
  TensorF x = TensorF::zeros(Shape{b, 3, side, side});
  for (std::size_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>(rng.uniform());
  return x;
}

}  // namespace

TEST_CASE("mode names round-trip and bad names throw") {
  for (MpMode m : {MpMode::None, MpMode::Xs, MpMode::NormalConv, MpMode::DcNoAdaptive,
                   MpMode::Dc, MpMode::Pm, MpMode::DcPm})
    CHECK(mp_mode_from(to_string(m)) == m);
  for (BranchMode b : {BranchMode::SkeletonOnly, BranchMode::ContourOnly, BranchMode::Multitask})
    CHECK(branch_mode_from(to_string(b)) == b);
  CHECK(to_string(MpMode::DcPm) == "dc+pm");
  CHECK(to_string(MpMode::DcNoAdaptive) == "dc-no-adaptive");
  CHECK(to_string(MpMode::NormalConv) == "normal-conv");
  CHECK(to_string(BranchMode::SkeletonOnly) == "skeleton-only");
  CHECK_THROWS_AS(mp_mode_from("direction"), std::invalid_argument);
  CHECK_THROWS_AS(branch_mode_from("both"), std::invalid_argument);
}

TEST_CASE("validate rejects contradictory settings") {
  CHECK_NOTHROW(validate(small_cfg(MpMode::Dc, BranchMode::Multitask)));
  CHECK_NOTHROW(validate(small_cfg(MpMode::None, BranchMode::SkeletonOnly)));
  CHECK_THROWS_AS(validate(small_cfg(MpMode::Dc, BranchMode::SkeletonOnly)),
                  std::invalid_argument);
  CHECK_THROWS_AS(validate(small_cfg(MpMode::Xs, BranchMode::ContourOnly)),
                  std::invalid_argument);
  NetConfig bad = small_cfg(MpMode::None, BranchMode::Multitask);
  bad.n_stacks = 0;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  bad = small_cfg(MpMode::None, BranchMode::Multitask);
  bad.dc_kernel = 4;
  CHECK_THROWS_AS(validate(bad), std::invalid_argument);
}

TEST_CASE("single-branch forward emits only its own maps at quarter resolution") {
  KeypointSchema s = default_schema();
  Model<float> m = build_model<float>(small_cfg(MpMode::None, BranchMode::SkeletonOnly), s);
  Rng rng(3);
  TensorF x = rand_input(1, 64, rng);
  Tape<float> tape;
  ForwardOut<float> fo = forward(tape, m, x);
  REQUIRE(fo.stacks.size() == 1);
  CHECK(fo.stacks[0].ske.defined());
  CHECK(!fo.stacks[0].con.defined());
  CHECK(!fo.stacks[0].ske_fine.defined());
  CHECK(fo.stacks[0].ske.shape() == Shape{1, s.n_skeleton, 16, 16});

  Model<float> mc = build_model<float>(small_cfg(MpMode::None, BranchMode::ContourOnly), s);
  Tape<float> tape2;
  ForwardOut<float> fc = forward(tape2, mc, x);
  CHECK(!fc.stacks[0].ske.defined());
  CHECK(fc.stacks[0].con.shape() == Shape{1, s.n_keypoints() - s.n_skeleton, 16, 16});
}

TEST_CASE("forward rejects malformed inputs") {
  KeypointSchema s = default_schema();
  Model<float> m = build_model<float>(small_cfg(MpMode::None, BranchMode::Multitask), s);
  Tape<float> tape;
  CHECK_THROWS_AS(forward(tape, m, TensorF::zeros(Shape{1, 1, 64, 64})), std::invalid_argument);
  CHECK_THROWS_AS(forward(tape, m, TensorF::zeros(Shape{1, 3, 64, 48})), std::invalid_argument);
  CHECK_THROWS_AS(forward(tape, m, TensorF::zeros(Shape{1, 3, 72, 72})), std::invalid_argument);
  // side 16 gives 4x4 features, below the 4x4 dc grid only when grid is larger
  Model<float> mg = build_model<float>(small_cfg(MpMode::Dc, BranchMode::Multitask), s);
  mg.cfg.dc_grid = 8;
  CHECK_THROWS_AS(forward(tape, mg, TensorF::zeros(Shape{1, 3, 16, 16})), std::invalid_argument);
}

TEST_CASE("directional and plain message passing match in size within one percent") {
  KeypointSchema s = default_schema();
  for (int c : {4, 8}) {
    Model<float> dc = build_model<float>(small_cfg(MpMode::Dc, BranchMode::Multitask, 2, c), s);
    Model<float> nc =
        build_model<float>(small_cfg(MpMode::NormalConv, BranchMode::Multitask, 2, c), s);
    const double rel = std::abs(static_cast<double>(dc.param_count()) - nc.param_count()) /
                       static_cast<double>(dc.param_count());
    INFO("c=" << c << " dc=" << dc.param_count() << " nc=" << nc.param_count());
    CHECK(rel < 0.01);
  }
}

TEST_CASE("parameter counts grow with capacity") {
  KeypointSchema s = default_schema();
  auto count = [&](MpMode mp, BranchMode b) {
    return build_model<float>(small_cfg(mp, b, 2), s).param_count();
  };
  const auto ske = count(MpMode::None, BranchMode::SkeletonOnly);
  const auto con = count(MpMode::None, BranchMode::ContourOnly);
  const auto multi = count(MpMode::None, BranchMode::Multitask);
  const auto dc = count(MpMode::Dc, BranchMode::Multitask);
  const auto dcpm = count(MpMode::DcPm, BranchMode::Multitask);
  CHECK(multi > ske);
  CHECK(multi > con);
  CHECK(dc > multi);
  CHECK(dcpm > dc);
  CHECK(count(MpMode::Pm, BranchMode::Multitask) > multi);
  // message passing adds exactly the dc-message parameters
  CHECK(count(MpMode::DcNoAdaptive, BranchMode::Multitask) == dc);
}

TEST_CASE("build is seed-deterministic") {
  KeypointSchema s = default_schema();
  Model<float> a = build_model<float>(small_cfg(MpMode::DcPm, BranchMode::Multitask, 2), s);
  Model<float> b = build_model<float>(small_cfg(MpMode::DcPm, BranchMode::Multitask, 2), s);
  NetConfig other = small_cfg(MpMode::DcPm, BranchMode::Multitask, 2);
  other.seed = 12;
  Model<float> c = build_model<float>(other, s);
  REQUIRE(a.registry.size() == b.registry.size());
  bool all_equal = true, any_diff_from_c = false;
  for (std::size_t i = 0; i < a.registry.size(); ++i) {
    CHECK(a.registry[i].first == b.registry[i].first);
    const auto& ta = a.registry[i].second;
    const auto& tb = b.registry[i].second;
    REQUIRE(ta.numel() == tb.numel());
    if (std::memcmp(ta.data(), tb.data(), ta.numel() * sizeof(float)) != 0) all_equal = false;
    if (std::memcmp(ta.data(), c.registry[i].second.data(), ta.numel() * sizeof(float)) != 0)
      any_diff_from_c = true;
  }
  CHECK(all_equal);
  CHECK(any_diff_from_c);
}

TEST_CASE("a deeper model reproduces the shallow prefix exactly") {
  KeypointSchema s = default_schema();
  Model<float> one = build_model<float>(small_cfg(MpMode::Dc, BranchMode::Multitask, 1), s);
  Model<float> two = build_model<float>(small_cfg(MpMode::Dc, BranchMode::Multitask, 2), s);
  Rng rng(5);
  TensorF x = rand_input(2, 64, rng);
  Tape<float> t1, t2;
  ForwardOut<float> f1 = forward(t1, one, x);
  ForwardOut<float> f2 = forward(t2, two, x);
  REQUIRE(f2.stacks.size() == 2);
  for (auto sel : {&StackOut<float>::ske, &StackOut<float>::con}) {
    const TensorF& a = f1.stacks[0].*sel;
    const TensorF& b = f2.stacks[0].*sel;
    REQUIRE(a.numel() == b.numel());
    CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
  }
}

TEST_CASE("loss report re-sums to the total bit for bit") {
  KeypointSchema s = default_schema();
  Rng rng(9);
  TensorF x = rand_input(2, 32, rng);
  TensorF tgt = TensorF::randn(Shape{2, s.n_keypoints(), 8, 8}, rng, 0.5f);
  TensorF msk = TensorF::zeros(tgt.shape());
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < s.n_keypoints(); ++c)
      if (c % 5 != 0)
        for (int i = 0; i < 64; ++i) msk.data()[(n * s.n_keypoints() + c) * 64 + i] = 1.0f;
  for (std::size_t i = 0; i < tgt.numel(); ++i) tgt.data()[i] *= msk.data()[i];

  for (MpMode mp : {MpMode::None, MpMode::Xs, MpMode::DcPm}) {
    Model<float> m = build_model<float>(small_cfg(mp, BranchMode::Multitask, 2), s);
    m.cfg.w_skeleton = 1.5f;
    m.cfg.w_contour = 0.75f;
    m.cfg.w_pairwise = 0.25f;
    Tape<float> tape;
    ForwardOut<float> fo = forward(tape, m, x);
    auto [rep, total] = total_loss(tape, m, fo, tgt, msk);
    REQUIRE(rep.stacks.size() == 2);
    float acc = 0.0f;
    for (const auto& st : rep.stacks) acc += (st.ls + st.lc) + st.lp;
    CHECK(acc == rep.total);
    CHECK(rep.total == total.data()[0]);
    if (mp != MpMode::DcPm)
      for (const auto& st : rep.stacks) CHECK(st.lp == 0.0f);
    for (const auto& st : rep.stacks) {
      CHECK(st.ls > 0.0f);
      CHECK(st.lc > 0.0f);
    }
  }
}

TEST_CASE("single-branch losses zero the missing terms") {
  KeypointSchema s = default_schema();
  Rng rng(13);
  TensorF x = rand_input(1, 32, rng);
  TensorF tgt = TensorF::randn(Shape{1, s.n_keypoints(), 8, 8}, rng, 0.5f);
  TensorF msk = TensorF::full(tgt.shape(), 1.0f);
  Model<float> m = build_model<float>(small_cfg(MpMode::None, BranchMode::SkeletonOnly), s);
  Tape<float> tape;
  ForwardOut<float> fo = forward(tape, m, x);
  auto [rep, total] = total_loss(tape, m, fo, tgt, msk);
  CHECK(rep.stacks[0].ls > 0.0f);
  CHECK(rep.stacks[0].lc == 0.0f);
  CHECK(rep.stacks[0].lp == 0.0f);
  CHECK(rep.total == rep.stacks[0].ls);
  CHECK(total.data()[0] == rep.total);
}

TEST_CASE("masked channels neither change the loss nor receive gradient") {
  KeypointSchema s = default_schema();
  const int kk = s.n_keypoints();
  Model<float> m = build_model<float>(small_cfg(MpMode::None, BranchMode::Multitask), s);
  Rng rng(17);
  const Shape hs{2, kk, 8, 8};
  TensorF tgt = TensorF::randn(hs, rng, 0.5f);
  TensorF msk = TensorF::full(hs, 1.0f);
  // channels 3 (skeleton) and 20 (contour) are unlabeled: mask 0, target 0
  for (int n = 0; n < 2; ++n)
    for (int c : {3, 20})
      for (int i = 0; i < 64; ++i) {
        msk.data()[(n * kk + c) * 64 + i] = 0.0f;
        tgt.data()[(n * kk + c) * 64 + i] = 0.0f;
      }

  auto run = [&](float bump) {
    Tape<float> tape;
    Rng r1(21), r2(22);
    TensorF ske = TensorF::randn(Shape{2, m.n_ske(), 8, 8}, r1, 1.0f, true);
    TensorF con = TensorF::randn(Shape{2, m.n_con(), 8, 8}, r2, 1.0f, true);
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 64; ++i) {
        ske.data()[(n * m.n_ske() + 3) * 64 + i] += bump;
        con.data()[(n * m.n_con() + (20 - m.n_ske())) * 64 + i] -= 2.0f * bump;
      }
    ForwardOut<float> fo;
    fo.stacks.resize(1);
    fo.stacks[0].ske = ske;
    fo.stacks[0].con = con;
    auto [rep, total] = total_loss(tape, m, fo, tgt, msk);
    tape.backward(total);
    return std::tuple{rep.total, ske.grad_values(), con.grad_values()};
  };

  auto [base, gs, gc] = run(0.0f);
  auto [bumped, gs2, gc2] = run(10.0f);
  CHECK(base == bumped);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 64; ++i) {
      CHECK(gs[(n * m.n_ske() + 3) * 64 + i] == 0.0f);
      CHECK(gc[(n * m.n_con() + (20 - m.n_ske())) * 64 + i] == 0.0f);
    }
  // an unmasked channel does carry gradient
  bool any = false;
  for (int i = 0; i < 64; ++i) any |= gs[(0 * m.n_ske() + 4) * 64 + i] != 0.0f;
  CHECK(any);
}

TEST_CASE("pairwise refinement starts as an exact pass-through") {
  KeypointSchema s = default_schema();
  Model<float> m = build_model<float>(small_cfg(MpMode::DcPm, BranchMode::Multitask), s);
  Rng rng(23);
  TensorF x = rand_input(1, 64, rng);
  Tape<float> tape;
  ForwardOut<float> fo = forward(tape, m, x);
  const StackOut<float>& so = fo.stacks[0];
  REQUIRE(so.ske_fine.defined());
  REQUIRE(so.con_fine.defined());
  CHECK(std::memcmp(so.ske_fine.data(), so.ske.data(), so.ske.numel() * sizeof(float)) == 0);
  CHECK(std::memcmp(so.con_fine.data(), so.con.data(), so.con.numel() * sizeof(float)) == 0);
  CHECK(static_cast<int>(so.flows.n()) == static_cast<int>(m.graph.edges.size()));
}

TEST_CASE("end-to-end gradients match finite differences") {
  using D = double;
  KeypointSchema s = default_schema();
  NetConfig cfg = small_cfg(MpMode::DcPm, BranchMode::Multitask, 1, 2);
  cfg.pm_hidden = 2;
  cfg.w_pairwise = 0.5f;
  Model<D> m = build_model<D>(cfg, s);
  Rng rng(29);
  Tensor<D> images = Tensor<D>::randn(Shape{1, 3, 32, 32}, rng, D(0.5), true);
  Tensor<D> tgt = Tensor<D>::randn(Shape{1, s.n_keypoints(), 8, 8}, rng, D(0.5));
  Tensor<D> msk = Tensor<D>::full(tgt.shape(), D(1));
  for (int i = 0; i < 64; ++i) {
    msk.data()[5 * 64 + i] = D(0);
    tgt.data()[5 * 64 + i] = D(0);
  }

  std::vector<Tensor<D>> inputs;
  inputs.push_back(m.stem1.weight);
  inputs.push_back(m.stacks[0].ms_s.r1a.weight);
  inputs.push_back(m.stacks[0].ms_c.u0.bias);
  inputs.push_back(m.stacks[0].dc.dc_s2c.conv.weight);
  inputs.push_back(m.stacks[0].dc.dc_s2c.fusion.weight);
  inputs.push_back(m.stacks[0].head_s.weight);
  inputs.push_back(m.stacks[0].pm.head_out.weight);
  inputs.push_back(m.stacks[0].pm.refine1.weight);
  inputs.push_back(images);

  auto f = [&](Tape<D>& tape, std::vector<Tensor<D>>&) {
    ForwardOut<D> fo = forward(tape, m, images);
    auto [rep, total] = total_loss(tape, m, fo, tgt, msk);
    return total;
  };
  double err = grad_check<D>(f, inputs, 1e-5, 40, 31);
  CHECK(err < 1e-4);
}

TEST_SUITE_END();
