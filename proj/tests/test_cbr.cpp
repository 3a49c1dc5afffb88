#include <gtest/gtest.h>

#include <cmath>

#include "melex/cbr.hpp"
#include "melex/model.hpp"
#include "testutil.hpp"

using namespace melex;
namespace mt = melex::test;

namespace {

AudioClip test_tone(double freq, double seconds, double amp) {
  AudioClip c;
  c.sample_rate = kSampleRate;
  const std::size_t n = static_cast<std::size_t>(seconds * kSampleRate);
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(
        amp * std::sin(2.0 * 3.14159265358979323846 * freq * i / kSampleRate));
  }
  return c;
}

TEST(WeakAugment, DisabledIsIdentity) {
  auto c = test_tone(440, 0.25, 0.1);
  WeakAugment spec;
  spec.snr_db.reset();
  Rng rng(1);
  auto out = weak_augment(c, spec, rng);
  ASSERT_EQ(out.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) EXPECT_EQ(out.samples[i], c.samples[i]);
}

TEST(WeakAugment, HitsTargetSnr) {
  auto c = test_tone(440, 1.0, 0.1);
  WeakAugment spec;
  spec.snr_db = 30.0;
  Rng rng(2);
  auto out = weak_augment(c, spec, rng);
  double noise_energy = 0, sig_energy = 0;
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    const double d = static_cast<double>(out.samples[i]) - c.samples[i];
    noise_energy += d * d;
    sig_energy += static_cast<double>(c.samples[i]) * c.samples[i];
  }
  const double snr = 10.0 * std::log10(sig_energy / noise_energy);
  EXPECT_NEAR(snr, 30.0, 0.5);
}

TEST(WeakAugment, DeterministicUnderSeed) {
  auto c = test_tone(330, 0.3, 0.2);
  WeakAugment spec;
  Rng r1(77), r2(77);
  auto a = weak_augment(c, spec, r1);
  auto b = weak_augment(c, spec, r2);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i], b.samples[i]);
}

TEST(StrongAugment, AllDisabledIsIdentity) {
  auto c = test_tone(440, 0.2, 0.1);
  StrongAugment spec;
  spec.gain_db.reset();
  spec.reverb_rt60.reset();
  spec.snr_db.reset();
  Rng rng(3);
  auto out = strong_augment(c, spec, rng);
  ASSERT_EQ(out.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) EXPECT_EQ(out.samples[i], c.samples[i]);
}

TEST(StrongAugment, GainIsExactInDb) {
  // +6 dB on a -20 dBFS sine (reverb/noise off) -> -14 dBFS
  auto c = test_tone(440, 1.0, 0.1);  // peak -20 dBFS
  StrongAugment spec;
  spec.gain_db = std::make_pair(6.0, 6.0);
  spec.reverb_rt60.reset();
  spec.snr_db.reset();
  Rng rng(4);
  auto out = strong_augment(c, spec, rng);
  const double in_db = 20.0 * std::log10(rms(c.samples));
  const double out_db = 20.0 * std::log10(rms(out.samples));
  EXPECT_NEAR(out_db - in_db, 6.0, 0.1);
}

TEST(StrongAugment, ReverbLengthensSupport) {
  auto c = test_tone(440, 0.5, 0.1);
  StrongAugment spec;
  spec.gain_db.reset();
  spec.snr_db.reset();
  spec.reverb_rt60 = std::make_pair(0.2, 0.2);
  Rng rng(5);
  auto out = strong_augment(c, spec, rng);
  const std::size_t ir_len = static_cast<std::size_t>(0.2 * kSampleRate);
  EXPECT_EQ(out.samples.size(), c.samples.size() + ir_len - 1);
  // tail is actually nonzero
  double tail = 0;
  for (std::size_t i = c.samples.size(); i < out.samples.size(); ++i) {
    tail += std::abs(out.samples[i]);
  }
  EXPECT_GT(tail, 0.0);
}

TEST(StrongAugment, DeterministicUnderSeed) {
  auto c = test_tone(220, 0.4, 0.15);
  StrongAugment spec;
  Rng r1(99), r2(99);
  auto a = strong_augment(c, spec, r1);
  auto b = strong_augment(c, spec, r2);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i], b.samples[i]);
}

TEST(TopkSplit, HandCases) {
  Tensor<double> p({3}, {0.7, 0.2, 0.1});
  auto s1 = topk_split(p, 0.6);
  EXPECT_EQ(s1.k, 1u);
  EXPECT_NEAR(s1.pos_mass, 0.7, 1e-12);
  EXPECT_NEAR(s1.neg_mass, 0.3, 1e-12);
  ASSERT_EQ(s1.pos_indices.size(), 1u);
  EXPECT_EQ(s1.pos_indices[0], 0u);

  auto s2 = topk_split(p, 0.85);
  EXPECT_EQ(s2.k, 2u);
  EXPECT_NEAR(s2.pos_mass, 0.9, 1e-12);
  EXPECT_NEAR(s2.neg_mass, 0.1, 1e-12);

  Tensor<double> uniform({4}, {0.25, 0.25, 0.25, 0.25});
  auto s3 = topk_split(uniform, 0.5);
  EXPECT_EQ(s3.k, 2u);
  EXPECT_NEAR(s3.pos_mass, 0.5, 1e-12);
  // ties break toward lower class indices
  EXPECT_EQ(s3.pos_indices[0], 0u);
  EXPECT_EQ(s3.pos_indices[1], 1u);
}

TEST(TopkSplit, CapKeepsNegativePartNonempty) {
  Tensor<double> p({3}, {0.5, 0.3, 0.2});
  auto s = topk_split(p, 0.9999);
  EXPECT_EQ(s.k, 2u);  // capped at C-1
  EXPECT_NEAR(s.pos_mass, 0.8, 1e-12);
  EXPECT_GT(s.neg_mass, 0.0);
}

TEST(TopkSplit, RejectsUnnormalized) {
  Tensor<double> p({3}, {0.5, 0.2, 0.2});
  EXPECT_THROW(topk_split(p, 0.5), ValidationError);
}

TEST(TopkSplit, InvariantsOnRandomInstances) {
  Rng rng(11);
  for (int it = 0; it < 500; ++it) {
    const std::size_t C = 2 + rng.below(40);
    Tensor<double> p({C});
    double s = 0;
    for (std::size_t i = 0; i < C; ++i) {
      p[i] = rng.uniform(0.001, 1.0);
      s += p[i];
    }
    for (std::size_t i = 0; i < C; ++i) p[i] /= s;
    const double mu1 = rng.uniform(0.01, 0.999);
    const double mu2 = rng.uniform(mu1, 0.999);
    auto s1 = topk_split(p, mu1);
    auto s2 = topk_split(p, mu2);
    EXPECT_GE(s1.k, 1u);
    EXPECT_LE(s1.k, C - 1);
    EXPECT_NEAR(s1.pos_mass + s1.neg_mass, 1.0, 1e-9);
    EXPECT_LE(s1.k, s2.k);  // monotone in mu
    // positive set is exactly the k highest-probability classes
    double min_pos = 2.0;
    for (auto idx : s1.pos_indices) min_pos = std::min(min_pos, p[idx]);
    std::size_t n_above = 0;
    for (std::size_t i = 0; i < C; ++i) {
      if (p[i] > min_pos) n_above += 1;
    }
    EXPECT_LE(n_above, s1.k);
  }
}

TEST(LocalConfidence, MeanAndBounds) {
  BinarySplit a, b;
  a.pos_mass = 0.6;
  b.pos_mass = 0.8;
  EXPECT_NEAR(local_confidence({a, b}), 0.7, 1e-12);
  EXPECT_THROW(local_confidence({}), ValidationError);

  Rng rng(13);
  for (int it = 0; it < 100; ++it) {
    const std::size_t C = 2 + rng.below(10);
    Tensor<double> p({C});
    double s = 0;
    for (std::size_t i = 0; i < C; ++i) {
      p[i] = rng.uniform(0.01, 1.0);
      s += p[i];
    }
    for (std::size_t i = 0; i < C; ++i) p[i] /= s;
    auto split = topk_split(p, rng.uniform(0.05, 0.99));
    const double pt = local_confidence({split});
    EXPECT_GE(pt, 1.0 / static_cast<double>(C) - 1e-12);
    EXPECT_LE(pt, 1.0 + 1e-12);
  }
}

TEST(UpdateConfidence, EdgeMomenta) {
  EXPECT_DOUBLE_EQ(update_confidence(0.5, 1.0, 0.9), 0.5);  // m=1 freezes
  EXPECT_DOUBLE_EQ(update_confidence(0.5, 0.0, 0.9), 0.9);  // m=0 jumps
  EXPECT_THROW(update_confidence(0.5, 0.9, 0.0), ValidationError);
  EXPECT_THROW(update_confidence(0.5, 0.9, 1.5), ValidationError);
}

TEST(UpdateConfidence, GeometricConvergence) {
  // mu_0 = 0.5, m = 0.9, constant p = 0.9: |mu_20 - 0.9| = 0.4 * 0.9^20
  double mu = 0.5;
  for (int t = 0; t < 20; ++t) mu = update_confidence(mu, 0.9, 0.9);
  EXPECT_NEAR(std::abs(mu - 0.9), 0.4 * std::pow(0.9, 20), 1e-12);
  EXPECT_NEAR(std::abs(mu - 0.9), 0.0486, 2e-4);
}

TEST(UpdateConfidence, StaysInUnitIntervalOverLongRuns) {
  Rng rng(17);
  ConfidenceState st;
  for (int t = 0; t < 10000; ++t) {
    st.mu_f0 = update_confidence(st.mu_f0, st.momentum, rng.uniform(1e-6, 1.0));
    st.mu_note = update_confidence(st.mu_note, st.momentum, rng.uniform(1e-6, 1.0));
    ASSERT_GT(st.mu_f0, 0.0);
    ASSERT_LE(st.mu_f0, 1.0);
    ASSERT_GT(st.mu_note, 0.0);
    ASSERT_LE(st.mu_note, 1.0);
  }
}

TEST(CbrLoss, IdenticalBranchesGiveBinaryEntropy) {
  // logits whose softmax is (0.7, 0.2, 0.1) on both branches
  Graph<double> g;
  Tensor<double> logits({1, 3}, {std::log(0.7), std::log(0.2), std::log(0.1)});
  Tensor<double> weak({1, 3}, {0.7, 0.2, 0.1});
  auto targets = cbr_targets_from_weak(weak, 0.6);
  auto loss = cbr_loss(g, g.constant(logits), targets);
  const double h = -(0.7 * std::log(0.7) + 0.3 * std::log(0.3));
  EXPECT_NEAR(g.val(loss)[0], h, 1e-9);
}

TEST(CbrLoss, GibbsLowerBoundOnRandomInstances) {
  Rng rng(19);
  for (int it = 0; it < 1000; ++it) {
    const std::size_t C = 3 + rng.below(8);
    auto make_probs = [&]() {
      Tensor<double> p({1, C});
      double s = 0;
      for (std::size_t i = 0; i < C; ++i) {
        p[i] = rng.uniform(0.01, 1.0);
        s += p[i];
      }
      for (std::size_t i = 0; i < C; ++i) p[i] /= s;
      return p;
    };
    auto weak = make_probs();
    auto strong = make_probs();
    Tensor<double> strong_logits({1, C});
    for (std::size_t i = 0; i < C; ++i) strong_logits[i] = std::log(strong[i]);
    const double mu = rng.uniform(0.1, 0.95);
    auto targets = cbr_targets_from_weak(weak, mu);
    Graph<double> g;
    auto loss = cbr_loss(g, g.constant(strong_logits), targets);
    const double aw = targets.weak_pos_mass[0];
    const double h = -(aw * std::log(aw) + (1 - aw) * std::log(1 - aw));
    EXPECT_GE(g.val(loss)[0], h - 1e-9);
  }
}

TEST(CbrLoss, GradientFlowsOnlyThroughStrongBranch) {
  // Analytic gradient of the consistency loss must equal finite differences
  // taken with the weak targets FROZEN; recomputing the weak branch under a
  // perturbed parameter must not change that gradient.
  ModelConfig cfg;
  cfg.encoder.d_model = 8;
  cfg.encoder.d_state = 2;
  cfg.encoder.conv_width = 2;
  cfg.encoder.num_layers = 1;
  cfg.encoder.max_frames = 16;
  Model<double> model(cfg, 31);

  CfpFeature weak_f, strong_f;
  weak_f.frames = strong_f.frames = 3;
  weak_f.data.assign(kNumChannels * kFreqBins * 3, 0.0f);
  strong_f.data.assign(kNumChannels * kFreqBins * 3, 0.0f);
  Rng rng(37);
  for (auto& v : weak_f.data) v = static_cast<float>(rng.uniform(0, 1));
  for (std::size_t i = 0; i < strong_f.data.size(); ++i) {
    strong_f.data[i] = weak_f.data[i] + static_cast<float>(rng.uniform(-0.1, 0.1));
  }

  auto weak_probs_for = [&](Model<double>& m) {
    Graph<double> g(false);
    auto run = m.forward(g, weak_f);
    return g.val(g.softmax(run.out.f0_refined));
  };

  const Tensor<double> weak_probs = weak_probs_for(model);
  auto targets = cbr_targets_from_weak(weak_probs, 0.95);

  // analytic gradient
  Graph<double> g;
  auto run = model.forward(g, strong_f);
  auto loss = cbr_loss(g, run.out.f0_refined, targets);
  g.backward(loss);
  const std::string pick = "dec.f0.l2.w";
  const Tensor<double> analytic = g.grad(run.bound[pick]);

  // finite differences with frozen weak targets
  auto eval_frozen = [&](const Tensor<double>& p) {
    Model<double> m2(cfg, 31);
    m2.params().at(pick) = p;
    Graph<double> g2(false);
    auto r2 = m2.forward(g2, strong_f);
    return g2.val(cbr_loss(g2, r2.out.f0_refined, targets))[0];
  };
  Rng probe(41);
  double max_rel = 0;
  for (int probe_i = 0; probe_i < 10; ++probe_i) {
    Tensor<double> p = model.params().at(pick);
    const std::size_t idx = probe.below(p.size());
    const double orig = p[idx];
    const double step = 1e-5;
    p[idx] = orig + step;
    const double fp = eval_frozen(p);
    p[idx] = orig - step;
    const double fm = eval_frozen(p);
    const double fd = (fp - fm) / (2 * step);
    max_rel = std::max(max_rel,
                       std::abs(analytic[idx] - fd) / (std::abs(fd) + 1e-6));
  }
  EXPECT_LT(max_rel, 1e-4);

  // recomputing ONLY the weak maps under a perturbed parameter leaves the
  // loss gradient unchanged, because the weak branch is detached
  Model<double> perturbed(cfg, 31);
  perturbed.params().at(pick)[7] += 0.05;
  const Tensor<double> weak_probs2 = weak_probs_for(perturbed);
  // weak probabilities did change...
  double diff = 0;
  for (std::size_t i = 0; i < weak_probs.size(); ++i) {
    diff = std::max(diff, std::abs(weak_probs[i] - weak_probs2[i]));
  }
  EXPECT_GT(diff, 0.0);
  // ...but with the original strong branch and original targets the gradient
  // is bitwise what it was
  Graph<double> g3;
  auto run3 = model.forward(g3, strong_f);
  auto loss3 = cbr_loss(g3, run3.out.f0_refined, targets);
  g3.backward(loss3);
  const Tensor<double>& again = g3.grad(run3.bound[pick]);
  for (std::size_t i = 0; i < analytic.size(); ++i) EXPECT_EQ(analytic[i], again[i]);
}

TEST(GlobalKVariant, SharedKAcrossInstances) {
  Rng rng(43);
  Tensor<double> weak({4, 6});
  for (std::size_t t = 0; t < 4; ++t) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) {
      weak.at(t, c) = rng.uniform(0.01, 1.0);
      s += weak.at(t, c);
    }
    for (std::size_t c = 0; c < 6; ++c) weak.at(t, c) /= s;
  }
  auto tg = cbr_targets_from_weak_global_k(weak, 0.7);
  for (const auto& s : tg.splits) EXPECT_EQ(s.k, tg.splits[0].k);
  // mean cumulative mass at that k reaches the threshold
  double mean = 0;
  for (const auto& s : tg.splits) mean += s.pos_mass;
  EXPECT_GE(mean / 4.0, 0.7);
}

TEST(TotalLoss, OmegaWeighting) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 0.1), 1.2);
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 0.0), 1.0);  // omega 0 = supervised only
  EXPECT_THROW(total_loss(1.0, std::nan(""), 0.1), NumericError);
}

}  // namespace
