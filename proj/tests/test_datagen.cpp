#include <doctest.h>

#include <cmath>
#include <map>

#include "tpr/data/dataset.hpp"
#include "tpr/data/diverse_buffer.hpp"
#include "tpr/data/episode.hpp"
#include "tpr/data/pairs.hpp"

using namespace tpr;

namespace {

// tiny synthetic frame pair whose proxy is fully controlled
FramePair synth_pair(float xs_value, float xt_value, std::uint32_t id = 0) {
  FramePair p;
  p.episode_id = id;
  p.xs = Tensor<float>::full({1, 4, 4, 3}, xs_value);
  p.xt = Tensor<float>::full({1, 4, 4, 3}, xt_value);
  return p;
}

DiverseBufferConfig tiny_buffer_config(int capacity, double random_p) {
  DiverseBufferConfig cfg;
  cfg.capacity = capacity;
  cfg.proxy_h = cfg.proxy_w = 2;
  cfg.random_replace_p = random_p;
  return cfg;
}

Episode fake_episode(int len, std::uint32_t id = 0) {
  Episode ep;
  ep.id = id;
  for (int t = 0; t < len; ++t) {
    ep.observations.push_back(Tensor<float>::full({1, 4, 4, 3}, static_cast<float>(t)));
    ep.truths.push_back({});
    ep.actions.push_back(Action::noop);
    ep.rewards.push_back(0.0);
  }
  return ep;
}

}  // namespace

TEST_CASE("collect_episode is deterministic per seed and respects termination") {
  auto cfg = make_env_config("bounce3");
  cfg.max_steps = 25;
  SpriteEnv env1(cfg), env2(cfg);
  auto a = collect_episode(env1, 42, 0);
  auto b = collect_episode(env2, 42, 0);
  REQUIRE(a.length() == b.length());
  for (int t = 0; t < a.length(); ++t) {
    CHECK(a.actions[static_cast<size_t>(t)] == b.actions[static_cast<size_t>(t)]);
    for (std::int64_t i = 0; i < a.observations[static_cast<size_t>(t)].numel(); ++i)
      CHECK(a.observations[static_cast<size_t>(t)][i] == b.observations[static_cast<size_t>(t)][i]);
  }

  cfg.max_steps = 7;
  SpriteEnv env3(cfg);
  auto c = collect_episode(env3, 1, 0);
  CHECK(c.length() == 7);
}

TEST_CASE("random policy draws actions uniformly (3-sigma binomial bound)") {
  auto cfg = make_env_config("bounce3");
  cfg.max_steps = 100;
  SpriteEnv env(cfg);
  std::map<Action, int> counts;
  int total = 0;
  for (std::uint64_t seed = 0; total < 10000; ++seed) {
    auto ep = collect_episode(env, seed, static_cast<std::uint32_t>(seed));
    for (auto a : ep.actions) {
      counts[a] += 1;
      total += 1;
    }
  }
  const double p = 1.0 / kActionCount;
  const double sigma = std::sqrt(p * (1 - p) / total);
  for (const auto& [action, count] : counts) {
    const double phat = static_cast<double>(count) / total;
    CHECK(std::fabs(phat - p) < 3.0 * sigma + 1e-9);
  }
}

TEST_CASE("sample_pair: halves mode on a length-2 episode has one choice") {
  auto ep = fake_episode(2);
  Rng rng(1);
  for (int t = 0; t < 10; ++t) {
    auto p = sample_pair(ep, PairMode::halves, rng);
    CHECK(p.source_idx == 0);
    CHECK(p.target_idx == 1);
  }
  auto short_ep = fake_episode(1);
  CHECK_THROWS_AS((void)sample_pair(short_ep, PairMode::halves, rng), UsageError);
}

TEST_CASE("sample_pair: halves mode splits the episode") {
  auto ep = fake_episode(9);
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    auto p = sample_pair(ep, PairMode::halves, rng);
    CHECK(p.source_idx < 4);       // first half of 9 frames
    CHECK(p.target_idx >= 4);
    CHECK(p.target_idx < 9);
  }
}

TEST_CASE("sample_pair: offset mode bounds and uniformity") {
  auto ep5 = fake_episode(5);
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    auto p = sample_pair(ep5, PairMode::offset, rng);
    const int off = p.target_idx - p.source_idx;
    CHECK(off >= 1);
    CHECK(off <= 4);
  }

  auto ep100 = fake_episode(100);
  std::map<int, int> offsets;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    auto p = sample_pair(ep100, PairMode::offset, rng);
    offsets[p.target_idx - p.source_idx] += 1;
  }
  CHECK(offsets.size() == 20);
  const double p_exp = 1.0 / 20.0;
  const double sigma = std::sqrt(p_exp * (1 - p_exp) / n);
  for (const auto& [off, count] : offsets) {
    CHECK(off >= 1);
    CHECK(off <= 20);
    CHECK(std::fabs(static_cast<double>(count) / n - p_exp) < 3.5 * sigma);
  }
}

TEST_CASE("diverse buffer: unconditional fill up to capacity, never beyond") {
  DiverseBuffer buf(tiny_buffer_config(4, 0.0), Rng(1));
  std::vector<FramePair> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(synth_pair(0.1f * i, 0.1f * i));
  buf.insert(std::move(batch));
  CHECK(buf.size() == 4);
  CHECK(buf.stats().proposals == 0);  // fill phase is unconditional
  for (int i = 0; i < 4; ++i)
    CHECK(buf.pairs()[static_cast<size_t>(i)].xs[0] == doctest::Approx(0.1f * i));
  // overflow candidates go through the conditional path; size is capped
  buf.insert({synth_pair(0.7f, 0.7f), synth_pair(0.9f, 0.9f)});
  CHECK(buf.size() == 4);
  CHECK(buf.stats().proposals == 2);
}

TEST_CASE("diverse buffer: a distinct candidate replaces a duplicate resident") {
  DiverseBuffer buf(tiny_buffer_config(3, 0.0), Rng(2));
  // three identical residents: every NN distance is zero
  buf.insert({synth_pair(0.5f, 0.5f), synth_pair(0.5f, 0.5f), synth_pair(0.5f, 0.5f)});
  buf.insert({synth_pair(0.9f, 0.1f)});  // NN distance > 0 beats 0
  int distinct = 0;
  for (const auto& p : buf.pairs())
    if (p.xs[0] > 0.8f) ++distinct;
  CHECK(distinct == 1);
  CHECK(buf.stats().replaced == 1);
}

TEST_CASE("diverse buffer: identical candidate without the random branch stays out") {
  DiverseBuffer buf(tiny_buffer_config(3, 0.0), Rng(3));
  buf.insert({synth_pair(0.1f, 0.1f), synth_pair(0.5f, 0.5f), synth_pair(0.9f, 0.9f)});
  buf.insert({synth_pair(0.5f, 0.5f)});  // duplicate of a resident
  CHECK(buf.stats().replaced == 0);
}

TEST_CASE("diverse buffer: replacement decisions match a brute-force oracle") {
  // residents with hand-placed scalar proxies; candidate batches replayed
  // against an oracle that recomputes every pairwise distance directly
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    DiverseBuffer buf(tiny_buffer_config(4, 0.0), Rng(seed));
    Rng vals(seed + 100);
    std::vector<FramePair> init;
    std::vector<float> resident_vals;
    for (int i = 0; i < 4; ++i) {
      const float v = static_cast<float>(vals.uniform());
      resident_vals.push_back(v);
      init.push_back(synth_pair(v, v));
    }
    buf.insert(std::move(init));

    // replay the buffer's index RNG: it forks "env"? no - it consumes
    // rng_.index(size()) then bernoulli per candidate. Use p=0 so only the
    // index draws matter, mirrored here with an identical generator.
    Rng mirror = Rng(seed);
    for (int round = 0; round < 6; ++round) {
      const float cv = static_cast<float>(vals.uniform());
      // oracle: NN distances from scalar values (proxy = 8 equal cells)
      const int target = mirror.index(4);
      (void)mirror.bernoulli(0.0);
      auto nn_of = [&](float v, int exclude) {
        double best = 1e18;
        for (int j = 0; j < 4; ++j) {
          if (j == exclude) continue;
          best = std::min(best, std::fabs(static_cast<double>(v) - resident_vals[static_cast<size_t>(j)]));
        }
        return best * std::sqrt(8.0);  // 8 proxy cells, all equal
      };
      const double d_new = nn_of(cv, -1);
      const double d_old = nn_of(resident_vals[static_cast<size_t>(target)], target);
      const bool expect_replace = d_new > d_old + 1e-12;

      const auto replaced_before = buf.stats().replaced;
      buf.insert({synth_pair(cv, cv)});
      const bool did_replace = buf.stats().replaced > replaced_before;
      CHECK(did_replace == expect_replace);
      if (expect_replace) resident_vals[static_cast<size_t>(target)] = cv;
    }
  }
}

TEST_CASE("diverse buffer: random branch fires at roughly its probability") {
  DiverseBuffer buf(tiny_buffer_config(8, 0.05), Rng(9));
  std::vector<FramePair> init;
  for (int i = 0; i < 8; ++i) init.push_back(synth_pair(0.3f, 0.3f));
  buf.insert(std::move(init));
  // identical candidates can only enter through the random branch
  const int n = 4000;
  for (int i = 0; i < n; ++i) buf.insert({synth_pair(0.3f, 0.3f)});
  const double rate = static_cast<double>(buf.stats().replaced) / buf.stats().proposals;
  const double sigma = std::sqrt(0.05 * 0.95 / n);
  CHECK(std::fabs(rate - 0.05) < 3.0 * sigma);
  CHECK(buf.stats().replaced == buf.stats().replaced_random);
}

TEST_CASE("dataset round-trips bit-exactly and validates its container") {
  auto cfg = make_env_config("bounce3");
  cfg.max_steps = 6;
  SpriteEnv env(cfg);
  auto ep = collect_episode(env, 4, 17);
  Rng rng(5);
  std::vector<FramePair> pairs;
  for (int i = 0; i < 5; ++i) pairs.push_back(sample_pair(ep, PairMode::halves, rng));
  const std::string path = "/tmp/tpr_test_dataset.tprd";
  write_dataset(path, pairs);

  DatasetHeader hdr;
  auto back = read_dataset(path, &hdr);
  CHECK(hdr.count == 5);
  CHECK(hdr.height == 64);
  CHECK(back.size() == pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(back[i].episode_id == 17);
    CHECK(back[i].source_idx == pairs[i].source_idx);
    CHECK(back[i].target_idx == pairs[i].target_idx);
    for (std::int64_t j = 0; j < pairs[i].xs.numel(); ++j) {
      CHECK(back[i].xs[j] == pairs[i].xs[j]);
      CHECK(back[i].xt[j] == pairs[i].xt[j]);
    }
  }

  // corrupt the magic
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.write("QQQQ", 4);
  }
  CHECK_THROWS_AS((void)read_dataset(path), FormatError);
}
