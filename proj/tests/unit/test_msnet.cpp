#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "msps/msnet.hpp"
#include "msps/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/samples.hpp"

using namespace msps;
using msps::testing::random_sample;

namespace {

NetConfig small_config() {
  NetConfig c;
  c.channels = 6;
  return c;
}

double max_component_diff(const NormalMap& a, const NormalMap& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

double max_norm_error(const NormalMap& n) {
  double m = 0.0;
  for (std::size_t y = 0; y < n.height; ++y)
    for (std::size_t x = 0; x < n.width; ++x)
      if (n.in_mask(y, x)) m = std::max(m, std::abs(n.at(y, x).norm() - 1.0));
  return m;
}

}  // namespace

TEST_CASE("prepare_input") {
  Rng rng(1);
  Tensor img = msps::testing::random_tensor(rng, {3, 4, 5}, 0, 1, false);
  LightSample l;
  Tensor p = prepare_input(img, l);
  REQUIRE(p.shape() == Shape{6, 4, 5});
  for (std::size_t i = 0; i < 60; ++i) CHECK(p.values()[i] == img.values()[i]);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(p.values()[60 + i] == 0.0);
    CHECK(p.values()[80 + i] == 0.0);
    CHECK(p.values()[100 + i] == 1.0);
  }

  l.intensity = {2.0, 2.0, 2.0};
  Tensor half = prepare_input(img, l);
  for (std::size_t i = 0; i < 60; ++i) CHECK(half.values()[i] == img.values()[i] / 2.0);

  NormalMap prior = NormalMap::constant(4, 5, Vec3(0, 0, 1));
  CHECK(prepare_input(img, l, &prior).dim(0) == 9);

  l.intensity = {1.0, 0.0, 1.0};
  CHECK_THROWS(prepare_input(img, l));
  l.intensity = {1.0, -1.0, 1.0};
  CHECK_THROWS(prepare_input(img, l));
}

TEST_CASE("resolution_schedule") {
  using S = std::vector<std::pair<std::size_t, std::size_t>>;
  CHECK(resolution_schedule(128, 128, 8) == S{{8, 8}, {16, 16}, {32, 32}, {64, 64}, {128, 128}});
  CHECK(resolution_schedule(1001, 1001, 8) ==
        S{{8, 8}, {16, 16}, {32, 32}, {63, 63}, {126, 126}, {251, 251}, {501, 501}, {1001, 1001}});
  CHECK(resolution_schedule(8, 8, 8) == S{{8, 8}});
  CHECK_THROWS(resolution_schedule(7, 100, 8));
}

TEST_CASE("resolution_schedule follows the ceil-halving recurrence") {
  for (std::size_t h = 8; h < 300; h += 7) {
    for (std::size_t w = 8; w < 300; w += 13) {
      const auto s = resolution_schedule(h, w, 8);
      CHECK(s.back() == std::make_pair(h, w));
      // Independent recurrence: each level is the ceil-half of the next.
      for (std::size_t k = s.size() - 1; k > 0; --k) {
        CHECK(s[k - 1].first == (s[k].first + 1) / 2);
        CHECK(s[k - 1].second == (s[k].second + 1) / 2);
      }
      const std::size_t levels = s.size() - 1;
      CHECK((std::size_t{8} << levels) >= std::max(h, w));
      if (levels > 0) CHECK((std::size_t{8} << (levels - 1)) < std::max(h, w));
    }
  }
}

TEST_CASE("upsample_normals") {
  NormalMap z = NormalMap::constant(3, 4, Vec3(0, 0, 1));
  NormalMap up = upsample_normals(z, 9, 11);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 11; ++x) CHECK(up.at(y, x) == Vec3(0, 0, 1));

  NormalMap pair(1, 2);
  pair.set(0, 0, Vec3(1, 0, 0));
  pair.set(0, 1, Vec3(0, 0, 1));
  NormalMap mid = upsample_normals(pair, 1, 3);
  const double r = 1.0 / std::sqrt(2.0);
  CHECK(mid.at(0, 1).x() == doctest::Approx(r).epsilon(1e-15));
  CHECK(mid.at(0, 1).y() == 0.0);
  CHECK(mid.at(0, 1).z() == doctest::Approx(r).epsilon(1e-15));

  Rng rng(5);
  NormalMap rnd(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) rnd.set(y, x, Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
  NormalMap big = upsample_normals(rnd, 16, 16);
  CHECK(max_norm_error(big) <= 1e-9);

  // Antipodal neighbours cancel at the midpoint.
  NormalMap anti(1, 2);
  anti.set(0, 0, Vec3(1, 0, 0));
  anti.set(0, 1, Vec3(-1, 0, 0));
  CHECK(upsample_normals(anti, 1, 3).at(0, 1) == Vec3(0, 0, 1));

  CHECK_THROWS(upsample_normals(rnd, 4, 16));
}

TEST_CASE("forward_stage") {
  const NetConfig cfg = small_config();
  NetWeights w = NetWeights::init(cfg, 9);
  Rng rng(2);
  std::vector<Tensor> inputs;
  for (int k = 0; k < 5; ++k) inputs.push_back(msps::testing::random_tensor(rng, {6, 10, 9}, 0, 1, false));
  NormalMap a = forward_stage(w.stage1, inputs);
  CHECK(max_norm_error(a) <= 1e-5);

  std::vector<Tensor> rev(inputs.rbegin(), inputs.rend());
  NormalMap b = forward_stage(w.stage1, rev);
  CHECK(max_component_diff(a, b) == 0.0);

  std::vector<Tensor> one = {inputs[0]};
  CHECK(max_norm_error(forward_stage(w.stage1, one)) <= 1e-5);

  std::vector<Tensor> bad = {inputs[0], msps::testing::random_tensor(rng, {6, 10, 8}, 0, 1, false)};
  CHECK_THROWS_AS(forward_stage(w.stage1, bad), ShapeError);
  std::vector<Tensor> wrong_c = {msps::testing::random_tensor(rng, {9, 10, 9}, 0, 1, false)};
  CHECK_THROWS_AS(forward_stage(w.stage1, wrong_c), ShapeError);
}

TEST_CASE("forward_multiscale stage counts and portability") {
  NetWeights w = NetWeights::init(small_config(), 4);
  Rng rng(6);
  PsSample s = random_sample(rng, 128, 128, 4);
  StageTrace trace;
  NormalMap out = forward_multiscale(w, s, &trace);
  CHECK(trace.coarse_passes == 1);
  CHECK(trace.refine_passes == 4);
  CHECK(trace.sizes.front() == std::make_pair<std::size_t, std::size_t>(8, 8));
  CHECK(out.height == 128);
  CHECK(max_norm_error(out) <= 1e-5);

  for (std::size_t size : {64u, 32u, 37u}) {
    PsSample other = random_sample(rng, size, size + 3, 3);
    NormalMap n = forward_multiscale(w, other);
    CHECK(n.height == size);
    CHECK(n.width == size + 3);
    CHECK(max_norm_error(n) <= 1e-5);
  }

  NetConfig mono = small_config();
  mono.multiscale = false;
  NetWeights wm = NetWeights::init(mono, 4);
  StageTrace mt;
  forward_multiscale(wm, s, &mt);
  CHECK(mt.coarse_passes == 1);
  CHECK(mt.refine_passes == 0);
}

TEST_CASE("forward_multiscale is invariant to image order") {
  NetWeights w = NetWeights::init(small_config(), 12);
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    PsSample s = random_sample(rng, 24, 20, 5);
    PsSample p = s;
    std::vector<std::size_t> perm(s.count());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      p.images[i] = s.images[perm[i]];
      p.lights[i] = s.lights[perm[i]];
    }
    CHECK(max_component_diff(forward_multiscale(w, s), forward_multiscale(w, p)) <= 1e-5);
  }
}

TEST_CASE("recorded and streamed forwards agree") {
  NetWeights w = NetWeights::init(small_config(), 13);
  Rng rng(8);
  PsSample s = random_sample(rng, 20, 17, 4);
  Graph g;
  Tensor graphed = forward_multiscale_graph(&g, w, s);
  NormalMap streamed = forward_multiscale(w, s);
  double m = 0.0;
  const std::size_t hw = 20 * 17;
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < 3; ++c) m = std::max(m, std::abs(graphed.values()[c * hw + p] - streamed.values[3 * p + c]));
  CHECK(m <= 1e-12);
}

TEST_CASE("cosine_loss") {
  NormalMap gt = NormalMap::constant(4, 4, Vec3(0, 0, 1));
  Mask all(16, 1);
  CHECK(cosine_loss(gt, gt, all).item() == doctest::Approx(0.0));
  NormalMap neg = NormalMap::constant(4, 4, Vec3(0, 0, -1));
  CHECK(cosine_loss(neg, gt, all).item() == doctest::Approx(2.0));
  const double a = 10.0 * std::numbers::pi / 180.0;
  NormalMap tilt = NormalMap::constant(4, 4, Vec3(0, std::sin(a), std::cos(a)));
  CHECK(cosine_loss(tilt, gt, all).item() == doctest::Approx(1.0 - std::cos(a)).epsilon(1e-12));
  CHECK(cosine_loss(tilt, gt, all).item() == doctest::Approx(0.01519).epsilon(1e-3));
  CHECK_THROWS(cosine_loss(tilt, gt, Mask(16, 0)));
}

TEST_CASE("cosine_loss stays in [0, 2] for unit inputs") {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    NormalMap a(3, 3), b(3, 3);
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 3; ++x) {
        a.set(y, x, Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
        b.set(y, x, Vec3(rng.normal(), rng.normal(), rng.normal()).normalized());
      }
    const double l = cosine_loss(a, b, Mask(9, 1)).item();
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
  }
}

TEST_CASE("network gradient matches finite differences") {
  NetConfig cfg = small_config();
  cfg.channels = 3;
  NetWeights w = NetWeights::init(cfg, 21);
  Rng rng(11);
  PsSample s = random_sample(rng, 9, 9, 3);
  Tensor target = s.gt_normals->to_tensor();
  // Perturb one weight tensor of each sub-network through the op interface.
  for (std::size_t which : {0u, 34u}) {
    std::vector<Tensor> params = w.parameters();
    msps::testing::OpUnderTest f = [&, which](Graph* g, std::span<const Tensor> in) {
      NetWeights local = w;
      std::vector<Tensor>& set = which < 18 ? local.stage1.params : local.refine.params;
      set[which % 18] = in[0];
      return ops::masked_cosine_loss(g, forward_multiscale_graph(g, local, s), target, s.mask);
    };
    auto r = msps::testing::check_gradients(f, {params[which]}, rng, 1e-6, 24);
    CHECK(r.max_rel_err <= 1e-4);
  }
}

TEST_CASE("weights consist of two parameter sets at every scale count") {
  NetWeights w = NetWeights::init(small_config(), 1);
  const auto n = w.parameters().size();
  CHECK(n == 36);
  CHECK(w.stage1.in_channels() == 6);
  CHECK(w.refine.in_channels() == 9);
  Rng rng(3);
  for (std::size_t size : {8u, 16u, 64u}) {
    PsSample s = random_sample(rng, size, size, 3);
    Graph g;
    Tensor loss = ops::masked_cosine_loss(&g, forward_multiscale_graph(&g, w, s), s.gt_normals->to_tensor(), s.mask);
    CHECK(g.leaf_count() == (size == 8 ? 18u : 36u));
    g.backward(loss);
    CHECK(w.parameters().size() == n);
  }
}

TEST_CASE("training with lr 0 leaves weights bit-identical") {
  NetWeights w = NetWeights::init(small_config(), 2);
  NetWeights before = w.clone();
  Rng rng(4);
  std::vector<PsSample> data = {random_sample(rng, 16, 16, 4), random_sample(rng, 16, 16, 4)};
  TrainParams tp;
  tp.lr = 0.0;
  tp.steps = 4;
  tp.patch = 12;
  train(w, data, tp);
  const auto a = w.parameters(), b = before.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i].values().begin(), a[i].values().end(), b[i].values().begin()));
  }
}

TEST_CASE("training is deterministic for a seed") {
  Rng rng(5);
  std::vector<PsSample> data = {random_sample(rng, 16, 16, 5), random_sample(rng, 20, 16, 5)};
  TrainParams tp;
  tp.lr = 1e-3;
  tp.steps = 10;
  tp.patch = 12;
  tp.seed = 77;
  tp.lights_per_patch = 3;
  NetWeights a = NetWeights::init(small_config(), 3);
  NetWeights b = NetWeights::init(small_config(), 3);
  const auto ra = train(a, data, tp);
  const auto rb = train(b, data, tp);
  REQUIRE(ra.losses.size() == 10);
  CHECK(ra.losses == rb.losses);
}

TEST_CASE("training decreases the loss on one sample") {
  Rng rng(6);
  std::vector<PsSample> data = {random_sample(rng, 16, 16, 4)};
  TrainParams tp;
  tp.lr = 3e-3;
  tp.steps = 60;
  tp.patch = 16;
  tp.batch = 1;
  NetWeights w = NetWeights::init(small_config(), 8);
  const auto r = train(w, data, tp);
  const double first = std::accumulate(r.losses.begin(), r.losses.begin() + 10, 0.0);
  const double last = std::accumulate(r.losses.end() - 10, r.losses.end(), 0.0);
  CHECK(last < first);
}

TEST_CASE("training rejects samples without ground truth") {
  Rng rng(7);
  PsSample s = random_sample(rng, 16, 16, 3);
  s.gt_normals.reset();
  std::vector<PsSample> data = {s};
  NetWeights w = NetWeights::init(small_config(), 1);
  TrainParams tp;
  tp.steps = 1;
  CHECK_THROWS(train(w, data, tp));
}

TEST_CASE("choose_patch prefers covered windows") {
  Rng rng(8);
  PsSample s = random_sample(rng, 40, 40, 3);
  std::fill(s.mask.begin(), s.mask.end(), 0);
  for (std::size_t y = 20; y < 40; ++y)
    for (std::size_t x = 20; x < 40; ++x) s.mask[y * 40 + x] = 1;
  for (int t = 0; t < 20; ++t) {
    const auto [y0, x0, h, w] = choose_patch(s, 16, rng);
    CHECK(h == 16);
    std::size_t c = 0;
    for (std::size_t y = y0; y < y0 + h; ++y)
      for (std::size_t x = x0; x < x0 + w; ++x) c += s.mask[y * 40 + x];
    CHECK(c >= 77);
  }
  std::fill(s.mask.begin(), s.mask.end(), 0);
  s.mask[0] = 1;
  const auto win = choose_patch(s, 16, rng);
  CHECK(win[0] == 0);
  CHECK(win[1] == 0);
}

TEST_CASE("checkpoint round trip") {
  NetConfig cfg = small_config();
  cfg.multiscale = false;
  cfg.r0 = 16;
  NetWeights w = NetWeights::init(cfg, 31);
  const auto path = std::filesystem::temp_directory_path() / "msps_test_ckpt.bin";
  save_checkpoint(path, w);
  NetWeights r = load_checkpoint(path);
  CHECK(r.config.channels == cfg.channels);
  CHECK(r.config.r0 == 16);
  CHECK(!r.config.multiscale);
  const auto a = w.parameters(), b = r.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].shape() == b[i].shape());
    CHECK(std::equal(a[i].values().begin(), a[i].values().end(), b[i].values().begin()));
  }
  const std::string bytes = [&] {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  CHECK(bytes.substr(0, 4) == "MSPS");
  CHECK(bytes[4] == 1);

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes.substr(0, bytes.size() - 3);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "XXXX" << bytes.substr(4);
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
