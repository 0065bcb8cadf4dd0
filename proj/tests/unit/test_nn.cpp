#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <tuple>

#include "fwigan/critic.hpp"
#include "fwigan/errors.hpp"
#include "fwigan/nn.hpp"
#include "oracles.hpp"

using namespace fwigan;
namespace nn = fwigan::nn;

namespace {

nn::Tensor random_tensor(nn::Shape shape, std::mt19937_64& rng, bool requires_grad = false, double scale = 1.0) {
  const auto n = nn::shape_numel(shape);
  return nn::Tensor::from(std::move(shape), oracle::random_vector(n, rng, scale), requires_grad);
}

double tdot(const nn::Tensor& a, const nn::Tensor& b) { return oracle::dot(a.values(), b.values()); }

/// Max relative mismatch between grad() of f and central differences over every coordinate of `leaf`.
double fd_mismatch(const std::function<nn::Tensor()>& f, nn::Tensor& leaf, double h = 1e-6) {
  const auto g = nn::grad(f(), {leaf})[0];
  double worst = 0.0;
  auto vals = leaf.mutable_values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double fd = oracle::central_difference([&] { return f().item(); }, vals[i], h);
    const double scale = std::max({std::abs(fd), std::abs(g.values()[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - g.values()[i]) / scale);
  }
  return worst;
}

CriticConfig tiny_critic_config() {
  CriticConfig cfg;
  cfg.in_channels = 2;
  cfg.input_h = 40;
  cfg.input_w = 50;
  cfg.base_channels = 2;
  cfg.n_blocks = 6;
  cfg.fc_width = 8;
  return cfg;
}

}  // namespace

TEST_CASE("conv2d hand cases") {
  SUBCASE("centred identity kernel sums the input channels") {
    std::mt19937_64 rng(1);
    const auto x = random_tensor({3, 5, 4}, rng);
    std::vector<double> k(1 * 3 * 9, 0.0);
    for (std::size_t c = 0; c < 3; ++c) k[c * 9 + 4] = 1.0;
    const auto y = nn::conv2d(x, nn::Tensor::from({1, 3, 3, 3}, k), nn::Tensor::zeros({1}));
    REQUIRE(y.shape() == nn::Shape{1, 5, 4});
    for (std::size_t i = 0; i < 20; ++i) {
      const double expect = x.values()[i] + x.values()[20 + i] + x.values()[40 + i];
      CHECK(y.values()[i] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
  SUBCASE("ones on ones counts the overlap") {
    const auto y = nn::conv2d(nn::Tensor::full({1, 3, 3}, 1.0), nn::Tensor::full({1, 1, 3, 3}, 1.0));
    CHECK(y.values()[4] == 9.0);
    CHECK(y.values()[0] == 4.0);
    CHECK(y.values()[2] == 4.0);
    CHECK(y.values()[6] == 4.0);
    CHECK(y.values()[8] == 4.0);
    CHECK(y.values()[1] == 6.0);
  }
  SUBCASE("matches the loop oracle with bias") {
    std::mt19937_64 rng(2);
    const auto x = random_tensor({3, 7, 6}, rng);
    const auto k = random_tensor({4, 3, 3, 3}, rng);
    const auto b = random_tensor({4}, rng);
    const auto y = nn::conv2d(x, k, b);
    auto ref = oracle::conv2d(x.values(), 3, 7, 6, k.values(), 4);
    for (std::size_t o = 0; o < 4; ++o) {
      for (std::size_t q = 0; q < 42; ++q) ref[o * 42 + q] += b.values()[o];
    }
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("linear operators pass the dot-product test against their transposes") {
  std::mt19937_64 rng(3);
  SUBCASE("conv2d input transpose") {
    const auto x = random_tensor({3, 6, 5}, rng);
    const auto k = random_tensor({2, 3, 3, 3}, rng);
    const auto g = random_tensor({2, 6, 5}, rng);
    CHECK(oracle::rel_diff(tdot(nn::conv2d(x, k), g), tdot(x, nn::conv2d_input_grad(g, k))) < 1e-12);
  }
  SUBCASE("conv2d kernel transpose") {
    const auto x = random_tensor({3, 6, 5}, rng);
    const auto k = random_tensor({2, 3, 3, 3}, rng);
    const auto g = random_tensor({2, 6, 5}, rng);
    CHECK(oracle::rel_diff(tdot(nn::conv2d(x, k), g), tdot(k, nn::conv2d_kernel_grad(x, g))) < 1e-12);
  }
  SUBCASE("matvec and outer") {
    const auto w = random_tensor({4, 7}, rng);
    const auto x = random_tensor({7}, rng);
    const auto g = random_tensor({4}, rng);
    CHECK(oracle::rel_diff(tdot(nn::matvec(w, x), g), tdot(x, nn::matvec_t(w, g))) < 1e-12);
    CHECK(oracle::rel_diff(tdot(nn::matvec(w, x), g), tdot(w, nn::outer(g, x))) < 1e-12);
  }
  SUBCASE("pad and crop") {
    const auto x = random_tensor({2, 3, 5}, rng);
    const auto y = random_tensor({2, 4, 8}, rng);
    CHECK(oracle::rel_diff(tdot(nn::pad2d(x, 4, 8), y), tdot(x, nn::crop2d(y, 3, 5))) < 1e-12);
  }
  SUBCASE("gather and scatter") {
    const auto x = random_tensor({6}, rng);
    auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{5, 0, 0, 3});
    const auto y = random_tensor({4}, rng);
    CHECK(oracle::rel_diff(tdot(nn::gather(x, idx, {4}), y), tdot(x, nn::scatter(y, idx, {6}))) < 1e-12);
  }
  SUBCASE("channel bias") {
    const auto b = random_tensor({3}, rng);
    const auto y = random_tensor({3, 4, 2}, rng);
    CHECK(oracle::rel_diff(tdot(nn::broadcast_channels(b, 4, 2), y), tdot(b, nn::channel_sum(y))) < 1e-12);
  }
}

TEST_CASE("maxpool routing") {
  SUBCASE("constant input") {
    const auto y = nn::maxpool2d(nn::Tensor::full({2, 4, 6}, 3.5));
    CHECK(y.shape() == nn::Shape{2, 2, 3});
    for (double v : y.values()) CHECK(v == 3.5);
  }
  SUBCASE("unique maximum") {
    auto x = nn::Tensor::from({1, 2, 2}, {1, 2, 3, 4}, true);
    const auto y = nn::maxpool2d(x);
    CHECK(y.item() == 4.0);
    const auto g = nn::grad(y, {x})[0];
    CHECK(std::vector<double>(g.values().begin(), g.values().end()) == std::vector<double>{0, 0, 0, 1});
  }
  SUBCASE("ties go to the first element in row-major order") {
    auto x = nn::Tensor::from({1, 2, 2}, {5, 5, 1, 1}, true);
    const auto y = nn::maxpool2d(x);
    CHECK(y.item() == 5.0);
    const auto g = nn::grad(y, {x})[0];
    CHECK(std::vector<double>(g.values().begin(), g.values().end()) == std::vector<double>{1, 0, 0, 0});
  }
  CHECK_THROWS_AS(nn::maxpool2d(nn::Tensor::zeros({1, 3, 2})), InvalidInput);
}

TEST_CASE("leaky relu") {
  auto x = nn::Tensor::from({3}, {3.0, -2.0, 0.0}, true);
  const auto y = nn::leaky_relu(x, 0.1);
  CHECK(y.values()[0] == 3.0);
  CHECK(y.values()[1] == doctest::Approx(-0.2).epsilon(1e-15));
  const auto g = nn::grad(nn::sum(y), {x})[0];
  CHECK(g.values()[0] == 1.0);
  CHECK(g.values()[1] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(g.values()[2] == doctest::Approx(0.1).epsilon(1e-15));
}

TEST_CASE("dense layer") {
  std::mt19937_64 rng(4);
  auto x = random_tensor({5}, rng, true);
  std::vector<double> eye(25, 0.0);
  for (std::size_t i = 0; i < 5; ++i) eye[i * 6] = 1.0;
  const auto y = nn::dense(x, nn::Tensor::from({5, 5}, eye), nn::Tensor::zeros({5}));
  for (std::size_t i = 0; i < 5; ++i) CHECK(y.values()[i] == x.values()[i]);
  const auto b = random_tensor({3}, rng);
  const auto z = nn::dense(nn::Tensor::zeros({4}), random_tensor({3, 4}, rng), b);
  for (std::size_t i = 0; i < 3; ++i) CHECK(z.values()[i] == b.values()[i]);

  auto w = random_tensor({3, 5}, rng, true);
  auto bb = random_tensor({3}, rng, true);
  const auto c = random_tensor({3}, rng);
  auto f = [&] { return nn::dot(nn::dense(x, w, bb), c); };
  CHECK(fd_mismatch(f, x) < 1e-6);
  CHECK(fd_mismatch(f, w) < 1e-6);
  CHECK(fd_mismatch(f, bb) < 1e-6);
}

TEST_CASE("engine basics") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({6}, rng, true);
  const auto g1 = nn::grad(nn::sum(x), {x})[0];
  for (double v : g1.values()) CHECK(v == 1.0);
  const auto g2 = nn::grad(nn::dot(x, x), {x})[0];
  for (std::size_t i = 0; i < 6; ++i) CHECK(g2.values()[i] == doctest::Approx(2.0 * x.values()[i]));

  // unrelated input gets zeros
  auto u = random_tensor({2}, rng, true);
  const auto gs = nn::grad(nn::sum(x), {x, u});
  for (double v : gs[1].values()) CHECK(v == 0.0);

  // backward accumulates into leaves
  nn::backward(nn::sum(nn::mul(x, x)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(x.grad().values()[i] == doctest::Approx(2.0 * x.values()[i]));
  CHECK_THROWS_AS(nn::backward(x), InvalidInput);

  // no graph when grad mode is off
  nn::GradMode off(false);
  CHECK(nn::sum(x).is_leaf());
}

TEST_CASE("composed conv-pool-relu-dense gradients match finite differences") {
  std::mt19937_64 rng(6);
  auto x = random_tensor({2, 6, 4}, rng, true);
  auto k = random_tensor({3, 2, 3, 3}, rng, true, 0.5);
  auto b = random_tensor({3}, rng, true, 0.1);
  auto w = random_tensor({2, 18}, rng, true, 0.3);
  auto wb = random_tensor({2}, rng, true, 0.1);
  const auto c = random_tensor({2}, rng);
  auto f = [&] {
    auto h = nn::leaky_relu(nn::maxpool2d(nn::conv2d(x, k, b)), 0.1);
    h = nn::reshape(h, {18});
    return nn::dot(nn::leaky_relu(nn::dense(h, w, wb), 0.1), c);
  };
  for (auto* t : {&x, &k, &b, &w, &wb}) CHECK(fd_mismatch(f, *t) < 1e-4);
}

TEST_CASE("double backward of a gradient norm matches finite differences") {
  std::mt19937_64 rng(7);
  auto x = random_tensor({1, 4, 4}, rng, true);
  auto k = random_tensor({2, 1, 3, 3}, rng, true, 0.5);
  auto w = random_tensor({1, 8}, rng, true, 0.5);
  auto penalty = [&] {
    auto leaf = x.detach();
    leaf.set_requires_grad(true);
    auto h = nn::reshape(nn::leaky_relu(nn::maxpool2d(nn::conv2d(leaf, k)), 0.1), {8});
    auto score = nn::sum(nn::matvec(w, h));
    auto g = nn::grad(score, {leaf}, true)[0];
    auto n = nn::sqrt(nn::dot(g, g));
    auto d = nn::shift(n, -1.0);
    return nn::mul(d, d);
  };
  CHECK(fd_mismatch(penalty, k) < 1e-4);
  CHECK(fd_mismatch(penalty, w) < 1e-4);
}

TEST_CASE("parameter store") {
  std::mt19937_64 rng(8);
  nn::ParamStore p;
  p.add("a", random_tensor({2, 3}, rng, true));
  p.add("b", random_tensor({4}, rng, true));
  CHECK(p.total_numel() == 10);
  CHECK_THROWS_AS(p.add("a", nn::Tensor::zeros({1})), InvalidInput);
  CHECK_THROWS(std::ignore = p.get("c"));

  auto copy = p.clone();
  copy.get("a").mutable_values()[0] += 1.0;
  CHECK(copy.get("a").values()[0] != p.get("a").values()[0]);

  const auto dir = std::filesystem::temp_directory_path() / "fwigan_unit_params";
  std::filesystem::create_directories(dir);
  p.save(dir / "p");
  copy.load(dir / "p");
  CHECK(std::vector<double>(copy.get("a").values().begin(), copy.get("a").values().end()) ==
        std::vector<double>(p.get("a").values().begin(), p.get("a").values().end()));

  nn::ParamStore wrong;
  wrong.add("a", nn::Tensor::zeros({3, 2}));
  wrong.add("b", nn::Tensor::zeros({4}));
  CHECK_THROWS_AS(wrong.load(dir / "p"), InvalidInput);
}

TEST_CASE("critic dimension arithmetic") {
  CriticConfig big;
  big.in_channels = 5;
  big.input_h = 2048;
  big.input_w = 320;
  CHECK(big.block_channels() == std::vector<std::size_t>{32, 64, 128, 256, 512, 1024});
  CHECK(big.final_map_shape() == nn::Shape{1024, 32, 5});
  CHECK(big.flatten_size() == 1024 * 32 * 5);

  CriticConfig one;
  one.in_channels = 1;
  CHECK(one.final_map_shape() == nn::Shape{1024, 1, 1});
  CHECK(one.flatten_size() == 1024);

  CriticConfig odd;
  odd.input_h = 1000;
  odd.input_w = 80;
  CHECK(odd.padded_h() == 1024);
  CHECK(odd.padded_w() == 128);
  CHECK(odd.padded_h() % 64 == 0);

  const auto cfg = tiny_critic_config();
  const auto c = Critic::build(cfg, 3);
  CHECK(c.params().total_numel() == cfg.parameter_count());

  CriticConfig bad;
  bad.in_channels = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("critic construction and scoring") {
  const auto cfg = tiny_critic_config();
  const auto a = Critic::build(cfg, 42);
  const auto b = Critic::build(cfg, 42);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& ta = a.params().entries()[i].second;
    const auto& tb = b.params().entries()[i].second;
    CHECK(std::equal(ta.values().begin(), ta.values().end(), tb.values().begin()));
    for (double v : ta.values()) CHECK(std::isfinite(v));
  }

  const nn::Shape in{cfg.in_channels, cfg.input_h, cfg.input_w};
  const auto zero = nn::Tensor::zeros(in);
  CHECK(a.score(zero) == doctest::Approx(oracle::critic_score(a, zero.values())).epsilon(1e-12));

  std::mt19937_64 rng(9);
  const auto x = random_tensor(in, rng);
  const double s = a.score(x);
  CHECK(s == doctest::Approx(oracle::critic_score(a, x.values())).epsilon(1e-10));

  // continuity probe
  const auto d = random_tensor(in, rng);
  const auto g = a.input_gradient(x);
  const double lip = std::sqrt(tdot(g, g)) * std::sqrt(tdot(d, d)) * 10.0 + 1.0;
  for (double eps : {1e-3, 1e-5}) {
    auto xe = x.detach();
    for (std::size_t i = 0; i < xe.numel(); ++i) xe.mutable_values()[i] += eps * d.values()[i];
    CHECK(std::abs(a.score(xe) - s) <= lip * eps);
  }

  // no channel symmetry
  std::vector<double> swapped(x.values().begin(), x.values().end());
  const std::size_t plane = cfg.input_h * cfg.input_w;
  std::swap_ranges(swapped.begin(), swapped.begin() + static_cast<std::ptrdiff_t>(plane),
                   swapped.begin() + static_cast<std::ptrdiff_t>(plane));
  CHECK(a.score(nn::Tensor::from(in, swapped)) != s);

  CHECK_THROWS_AS(std::ignore = a.score(nn::Tensor::zeros({1, 40, 50})), InvalidInput);
}

TEST_CASE("critic input gradient") {
  const auto cfg = tiny_critic_config();
  const auto c = Critic::build(cfg, 5);
  const nn::Shape in{cfg.in_channels, cfg.input_h, cfg.input_w};
  const auto g0 = c.input_gradient(nn::Tensor::zeros(in));
  for (double v : g0.values()) CHECK(std::isfinite(v));

  std::mt19937_64 rng(10);
  auto x = random_tensor(in, rng);
  const auto g = c.input_gradient(x);
  std::uniform_int_distribution<std::size_t> pick(0, x.numel() - 1);
  for (int k = 0; k < 5; ++k) {
    const std::size_t i = pick(rng);
    auto vals = x.mutable_values();
    const double fd = oracle::central_difference([&] { return c.score(x); }, vals[i], 1e-6);
    CHECK(std::abs(fd - g.values()[i]) <= 1e-4 * std::max(std::abs(fd), 1e-3));
  }

  // directional derivative along x itself, checked against the score change from x to 2x
  const double s1 = c.score(x);
  auto x2 = nn::scale(x, 2.0).detach();
  const double s2 = c.score(x2);
  const double mid_slope = [&] {
    auto xm = nn::scale(x, 1.5).detach();
    return tdot(c.input_gradient(xm), x);
  }();
  CHECK(std::abs((s2 - s1) - mid_slope) <= 0.05 * std::abs(s2 - s1) + 1e-3);
}

TEST_CASE("critic save, load and clone") {
  const auto cfg = tiny_critic_config();
  auto a = Critic::build(cfg, 1);
  auto b = Critic::build(cfg, 2);
  const auto dir = std::filesystem::temp_directory_path() / "fwigan_unit_critic";
  std::filesystem::create_directories(dir);
  a.save(dir / "critic");
  b.load(dir / "critic");
  const nn::Shape in{cfg.in_channels, cfg.input_h, cfg.input_w};
  std::mt19937_64 rng(11);
  const auto x = random_tensor(in, rng);
  CHECK(a.score(x) == b.score(x));
  auto c = a.clone();
  c.params().get("fc2.bias").mutable_values()[0] += 1.0;
  CHECK(c.score(x) == doctest::Approx(a.score(x) + 1.0));
}
