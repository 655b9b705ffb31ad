#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "adaptlab/checkpoint.hpp"
#include "adaptlab/gradcheck.hpp"
#include "adaptlab/ops.hpp"
#include "adaptlab/optim.hpp"
#include "doctest.h"

using namespace adaptlab;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, bool grad = false, double sd = 0.5) {
  std::normal_distribution<double> dist(0.0, sd);
  std::vector<double> v(r * c);
  for (auto& x : v) x = dist(rng);
  return Tensor::matrix(r, c, std::move(v), grad);
}

// sum(out * R) for a fixed random R: a loss that is linear in the op output so
// the check measures only the op's own derivative.
Tensor projected(const Tensor& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  Tensor r = random_matrix(out.rows(), out.cols(), rng);
  return ops::weighted_sum(out, r);
}

}  // namespace

TEST_CASE("tensor shape invariant") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ContractViolation);
  CHECK_THROWS_AS(Tensor({0, 3}, {}), ContractViolation);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("linear loss gradient is the input broadcast per row") {
  ParameterStore params;
  std::mt19937_64 rng(1);
  Tensor w = params.add("w", "g", random_matrix(3, 4, rng, true));
  Tensor x = Tensor::matrix(4, 1, {1.0, -2.0, 0.5, 3.0});
  GradientMap grads = forward_backward(ops::sum(ops::matmul(w, x)), params);
  REQUIRE(grads.count("w") == 1);
  const Tensor& g = grads.at("w");
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(g.at(i, j) == x.values()[j]);
}

TEST_CASE("disconnected and frozen parameters") {
  ParameterStore params;
  std::mt19937_64 rng(2);
  Tensor used = params.add("used", "g", random_matrix(2, 2, rng, true));
  params.add("unused", "g", random_matrix(2, 2, rng, true));
  params.add("frozen", "g", random_matrix(2, 2, rng, false));
  Tensor loss = ops::sum(ops::add(used, params.get("frozen")));
  GradientMap grads = forward_backward(loss, params);
  CHECK(grads.count("frozen") == 0);
  REQUIRE(grads.count("unused") == 1);
  for (double v : grads.at("unused").values()) CHECK(v == 0.0);
}

TEST_CASE("non-scalar loss is a contract violation") {
  ParameterStore params;
  std::mt19937_64 rng(3);
  Tensor w = params.add("w", "g", random_matrix(2, 2, rng, true));
  CHECK_THROWS_AS(backward(w), ContractViolation);
  CHECK_THROWS_AS(forward_backward(ops::scale(w, 2.0), params), ContractViolation);
}

TEST_CASE("adam single step from fresh state") {
  // Oracle: m = (1-b1) g, v = (1-b2) g^2, mhat = g, vhat = g^2, so the first
  // step moves by lr * g / (|g| + eps).
  Tensor p = Tensor::scalar(0.0);
  Tensor g = Tensor::scalar(1.0);
  AdamState state;
  state.hyper = {0.1, 0.9, 0.999, 1e-8};
  std::vector<Tensor> ps{p};
  std::vector<Tensor> gs{g};
  adam_step(ps, gs, state);
  const double expected = -0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(p.item() == doctest::Approx(expected).epsilon(1e-15));
  CHECK(p.item() == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(state.step == 1);
}

TEST_CASE("adam two steps reproduce hand computation") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double x = 0.5, m = 0.0, v = 0.0;
  const double grads[2] = {1.0, -0.25};
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * grads[t - 1];
    v = b2 * v + (1 - b2) * grads[t - 1] * grads[t - 1];
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
  }
  Tensor p = Tensor::scalar(0.5);
  AdamState state;
  state.hyper = {lr, b1, b2, eps};
  std::vector<Tensor> ps{p};
  for (double gv : grads) {
    std::vector<Tensor> gs{Tensor::scalar(gv)};
    adam_step(ps, gs, state);
  }
  CHECK(p.item() == doctest::Approx(x).epsilon(1e-14));
  CHECK(state.step == 2);
}

TEST_CASE("adam zero gradient and zero learning rate") {
  std::mt19937_64 rng(4);
  Tensor p = random_matrix(3, 3, rng);
  const std::vector<double> before(p.values().begin(), p.values().end());
  AdamState state;
  std::vector<Tensor> ps{p};
  std::vector<Tensor> zero{Tensor::zeros({3, 3})};
  adam_step(ps, zero, state);
  CHECK(std::equal(before.begin(), before.end(), p.values().begin()));

  // Moments decay toward zero under zero gradients.
  std::vector<Tensor> ones{Tensor::filled({3, 3}, 1.0)};
  adam_step(ps, ones, state);
  const double m_after_one = state.first_moment[0].values()[0];
  adam_step(ps, zero, state);
  CHECK(std::abs(state.first_moment[0].values()[0]) < std::abs(m_after_one));

  Tensor q = random_matrix(3, 3, rng);
  const std::vector<double> q_before(q.values().begin(), q.values().end());
  AdamState frozen;
  frozen.hyper.lr = 0.0;
  std::vector<Tensor> qs{q};
  for (int i = 0; i < 5; ++i) {
    std::vector<Tensor> gs{random_matrix(3, 3, rng)};
    adam_step(qs, gs, frozen);
  }
  CHECK(std::equal(q_before.begin(), q_before.end(), q.values().begin()));
}

TEST_CASE("adam rejects mismatched shapes") {
  AdamState state;
  std::vector<Tensor> ps{Tensor::zeros({2, 2})};
  std::vector<Tensor> gs{Tensor::zeros({2, 3})};
  CHECK_THROWS_AS(adam_step(ps, gs, state), ContractViolation);
  std::vector<Tensor> two{Tensor::zeros({2, 2}), Tensor::zeros({2, 2})};
  CHECK_THROWS_AS(adam_step(ps, two, state), ContractViolation);
}

TEST_CASE("gradient check: affine layer is exact to rounding") {
  ParameterStore params;
  std::mt19937_64 rng(5);
  Tensor w = params.add("w", "g", random_matrix(4, 3, rng, true));
  Tensor b = params.add("b", "g", random_matrix(1, 3, rng, true));
  Tensor x = random_matrix(5, 4, rng);
  double err = gradient_check([&] { return projected(ops::linear(x, w, b)); }, params);
  CHECK(err < 1e-8);
}

TEST_CASE("gradient check: every primitive op") {
  std::mt19937_64 rng(6);
  ParameterStore params;
  Tensor a = params.add("a", "g", random_matrix(4, 6, rng, true));
  Tensor b = params.add("b", "g", random_matrix(6, 3, rng, true));
  Tensor c = params.add("c", "g", random_matrix(5, 6, rng, true));
  Tensor gain = params.add("gain", "g", random_matrix(1, 6, rng, true));
  Tensor bias = params.add("bias", "g", random_matrix(1, 6, rng, true));

  SUBCASE("matmul") { CHECK(gradient_check([&] { return projected(ops::matmul(a, b)); }, params) <= 1e-6); }
  SUBCASE("matmul_nt") { CHECK(gradient_check([&] { return projected(ops::matmul_nt(a, c)); }, params) <= 1e-6); }
  SUBCASE("gelu") { CHECK(gradient_check([&] { return projected(ops::gelu(a)); }, params) <= 1e-6); }
  SUBCASE("layer_norm") {
    CHECK(gradient_check([&] { return projected(ops::layer_norm(c, gain, bias)); }, params) <= 1e-6);
  }
  SUBCASE("softmax with mask") {
    std::vector<double> mask(4 * 6, 0.0);
    mask[1] = -1e9;
    mask[8] = -1e9;
    CHECK(gradient_check([&] { return projected(ops::softmax_rows(a, mask)); }, params) <= 1e-6);
  }
  SUBCASE("gather, slices, concat, repeat") {
    std::vector<std::size_t> idx{3, 0, 3, 1};
    auto fn = [&] {
      Tensor g = ops::gather_rows(c, idx);
      Tensor parts[2] = {ops::slice_cols(g, 0, 2), ops::slice_cols(a, 1, 3)};
      Tensor cat = ops::concat_cols(parts);
      Tensor rows[2] = {cat, ops::slice_rows(cat, 1, 3)};
      return projected(ops::repeat_rows(ops::concat_rows(rows), 3, 16));
    };
    CHECK(gradient_check(fn, params) <= 1e-6);
  }
  SUBCASE("unfold") {
    CHECK(gradient_check([&] { return projected(ops::unfold_rows(c, 3, 2, 1, 2)); }, params) <= 1e-6);
  }
  SUBCASE("cross entropy") {
    std::vector<std::size_t> targets{0, 5, 2, 2};
    CHECK(gradient_check([&] { return ops::cross_entropy(a, targets); }, params) <= 1e-6);
  }
  SUBCASE("mean, mul, scale, average") {
    auto fn = [&] {
      Tensor parts[2] = {ops::mul(a, a), ops::scale(a, -0.3)};
      return ops::mean(ops::average(parts));
    };
    CHECK(gradient_check(fn, params) <= 1e-6);
  }
}

TEST_CASE("unfold shapes and padding") {
  Tensor x = Tensor::matrix(5, 1, {1, 2, 3, 4, 5});
  Tensor u = ops::unfold_rows(x, 2, 2, 0, 1);
  REQUIRE(u.rows() == 3);
  CHECK(u.cols() == 2);
  CHECK(u.values()[4] == 5.0);
  CHECK(u.values()[5] == 0.0);
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(7);
  Tensor a = random_matrix(6, 8, rng), g = random_matrix(1, 8, rng), b = random_matrix(1, 8, rng);
  Tensor w = random_matrix(8, 8, rng);
  auto run = [&] { return ops::softmax_rows(ops::matmul(ops::layer_norm(a, g, b), w)); };
  Tensor r1 = run(), r2 = run();
  CHECK(std::equal(r1.values().begin(), r1.values().end(), r2.values().begin()));
}

TEST_CASE("no-grad scope records no history") {
  Tensor w = Tensor::filled({2, 2}, 1.0, true);
  {
    NoGradGuard guard;
    CHECK_FALSE(ops::scale(w, 2.0).requires_grad());
  }
  CHECK(ops::scale(w, 2.0).requires_grad());
}

TEST_CASE("parameter store copies deeply and hashes values") {
  ParameterStore a;
  a.add("x", "g1", Tensor::filled({2, 2}, 1.0));
  a.add("y", "g2", Tensor::filled({3}, 2.0));
  ParameterStore b = a;
  CHECK(hash_group(a, "g1") == hash_group(b, "g1"));
  b.get("x").mutable_values()[0] = 5.0;
  CHECK(a.get("x").values()[0] == 1.0);
  CHECK(hash_group(a, "g1") != hash_group(b, "g1"));
  CHECK(hash_group(a, "g2") == hash_group(b, "g2"));
  CHECK(hash_group(a, "g1").size() == 64);
  CHECK_THROWS_AS(a.add("x", "g1", Tensor::scalar(0.0)), ContractViolation);
}

TEST_CASE("checkpoint container round trip and validation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "adaptlab_ckpt_test";
  fs::create_directories(dir);
  ParameterStore params;
  std::mt19937_64 rng(8);
  params.add("layer.w", "body", random_matrix(3, 2, rng));
  params.add("layer.b", "body", random_matrix(1, 2, rng));
  params.get("layer.b").mutable_values()[1] = -0.0;
  save_checkpoint(dir / "a.ckpt", params, "meta");

  ParameterStore target = params;
  for (auto& v : target.get("layer.w").mutable_values()) v = 0.0;
  CHECK(load_checkpoint(dir / "a.ckpt", target) == "meta");
  CHECK(hash_group(target, "body") == hash_group(params, "body"));
  CHECK(std::signbit(target.get("layer.b").values()[1]));

  // Raw payload begins after the header and manifest and is little-endian.
  std::ifstream in(dir / "a.ckpt", std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  CHECK(std::string(magic, 8) == "ADLBCKPT");

  ParameterStore wrong_shape;
  wrong_shape.add("layer.w", "body", Tensor::zeros({2, 3}));
  wrong_shape.add("layer.b", "body", Tensor::zeros({1, 2}));
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", wrong_shape), DataError);
  ParameterStore missing;
  missing.add("layer.w", "body", Tensor::zeros({3, 2}));
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", missing), DataError);

  {
    std::ofstream junk(dir / "junk.ckpt", std::ios::binary);
    junk << "not a checkpoint";
  }
  CHECK_THROWS_AS(read_checkpoint(dir / "junk.ckpt"), DataError);
  fs::remove_all(dir);
}
