#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "gradient_suite.hpp"
#include "webguard/error.hpp"
#include "webguard/nn/checkpoint.hpp"
#include "webguard/nn/module.hpp"
#include "webguard/nn/ops.hpp"
#include "webguard/nn/optim.hpp"

using namespace webguard;
using nn::Tensor;

namespace {

void check_values(const Tensor& t, const std::vector<double>& expected, double tol = 1e-12) {
  REQUIRE(t.numel() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (tol == 0.0) CHECK(t[i] == expected[i]);
    else CHECK(t[i] == doctest::Approx(expected[i]).epsilon(tol));
  }
}

}  // namespace

TEST_CASE("matmul examples") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 2}, {3, 4, 5, 6});
  check_values(nn::matmul(eye, b), {3, 4, 5, 6});
  check_values(nn::matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4})), {11});
  CHECK_THROWS_AS(nn::matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  try {
    nn::matmul(Tensor({2, 3}), Tensor({2, 3}));
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[2x3] x [2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum matches finite differences") {
  util::Rng rng(7);
  Tensor a = testing::random_tensor({3, 4}, rng);
  Tensor b = testing::random_tensor({4, 2}, rng);
  const double err =
      testing::gradcheck([](const std::vector<Tensor>& in) { return nn::sum(nn::matmul(in[0], in[1])); }, {a, b});
  CHECK(err <= 1e-6);
}

TEST_CASE("softmax rows") {
  check_values(nn::softmax_rows(Tensor({1, 2}, {0, 0})), {0.5, 0.5});
  check_values(nn::softmax_rows(Tensor({1, 2}, {1000, 1000})), {0.5, 0.5});
  // exp(1), exp(2), exp(3) divided by their sum 30.192874850...
  Tensor s = nn::softmax_rows(Tensor({1, 3}, {1, 2, 3}));
  check_values(s, {0.09003057317038046, 0.24472847105479764, 0.6652409557748219}, 1e-12);
  CHECK(s[0] < s[1]);
  CHECK(s[1] < s[2]);

  util::Rng rng(3);
  Tensor x = testing::random_tensor({5, 7}, rng, -50, 50);
  Tensor shifted(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) shifted.mutable_data()[i] = x[i] + 123.0 * static_cast<double>(i / 7);
  Tensor p = nn::softmax_rows(x), q = nn::softmax_rows(shifted);
  for (std::size_t r = 0; r < 5; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) {
      total += p[r * 7 + c];
      CHECK(p[r * 7 + c] >= 0.0);
      CHECK(std::abs(p[r * 7 + c] - q[r * 7 + c]) <= 1e-12);
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("dsconv2d examples") {
  SUBCASE("delta depthwise and identity pointwise reproduce the input") {
    util::Rng rng(11);
    Tensor x = testing::random_tensor({2, 4, 5}, rng);
    Tensor dw({2, 3, 3}, 0.0);
    dw.mutable_data()[4] = 1.0;
    dw.mutable_data()[13] = 1.0;
    Tensor pw({2, 2}, {1, 0, 0, 1});
    for (int d : {1, 2, 3}) check_values(nn::dsconv2d(x, dw, pw, d), std::vector<double>(x.data().begin(), x.data().end()));
  }
  SUBCASE("all-ones kernel counts in-bounds neighbours") {
    Tensor x({1, 4, 4}, 1.0);
    Tensor dw({1, 3, 3}, 1.0);
    Tensor pw({1, 1}, {1.0});
    Tensor y = nn::dsconv2d(x, dw, pw, 1);
    CHECK(y[0] == 4.0);
    CHECK(y[3] == 4.0);
    CHECK(y[5] == 9.0);
    CHECK(y[10] == 9.0);
    CHECK(y[1] == 6.0);
  }
  SUBCASE("dilation 2 against a direct convolution") {
    Tensor x({1, 5, 5}, 0.0);
    x.mutable_data()[12] = 1.0;
    Tensor dw({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor y = nn::dsconv2d(x, dw, Tensor({1, 1}, {1.0}), 2);
    // Direct cross-correlation: out[i][j] = sum_ab k[a][b] x[i+2(a-1)][j+2(b-1)].
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        double expect = 0.0;
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            const int si = i + 2 * (a - 1), sj = j + 2 * (b - 1);
            if (si == 2 && sj == 2) expect += dw[static_cast<std::size_t>(a * 3 + b)];
          }
        CHECK(y[static_cast<std::size_t>(i * 5 + j)] == expect);
        const bool on_lattice = (i % 2 == 0) && (j % 2 == 0);
        if (!on_lattice) CHECK(y[static_cast<std::size_t>(i * 5 + j)] == 0.0);
      }
    CHECK(y[0] == 9.0);   // offset (-2,-2) picks k[2][2]
    CHECK(y[24] == 1.0);  // offset (+2,+2) picks k[0][0]
  }
  CHECK_THROWS_AS(nn::depthwise_conv2d(Tensor({1, 3, 3}), Tensor({1, 3, 3}), 0), ParameterError);
}

TEST_CASE("adaptive average pooling") {
  Tensor constant({2, 5, 7}, 3.25);
  for (int k : {1, 2, 4, 5}) {
    Tensor y = nn::adaptive_avg_pool2d(constant, k);
    for (double v : y.data()) CHECK(v == doctest::Approx(3.25).epsilon(1e-15));
  }
  std::vector<double> ramp(16);
  std::iota(ramp.begin(), ramp.end(), 1.0);
  check_values(nn::adaptive_avg_pool2d(Tensor({1, 4, 4}, ramp), 2), {3.5, 5.5, 11.5, 13.5});
  check_values(nn::adaptive_avg_pool2d(Tensor({1, 2, 2}, {1, 2, 3, 4}), 1), {2.5});
  // Non-divisible size: windows [0,3) and [2,5) overlap on row 2.
  Tensor five({1, 5, 1}, {1, 2, 3, 4, 5});
  CHECK_THROWS_AS(nn::adaptive_avg_pool2d(five, 2), ParameterError);
  Tensor five_wide({1, 5, 2}, {1, 1, 2, 2, 3, 3, 4, 4, 5, 5});
  check_values(nn::adaptive_avg_pool2d(five_wide, 2), {2, 2, 4, 4});
  CHECK_THROWS_AS(nn::adaptive_avg_pool2d(Tensor({1, 3, 3}), 4), ParameterError);
}

TEST_CASE("batch norm") {
  Tensor gamma({1}, 1.0), beta({1}, 0.0);
  nn::RunningStats stats{Tensor({1}, 0.0), Tensor({1}, 1.0), 0.1};
  Tensor y = nn::batch_norm(Tensor({2, 1}, {-1, 1}), gamma, beta, nn::Mode::kTrain, stats);
  CHECK(std::abs(y[0] + 1.0) <= 1e-3);
  CHECK(std::abs(y[1] - 1.0) <= 1e-3);
  // Running stats: mean 0, unbiased variance 2.
  CHECK(stats.mean[0] == doctest::Approx(0.0));
  CHECK(stats.variance[0] == doctest::Approx(0.9 + 0.1 * 2.0));

  SUBCASE("gamma zero leaves beta") {
    util::Rng rng(5);
    nn::RunningStats s{Tensor({3}, 0.0), Tensor({3}, 1.0), 0.1};
    Tensor out = nn::batch_norm(testing::random_tensor({6, 3}, rng), Tensor({3}, 0.0), Tensor({3}, {0.5, -1, 2}),
                                nn::Mode::kTrain, s);
    for (std::size_t i = 0; i < 6; ++i) check_values(nn::slice(nn::reshape(out, {6, 3}), 0, i, i + 1), {0.5, -1, 2});
  }
  SUBCASE("train-mode moments match gamma and beta") {
    util::Rng rng(9);
    // Large spread keeps the epsilon bias in the std far below 1e-6.
    Tensor x = testing::random_tensor({8, 3}, rng, -100, 100);
    Tensor g({3}, {0.5, 2.0, 1.5}), b({3}, {-1.0, 0.25, 3.0});
    nn::RunningStats s{Tensor({3}, 0.0), Tensor({3}, 1.0), 0.1};
    Tensor out = nn::batch_norm(x, g, b, nn::Mode::kTrain, s);
    for (std::size_t j = 0; j < 3; ++j) {
      double mean = 0.0, var = 0.0;
      for (std::size_t i = 0; i < 8; ++i) mean += out[i * 3 + j] / 8.0;
      for (std::size_t i = 0; i < 8; ++i) var += (out[i * 3 + j] - mean) * (out[i * 3 + j] - mean) / 8.0;
      CHECK(std::abs(mean - b[j]) <= 1e-6);
      CHECK(std::abs(std::sqrt(var) - g[j]) <= 1e-6);
    }
  }
  SUBCASE("zero-variance column normalizes to beta") {
    nn::RunningStats s{Tensor({1}, 0.0), Tensor({1}, 1.0), 0.1};
    Tensor out = nn::batch_norm(Tensor({3, 1}, 4.0), Tensor({1}, 1.0), Tensor({1}, 0.0), nn::Mode::kTrain, s);
    for (double v : out.data()) CHECK(v == 0.0);
  }
  SUBCASE("eval mode reads running stats") {
    nn::RunningStats s{Tensor({1}, {2.0}), Tensor({1}, {4.0}), 0.1};
    Tensor out = nn::batch_norm(Tensor({1, 1}, {6.0}), Tensor({1}, 1.0), Tensor({1}, 0.0), nn::Mode::kEval, s);
    CHECK(out[0] == doctest::Approx(4.0 / std::sqrt(4.0 + 1e-5)));
    CHECK(s.mean[0] == 2.0);
  }
}

TEST_CASE("dropout") {
  util::Rng rng(1);
  Tensor x({100, 10}, 1.0);
  Tensor eval = nn::dropout(x, 0.1, rng, nn::Mode::kEval);
  CHECK(eval.node() == x.node());
  Tensor train = nn::dropout(x, 0.1, rng, nn::Mode::kTrain);
  std::size_t zeros = 0;
  for (double v : train.data()) {
    if (v == 0.0) ++zeros;
    else CHECK(v == doctest::Approx(1.0 / 0.9));
  }
  CHECK(zeros > 50);
  CHECK(zeros < 150);
  util::Rng a(99), b(99);
  Tensor da = nn::dropout(x, 0.5, a, nn::Mode::kTrain), db = nn::dropout(x, 0.5, b, nn::Mode::kTrain);
  CHECK(std::equal(da.data().begin(), da.data().end(), db.data().begin()));
}

TEST_CASE("cross entropy of uniform logits is log C") {
  Tensor logits({2, 2}, 0.0);
  CHECK(nn::cross_entropy(logits, {0, 1}).item() == doctest::Approx(std::log(2.0)));
}

TEST_CASE("non-finite forward values are an error") {
  Tensor x({1}, {std::numeric_limits<double>::infinity()});
  CHECK_THROWS_AS(nn::relu(x), NumericError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST_CASE("no-grad guard stops tape recording") {
  Tensor w({2}, 1.0);
  w.set_requires_grad(true);
  {
    nn::NoGradGuard guard;
    CHECK_FALSE(nn::scale(w, 2.0).requires_grad());
  }
  CHECK(nn::scale(w, 2.0).requires_grad());
}

TEST_CASE("gradients accumulate until zero_grad") {
  Tensor w({2}, {1.0, 2.0});
  w.set_requires_grad(true);
  nn::sum(nn::mul(w, w)).backward();
  nn::sum(nn::mul(w, w)).backward();
  CHECK(w.grad()[0] == 4.0);
  CHECK(w.grad()[1] == 8.0);
  w.zero_grad();
  CHECK(w.grad()[0] == 0.0);
}

TEST_CASE("every differentiable op matches central finite differences") {
  for (const auto& r : testing::run_gradient_suite(2024, 20)) {
    INFO(r.op);
    CHECK(r.instances >= 20);
    CHECK(r.worst_relative_error <= 1e-4);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient and zero weight decay leave parameters unchanged") {
    Tensor p({3}, {1.0, -2.0, 0.5});
    p.set_requires_grad(true);
    p.mutable_grad();
    nn::Adam opt({p}, {.lr = 0.1, .weight_decay = 0.0});
    for (int i = 0; i < 5; ++i) opt.step();
    check_values(p, {1.0, -2.0, 0.5}, 0.0);
  }
  SUBCASE("zero learning rate leaves parameters unchanged") {
    Tensor p({2}, {1.0, 2.0});
    p.set_requires_grad(true);
    p.mutable_grad()[0] = 3.0;
    nn::Adam opt({p}, {.lr = 0.0});
    opt.step();
    check_values(p, {1.0, 2.0}, 0.0);
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    Tensor p({2}, {1.0, 1.0});
    p.set_requires_grad(true);
    p.mutable_grad()[0] = 0.3;
    p.mutable_grad()[1] = -7.0;
    nn::Adam opt({p}, {.lr = 0.01, .weight_decay = 0.0});
    opt.step();
    CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(1.01).epsilon(1e-6));
  }
  SUBCASE("minimizes a quadratic") {
    Tensor p({1}, {5.0});
    p.set_requires_grad(true);
    nn::Adam opt({p}, {.lr = 0.1, .weight_decay = 0.0});
    for (int i = 0; i < 500; ++i) {
      opt.zero_grad();
      nn::sum(nn::mul(p, p)).backward();
      opt.step();
    }
    CHECK(std::abs(p[0]) < 0.05);
  }
}

TEST_CASE("parameter set names are unique") {
  nn::ParameterSet params;
  util::Rng rng(1);
  nn::Linear fc(params, "head.fc", 3, 2, rng);
  CHECK_THROWS_AS(params.add_constant("head.fc.weight", {1}, 0.0), ConfigError);
  CHECK(params.get("head.fc.bias").numel() == 2);
  CHECK(params.trainable_count() == 8);
}

TEST_CASE("checkpoint round trip is bit exact") {
  nn::ParameterSet params;
  util::Rng rng(42);
  nn::Linear fc(params, "a.fc", 5, 3, rng);
  nn::BatchNorm bn(params, "a.bn", 3);
  bn.stats.mean.mutable_data()[1] = 0.1 + 0.2;  // not exactly representable
  fc.weight.mutable_data()[0] = -0.0;
  fc.weight.mutable_data()[1] = 5e-324;

  nlohmann::json config = {{"hidden", 3}};
  auto bytes = nn::encode_checkpoint(params, config, "00000000deadbeef");
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "WGCKPT01");

  nn::ParameterSet other;
  util::Rng rng2(7);
  nn::Linear fc2(other, "a.fc", 5, 3, rng2);
  nn::BatchNorm bn2(other, "a.bn", 3);
  nn::Checkpoint ck = nn::decode_checkpoint(bytes);
  CHECK(ck.config == config);
  nn::load_into(ck, other, "00000000deadbeef");
  for (std::size_t k = 0; k < params.entries().size(); ++k) {
    auto a = params.entries()[k].tensor.data();
    auto b = other.entries()[k].tensor.data();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::bit_cast<std::uint64_t>(a[i]) == std::bit_cast<std::uint64_t>(b[i]));
  }
  CHECK_FALSE(other.find("a.bn.running_mean")->trainable);
  CHECK_THROWS_AS(nn::load_into(ck, other, "ffffffffffffffff"), ConfigError);

  nn::ParameterSet wrong;
  nn::Linear fc3(wrong, "a.fc", 4, 3, rng2);
  nn::BatchNorm bn3(wrong, "a.bn", 3);
  CHECK_THROWS_AS(nn::load_into(ck, wrong, "00000000deadbeef"), ConfigError);

  bytes[0] = 'X';
  CHECK_THROWS_AS(nn::decode_checkpoint(bytes), InputError);
}
