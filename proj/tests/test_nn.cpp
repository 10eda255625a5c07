#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bidex/nn.hpp"
#include "bidex/policy.hpp"
#include "bidex/rng.hpp"

using namespace bidex;
using nn::Matrix;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, RngStream& rng) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.next_gaussian();
  }
  return m;
}

/// Scalar loss + analytic grads for a network given a fixed target.
template <typename Forward>
double mse_loss(const Forward& fwd, const Matrix& target) {
  const Matrix out = fwd();
  return (out - target).squaredNorm() / static_cast<double>(out.size());
}

}  // namespace

TEST_CASE("mlp forward: zero weights, identity-like, and elu branches") {
  RngStream rng(1, 0);
  nn::MlpSpec spec;
  spec.input_width = 1;
  spec.hidden = {1};
  spec.output_width = 1;
  nn::Mlp net(spec, rng);
  auto params = net.params();
  // Force weight 1, bias 0 everywhere.
  for (nn::ParamRef& p : params) {
    p.value->setZero();
    if (p.name.find(".w") != std::string::npos) p.value->setOnes();
  }
  Matrix x(1, 1);
  x(0, 0) = 2.0;
  CHECK(net.forward(x)(0, 0) == doctest::Approx(2.0));  // elu passes positives
  x(0, 0) = -1.0;
  CHECK(net.forward(x)(0, 0) ==
        doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-12));

  for (nn::ParamRef& p : params) p.value->setZero();
  x(0, 0) = 5.0;
  CHECK(net.forward(x)(0, 0) == 0.0);
}

TEST_CASE("mlp backward: zero upstream and analytic single layer") {
  RngStream rng(2, 0);
  nn::MlpSpec spec;
  spec.input_width = 3;
  spec.hidden = {};
  spec.output_width = 2;
  nn::Mlp net(spec, rng);

  Matrix x = random_matrix(4, 3, rng);
  nn::Mlp::Cache cache;
  const Matrix y = net.forward(x, &cache);

  SUBCASE("zero upstream gives zero grads") {
    nn::GradList grads;
    net.backward(cache, Matrix::Zero(4, 2), grads);
    for (const Matrix& g : grads) CHECK(g.norm() == 0.0);
  }
  SUBCASE("linear layer matches the closed form") {
    const Matrix target = random_matrix(4, 2, rng);
    const Matrix d = (2.0 / y.size()) * (y - target);
    nn::GradList grads;
    const Matrix dx = net.backward(cache, d, grads);
    // dW = d^T x; db = column sums of d; dx = d W.
    const Matrix w = *net.params()[0].value;
    CHECK((grads[0] - d.transpose() * x).norm() < 1e-12);
    CHECK((grads[1] - d.colwise().sum().transpose()).norm() < 1e-12);
    CHECK((dx - d * w).norm() < 1e-12);
  }
}

TEST_CASE("mlp gradients match central finite differences") {
  RngStream rng(3, 0);
  nn::MlpSpec spec;
  spec.input_width = 6;
  spec.hidden = {16, 8};
  spec.output_width = 4;
  spec.output_activation = nn::OutputActivation::Tanh;
  nn::Mlp net(spec, rng);
  const Matrix x = random_matrix(5, 6, rng);
  const Matrix target = random_matrix(5, 4, rng);

  nn::Mlp::Cache cache;
  Matrix y = net.forward(x, &cache);
  nn::GradList grads;
  net.backward(cache, (2.0 / y.size()) * (y - target), grads);

  RngStream pick(4, 0);
  const double err = nn::gradient_check(
      net.params(), grads,
      [&]() {
        const Matrix out = net.forward(x);
        return (out - target).squaredNorm() / static_cast<double>(out.size());
      },
      pick, 200, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("point encoder is permutation and multiset invariant") {
  RngStream rng(5, 0);
  nn::PointEncoderSpec spec;
  spec.per_point = {16, 16};
  spec.post_pool = {32};
  spec.output_width = 24;
  nn::PointEncoder enc(spec, rng);

  const Eigen::Index P = 32;
  Matrix pts = random_matrix(P, 3, rng);
  const Matrix base = enc.forward(pts, P);

  SUBCASE("any permutation gives the identical output") {
    RngStream shuffle(6, 0);
    std::vector<std::size_t> order(P);
    shuffled_indices(P, shuffle, order.data());
    Matrix shuffled(P, 3);
    for (Eigen::Index i = 0; i < P; ++i) {
      shuffled.row(i) = pts.row(static_cast<Eigen::Index>(order[i]));
    }
    const Matrix out = enc.forward(shuffled, P);
    CHECK((out - base).norm() == 0.0);
  }
  SUBCASE("duplicating every point changes nothing") {
    Matrix doubled(2 * P, 3);
    doubled.topRows(P) = pts;
    doubled.bottomRows(P) = pts;
    const Matrix out = enc.forward(doubled, 2 * P);
    CHECK((out - base).norm() < 1e-12);
  }
  SUBCASE("identical points equal the single-point output") {
    Matrix same(P, 3);
    for (Eigen::Index i = 0; i < P; ++i) same.row(i) = pts.row(0);
    const Matrix one = enc.forward(pts.topRows(1), 1);
    const Matrix many = enc.forward(same, P);
    CHECK((one - many).norm() < 1e-12);
  }
}

TEST_CASE("point encoder gradients match finite differences") {
  RngStream rng(7, 0);
  nn::PointEncoderSpec spec;
  spec.per_point = {12, 12};
  spec.post_pool = {24};
  spec.output_width = 16;
  nn::PointEncoder enc(spec, rng);
  const Eigen::Index P = 24;
  const Matrix pts = random_matrix(3 * P, 3, rng);  // batch of 3 samples
  const Matrix target = random_matrix(3, 16, rng);

  nn::PointEncoder::Cache cache;
  const Matrix y = enc.forward(pts, P, &cache);
  nn::GradList grads;
  enc.backward(cache, (2.0 / y.size()) * (y - target), grads);

  RngStream pick(8, 0);
  const double err = nn::gradient_check(
      enc.params(), grads,
      [&]() {
        const Matrix out = enc.forward(pts, P);
        return (out - target).squaredNorm() / static_cast<double>(out.size());
      },
      pick, 200, 1e-5);
  CHECK(err < 1e-5);
}

TEST_CASE("adamw: zero-gradient fixpoints and decay") {
  RngStream rng(9, 0);
  nn::MlpSpec spec;
  spec.input_width = 2;
  spec.hidden = {4};
  spec.output_width = 1;
  nn::Mlp net(spec, rng);
  auto params = net.params();
  const Matrix w0 = *params[0].value;

  SUBCASE("zero gradients and zero decay leave parameters unchanged") {
    nn::AdamW opt(params, {.learning_rate = 1e-2, .weight_decay = 0.0});
    nn::GradList zeros;
    for (const nn::ParamRef& p : params) {
      zeros.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
    opt.step(zeros);
    CHECK((*params[0].value - w0).norm() == 0.0);
  }
  SUBCASE("pure decay shrinks by 1 - lr * wd") {
    nn::AdamW opt(params, {.learning_rate = 0.1, .weight_decay = 0.5});
    nn::GradList zeros;
    for (const nn::ParamRef& p : params) {
      zeros.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
    opt.step(zeros);
    CHECK((*params[0].value - 0.95 * w0).norm() < 1e-12);
  }
  SUBCASE("first step moves against the gradient sign") {
    nn::AdamW opt(params, {.learning_rate = 1e-3, .weight_decay = 0.0});
    nn::GradList grads;
    for (const nn::ParamRef& p : params) {
      grads.push_back(Matrix::Constant(p.value->rows(), p.value->cols(), 2.5));
    }
    opt.step(grads);
    const Matrix delta = *params[0].value - w0;
    // With fresh moments the update direction is -lr * sign(g).
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      CHECK(delta.data()[i] == doctest::Approx(-1e-3).epsilon(1e-6));
    }
  }
  SUBCASE("non-finite gradients are rejected with the parameter name") {
    nn::AdamW opt(params, {});
    nn::GradList grads;
    for (const nn::ParamRef& p : params) {
      grads.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    }
    grads[2](0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_WITH_AS(opt.step(grads), doctest::Contains("mlp.w1"),
                         std::runtime_error);
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  nn::GradList grads;
  grads.push_back(Matrix::Constant(2, 2, 3.0));
  grads.push_back(Matrix::Constant(2, 1, 4.0));
  const double norm = nn::clip_grad_norm(grads, 1.0);
  CHECK(norm == doctest::Approx(std::sqrt(4 * 9.0 + 2 * 16.0)));
  double after = 0.0;
  for (const Matrix& g : grads) after += g.squaredNorm();
  CHECK(std::sqrt(after) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("actor critic and student checkpoints round trip") {
  RngStream rng(11, 0);
  ActorCritic ac(20, 10, {16, 8}, -0.5, rng);
  const std::string dir =
      (std::filesystem::temp_directory_path() / "bidex_ckpt_test").string();
  std::filesystem::create_directories(dir);

  const Matrix probe = random_matrix(3, 20, rng);
  const Matrix before = ac.act_mean(probe);
  save_actor_critic(ac, dir + "/ac.ckpt", 42, {{"config_hash", "h"}});

  std::uint64_t iter = 0;
  CheckpointMeta meta;
  ActorCritic loaded = load_actor_critic(dir + "/ac.ckpt", &iter, &meta);
  CHECK(iter == 42);
  CHECK(meta.at("config_hash") == "h");
  CHECK((loaded.act_mean(probe) - before).norm() == 0.0);
  CHECK(checkpoint_kind(dir + "/ac.ckpt") == "gaussian_actor_critic");

  SUBCASE("corrupted payloads are rejected via the digest sidecar") {
    std::fstream f(dir + "/ac.ckpt",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(-9, std::ios::end);
    f.put('\x5a');
    f.close();
    CHECK_THROWS_WITH_AS(load_actor_critic(dir + "/ac.ckpt"),
                         doctest::Contains("digest"), std::runtime_error);
  }

  nn::PointEncoderSpec enc;
  enc.per_point = {8, 8};
  enc.post_pool = {16};
  enc.output_width = 12;
  StudentActor st(43, 5, 64, enc, {16, 8}, rng);
  save_student(st, dir + "/st.ckpt", 7, {{"config_hash", "h"}});
  StudentActor st2 = load_student(dir + "/st.ckpt");
  const Matrix pf = random_matrix(2, 43 + 15, rng);
  const Matrix pts = random_matrix(2 * 64, 3, rng);
  CHECK((st.act_mean(pf, pts) - st2.act_mean(pf, pts)).norm() == 0.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("forward passes are deterministic given parameters and input") {
  RngStream rng(13, 0);
  nn::MlpSpec spec;
  spec.input_width = 8;
  spec.hidden = {16};
  spec.output_width = 3;
  nn::Mlp net(spec, rng);
  const Matrix x = random_matrix(6, 8, rng);
  const Matrix a = net.forward(x);
  const Matrix b = net.forward(x);
  CHECK((a - b).norm() == 0.0);
}
