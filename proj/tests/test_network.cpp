#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aadml/error.hpp"
#include "aadml/gradcheck.hpp"
#include "aadml/network.hpp"
#include "aadml/rng.hpp"

using namespace aadml;

namespace {

Tensor random_rows(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data) v = rng.normal();
  return t;
}

}  // namespace

TEST_CASE("zeroed weights and biases give all-zero outputs") {
  ProjectionNet net(NetConfig{"audio", 5, 8, 3, 0.1, 1});
  for (Parameter* p : net.parameters()) std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
  Rng rng(1);
  Tensor out = net.project(random_rows(4, 5, rng));
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("eval mode is a pure function of parameters and input") {
  ProjectionNet net(NetConfig{"visual", 7, 16, 4, 0.3, 2});
  Rng rng(2);
  Tensor in = random_rows(6, 7, rng);
  CHECK(net.project(in).data == net.project(in).data);

  // Tape-based forward in eval mode agrees with the tape-free path.
  Tape tape;
  Var out = net.forward(tape, tape.leaf(in), false, 99);
  CHECK(tape.value(out).data == net.project(in).data);
}

TEST_CASE("train-mode forward applies seeded dropout after hidden activations") {
  ProjectionNet net(NetConfig{"audio", 4, 32, 2, 0.5, 3});
  Rng rng(3);
  Tensor in = random_rows(3, 4, rng);
  Tape t1, t2, t3;
  Var a = net.forward(t1, t1.leaf(in), true, 7);
  Var b = net.forward(t2, t2.leaf(in), true, 7);
  Var c = net.forward(t3, t3.leaf(in), true, 8);
  CHECK(t1.value(a).data == t2.value(b).data);
  CHECK(t1.value(a).data != t3.value(c).data);
}

TEST_CASE("output dimension is always the label count") {
  for (std::size_t c : {2ul, 5ul, 10ul}) {
    ProjectionNet net(NetConfig{"audio", 9, 6, c, 0.1, 4});
    Rng rng(4);
    CHECK(net.project(random_rows(2, 9, rng)).cols() == c);
  }
}

TEST_CASE("input dimension mismatch is a contract violation") {
  ProjectionNet net(NetConfig{"audio", 5, 8, 3, 0.1, 5});
  Rng rng(5);
  CHECK_THROWS_AS(net.project(random_rows(2, 6, rng)), ShapeError);
  Tape tape;
  Var bad = tape.leaf(random_rows(2, 6, rng));
  CHECK_THROWS_AS(net.forward(tape, bad, false, 0), ShapeError);
}

TEST_CASE("network gradients pass the finite-difference check") {
  ProjectionNet net(NetConfig{"audio", 4, 5, 3, 0.0, 6});
  Rng rng(6);
  Tensor in = random_rows(3, 4, rng);
  std::vector<Parameter*> params = net.parameters();
  auto fn = [&](Tape& t) { return t.sum_all(net.forward(t, t.leaf(in), false, 0)); };
  GradCheckReport report = grad_check(fn, params, 1e-3);
  CHECK(report.worst < 1e-4);
}
