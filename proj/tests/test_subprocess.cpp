#include "doctest.h"

#include "calibr8/error.hpp"
#include "calibr8/subprocess.hpp"

using namespace calibr8;

TEST_CASE("request line format") {
  Vector x(2), u(1);
  x << 0.5, -1.0;
  u << 3.0;
  CHECK(format_request(x, u, 42) == "0.5 -1 3 42\n");
  CHECK(format_request(x, Vector(0), 0) == "0.5 -1 0\n");
}

TEST_CASE("response parsing") {
  Vector v = parse_response("1.5 2e-3  -4\n", 3);
  CHECK(v[0] == 1.5);
  CHECK(v[1] == 2e-3);
  CHECK(v[2] == -4);
  CHECK_THROWS_AS(parse_response("1 2", 3), EvaluationError);
  CHECK_THROWS_AS(parse_response("1 abc 3", 3), EvaluationError);
}

TEST_CASE("awk child simulator") {
  SubprocessSpec spec{"awk '{ print $1 + $2, $1 * $2 }'", {"awk", 2, 0, 2, false}, 10.0};
  auto sim = make_subprocess_simulator(spec);
  Vector x(2);
  x << 1.25, 4.0;
  Vector f = evaluate(sim, x, ControlInput::none(), 7);
  CHECK(f[0] == 5.25);
  CHECK(f[1] == 5.0);
  CHECK(sim.evaluations() == 1);
}

TEST_CASE("child receives control and seed") {
  SubprocessSpec spec{"awk '{ print $2, $3 }'", {"echo", 1, 1, 2, true}, 10.0};
  auto sim = make_subprocess_simulator(spec);
  Vector f = evaluate(sim, Vector::Constant(1, 0.0), ControlInput{Vector::Constant(1, 9.5), ""}, 123);
  CHECK(f[0] == 9.5);
  CHECK(f[1] == 123);
}

TEST_CASE("child failures become evaluation errors") {
  auto fail = make_subprocess_simulator({"exit 3", {"fail", 1, 0, 1, false}, 10.0});
  CHECK_THROWS_AS(evaluate(fail, Vector::Constant(1, 0.0), ControlInput::none(), 0), EvaluationError);
  auto slow = make_subprocess_simulator({"sleep 5", {"slow", 1, 0, 1, false}, 0.2});
  CHECK_THROWS_AS(evaluate(slow, Vector::Constant(1, 0.0), ControlInput::none(), 0), EvaluationError);
  auto wrong = make_subprocess_simulator({"echo 1 2", {"wrong", 1, 0, 1, false}, 10.0});
  CHECK_THROWS_AS(evaluate(wrong, Vector::Constant(1, 0.0), ControlInput::none(), 0), EvaluationError);
  auto nan = make_subprocess_simulator({"echo nan", {"nan", 1, 0, 1, false}, 10.0});
  CHECK_THROWS_AS(evaluate(nan, Vector::Constant(1, 0.0), ControlInput::none(), 0), EvaluationError);
  CHECK_THROWS_AS(make_subprocess_simulator({"", {"none", 1, 0, 1, false}, 10.0}), ConfigurationError);
}
