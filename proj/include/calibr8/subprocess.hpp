#pragma once

#include <optional>
#include <string>

#include "calibr8/core.hpp"

namespace calibr8 {

/// External simulator attached through a line protocol: one line of
/// space-separated reals (x, then u, then the integer seed) is written to the
/// child's stdin and one line of space-separated reals is read back.
/// One child process is spawned per evaluation.
struct SubprocessSpec {
  std::string command;  // run via /bin/sh -c
  BlackBoxSimulator::Info info;
  double timeout_s = 60.0;
};

BlackBoxSimulator make_subprocess_simulator(const SubprocessSpec& spec,
                                            std::optional<ParameterSpace> domain = std::nullopt);

std::string format_request(const Vector& x, const Vector& u, std::uint64_t seed);
/// Throws EvaluationError when the line is not exactly `expected` reals.
Vector parse_response(const std::string& line, std::size_t expected);

}  // namespace calibr8
