#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "unlearn/harness.hpp"

namespace unlearn::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 success, 2 usage/input error, 1 internal invariant violation.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);
int run(int argc, char** argv);

// JSON <-> config plumbing, exposed for tests.
UnlearnConfig parse_unlearn_config(const std::string& json_text);
std::string unlearn_config_to_json(const UnlearnConfig& cfg);
ModelDims parse_dims(const std::string& json_text);
CombinerKind parse_combiner_name(const std::string& name);
ForgetObjective parse_objective_name(const std::string& name);

}  // namespace unlearn::cli
