#pragma once

#include "runtime.hpp"

namespace trishare {

// Single-machine execution of a plan over full share views, drawing the same
// labeled randomness streams as the distributed runtime ("offline" for the
// producer, "input/<party>" per provider). With equal seeds its outputs match
// the networked execution bit for bit; it is the fixed-point oracle for the
// protocol and requires no channels.
std::map<std::string, OutputResult> run_fullview(const ComputationPlan& plan,
                                                 const SessionConfig& cfg,
                                                 const SessionInputs& inputs);

}  // namespace trishare
