#pragma once

#include "tdpmd/mdp.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>

namespace tdpmd {

/// Malformed or invalid MDP / config document. The message names the offending field.
class format_error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/**
 * MDP file: a JSON object
 *   { "num_states": S, "num_actions": A, "gamma": g,
 *     "rewards": [[r(s,a) for a] for s],
 *     "transitions": [[[P(s'|s,a) for s'] for a] for s] }
 */
Mdp parse_mdp(const std::string& text);
Mdp load_mdp(const std::string& path);

std::string format_mdp(const Mdp& mdp);
void save_mdp(const Mdp& mdp, const std::string& path);

/// Policy file: { "policy": [[pi(a|s) for a] for s] }.
PolicyD load_policy(const std::string& path, Eigen::Index num_states, Eigen::Index num_actions);

/// Value file: { "values": [v(s) for s] }.
VectorD load_values(const std::string& path, Eigen::Index num_states);

std::string read_file(const std::string& path);

}  // namespace tdpmd
