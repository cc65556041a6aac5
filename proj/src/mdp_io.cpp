#include "tdpmd/mdp_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace tdpmd {

using nlohmann::json;
using detail::concat;

namespace {

const json& field(const json& doc, const char* name) {
  if (!doc.contains(name)) throw format_error(concat("missing field '", name, "'"));
  return doc.at(name);
}

long positive_int(const json& doc, const char* name) {
  const json& v = field(doc, name);
  if (!v.is_number_integer() || v.get<long>() < 1)
    throw format_error(concat("field '", name, "' must be a positive integer"));
  return v.get<long>();
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw format_error(where + " is not a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw format_error(where + " is not finite");
  return x;
}

const json& array_of(const json& v, std::size_t n, const std::string& where) {
  if (!v.is_array()) throw format_error(where + " must be an array");
  if (v.size() != n)
    throw format_error(concat(where, " has ", v.size(), " entries, expected ", n));
  return v;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw format_error(concat("not valid JSON: ", e.what()));
  }
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Mdp parse_mdp(const std::string& text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) throw format_error("MDP document must be a JSON object");
  const auto S = positive_int(doc, "num_states");
  const auto A = positive_int(doc, "num_actions");
  const double gamma = number(field(doc, "gamma"), "gamma");
  if (!(gamma >= 0 && gamma < 1)) throw format_error(concat("gamma = ", gamma, " is outside [0,1)"));

  MatrixD rewards(S, A);
  const json& r = array_of(field(doc, "rewards"), static_cast<std::size_t>(S), "rewards");
  for (long s = 0; s < S; ++s) {
    const json& row = array_of(r[s], static_cast<std::size_t>(A), concat("rewards[", s, "]"));
    for (long a = 0; a < A; ++a) {
      const std::string where = concat("rewards[", s, "][", a, "]");
      const double x = number(row[a], where);
      if (x < 0 || x > 1) throw format_error(concat(where, " = ", x, " is outside [0,1]"));
      rewards(s, a) = x;
    }
  }

  MatrixD transitions(S * A, S);
  const json& p = array_of(field(doc, "transitions"), static_cast<std::size_t>(S), "transitions");
  for (long s = 0; s < S; ++s) {
    const json& block = array_of(p[s], static_cast<std::size_t>(A), concat("transitions[", s, "]"));
    for (long a = 0; a < A; ++a) {
      const std::string row_name = concat("transitions[", s, "][", a, "]");
      const json& row = array_of(block[a], static_cast<std::size_t>(S), row_name);
      for (long t = 0; t < S; ++t) {
        const std::string where = concat(row_name, "[", t, "]");
        const double x = number(row[t], where);
        if (x < 0) throw format_error(concat(where, " = ", x, " is negative"));
        transitions(s * A + a, t) = x;
      }
      const double sum = transitions.row(s * A + a).sum();
      if (std::abs(sum - 1) > kRowSumTolerance)
        throw format_error(concat(row_name, " sums to ", sum, ", expected 1"));
    }
  }
  return Mdp(std::move(rewards), std::move(transitions), gamma);
}

Mdp load_mdp(const std::string& path) {
  try {
    return parse_mdp(read_file(path));
  } catch (const format_error& e) {
    throw format_error(path + ": " + e.what());
  }
}

std::string format_mdp(const Mdp& mdp) {
  const auto S = mdp.num_states();
  const auto A = mdp.num_actions();
  json doc;
  doc["num_states"] = S;
  doc["num_actions"] = A;
  doc["gamma"] = mdp.gamma();
  json rewards = json::array();
  json transitions = json::array();
  for (Eigen::Index s = 0; s < S; ++s) {
    json r = json::array();
    json block = json::array();
    for (Eigen::Index a = 0; a < A; ++a) {
      r.push_back(mdp.rewards()(s, a));
      json row = json::array();
      for (Eigen::Index t = 0; t < S; ++t) row.push_back(mdp.transitions()(s * A + a, t));
      block.push_back(std::move(row));
    }
    rewards.push_back(std::move(r));
    transitions.push_back(std::move(block));
  }
  doc["rewards"] = std::move(rewards);
  doc["transitions"] = std::move(transitions);
  return doc.dump(1) + "\n";
}

void save_mdp(const Mdp& mdp, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << format_mdp(mdp);
}

PolicyD load_policy(const std::string& path, Eigen::Index num_states, Eigen::Index num_actions) {
  const json doc = parse_json(read_file(path));
  const json& rows = array_of(field(doc, "policy"), static_cast<std::size_t>(num_states), "policy");
  MatrixD probs(num_states, num_actions);
  for (Eigen::Index s = 0; s < num_states; ++s) {
    const json& row = array_of(rows[static_cast<std::size_t>(s)], static_cast<std::size_t>(num_actions),
                               concat("policy[", s, "]"));
    for (Eigen::Index a = 0; a < num_actions; ++a)
      probs(s, a) = number(row[static_cast<std::size_t>(a)], concat("policy[", s, "][", a, "]"));
  }
  try {
    return PolicyD(std::move(probs));
  } catch (const std::invalid_argument& e) {
    throw format_error(path + ": " + e.what());
  }
}

VectorD load_values(const std::string& path, Eigen::Index num_states) {
  const json doc = parse_json(read_file(path));
  const json& vals = array_of(field(doc, "values"), static_cast<std::size_t>(num_states), "values");
  VectorD v(num_states);
  for (Eigen::Index s = 0; s < num_states; ++s)
    v(s) = number(vals[static_cast<std::size_t>(s)], concat("values[", s, "]"));
  return v;
}

}  // namespace tdpmd
