#pragma once

// Internal helpers shared by the TOML readers. Not installed.

#include <map>
#include <string>
#include <vector>

#include <toml.hpp>

#include "ocbnn/constraints.hpp"

namespace ocbnn::detail {

std::string where(const toml::node& node);

double get_double(const toml::table& t, const std::string& key, double fallback);
double require_double(const toml::table& t, const std::string& key, const std::string& ctx);
std::int64_t get_int(const toml::table& t, const std::string& key, std::int64_t fallback);
std::string get_string(const toml::table& t, const std::string& key, const std::string& fallback);
std::string require_string(const toml::table& t, const std::string& key, const std::string& ctx);
bool get_bool(const toml::table& t, const std::string& key, bool fallback);
std::vector<double> get_doubles(const toml::table& t, const std::string& key, const std::string& ctx);
std::vector<int> get_ints(const toml::table& t, const std::string& key, const std::string& ctx);
const toml::table* get_table(const toml::table& t, const std::string& key);

/// Number or expression string.
Expression to_expression(const toml::node& node, const std::map<std::string, int>& aliases, const std::string& ctx);

Constraint parse_constraint_table(const toml::table& t, int input_dim, const std::map<std::string, int>& aliases,
                                  std::size_t index);

}  // namespace ocbnn::detail
