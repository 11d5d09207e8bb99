#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "calibr8/calibrate.hpp"
#include "calibr8/core.hpp"
#include "calibr8/gp.hpp"
#include "calibr8/observation.hpp"
#include "calibr8/predict.hpp"

namespace calibr8::io {

using Json = nlohmann::json;

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double v);

// Path-aware accessors: every failure is a ConfigurationError naming `path`.
const Json& field(const Json& j, const std::string& key, const std::string& path);
double get_real(const Json& j, const std::string& path);  // numbers, or "inf" / "-inf"
long get_int(const Json& j, const std::string& path);
std::size_t get_count(const Json& j, const std::string& path);
bool get_bool(const Json& j, const std::string& path);
std::string get_string(const Json& j, const std::string& path);
Vector get_vector(const Json& j, const std::string& path);
Matrix get_matrix(const Json& j, const std::string& path);
/// Rejects keys not listed in `allowed`.
void check_keys(const Json& j, const std::vector<std::string>& allowed, const std::string& path);

Json to_json(const Vector& v);
Json to_json(const Matrix& m);

Json to_json(const ParameterSpace& space);
ParameterSpace parameter_space_from_json(const Json& j, const std::string& path = "space");

Json to_json(const ObservationSet& obs);
/// Keys: y, operator, model, locations (optional), control (optional).
ObservationSet observation_set_from_json(const Json& j, const std::string& path = "observations");

Json to_json(const GPModel& gp);
GPModel gp_from_json(const Json& j, const std::string& path = "gp");

/// Header x_<name>..., weight, log_post; one row per particle.
void write_particles_csv(std::ostream& os, const ParticleSet& p, const std::vector<std::string>& names);
struct ParticleFile {
  std::vector<std::string> names;
  ParticleSet particles;
};
/// Throws ConfigurationError when the header does not follow the schema.
ParticleFile read_particles_csv(std::istream& is);

void write_matrix_csv(std::ostream& os, const std::vector<std::string>& header, const Matrix& m);
struct MatrixFile {
  std::vector<std::string> header;  // empty when the file has none
  Matrix values;
};
/// A first line that does not parse as numbers is taken as the header.
MatrixFile read_matrix_csv(std::istream& is);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace calibr8::io
