#pragma once

#include "vaeconv/models.hpp"
#include "vaeconv/seqvae.hpp"

#include <json.hpp>

#include <string>

namespace vaeconv {

using Json = nlohmann::json;

Json to_json(const MlpParams& p);
MlpParams mlp_from_json(const Json& j);

Json to_json(const LinearVae& m);
LinearVae linear_from_json(const Json& j);

Json to_json(const DeepGaussianVae& m, const Objective& obj);
DeepGaussianVae deep_from_json(const Json& j);
Objective objective_from_json(const Json& j);
Json objective_to_json(const Objective& obj);

Json to_json(const Ssm& s, const BackwardVariational& q);

void save_json(const Json& j, const std::string& path);
Json load_json(const std::string& path);

}  // namespace vaeconv
