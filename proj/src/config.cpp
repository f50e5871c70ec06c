#include "rpg/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace rpg {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw std::invalid_argument(where + ": unknown field '" + key + "'");
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& dst) {
  if (j.contains(key)) j.at(key).get_to(dst);
}

}  // namespace

void to_json(json& j, const GeneratorConfig& c) {
  j = json{{"stages", c.stages()},
           {"k_schedule", c.k_schedule},
           {"latent_width", c.latent_width},
           {"embed_width", c.embed_width},
           {"mlp_hidden", c.mlp_hidden},
           {"encoder_widths", c.encoder_widths},
           {"vae_mode", c.vae_mode}};
}

void from_json(const json& j, GeneratorConfig& c) {
  reject_unknown(j,
                 {"stages", "k_schedule", "latent_width", "embed_width", "mlp_hidden",
                  "encoder_widths", "vae_mode"},
                 "generator");
  read_opt(j, "k_schedule", c.k_schedule);
  read_opt(j, "latent_width", c.latent_width);
  read_opt(j, "embed_width", c.embed_width);
  read_opt(j, "mlp_hidden", c.mlp_hidden);
  read_opt(j, "encoder_widths", c.encoder_widths);
  read_opt(j, "vae_mode", c.vae_mode);
  if (j.contains("stages") && j.at("stages").get<int>() != c.stages()) {
    throw std::invalid_argument("generator: stages = " + std::to_string(j.at("stages").get<int>()) +
                                " but k_schedule has " + std::to_string(c.stages()) + " entries");
  }
  c.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lambda", c.lambda},
           {"beta", c.beta},
           {"kl_warmup_fraction", c.kl_warmup_fraction},
           {"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"adamw",
            {{"beta1", c.adamw.beta1},
             {"beta2", c.adamw.beta2},
             {"epsilon", c.adamw.epsilon},
             {"weight_decay", c.adamw.weight_decay}}},
           {"epochs", c.epochs},
           {"seed", c.seed},
           {"save_every", c.save_every}};
}

void from_json(const json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"lambda", "beta", "kl_warmup_fraction", "learning_rate", "batch_size", "adamw",
                  "epochs", "seed", "save_every"},
                 "train");
  read_opt(j, "lambda", c.lambda);
  read_opt(j, "beta", c.beta);
  read_opt(j, "kl_warmup_fraction", c.kl_warmup_fraction);
  read_opt(j, "learning_rate", c.learning_rate);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "seed", c.seed);
  read_opt(j, "save_every", c.save_every);
  if (j.contains("adamw")) {
    const json& a = j.at("adamw");
    reject_unknown(a, {"beta1", "beta2", "epsilon", "weight_decay"}, "train.adamw");
    read_opt(a, "beta1", c.adamw.beta1);
    read_opt(a, "beta2", c.adamw.beta2);
    read_opt(a, "epsilon", c.adamw.epsilon);
    read_opt(a, "weight_decay", c.adamw.weight_decay);
  }
  c.validate();
}

RunConfig parse_run_config(const json& j) {
  reject_unknown(j, {"generator", "train"}, "config");
  RunConfig c;
  if (j.contains("generator")) c.generator = j.at("generator").get<GeneratorConfig>();
  if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json run_config_json(const RunConfig& c) {
  return json{{"generator", c.generator}, {"train", c.train}};
}

}  // namespace rpg
