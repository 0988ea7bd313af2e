#include "apl/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "apl/controller.hpp"

namespace apl {

using json = nlohmann::ordered_json;

void RunConfig::validate() const {
  if (nway < 2) fail("config: nway must be >= 2");
  if (k < 1) fail("config: k must be >= 1");
  if (batch < 1) fail("config: batch must be >= 1");
  if (steps < 1) fail("config: steps must be >= 1");
  if (episode_steps < 1) fail("config: episode_steps must be >= 1");
  if (classes < 2) fail("config: classes must be >= 2");
  if (examples_per_class < 2) fail("config: examples_per_class must be >= 2");
  if (symbols < 1 || symbols > 11) fail("config: symbols must be in [1,11]");
  if (outdir.empty()) fail("config: outdir must not be empty");
  if (sigma != "auto") {
    try {
      size_t used = 0;
      double v = std::stod(sigma, &used);
      if (used != sigma.size()) throw std::invalid_argument(sigma);
      if (v < 0.0) fail("config: sigma must be >= 0");
    } catch (const std::invalid_argument&) {
      fail("config: sigma must be 'auto' or a number, got '" + sigma + "'");
    }
  }
}

int RunConfig::num_classes() const {
  return is_analogy(task) ? AnalogyEpisode::kNumTargets : nway;
}

double RunConfig::sigma_value() const {
  if (sigma == "auto") return threshold_for(num_classes());
  return std::stod(sigma);
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.task = task;
  m.num_classes = num_classes();
  m.k = k;
  m.decoder = decoder;
  return m;
}

std::string RunConfig::to_json() const {
  json j;
  j["task"] = apl::to_string(task);
  j["decoder"] = apl::to_string(decoder);
  j["nway"] = nway;
  j["k"] = k;
  j["batch"] = batch;
  j["steps"] = steps;
  j["seed"] = seed;
  j["sigma"] = sigma;
  j["outdir"] = outdir;
  j["classes"] = classes;
  j["examples_per_class"] = examples_per_class;
  j["rotations"] = rotations;
  j["symbols"] = symbols;
  j["episode_steps"] = episode_steps;
  j["curriculum"] = curriculum;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump();
}

RunConfig RunConfig::from_json(const std::string& s) {
  json j = json::parse(s);
  RunConfig c;
  c.task = task_kind_from_string(j.at("task").get<std::string>());
  c.decoder = decoder_kind_from_string(j.at("decoder").get<std::string>());
  c.nway = j.at("nway").get<int>();
  c.k = j.at("k").get<int>();
  c.batch = j.at("batch").get<int>();
  c.steps = j.at("steps").get<int64_t>();
  c.seed = j.at("seed").get<uint64_t>();
  c.sigma = j.at("sigma").get<std::string>();
  c.outdir = j.at("outdir").get<std::string>();
  c.classes = j.at("classes").get<int>();
  c.examples_per_class = j.at("examples_per_class").get<int>();
  c.rotations = j.at("rotations").get<bool>();
  c.symbols = j.at("symbols").get<int>();
  c.episode_steps = j.at("episode_steps").get<int>();
  c.curriculum = j.at("curriculum").get<bool>();
  c.checkpoint_every = j.at("checkpoint_every").get<int64_t>();
  return c;
}

namespace {

[[noreturn]] void bad_line(const std::string& origin, int line, const std::string& msg) {
  fail(origin + ":" + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& origin, int line) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_line(origin, line, "expected boolean, got '" + v + "'");
}

template <typename T>
T parse_int(const std::string& v, const std::string& origin, int line) {
  try {
    size_t used = 0;
    long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<T>(x);
  } catch (const std::exception&) {
    bad_line(origin, line, "expected integer, got '" + v + "'");
  }
}

TaskKind parse_task(const std::string& v, const std::string& origin, int line) {
  try {
    return task_kind_from_string(v);
  } catch (const Error& e) {
    bad_line(origin, line, e.what());
  }
}

DecoderKind parse_decoder(const std::string& v, const std::string& origin, int line) {
  try {
    return decoder_kind_from_string(v);
  } catch (const Error& e) {
    bad_line(origin, line, e.what());
  }
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  std::string section = "run";
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') bad_line(origin, line, "unterminated section header");
      section = trim(s.substr(1, s.size() - 2));
      if (section != "run" && section != "data" && section != "analogy" && section != "train")
        bad_line(origin, line, "unknown section [" + section + "]");
      continue;
    }
    size_t eq = s.find('=');
    if (eq == std::string::npos) bad_line(origin, line, "expected 'key = value'");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key.empty()) bad_line(origin, line, "empty key");
    if (val.empty()) bad_line(origin, line, "empty value for '" + key + "'");

    try {
      if (section == "run") {
        if (key == "task") cfg.task = parse_task(val, origin, line);
        else if (key == "decoder") cfg.decoder = parse_decoder(val, origin, line);
        else if (key == "nway") cfg.nway = parse_int<int>(val, origin, line);
        else if (key == "k") cfg.k = parse_int<int>(val, origin, line);
        else if (key == "batch") cfg.batch = parse_int<int>(val, origin, line);
        else if (key == "steps") cfg.steps = parse_int<int64_t>(val, origin, line);
        else if (key == "seed") cfg.seed = parse_int<uint64_t>(val, origin, line);
        else if (key == "sigma") cfg.sigma = val;
        else if (key == "outdir") cfg.outdir = val;
        else bad_line(origin, line, "unknown key '" + key + "' in [run]");
      } else if (section == "data") {
        if (key == "classes") cfg.classes = parse_int<int>(val, origin, line);
        else if (key == "examples_per_class") cfg.examples_per_class = parse_int<int>(val, origin, line);
        else if (key == "rotations") cfg.rotations = parse_bool(val, origin, line);
        else bad_line(origin, line, "unknown key '" + key + "' in [data]");
      } else if (section == "analogy") {
        if (key == "symbols") cfg.symbols = parse_int<int>(val, origin, line);
        else bad_line(origin, line, "unknown key '" + key + "' in [analogy]");
      } else {  // train
        if (key == "episode_steps") cfg.episode_steps = parse_int<int>(val, origin, line);
        else if (key == "curriculum") cfg.curriculum = parse_bool(val, origin, line);
        else if (key == "checkpoint_every") cfg.checkpoint_every = parse_int<int64_t>(val, origin, line);
        else bad_line(origin, line, "unknown key '" + key + "' in [train]");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      bad_line(origin, line, e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace apl
