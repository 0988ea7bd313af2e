#include "apl/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace apl {

using json = nlohmann::ordered_json;

Mat& ParamStore::create(const std::string& name, Mat init) {
  if (entries_.count(name) > 0) fail("ParamStore: duplicate parameter '" + name + "'");
  Entry e;
  e.grad = Mat::Zero(init.rows(), init.cols());
  e.m = Mat::Zero(init.rows(), init.cols());
  e.v = Mat::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  auto [it, ok] = entries_.emplace(name, std::move(e));
  return it->second.value;
}

Mat& ParamStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail("ParamStore: unknown parameter '" + name + "'");
  return it->second.value;
}

const Mat& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail("ParamStore: unknown parameter '" + name + "'");
  return it->second.value;
}

Mat& ParamStore::grad(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) fail("ParamStore: unknown parameter '" + name + "'");
  return it->second.grad;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : entries_) e.grad.setZero();
}

void ParamStore::adam_step(double lr) {
  if (lr <= 0.0) fail("adam_step: learning rate must be positive");
  step_ += 1;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double bc2 = 1.0 - std::pow(kBeta2, t);
  for (auto& [name, e] : entries_) {
    e.m = kBeta1 * e.m + (1.0 - kBeta1) * e.grad;
    e.v = kBeta2 * e.v.array() + (1.0 - kBeta2) * e.grad.array().square();
    Mat mhat = e.m / bc1;
    Mat vhat = e.v / bc2;
    e.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + kEps);
    e.grad.setZero();
  }
}

void ParamStore::save(const std::string& path, const std::string& extra_json) const {
  json header;
  header["format"] = "apl-checkpoint";
  header["version"] = 1;
  header["dtype"] = "f32";
  header["step"] = step_;
  json params = json::array();
  for (const auto& [name, e] : entries_) {
    json p;
    p["name"] = name;
    p["shape"] = {e.value.rows(), e.value.cols()};
    params.push_back(p);
  }
  header["params"] = params;
  if (!extra_json.empty()) header["meta"] = json::parse(extra_json);

  std::ofstream f(path, std::ios::binary);
  if (!f) fail("ParamStore::save: cannot open '" + path + "'");
  f << header.dump() << "\n";
  for (const auto& [name, e] : entries_) {
    std::vector<float> buf(static_cast<size_t>(e.value.size()));
    // row-major element order
    size_t n = 0;
    for (Eigen::Index i = 0; i < e.value.rows(); ++i)
      for (Eigen::Index j = 0; j < e.value.cols(); ++j)
        buf[n++] = static_cast<float>(e.value(i, j));
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) fail("ParamStore::save: write failed for '" + path + "'");
}

ParamStore ParamStore::load(const std::string& path, std::string* extra_json) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("ParamStore::load: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) fail("ParamStore::load: missing header in '" + path + "'");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "apl-checkpoint")
    fail("ParamStore::load: '" + path + "' is not an apl checkpoint");
  if (header.value("dtype", "") != "f32")
    fail("ParamStore::load: unsupported dtype '" + header.value("dtype", "") + "'");

  ParamStore ps;
  ps.step_ = header.value("step", int64_t{0});
  for (const auto& p : header.at("params")) {
    std::string name = p.at("name").get<std::string>();
    auto shape = p.at("shape");
    Eigen::Index rows = shape.at(0).get<Eigen::Index>();
    Eigen::Index cols = shape.at(1).get<Eigen::Index>();
    std::vector<float> buf(static_cast<size_t>(rows * cols));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) fail("ParamStore::load: truncated block for '" + name + "' in '" + path + "'");
    Mat m(rows, cols);
    size_t n = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(buf[n++]);
    ps.create(name, std::move(m));
  }
  if (extra_json != nullptr) {
    *extra_json = header.contains("meta") ? header["meta"].dump() : std::string{};
  }
  return ps;
}

}  // namespace apl
