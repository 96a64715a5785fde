#include "optbpx/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "optbpx/error.hpp"

namespace optbpx::io {

json params_to_json(const bpx::BpxParams& p) {
  return json{{"L", p.levels}, {"D", p.dim}, {"alpha", p.alpha}, {"eta", p.eta}, {"xi", p.xi}};
}

bpx::BpxParams params_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("params: expected an object");
  for (const char* key : {"L", "D", "alpha", "eta", "xi"}) {
    if (!j.contains(key)) throw ConfigError(std::string("params.") + key + ": missing");
  }
  bpx::BpxParams p;
  try {
    p.levels = j.at("L").get<int>();
    p.dim = j.at("D").get<int>();
    p.alpha = j.at("alpha").get<std::vector<double>>();
    p.eta = j.at("eta").get<std::vector<std::vector<double>>>();
    p.xi = j.at("xi").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
  try {
    p.check_shape();
  } catch (const Error& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
  return p;
}

void save_params(const bpx::BpxParams& p, const std::filesystem::path& path) {
  write_json(params_to_json(p), path);
}

bpx::BpxParams load_params(const std::filesystem::path& path) {
  return params_from_json(read_json(path));
}

json checkpoint_to_json(const Checkpoint& c) {
  json j{{"epoch", c.epoch}, {"theta", c.theta}, {"params", params_to_json(c.params)}, {"loss", c.loss}};
  j["kappa_verified"] = c.kappa_verified ? json(*c.kappa_verified) : json(nullptr);
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  try {
    c.epoch = j.at("epoch").get<int>();
    c.theta = j.at("theta").get<double>();
    c.loss = j.at("loss").get<double>();
    const auto& k = j.at("kappa_verified");
    if (!k.is_null()) c.kappa_verified = k.get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint: ") + e.what());
  }
  c.params = params_from_json(j.at("params"));
  return c;
}

void write_history_csv(std::span<const optimize::HistoryRow> rows,
                       const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,loss,theta,kappa\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,", r.epoch, r.loss, r.theta);
    out << buf;
    if (r.kappa) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.kappa);
      out << buf;
    }
    out << '\n';
  }
  write_text(out.str(), path);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  write_text(j.dump(2) + "\n", path);
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace optbpx::io
