#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "optbpx/bpx.hpp"
#include "optbpx/optimize.hpp"

namespace optbpx::io {

using json = nlohmann::ordered_json;

/// {L, D, alpha, eta, xi}
json params_to_json(const bpx::BpxParams& p);
/// Throws ConfigError on missing keys or inconsistent shapes.
bpx::BpxParams params_from_json(const json& j);

void save_params(const bpx::BpxParams& p, const std::filesystem::path& path);
bpx::BpxParams load_params(const std::filesystem::path& path);

struct Checkpoint {
  int epoch = 0;
  double theta = 0.0;
  bpx::BpxParams params;
  double loss = 0.0;
  std::optional<double> kappa_verified;
};

json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const json& j);

/// Header "epoch,loss,theta,kappa"; kappa is empty for unverified epochs.
void write_history_csv(std::span<const optimize::HistoryRow> rows, const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
void write_json(const json& j, const std::filesystem::path& path);
void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace optbpx::io
