#pragma once

#include <json.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mcfe/beamformer.hpp"
#include "mcfe/features.hpp"
#include "mcfe/spatial.hpp"
#include "mcfe/ssl.hpp"

namespace mcfe {

using json = nlohmann::json;

enum class MaskSource {
  Oracle,  // ideal ratio masks from known speech / interference images
  File,    // TFM1 file from an external estimator
  Angle,   // speech mask from the (pre-masked) target angle feature
};

inline MaskSource mask_source_from_string(const std::string& s) {
  if (s == "oracle") return MaskSource::Oracle;
  if (s == "file") return MaskSource::File;
  if (s == "angle") return MaskSource::Angle;
  throw Error("unknown mask source: " + s);
}

inline std::string to_string(MaskSource s) {
  switch (s) {
    case MaskSource::Oracle: return "oracle";
    case MaskSource::File: return "file";
    case MaskSource::Angle: return "angle";
  }
  return "unknown";
}

inline IpdNormalization ipd_normalization_from_string(const std::string& s) {
  if (s == "none") return IpdNormalization::None;
  if (s == "circular") return IpdNormalization::CircularMean;
  if (s == "cossin") return IpdNormalization::CosSinMeanRemoval;
  throw Error("unknown IPD normalization: " + s);
}

struct PipelineConfig {
  StftConfig stft;
  ArrayGeometry geometry = ArrayGeometry::circular7();
  SslOptions ssl;
  MvdrOptions mvdr;
  PsdOptions psd;
  MelConfig mel;
  std::size_t superframe = 3;
  std::size_t superframe_stride = 0;  // 0: same as superframe
  double theta = 30.0;
  bool premask = true;
  MaskSource mask_source = MaskSource::Oracle;
  double mask_exponent = 1.0;
  IpdNormalization ipd_normalization = IpdNormalization::CircularMean;
  double overlap_guard = 0.0;  // seconds
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

/// Geometry file: {"mic_positions": [[x,y,z], ...], "speed_of_sound": 343.0}.
inline ArrayGeometry geometry_from_json(const json& j) {
  ArrayGeometry g;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset != "circular7") throw Error("unknown geometry preset: " + preset);
    g = ArrayGeometry::circular7(j.value("radius", 0.0425));
  } else {
    for (const auto& p : j.at("mic_positions")) {
      if (p.size() != 3) throw Error("geometry: each position needs 3 coordinates");
      g.mic_positions.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
  }
  g.speed_of_sound = j.value("speed_of_sound", 343.0);
  g.validate();
  return g;
}

inline json geometry_to_json(const ArrayGeometry& g) {
  json pos = json::array();
  for (const auto& p : g.mic_positions) pos.push_back({p.x, p.y, p.z});
  return {{"mic_positions", pos}, {"speed_of_sound", g.speed_of_sound}};
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace detail

/// Minimal TOML reader for flat configuration files: `key = value` lines with
/// numbers, booleans or quoted strings, `#` comments, and `[section]` headers
/// (section names are ignored; keys are global).
inline json parse_flat_toml(const std::string& text) {
  json out = json::object();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = detail::trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      out[key] = value.substr(1, value.size() - 2);
    } else if (value == "true" || value == "false") {
      out[key] = value == "true";
    } else {
      try {
        out[key] = json::parse(value);
      } catch (const json::exception&) {
        throw Error("config line " + std::to_string(lineno) + ": cannot parse value for " + key);
      }
    }
  }
  return out;
}

inline json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.extension() == ".toml") return parse_flat_toml(ss.str());
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
}

inline void apply_config(PipelineConfig& cfg, const json& j, const std::filesystem::path& base_dir = {}) {
  cfg.stft.sample_rate = j.value("sample_rate", cfg.stft.sample_rate);
  cfg.stft.fft_size = j.value("fft_size", cfg.stft.fft_size);
  cfg.stft.hop = j.value("hop", cfg.stft.hop);
  if (j.contains("window")) cfg.stft.window = window_from_string(j.at("window").get<std::string>());
  cfg.stft.center_padding = j.value("center_padding", cfg.stft.center_padding);
  cfg.stft.validate();

  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    if (g.is_string()) {
      auto p = std::filesystem::path(g.get<std::string>());
      if (p.is_relative()) p = base_dir / p;
      cfg.geometry = geometry_from_json(read_config_file(p));
    } else {
      cfg.geometry = geometry_from_json(g);
    }
  } else if (j.contains("array_radius")) {
    cfg.geometry = ArrayGeometry::circular7(j.at("array_radius").get<double>());
  }
  cfg.geometry.speed_of_sound = j.value("speed_of_sound", cfg.geometry.speed_of_sound);

  cfg.ssl.resolution = j.value("resolution", cfg.ssl.resolution);
  cfg.ssl.phat = j.value("phat", cfg.ssl.phat);
  cfg.ssl.min_hz = j.value("ssl_min_hz", cfg.ssl.min_hz);
  cfg.ssl.max_hz = j.value("ssl_max_hz", cfg.ssl.max_hz);
  cfg.mvdr.reference = j.value("reference", cfg.mvdr.reference);
  cfg.mvdr.diag_load = j.value("diag_load", cfg.mvdr.diag_load);
  cfg.mvdr.select_reference = j.value("select_reference", cfg.mvdr.select_reference);
  cfg.psd.normalize_by_mask_sum = j.value("normalize_psd", cfg.psd.normalize_by_mask_sum);
  cfg.mel.num_mels = j.value("num_mels", cfg.mel.num_mels);
  cfg.mel.low_hz = j.value("mel_low_hz", cfg.mel.low_hz);
  cfg.mel.high_hz = j.value("mel_high_hz", cfg.mel.high_hz);
  cfg.mel.log_floor = j.value("log_floor", cfg.mel.log_floor);
  cfg.superframe = j.value("superframe", cfg.superframe);
  cfg.superframe_stride = j.value("superframe_stride", cfg.superframe_stride);
  cfg.theta = j.value("theta", cfg.theta);
  cfg.premask = j.value("premask", cfg.premask);
  if (j.contains("mask_source")) cfg.mask_source = mask_source_from_string(j.at("mask_source").get<std::string>());
  cfg.mask_exponent = j.value("mask_exponent", cfg.mask_exponent);
  if (j.contains("ipd_normalization"))
    cfg.ipd_normalization = ipd_normalization_from_string(j.at("ipd_normalization").get<std::string>());
  cfg.overlap_guard = j.value("overlap_guard", cfg.overlap_guard);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  apply_config(cfg, read_config_file(path), path.parent_path());
  return cfg;
}

}  // namespace mcfe
