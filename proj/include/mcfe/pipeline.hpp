#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcfe/beamformer.hpp"
#include "mcfe/config.hpp"
#include "mcfe/features.hpp"
#include "mcfe/masks.hpp"
#include "mcfe/metrics.hpp"
#include "mcfe/parallel.hpp"
#include "mcfe/room.hpp"
#include "mcfe/spatial.hpp"
#include "mcfe/ssl.hpp"
#include "mcfe/stft.hpp"
#include "mcfe/wav.hpp"

namespace mcfe {

namespace fs = std::filesystem;

struct SegmentInfo {
  std::string id;
  std::string speaker_id;
  double start = 0.0;
  double end = 0.0;
  bool overlap = false;
  std::string transcript;
  fs::path wav;
  std::optional<fs::path> speech_image;  // target image, for oracle masks and metrics
  std::optional<fs::path> interference;  // everything else in `wav`
  std::optional<fs::path> masks;         // TFM1 from an external estimator
  double overlap_ratio = 0.0;
  // Interference was mixed in after recording, so it is not visible in the intervals.
  bool mixed_interference = false;
  std::optional<double> doa_truth;
  std::optional<double> snr_db;

  double duration() const { return end - start; }
};

struct SpeakerInfo {
  std::string id;
  std::optional<fs::path> embedding;
};

struct SessionMetadata {
  std::string session_id;
  std::vector<SpeakerInfo> speakers;
  std::vector<SegmentInfo> segments;  // sorted by start time
};

/// A segment overlaps when another speaker's segment intersects it by more than
/// `guard` seconds, or when interference was mixed into it.
inline void derive_overlap_flags(SessionMetadata& session, double guard = 0.0) {
  auto& segs = session.segments;
  for (auto& a : segs) {
    a.overlap = a.mixed_interference;
    if (a.overlap) continue;
    for (const auto& b : segs) {
      if (&a == &b || a.speaker_id == b.speaker_id) continue;
      const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
      if (inter > guard) {
        a.overlap = true;
        break;
      }
    }
  }
}

/// Manifest JSON: {session_id, speakers: [id | {id, embedding}], segments:
/// [{id, wav, speaker_id, start, end, transcript, overlap_ratio, doa_truth,
/// snr_db, mixed_interference, speech_image?, interference?, masks?}]}. Relative paths resolve against the
/// manifest directory. Overlap flags are re-derived from segment intervals.
inline SessionMetadata load_manifest(const fs::path& path, double overlap_guard = 0.0) {
  const json j = read_config_file(path);
  const fs::path dir = path.parent_path();
  auto resolve = [&dir](const std::string& p) {
    fs::path q(p);
    return q.is_relative() ? dir / q : q;
  };
  SessionMetadata s;
  s.session_id = j.value("session_id", std::string("session"));
  for (const auto& sp : j.value("speakers", json::array())) {
    SpeakerInfo info;
    if (sp.is_string()) {
      info.id = sp.get<std::string>();
    } else {
      info.id = sp.at("id").get<std::string>();
      if (sp.contains("embedding")) info.embedding = resolve(sp.at("embedding").get<std::string>());
    }
    s.speakers.push_back(info);
  }
  std::size_t index = 0;
  for (const auto& sj : j.value("segments", json::array())) {
    SegmentInfo seg;
    seg.id = sj.value("id", "seg" + std::to_string(index));
    seg.speaker_id = sj.at("speaker_id").get<std::string>();
    seg.start = sj.at("start").get<double>();
    seg.end = sj.at("end").get<double>();
    seg.transcript = sj.value("transcript", std::string());
    seg.wav = resolve(sj.at("wav").get<std::string>());
    if (sj.contains("speech_image")) seg.speech_image = resolve(sj.at("speech_image").get<std::string>());
    if (sj.contains("interference")) seg.interference = resolve(sj.at("interference").get<std::string>());
    if (sj.contains("masks")) seg.masks = resolve(sj.at("masks").get<std::string>());
    seg.overlap_ratio = sj.value("overlap_ratio", 0.0);
    seg.mixed_interference = sj.value("mixed_interference", false);
    if (sj.contains("doa_truth") && !sj.at("doa_truth").is_null()) seg.doa_truth = sj.at("doa_truth").get<double>();
    if (sj.contains("snr_db") && sj.at("snr_db").is_number()) seg.snr_db = sj.at("snr_db").get<double>();
    if (seg.end < seg.start) throw Error("manifest: segment " + seg.id + " ends before it starts");
    s.segments.push_back(std::move(seg));
    ++index;
  }
  std::stable_sort(s.segments.begin(), s.segments.end(),
                   [](const SegmentInfo& a, const SegmentInfo& b) { return a.start < b.start; });
  for (const auto& seg : s.segments) {
    auto known = std::any_of(s.speakers.begin(), s.speakers.end(),
                             [&](const SpeakerInfo& sp) { return sp.id == seg.speaker_id; });
    if (!known) s.speakers.push_back({seg.speaker_id, std::nullopt});
  }
  derive_overlap_flags(s, overlap_guard);
  return s;
}

inline json segment_to_json(const SegmentInfo& seg, const fs::path& dir) {
  auto rel = [&dir](const fs::path& p) { return p.lexically_relative(dir).generic_string(); };
  json j = {{"id", seg.id},
            {"speaker_id", seg.speaker_id},
            {"start", seg.start},
            {"end", seg.end},
            {"transcript", seg.transcript},
            {"wav", rel(seg.wav)},
            {"overlap_ratio", seg.overlap_ratio}};
  if (seg.mixed_interference) j["mixed_interference"] = true;
  if (seg.doa_truth) j["doa_truth"] = *seg.doa_truth;
  if (seg.snr_db && std::isfinite(*seg.snr_db)) j["snr_db"] = *seg.snr_db;
  if (seg.speech_image) j["speech_image"] = rel(*seg.speech_image);
  if (seg.interference) j["interference"] = rel(*seg.interference);
  if (seg.masks) j["masks"] = rel(*seg.masks);
  return j;
}

/// Writes a manifest for `session` into `dir`; paths are stored relative to it.
inline void write_manifest(const SessionMetadata& session, const fs::path& dir, const json& extra = json::object()) {
  json j = extra;
  j["session_id"] = session.session_id;
  json speakers = json::array();
  for (const auto& sp : session.speakers) {
    json e = {{"id", sp.id}};
    if (sp.embedding) e["embedding"] = sp.embedding->lexically_relative(dir).generic_string();
    speakers.push_back(e);
  }
  j["speakers"] = speakers;
  json segs = json::array();
  for (const auto& seg : session.segments) segs.push_back(segment_to_json(seg, dir));
  j["segments"] = segs;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

/// Writes each simulated segment as <id>.wav with <id>.speech.wav and
/// <id>.interference.wav beside it, plus manifest.json describing the session,
/// room and array. Returns the manifest path.
inline fs::path write_simulated_session(const SessionSimulation& sim, const RoomConfig& room,
                                        const ArrayGeometry& geom, const std::string& session_id, const fs::path& dir) {
  fs::create_directories(dir);
  SessionMetadata meta;
  meta.session_id = session_id;
  for (std::size_t i = 0; i < sim.segments.size(); ++i) {
    const auto& s = sim.segments[i];
    char id[32];
    std::snprintf(id, sizeof id, "%04zu", i);
    SegmentInfo seg;
    seg.id = session_id + "_" + id;
    seg.speaker_id = s.speaker_id;
    seg.start = s.start;
    seg.end = s.end;
    seg.transcript = s.transcript;
    seg.overlap_ratio = s.overlap_ratio;
    seg.doa_truth = s.doa_truth;
    seg.snr_db = s.snr_db;
    seg.wav = dir / (seg.id + ".wav");
    write_wav(seg.wav, s.audio);
    if (s.speech_image) {
      seg.speech_image = dir / (seg.id + ".speech.wav");
      write_wav(*seg.speech_image, *s.speech_image);
    }
    if (s.interference) {
      seg.interference = dir / (seg.id + ".interference.wav");
      write_wav(*seg.interference, *s.interference);
    }
    if (std::none_of(meta.speakers.begin(), meta.speakers.end(), [&](const SpeakerInfo& sp) { return sp.id == seg.speaker_id; }))
      meta.speakers.push_back({seg.speaker_id, std::nullopt});
    meta.segments.push_back(std::move(seg));
  }
  json positions = json::array();
  for (const auto& p : room.speaker_positions) positions.push_back({p.x, p.y, p.z});
  json extra = {{"sample_rate", sim.segments.empty() ? 16000.0 : sim.segments.front().audio.sample_rate},
                {"room",
                 {{"dims", {room.dims.x, room.dims.y, room.dims.z}},
                  {"rt60", room.rt60},
                  {"array_center", {room.array_center.x, room.array_center.y, room.array_center.z}},
                  {"speaker_positions", positions},
                  {"seed", room.seed}}},
                {"geometry", geometry_to_json(geom)},
                {"skipped", sim.skipped}};
  write_manifest(meta, dir, extra);
  return dir / "manifest.json";
}

struct BiasInfo {
  DoaEstimate doa;
  std::optional<SpeakerEmbedding> embedding;
  std::string provenance;  // id of the segment the DOA was estimated on
  std::string warning;     // non-empty when no non-overlapped segment was available
};

using AudioLoader = std::function<MultichannelPcm(const SegmentInfo&)>;

inline MultichannelPcm load_segment_audio(const SegmentInfo& seg) { return read_wav(seg.wav); }

/// Location (and optional speaker) bias per speaker, taken from that speaker's
/// longest non-overlapped segment. Equal lengths go to the earliest start.
/// Without a usable non-overlapped segment the longest overlapped one is used
/// and `warning` says so; a segment whose audio cannot be loaded is skipped.
inline std::map<std::string, BiasInfo> estimate_session_bias(const SessionMetadata& session, const AudioLoader& load,
                                                             const PipelineConfig& cfg) {
  std::map<std::string, BiasInfo> out;
  for (const auto& speaker : session.speakers) {
    std::vector<const SegmentInfo*> candidates;
    for (const auto& seg : session.segments)
      if (seg.speaker_id == speaker.id) candidates.push_back(&seg);
    std::stable_sort(candidates.begin(), candidates.end(), [](const SegmentInfo* a, const SegmentInfo* b) {
      if (a->overlap != b->overlap) return !a->overlap;
      if (a->duration() != b->duration()) return a->duration() > b->duration();
      return a->start < b->start;
    });
    std::string skipped;
    for (const auto* seg : candidates) {
      MultichannelPcm audio;
      try {
        audio = load(*seg);
      } catch (const std::exception& e) {
        skipped += (skipped.empty() ? "" : "; ") + std::string("skipped ") + seg->id + ": " + e.what();
        continue;
      }
      BiasInfo info;
      info.provenance = seg->id;
      if (seg->overlap) info.warning = "no non-overlapped segment; used longest overlapped segment " + seg->id;
      if (!skipped.empty()) info.warning += (info.warning.empty() ? "" : "; ") + skipped;
      info.doa = localize(stft(audio, cfg.stft), cfg.geometry, cfg.ssl);
      if (speaker.embedding && fs::exists(*speaker.embedding)) info.embedding = load_embedding(*speaker.embedding);
      out.emplace(speaker.id, std::move(info));
      break;
    }
  }
  return out;
}

struct SegmentInputs {
  MultichannelPcm audio;
  std::optional<MultichannelPcm> speech_image;
  std::optional<MultichannelPcm> interference;
  std::optional<fs::path> masks;
};

struct SegmentDiagnostics {
  double input_energy = 0;
  double output_energy = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t mask_input_width = 0;
  std::size_t biased_input_width = 0;
  std::size_t mel_dims = 0;
  std::size_t feature_dims = 0;
  std::size_t feature_frames = 0;
  std::size_t fallback_bins = 0;
  std::size_t zeroed_bins = 0;    // angle-feature bins removed by pre-masking
  std::size_t competitors = 0;    // competitors beyond theta
  std::optional<double> si_snr_in;       // best single channel
  std::optional<double> si_snr_reference;  // reference channel
  std::optional<double> si_snr_out;
};

struct SegmentResult {
  MultichannelPcm enhanced;
  FeatureMatrix features;
  TwoHeadMask masks;  // channel-averaged masks used for the PSDs
  AngleFeature angle;
  BeamformerWeights weights;
  SegmentDiagnostics diagnostics;
};

namespace detail {

inline void expect_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError("pipeline shape drift: " + what);
}

inline double channel_energy(const MultichannelSpectrogram& spec) {
  double e = 0;
  for (const auto& c : spec.data()) e += std::norm(c);
  return e;
}

// Speech mask from the target angle feature: max(A, 0)^exponent, noise = 1 - speech.
inline TwoHeadMask angle_mask(const AngleFeature& a, double exponent) {
  TwoHeadMask mask(1, a.frames, a.bins);
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double s = std::pow(std::clamp(a.values[k], 0.0, 1.0), exponent);
    mask.speech[k] = static_cast<float>(s);
    mask.noise[k] = static_cast<float>(1.0 - s);
  }
  return mask;
}

}  // namespace detail

/// stft -> target angle feature -> pre-mask -> masks -> channel average -> PSDs
/// -> MVDR -> beamform -> istft, plus log-mel -> superframe -> GMVN on the
/// beamformed spectrum. Without `stats`, the features are normalized by their
/// own statistics.
inline SegmentResult process_segment(const SegmentInputs& in, double target_doa, const std::vector<double>& competitor_doas,
                                     const PipelineConfig& cfg, const GmvnStats* stats = nullptr,
                                     const SpeakerEmbedding* embedding = nullptr) {
  SegmentResult res;
  auto& diag = res.diagnostics;
  const auto spec = stft(in.audio, cfg.stft);
  const std::size_t M = spec.channels(), T = spec.frames(), F = spec.bins();
  detail::expect_shape(F == cfg.stft.num_bins(), "stft bins");
  detail::expect_shape(M == cfg.geometry.num_mics(), "channel count vs geometry");
  diag.frames = T;
  diag.bins = F;
  diag.input_energy = detail::channel_energy(spec);

  const auto target_sv = steering_vector(cfg.geometry, target_doa, cfg.stft);
  const auto target_angle = angle_feature(spec, target_sv);
  std::vector<AngleFeature> competitors;
  for (double doa : competitor_doas) {
    if (angular_distance(doa, target_doa) > cfg.theta) ++diag.competitors;
    competitors.push_back(angle_feature(spec, steering_vector(cfg.geometry, doa, cfg.stft)));
  }
  res.angle = cfg.premask ? pre_mask(target_angle, competitors, cfg.theta) : target_angle;
  for (std::size_t k = 0; k < res.angle.values.size(); ++k)
    if (res.angle.values[k] == 0.0 && target_angle.values[k] != 0.0) ++diag.zeroed_bins;

  // Mask-estimator input widths: magnitude and IPD, then with the angle feature and embedding appended.
  const auto ipd = compute_ipd(spec, cfg.ipd_normalization);
  diag.mask_input_width = F + ipd.block_width();
  diag.biased_input_width = diag.mask_input_width + F + (embedding ? kEmbeddingDim : 0);

  TwoHeadMask masks;
  switch (cfg.mask_source) {
    case MaskSource::Oracle: {
      if (!in.speech_image || !in.interference) throw Error("oracle masks need speech image and interference audio");
      masks = oracle_irm(stft(*in.speech_image, cfg.stft), stft(*in.interference, cfg.stft), cfg.mask_exponent);
      break;
    }
    case MaskSource::File: {
      if (!in.masks) throw Error("mask source 'file' but no mask file given");
      if (!fs::exists(*in.masks)) throw Error("missing mask file: " + in.masks->string());
      masks = load_masks(*in.masks);
      break;
    }
    case MaskSource::Angle:
      masks = detail::angle_mask(res.angle, cfg.mask_exponent);
      break;
  }
  detail::expect_shape(masks.frames == T && masks.bins == F, "masks (T, F)");
  res.masks = masks.averaged ? masks : average_masks(masks);

  const auto psd = estimate_psd(spec, res.masks, cfg.psd);
  res.weights = mvdr_weights(psd, cfg.mvdr);
  detail::expect_shape(res.weights.channels == M && res.weights.bins == F, "weights (M, F)");
  diag.fallback_bins = res.weights.fallback_count();
  const auto out_spec = apply_beamformer(spec, res.weights);
  detail::expect_shape(out_spec.channels() == 1 && out_spec.frames() == T && out_spec.bins() == F, "mono (T, F)");
  diag.output_energy = detail::channel_energy(out_spec);
  res.enhanced = istft(out_spec);

  const auto mel = log_mel(out_spec, cfg.mel);
  diag.mel_dims = mel.dims;
  const auto stacked = frame2superframe(mel, cfg.superframe, cfg.superframe_stride);
  detail::expect_shape(stacked.dims == cfg.superframe * cfg.mel.num_mels, "stacked dims");
  res.features = stats ? gmvn(stacked, *stats) : gmvn(stacked, compute_gmvn_stats({stacked}, "self"));
  diag.feature_dims = res.features.dims;
  diag.feature_frames = res.features.frames;

  if (in.speech_image) {
    const auto& clean = *in.speech_image;
    const std::size_t ref = res.weights.reference;
    double best = -kSiSnrCapDb;
    for (std::size_t m = 0; m < M; ++m) best = std::max(best, si_snr(in.audio[m], clean[m]));
    diag.si_snr_in = best;
    diag.si_snr_reference = si_snr(in.audio[ref], clean[ref]);
    diag.si_snr_out = si_snr(res.enhanced[0], clean[ref]);
  }
  return res;
}

struct RunReport {
  json report;
  std::size_t failures = 0;
};

/// Bias estimation, then per-segment enhancement with the segment's speaker as
/// target and every other session speaker as competitor. Writes
/// <id>.wav, <id>.feat.rst and <id>.tfm per segment plus report.json into
/// `out_dir`. Failures are recorded per segment and do not stop the run.
inline RunReport run_session(const fs::path& manifest, const PipelineConfig& cfg, const fs::path& out_dir) {
  const auto session = load_manifest(manifest, cfg.overlap_guard);
  fs::create_directories(out_dir);
  RunReport run;
  json& report = run.report;
  report["session_id"] = session.session_id;
  report["config"] = {{"fft_size", cfg.stft.fft_size},   {"hop", cfg.stft.hop},
                      {"sample_rate", cfg.stft.sample_rate}, {"theta", cfg.theta},
                      {"resolution", cfg.ssl.resolution}, {"premask", cfg.premask},
                      {"mask_source", to_string(cfg.mask_source)}, {"superframe", cfg.superframe},
                      {"num_mels", cfg.mel.num_mels},     {"seed", cfg.seed}};

  const auto bias = estimate_session_bias(session, load_segment_audio, cfg);
  json bias_json = json::object();
  for (const auto& [spk, b] : bias) {
    bias_json[spk] = {{"doa", b.doa.azimuth},
                      {"score", b.doa.score},
                      {"peak_to_mean", b.doa.peak_to_mean},
                      {"provenance", b.provenance},
                      {"warning", b.warning},
                      {"embedding", b.embedding ? b.embedding->source_id : std::string()}};
  }
  report["bias"] = bias_json;

  // GMVN statistics from the single-channel (reference microphone) features of the session.
  std::optional<GmvnStats> stats;
  {
    std::vector<std::optional<GmvnAccumulator>> parts(session.segments.size());
    parallel_for(session.segments.size(), cfg.jobs, [&](std::size_t i) {
      try {
        const auto pcm = read_wav(session.segments[i].wav);
        MultichannelPcm ref = MultichannelPcm::mono(pcm[cfg.mvdr.reference], pcm.sample_rate);
        GmvnAccumulator acc;
        acc.add(frame2superframe(log_mel(stft(ref, cfg.stft), cfg.mel), cfg.superframe, cfg.superframe_stride));
        parts[i] = acc;
      } catch (const std::exception&) {
        // reported by the processing pass below
      }
    });
    GmvnAccumulator all;
    for (const auto& p : parts)
      if (p) all.merge(*p);
    try {
      stats = all.finish(session.session_id + ":reference-channel");
    } catch (const Error&) {
    }
  }
  if (stats) save_gmvn_stats(*stats, out_dir / "gmvn.stats");

  std::vector<json> entries(session.segments.size());
  parallel_for(session.segments.size(), cfg.jobs, [&](std::size_t i) {
    const auto& seg = session.segments[i];
    json e = {{"segment_id", seg.id},       {"speaker_id", seg.speaker_id}, {"start", seg.start},
              {"end", seg.end},             {"overlap", seg.overlap},       {"overlap_ratio", seg.overlap_ratio},
              {"transcript", seg.transcript}};
    try {
      auto it = bias.find(seg.speaker_id);
      if (it == bias.end()) throw Error("no bias for speaker " + seg.speaker_id);
      std::vector<double> competitors;
      for (const auto& [spk, b] : bias)
        if (spk != seg.speaker_id) competitors.push_back(b.doa.azimuth);
      SegmentInputs in;
      in.audio = read_wav(seg.wav);
      if (seg.speech_image) in.speech_image = read_wav(*seg.speech_image);
      if (seg.interference) in.interference = read_wav(*seg.interference);
      in.masks = seg.masks;
      const SpeakerEmbedding* emb = it->second.embedding ? &*it->second.embedding : nullptr;
      const auto res = process_segment(in, it->second.doa.azimuth, competitors, cfg, stats ? &*stats : nullptr, emb);
      write_wav(out_dir / (seg.id + ".wav"), res.enhanced);
      write_raster(out_dir / (seg.id + ".feat.rst"), features_to_raster(res.features));
      save_masks(res.masks, out_dir / (seg.id + ".tfm"));
      const auto& d = res.diagnostics;
      e["status"] = "ok";
      e["target_doa"] = it->second.doa.azimuth;
      e["frames"] = d.frames;
      e["bins"] = d.bins;
      e["mask_input_width"] = d.mask_input_width;
      e["biased_input_width"] = d.biased_input_width;
      e["feature_frames"] = d.feature_frames;
      e["feature_dims"] = d.feature_dims;
      e["fallback_bins"] = d.fallback_bins;
      e["zeroed_bins"] = d.zeroed_bins;
      e["input_energy"] = d.input_energy;
      e["output_energy"] = d.output_energy;
      if (d.si_snr_in) e["si_snr_in"] = *d.si_snr_in;
      if (d.si_snr_reference) e["si_snr_reference"] = *d.si_snr_reference;
      if (d.si_snr_out) e["si_snr_out"] = *d.si_snr_out;
    } catch (const std::exception& ex) {
      e["status"] = "failed";
      e["error"] = ex.what();
    }
    entries[i] = std::move(e);
  });

  struct Bucket {
    std::size_t count = 0, scored = 0;
    double sum_in = 0, sum_out = 0;
  };
  Bucket non_overlap, overlap;
  json segs = json::array();
  for (auto& e : entries) {
    if (e["status"] == "failed") ++run.failures;
    Bucket& b = e["overlap"].get<bool>() ? overlap : non_overlap;
    ++b.count;
    if (e.contains("si_snr_out")) {
      ++b.scored;
      b.sum_in += e["si_snr_reference"].get<double>();
      b.sum_out += e["si_snr_out"].get<double>();
    }
    segs.push_back(std::move(e));
  }
  auto summarize = [](const Bucket& b) {
    json j = {{"count", b.count}, {"scored", b.scored}};
    if (b.scored) {
      j["mean_si_snr_reference"] = b.sum_in / static_cast<double>(b.scored);
      j["mean_si_snr_out"] = b.sum_out / static_cast<double>(b.scored);
    }
    return j;
  };
  Bucket overall{non_overlap.count + overlap.count, non_overlap.scored + overlap.scored,
                 non_overlap.sum_in + overlap.sum_in, non_overlap.sum_out + overlap.sum_out};
  report["segments"] = segs;
  report["summary"] = {{"non_overlap", summarize(non_overlap)},
                       {"overlap", summarize(overlap)},
                       {"overall", summarize(overall)},
                       {"failures", run.failures}};
  std::ofstream(out_dir / "report.json") << report.dump(2) << "\n";
  return run;
}

}  // namespace mcfe
