// mcfe: command-line front end for simulation, localization, masking,
// beamforming, feature extraction and session runs.
//
// Exit codes: 0 success, 2 when some segments failed, 1 on fatal errors.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include "mcfe/pipeline.hpp"
#include "mcfe/synth.hpp"

using namespace mcfe;

namespace {

constexpr int kPartialFailure = 2;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::optional<double> theta;
  std::optional<double> resolution;
};

PipelineConfig make_config(const Globals& g) {
  PipelineConfig cfg;
  if (!g.config.empty()) cfg = load_pipeline_config(g.config);
  cfg.seed = g.seed;
  cfg.jobs = g.jobs;
  if (g.theta) cfg.theta = *g.theta;
  if (g.resolution) cfg.ssl.resolution = *g.resolution;
  return cfg;
}

std::vector<double> channel_of(const MultichannelPcm& p, std::size_t ch) {
  if (ch >= p.num_channels()) throw ShapeError("channel " + std::to_string(ch) + " out of range");
  return p[ch];
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::size_t speakers = 3;
  std::size_t segments = 8;
  std::optional<double> rt60;
  std::optional<double> snr;
  bool no_noise = false;
  std::string close_talk;
  std::string session_id;
  std::string out;
};

// Close-talk list: {"segments": [{"speaker": 0, "speaker_id": "A", "start": 0.0,
// "transcript": "...", "wav": "a.wav"}]}; wav paths relative to the file.
std::vector<CloseTalkSegment> read_close_talk(const fs::path& path) {
  const json j = read_config_file(path);
  std::vector<CloseTalkSegment> out;
  for (const auto& s : j.at("segments")) {
    CloseTalkSegment c;
    c.speaker_index = s.at("speaker").get<std::size_t>();
    c.speaker_id = s.value("speaker_id", "spk" + std::to_string(c.speaker_index));
    c.start = s.value("start", 0.0);
    c.transcript = s.value("transcript", std::string());
    fs::path wav = s.at("wav").get<std::string>();
    if (wav.is_relative()) wav = path.parent_path() / wav;
    c.samples = read_wav(wav)[0];
    out.push_back(std::move(c));
  }
  return out;
}

int run_simulate(const Globals& g, const SimulateArgs& a) {
  const auto cfg = make_config(g);
  std::vector<CloseTalkSegment> script;
  std::size_t speakers = a.speakers;
  if (a.close_talk.empty()) {
    script = synthetic_script(speakers, a.segments, derive_seed(g.seed, 1));
  } else {
    script = read_close_talk(a.close_talk);
    speakers = 0;
    for (const auto& c : script) speakers = std::max(speakers, c.speaker_index + 1);
  }
  auto room = sample_room(speakers, g.seed);
  if (a.rt60) room.rt60 = *a.rt60;
  SimOptions opts;
  opts.session_id = a.session_id.empty() ? "session" + std::to_string(g.seed) : a.session_id;
  opts.fixed_snr_db = a.snr;
  opts.add_noise = !a.no_noise;
  opts.jobs = g.jobs;
  const auto sim = simulate_session(room, script, cfg.geometry, opts);
  const auto manifest = write_simulated_session(sim, room, cfg.geometry, opts.session_id, a.out);
  std::printf("%zu segments, rt60 %.3f s -> %s\n", sim.segments.size(), room.rt60, manifest.string().c_str());
  for (const auto& s : sim.skipped) std::fprintf(stderr, "skipped: %s\n", s.c_str());
  return sim.skipped.empty() ? 0 : kPartialFailure;
}

// --- overlap ----------------------------------------------------------------

struct OverlapArgs {
  std::string manifest;
  std::string out;
  double min_ratio = 0.1;
  double max_ratio = 1.0;
  double fraction = 1.0;
  std::string placement = "end";
};

SimSegment load_sim_segment(const SegmentInfo& s, const std::string& session_id) {
  SimSegment seg;
  seg.audio = read_wav(s.wav);
  if (s.speech_image) seg.speech_image = read_wav(*s.speech_image);
  if (s.interference) seg.interference = read_wav(*s.interference);
  seg.transcript = s.transcript;
  seg.speaker_id = s.speaker_id;
  seg.session_id = session_id;
  seg.start = s.start;
  seg.end = s.end;
  seg.overlap_ratio = s.overlap_ratio;
  return seg;
}

int run_overlap(const Globals& g, const OverlapArgs& a) {
  if (!(a.min_ratio > 0 && a.min_ratio <= a.max_ratio && a.max_ratio <= 1.0))
    throw Error("overlap: need 0 < min-ratio <= max-ratio <= 1");
  const auto session = load_manifest(a.manifest);
  const fs::path out = a.out;
  fs::create_directories(out);
  const auto placement = a.placement == "random" ? OverlapPlacement::Random : OverlapPlacement::End;
  if (a.placement != "random" && a.placement != "end") throw Error("overlap: placement must be 'end' or 'random'");

  SessionMetadata result;
  result.session_id = session.session_id;
  result.speakers = session.speakers;
  std::size_t failures = 0, mixed = 0;
  for (std::size_t i = 0; i < session.segments.size(); ++i) {
    SegmentInfo info = session.segments[i];
    try {
      Rng rng(derive_seed(g.seed, i));
      std::vector<std::size_t> others;
      for (std::size_t j = 0; j < session.segments.size(); ++j)
        if (session.segments[j].speaker_id != info.speaker_id) others.push_back(j);
      auto seg = load_sim_segment(info, session.session_id);
      if (!others.empty() && uniform(rng, 0.0, 1.0) < a.fraction) {
        const auto& pick = session.segments[others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)]];
        const double ratio = uniform(rng, a.min_ratio, a.max_ratio);
        auto res = mix_overlap(seg, load_sim_segment(pick, session.session_id), ratio, rng(), placement);
        seg = std::move(res.segment);
        info.overlap_ratio = seg.overlap_ratio;
        info.mixed_interference = true;
        ++mixed;
      }
      info.wav = out / (info.id + ".wav");
      write_wav(info.wav, seg.audio);
      if (seg.speech_image) {
        info.speech_image = out / (info.id + ".speech.wav");
        write_wav(*info.speech_image, *seg.speech_image);
      }
      if (seg.interference) {
        info.interference = out / (info.id + ".interference.wav");
        write_wav(*info.interference, *seg.interference);
      }
      result.segments.push_back(std::move(info));
    } catch (const std::exception& e) {
      std::fprintf(stderr, "segment %s: %s\n", info.id.c_str(), e.what());
      ++failures;
    }
  }
  write_manifest(result, out);
  std::printf("%zu of %zu segments mixed -> %s\n", mixed, result.segments.size(), (out / "manifest.json").string().c_str());
  return failures ? kPartialFailure : 0;
}

// --- localize -----------------------------------------------------------------

int run_localize(const Globals& g, const std::string& wav, const std::string& csv) {
  auto cfg = make_config(g);
  const auto est = localize(stft(read_wav(wav), cfg.stft), cfg.geometry, cfg.ssl);
  std::printf("%s\n", json({{"azimuth", est.azimuth}, {"score", est.score}, {"peak_to_mean", est.peak_to_mean}}).dump().c_str());
  if (!csv.empty()) {
    std::ofstream f(csv);
    if (!f) throw Error("cannot write " + csv);
    f << "azimuth,score\n";
    for (std::size_t k = 0; k < est.grid.size(); ++k) f << est.grid[k] << "," << est.score_curve[k] << "\n";
  }
  return 0;
}

// --- masks-oracle -------------------------------------------------------------

int run_masks_oracle(const Globals& g, const std::string& speech, const std::string& interference,
                     const std::string& out, bool average, double exponent) {
  const auto cfg = make_config(g);
  auto mask = oracle_irm(stft(read_wav(speech), cfg.stft), stft(read_wav(interference), cfg.stft), exponent);
  if (average) mask = average_masks(mask);
  save_masks(mask, out);
  std::printf("masks (%zu, %zu, %zu) -> %s\n", mask.channels, mask.frames, mask.bins, out.c_str());
  return 0;
}

// --- beamform -----------------------------------------------------------------

int run_beamform(const Globals& g, const std::string& wav, const std::string& masks, const std::string& out,
                 const std::string& weights_out) {
  const auto cfg = make_config(g);
  const auto spec = stft(read_wav(wav), cfg.stft);
  auto mask = load_masks(masks);
  if (!mask.averaged) mask = average_masks(mask);
  const auto w = mvdr_weights(estimate_psd(spec, mask, cfg.psd), cfg.mvdr);
  write_wav(out, istft(apply_beamformer(spec, w)));
  if (!weights_out.empty()) write_raster(weights_out, weights_to_raster(w));
  std::printf("reference %zu, fallback bins %zu -> %s\n", w.reference, w.fallback_count(), out.c_str());
  return 0;
}

// --- features -----------------------------------------------------------------

int run_features(const Globals& g, const std::string& wav, std::size_t channel, const std::string& out,
                 const std::string& stats_in, const std::string& stats_out) {
  const auto cfg = make_config(g);
  const auto pcm = read_wav(wav);
  const auto mono = MultichannelPcm::mono(channel_of(pcm, channel), pcm.sample_rate);
  const auto stacked = frame2superframe(log_mel(stft(mono, cfg.stft), cfg.mel), cfg.superframe, cfg.superframe_stride);
  GmvnStats stats = stats_in.empty() ? compute_gmvn_stats({stacked}, fs::path(wav).filename().string())
                                     : load_gmvn_stats(stats_in);
  if (!stats_out.empty()) save_gmvn_stats(stats, stats_out);
  const auto feats = gmvn(stacked, stats);
  write_raster(out, features_to_raster(feats));
  std::printf("features (%zu, %zu) -> %s\n", feats.frames, feats.dims, out.c_str());
  return 0;
}

// --- session ------------------------------------------------------------------

int run_session_cmd(const Globals& g, const std::string& manifest, const std::string& out,
                    const std::string& mask_source, bool no_premask) {
  auto cfg = make_config(g);
  if (!mask_source.empty()) cfg.mask_source = mask_source_from_string(mask_source);
  if (no_premask) cfg.premask = false;
  const auto run = run_session(manifest, cfg, out);
  const auto& sum = run.report["summary"];
  std::printf("%zu segments (%zu non-overlap, %zu overlap), %zu failed -> %s\n",
              sum["overall"]["count"].get<std::size_t>(), sum["non_overlap"]["count"].get<std::size_t>(),
              sum["overlap"]["count"].get<std::size_t>(), run.failures, (fs::path(out) / "report.json").string().c_str());
  return run.failures ? kPartialFailure : 0;
}

// --- si-snr -------------------------------------------------------------------

int run_si_snr(const std::string& estimate, const std::string& reference, std::size_t est_ch, std::size_t ref_ch) {
  const auto e = read_wav(estimate), r = read_wav(reference);
  std::printf("%.4f\n", si_snr(channel_of(e, est_ch), channel_of(r, ref_ch)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multichannel front end: simulation, localization, mask-based MVDR and features"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "TOML or JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--theta", g.theta, "pre-masking angle threshold in degrees");
  app.add_option("--resolution", g.resolution, "localization grid resolution in degrees");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "simulate a multichannel session in a sampled room");
  simulate->add_option("--speakers", sim.speakers, "number of speakers (synthetic script)");
  simulate->add_option("--segments", sim.segments, "number of segments (synthetic script)");
  simulate->add_option("--close-talk", sim.close_talk, "close-talk segment list (JSON)")->check(CLI::ExistingFile);
  simulate->add_option("--rt60", sim.rt60, "override the sampled RT60 (seconds)");
  simulate->add_option("--snr", sim.snr, "fixed mixing SNR in dB instead of sampling");
  simulate->add_flag("--no-noise", sim.no_noise, "do not add diffuse noise");
  simulate->add_option("--session-id", sim.session_id, "session identifier");
  simulate->add_option("--out", sim.out, "output directory")->required();

  OverlapArgs ov;
  auto* overlap = app.add_subcommand("overlap", "mix same-session interference into segments");
  overlap->add_option("--manifest", ov.manifest, "input manifest")->required()->check(CLI::ExistingFile);
  overlap->add_option("--out", ov.out, "output directory")->required();
  overlap->add_option("--min-ratio", ov.min_ratio, "smallest overlap ratio");
  overlap->add_option("--max-ratio", ov.max_ratio, "largest overlap ratio");
  overlap->add_option("--fraction", ov.fraction, "share of segments that receive interference");
  overlap->add_option("--placement", ov.placement, "end or random");

  std::string wav, csv, speech, interference, out, masks, weights, stats_in, stats_out, manifest, mask_source;
  std::string estimate, reference;
  std::size_t channel = 0, ref_channel = 0;
  bool average = false, no_premask = false;
  double exponent = 1.0;

  auto* loc = app.add_subcommand("localize", "estimate the direction of arrival");
  loc->add_option("--wav", wav, "multichannel wav")->required()->check(CLI::ExistingFile);
  loc->add_option("--csv", csv, "write the score curve as azimuth,score");

  auto* mo = app.add_subcommand("masks-oracle", "ideal ratio masks from speech and interference images");
  mo->add_option("--speech", speech, "speech image wav")->required()->check(CLI::ExistingFile);
  mo->add_option("--interference", interference, "interference wav")->required()->check(CLI::ExistingFile);
  mo->add_option("--out", out, "TFM1 output")->required();
  mo->add_flag("--average", average, "average over channels");
  mo->add_option("--exponent", exponent, "mask exponent");

  auto* bf = app.add_subcommand("beamform", "mask-based MVDR beamforming");
  bf->add_option("--wav", wav, "multichannel wav")->required()->check(CLI::ExistingFile);
  bf->add_option("--masks", masks, "TFM1 masks")->required()->check(CLI::ExistingFile);
  bf->add_option("--out", out, "enhanced mono wav")->required();
  bf->add_option("--weights", weights, "write beamformer weights as a raster");

  auto* ft = app.add_subcommand("features", "log-mel, superframe stacking and GMVN");
  ft->add_option("--wav", wav, "input wav")->required()->check(CLI::ExistingFile);
  ft->add_option("--channel", channel, "channel to use");
  ft->add_option("--out", out, "feature raster output")->required();
  ft->add_option("--stats", stats_in, "GMV1 statistics to apply")->check(CLI::ExistingFile);
  ft->add_option("--write-stats", stats_out, "write the statistics used");

  auto* se = app.add_subcommand("session", "bias estimation and per-segment enhancement for a session");
  se->add_option("--manifest", manifest, "session manifest")->required()->check(CLI::ExistingFile);
  se->add_option("--out", out, "output directory")->required();
  se->add_option("--mask-source", mask_source, "oracle, file or angle");
  se->add_flag("--no-premask", no_premask, "disable angle-feature pre-masking");

  auto* ss = app.add_subcommand("si-snr", "scale-invariant SNR of an estimate against a reference");
  ss->add_option("--estimate", estimate, "estimate wav")->required()->check(CLI::ExistingFile);
  ss->add_option("--reference", reference, "reference wav")->required()->check(CLI::ExistingFile);
  ss->add_option("--channel", channel, "estimate channel");
  ss->add_option("--reference-channel", ref_channel, "reference channel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*simulate) return run_simulate(g, sim);
    if (*overlap) return run_overlap(g, ov);
    if (*loc) return run_localize(g, wav, csv);
    if (*mo) return run_masks_oracle(g, speech, interference, out, average, exponent);
    if (*bf) return run_beamform(g, wav, masks, out, weights);
    if (*ft) return run_features(g, wav, channel, out, stats_in, stats_out);
    if (*se) return run_session_cmd(g, manifest, out, mask_source, no_premask);
    if (*ss) return run_si_snr(estimate, reference, channel, ref_channel);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
