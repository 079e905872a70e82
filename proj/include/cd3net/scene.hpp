#pragma once

// Synthetic full-duplex scenes: mic = clean + noise + echo, with the echo a
// clipped, reverberated and delayed copy of the loopback.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cd3net/dsp.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

enum class SourceKind { speech, noise };
enum class TalkMode { doubletalk, nearend_single, farend_single };

const char* to_string(TalkMode mode);
TalkMode parse_talk_mode(const std::string& name);

inline constexpr double kNoEcho = std::numeric_limits<double>::infinity();
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

struct ScenePlan {
  std::uint64_t seed = 0;
  double duration = 1.0;
  // Signal-to-echo and signal-to-noise ratios in dB; +inf removes the component.
  double ser_db = 0;
  double snr_db = kNoNoise;
  int delay_samples = 0;
  double clip_level = 1;
  // Length of the synthetic room response in seconds; 0 is a unit impulse.
  double rir_decay = 0;
  TalkMode talk = TalkMode::doubletalk;
  // Noise added to the loopback itself, dB below the farend speech; +inf = none.
  double farend_snr_db = kNoNoise;

  std::size_t length() const;
  /// Throws InvalidArgument for non-positive durations, negative delays,
  /// clip levels outside (0,1] and modes that contradict the ratios.
  void validate() const;
};

struct SceneQuad {
  TimeSignal clean;
  TimeSignal mic;
  TimeSignal loopback;
  TimeSignal echo;
  // Not part of the on-disk format; empty after loading.
  TimeSignal noise;
  Real target_scale = 1;
};

/// Seed derivation shared by every random stream (splitmix64 over the parts).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

/// Deterministic source peak-normalized to 0.5; duration >= 0.5 s.
TimeSignal synth_source(SourceKind kind, std::uint64_t seed, double duration);

std::vector<Real> hard_clip(const std::vector<Real>& x, Real level);
/// Sparse, exponentially decaying response of rir_decay seconds; h[0] = 1.
std::vector<Real> synth_rir(std::uint64_t seed, double rir_decay);
/// Causal convolution truncated to the input length.
std::vector<Real> convolve_truncated(const std::vector<Real>& x, const std::vector<Real>& h);
/// Positive d delays (zero-filled front), negative d advances (zero-filled tail).
std::vector<Real> shift_signal(const std::vector<Real>& x, int d);

/// clip -> room response -> integer delay.
TimeSignal distortion_f(const TimeSignal& q, const ScenePlan& plan);

SceneQuad make_scene(const ScenePlan& plan);

struct PlanRanges {
  double ser_lo = -5, ser_hi = 10;
  double snr_lo = 5, snr_hi = 25;
  int delay_max = 256;
  double clip_lo = 0.3, clip_hi = 1.0;
  double rir_lo = 0.02, rir_hi = 0.1;
  double duration = 1.0;
  // Probability of drawing doubletalk; remaining scenes are nearend-only.
  double doubletalk_prob = 1.0;
};

/// Deterministic plan draw for scene `index` of a run seeded by `seed`.
ScenePlan random_plan(std::uint64_t seed, std::uint64_t index, const PlanRanges& ranges = {});

// Augmentation of the loopback only.
struct AugmentOptions {
  bool shift = false;
  bool scale = false;
  int max_shift = 512;
  Real scale_lo = Real(0.5), scale_hi = Real(1.5);
  double prob = 0.5;
};

/// Stream keyed by run seed, epoch and scene index.
std::mt19937_64 augment_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index);

/// Draws whether to shift and by how much; nullopt means not applied.
std::optional<int> draw_shift(std::mt19937_64& rng, int max_shift, double prob);
std::optional<Real> draw_scale(std::mt19937_64& rng, Real lo, Real hi, double prob);

TimeSignal augment_shift(const TimeSignal& q, std::mt19937_64& rng, int max_shift = 512,
                         double prob = 0.5);
TimeSignal augment_scale(const TimeSignal& q, std::mt19937_64& rng, Real lo = Real(0.5),
                         Real hi = Real(1.5), double prob = 0.5);

/// Shift draw first, then scale draw, each independent.
SceneQuad augment_scene(const SceneQuad& scene, std::mt19937_64& rng, const AugmentOptions& opt);

// Scene directories hold <id>_mic.wav, <id>_lpb.wav, <id>_clean.wav,
// optional <id>_echo.wav and <id>_meta.txt (`key = value`, needs target_scale).
void save_scene(const std::filesystem::path& dir, const std::string& id, const SceneQuad& scene,
                const std::optional<ScenePlan>& plan = std::nullopt);
SceneQuad load_scene(const std::filesystem::path& dir, const std::string& id);
/// Sorted ids of every <id>_meta.txt in dir.
std::vector<std::string> list_scene_ids(const std::filesystem::path& dir);

struct NamedScene {
  std::string id;
  SceneQuad scene;
};
std::vector<NamedScene> load_scene_dir(const std::filesystem::path& dir);

}  // namespace CD3NET_ABI
}  // namespace cd3net
