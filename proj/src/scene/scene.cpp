#include "cd3net/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cd3net/config.hpp"
#include "cd3net/errors.hpp"
#include "cd3net/wav.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {

constexpr double kMicPeak = 0.9;

double energy(const std::vector<Real>& x) {
  double e = 0;
  for (Real v : x) e += double(v) * double(v);
  return e;
}

Real peak(const std::vector<Real>& x) {
  Real p = 0;
  for (Real v : x) p = std::max(p, std::abs(v));
  return p;
}

void normalize_peak(std::vector<Real>& x, double target) {
  const double p = peak(x);
  if (p == 0) return;
  for (auto& v : x) v = Real(double(v) * target / p);
}

// x scaled so that its energy is ref_energy * 10^(-db/10).
std::vector<Real> scaled_to(const std::vector<Real>& x, double ref_energy, double db) {
  std::vector<Real> out(x.size(), Real{0});
  const double e = energy(x);
  if (!std::isfinite(db) || e == 0) return out;
  const double g = std::sqrt(ref_energy * std::pow(10.0, -db / 10.0) / e);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = Real(g * double(x[i]));
  return out;
}

std::vector<Real> speech_like(std::mt19937_64& rng, std::size_t n) {
  std::vector<Real> out(n, Real{0});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double fs = kSampleRate;
  std::size_t t = std::size_t(draw(0.02, 0.15) * fs);
  while (t < n) {
    const std::size_t len = std::size_t(draw(0.1, 0.35) * fs);
    const double f0 = draw(90, 240);
    const double glide = draw(-0.25, 0.25);
    const double f1 = draw(300, 900), f2 = draw(900, 2600);
    const double level = draw(0.4, 1.0);
    const std::size_t harmonics = std::size_t(4000 / (f0 * (1 + std::abs(glide))));
    for (std::size_t k = 1; k <= harmonics; ++k) {
      double phase = draw(0, 2 * std::numbers::pi);
      const double fk = f0 * double(k);
      const double gain = (1 + 2.0 * std::exp(-std::pow((fk - f1) / 150, 2)) +
                           1.5 * std::exp(-std::pow((fk - f2) / 250, 2))) /
                          double(k);
      for (std::size_t i = 0; i < len && t + i < n; ++i) {
        const double x = double(i) / double(len);
        const double env = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * x);
        phase += 2 * std::numbers::pi * fk * (1 + glide * x) / fs;
        out[t + i] += Real(level * gain * env * std::sin(phase));
      }
    }
    t += len + std::size_t(draw(0.05, 0.3) * fs);
  }
  return out;
}

std::vector<Real> filtered_noise(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double a = std::uniform_real_distribution<double>(0.3, 0.9)(rng);
  std::vector<Real> out(n);
  double y = 0, mean = 0;
  for (auto& v : out) {
    y = a * y + g(rng);
    v = Real(y);
    mean += y;
  }
  mean /= double(n);
  for (auto& v : out) v = Real(double(v) - mean);
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& v, const std::string& file) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidData(file + ": " + key + " expects a number, got '" + v + "'");
  }
}

std::filesystem::path scene_file(const std::filesystem::path& dir, const std::string& id,
                                 const char* suffix) {
  return dir / (id + suffix);
}

}  // namespace

const char* to_string(TalkMode mode) {
  switch (mode) {
    case TalkMode::doubletalk: return "doubletalk";
    case TalkMode::nearend_single: return "nearend";
    case TalkMode::farend_single: return "farend";
  }
  return "?";
}

TalkMode parse_talk_mode(const std::string& name) {
  if (name == "doubletalk") return TalkMode::doubletalk;
  if (name == "nearend") return TalkMode::nearend_single;
  if (name == "farend") return TalkMode::farend_single;
  throw InvalidArgument("unknown talk mode '" + name + "' (doubletalk|nearend|farend)");
}

std::size_t ScenePlan::length() const {
  return std::size_t(std::llround(duration * kSampleRate));
}

void ScenePlan::validate() const {
  if (!(duration >= 0.5)) throw InvalidArgument("scene duration must be at least 0.5 s");
  if (delay_samples < 0) throw InvalidArgument("scene delay must be non-negative");
  if (!(clip_level > 0 && clip_level <= 1)) throw InvalidArgument("clip_level must lie in (0, 1]");
  if (!(rir_decay >= 0)) throw InvalidArgument("rir_decay must be non-negative");
  if (std::isnan(ser_db) || std::isnan(snr_db) || std::isnan(farend_snr_db)) {
    throw InvalidArgument("scene ratios must not be NaN");
  }
  if (talk == TalkMode::nearend_single && (std::isfinite(ser_db) || std::isfinite(farend_snr_db))) {
    throw InvalidArgument("nearend single-talk has no farend signal: ser_db and farend_snr_db must be inf");
  }
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t p : parts) {
    std::uint64_t z = h + p + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    h = z ^ (z >> 31);
  }
  return h;
}

TimeSignal synth_source(SourceKind kind, std::uint64_t seed, double duration) {
  if (!(duration >= 0.5)) throw InvalidArgument("synth_source: duration must be at least 0.5 s");
  const std::size_t n = std::size_t(std::llround(duration * kSampleRate));
  std::mt19937_64 rng(mix_seed({seed, std::uint64_t(kind)}));
  std::vector<Real> x = kind == SourceKind::speech ? speech_like(rng, n) : filtered_noise(rng, n);
  normalize_peak(x, 0.5);
  return TimeSignal(std::move(x));
}

std::vector<Real> hard_clip(const std::vector<Real>& x, Real level) {
  std::vector<Real> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], -level, level);
  return out;
}

std::vector<Real> synth_rir(std::uint64_t seed, double rir_decay) {
  if (!(rir_decay > 0)) return {Real{1}};
  const std::size_t len = std::max<std::size_t>(1, std::size_t(std::llround(rir_decay * kSampleRate)));
  std::vector<Real> h(len, Real{0});
  h[0] = 1;
  std::mt19937_64 rng(mix_seed({seed, 0x7219}));
  std::bernoulli_distribution tap(0.05);
  std::normal_distribution<double> amp(0.0, 0.5);
  for (std::size_t i = 1; i < len; ++i) {
    // 60 dB of decay over the response length.
    if (tap(rng)) h[i] = Real(amp(rng) * std::exp(-6.9 * double(i) / double(len)));
  }
  return h;
}

std::vector<Real> convolve_truncated(const std::vector<Real>& x, const std::vector<Real>& h) {
  std::vector<Real> out(x.size(), Real{0});
  for (std::size_t j = 0; j < h.size(); ++j) {
    const Real w = h[j];
    if (w == 0) continue;
    for (std::size_t i = j; i < x.size(); ++i) out[i] += w * x[i - j];
  }
  return out;
}

std::vector<Real> shift_signal(const std::vector<Real>& x, int d) {
  const std::ptrdiff_t n = std::ptrdiff_t(x.size());
  std::vector<Real> out(x.size(), Real{0});
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::ptrdiff_t src = i - d;
    if (src >= 0 && src < n) out[std::size_t(i)] = x[std::size_t(src)];
  }
  return out;
}

TimeSignal distortion_f(const TimeSignal& q, const ScenePlan& plan) {
  plan.validate();
  std::vector<Real> y = hard_clip(q.samples, Real(plan.clip_level));
  y = convolve_truncated(y, synth_rir(mix_seed({plan.seed, 4}), plan.rir_decay));
  return TimeSignal(shift_signal(y, plan.delay_samples));
}

SceneQuad make_scene(const ScenePlan& plan) {
  plan.validate();
  const std::size_t n = plan.length();
  const bool has_nearend = plan.talk != TalkMode::farend_single;
  const bool has_farend = plan.talk != TalkMode::nearend_single;

  // Levels are set against the nearend source even when it is muted, so a
  // farend single-talk scene keeps the same echo level as its doubletalk twin.
  const TimeSignal s_src = synth_source(SourceKind::speech, mix_seed({plan.seed, 1}), plan.duration);
  const double ref_energy = energy(s_src.samples);

  std::vector<Real> s = has_nearend ? s_src.samples : std::vector<Real>(n, Real{0});
  std::vector<Real> q(n, Real{0});
  std::vector<Real> echo(n, Real{0});
  if (has_farend) {
    q = synth_source(SourceKind::speech, mix_seed({plan.seed, 2}), plan.duration).samples;
    if (std::isfinite(plan.farend_snr_db)) {
      const auto fn = synth_source(SourceKind::noise, mix_seed({plan.seed, 5}), plan.duration);
      const auto scaled = scaled_to(fn.samples, energy(q), plan.farend_snr_db);
      for (std::size_t i = 0; i < n; ++i) q[i] += scaled[i];
    }
    echo = scaled_to(distortion_f(TimeSignal(q), plan).samples, ref_energy, plan.ser_db);
  }
  const auto noise_src = synth_source(SourceKind::noise, mix_seed({plan.seed, 3}), plan.duration);
  std::vector<Real> noise = scaled_to(noise_src.samples, ref_energy, plan.snr_db);

  std::vector<Real> mic(n);
  for (std::size_t i = 0; i < n; ++i) mic[i] = s[i] + noise[i] + echo[i];
  // Keep the mixture inside the WAV range; the same factor is the target scale.
  const double p = peak(mic);
  const double c = p > kMicPeak ? kMicPeak / p : 1.0;
  if (c != 1.0) {
    for (auto* v : {&s, &noise, &echo}) {
      for (auto& x : *v) x = Real(double(x) * c);
    }
    for (std::size_t i = 0; i < n; ++i) mic[i] = s[i] + noise[i] + echo[i];
  }

  SceneQuad out;
  out.clean = TimeSignal(std::move(s));
  out.mic = TimeSignal(std::move(mic));
  out.loopback = TimeSignal(std::move(q));
  out.echo = TimeSignal(std::move(echo));
  out.noise = TimeSignal(std::move(noise));
  out.target_scale = Real(c);
  return out;
}

ScenePlan random_plan(std::uint64_t seed, std::uint64_t index, const PlanRanges& r) {
  std::mt19937_64 rng(mix_seed({seed, index, 0x91a4}));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  ScenePlan plan;
  plan.seed = mix_seed({seed, index});
  plan.duration = r.duration;
  plan.ser_db = draw(r.ser_lo, r.ser_hi);
  plan.snr_db = draw(r.snr_lo, r.snr_hi);
  plan.delay_samples = std::uniform_int_distribution<int>(0, std::max(0, r.delay_max))(rng);
  plan.clip_level = draw(r.clip_lo, r.clip_hi);
  plan.rir_decay = draw(r.rir_lo, r.rir_hi);
  if (u(rng) >= r.doubletalk_prob) {
    plan.talk = TalkMode::nearend_single;
    plan.ser_db = kNoEcho;
  }
  return plan;
}

std::mt19937_64 augment_rng(std::uint64_t seed, std::uint64_t epoch, std::uint64_t index) {
  return std::mt19937_64(mix_seed({seed, epoch, index, 0xa06}));
}

std::optional<int> draw_shift(std::mt19937_64& rng, int max_shift, double prob) {
  if (max_shift < 0) throw InvalidArgument("augment_shift: max_shift must be non-negative");
  if (!std::bernoulli_distribution(prob)(rng)) return std::nullopt;
  return std::uniform_int_distribution<int>(-max_shift, max_shift)(rng);
}

std::optional<Real> draw_scale(std::mt19937_64& rng, Real lo, Real hi, double prob) {
  if (!(lo > 0 && hi >= lo)) throw InvalidArgument("augment_scale: need 0 < lo <= hi");
  if (!std::bernoulli_distribution(prob)(rng)) return std::nullopt;
  const Real v = std::uniform_real_distribution<Real>(lo, hi)(rng);
  return std::clamp(v, lo, hi);
}

TimeSignal augment_shift(const TimeSignal& q, std::mt19937_64& rng, int max_shift, double prob) {
  const auto d = draw_shift(rng, max_shift, prob);
  return d ? TimeSignal(shift_signal(q.samples, *d), q.sample_rate) : q;
}

TimeSignal augment_scale(const TimeSignal& q, std::mt19937_64& rng, Real lo, Real hi, double prob) {
  const auto g = draw_scale(rng, lo, hi, prob);
  if (!g) return q;
  TimeSignal out = q;
  for (auto& v : out.samples) v *= *g;
  return out;
}

SceneQuad augment_scene(const SceneQuad& scene, std::mt19937_64& rng, const AugmentOptions& opt) {
  SceneQuad out = scene;
  if (opt.shift) out.loopback = augment_shift(out.loopback, rng, opt.max_shift, opt.prob);
  if (opt.scale) out.loopback = augment_scale(out.loopback, rng, opt.scale_lo, opt.scale_hi, opt.prob);
  return out;
}

void save_scene(const std::filesystem::path& dir, const std::string& id, const SceneQuad& scene,
                const std::optional<ScenePlan>& plan) {
  std::filesystem::create_directories(dir);
  write_wav(scene_file(dir, id, "_mic.wav"), scene.mic);
  write_wav(scene_file(dir, id, "_lpb.wav"), scene.loopback);
  write_wav(scene_file(dir, id, "_clean.wav"), scene.clean);
  if (scene.echo.size() > 0) write_wav(scene_file(dir, id, "_echo.wav"), scene.echo);
  std::ofstream meta(scene_file(dir, id, "_meta.txt"));
  meta << "target_scale = " << format_double(scene.target_scale) << "\n";
  if (plan) {
    meta << "seed = " << plan->seed << "\n"
         << "duration = " << format_double(plan->duration) << "\n"
         << "ser_db = " << format_double(plan->ser_db) << "\n"
         << "snr_db = " << format_double(plan->snr_db) << "\n"
         << "delay_samples = " << plan->delay_samples << "\n"
         << "clip_level = " << format_double(plan->clip_level) << "\n"
         << "rir_decay = " << format_double(plan->rir_decay) << "\n"
         << "talk = " << to_string(plan->talk) << "\n";
  }
  if (!meta) throw IoError("cannot write " + scene_file(dir, id, "_meta.txt").string());
}

SceneQuad load_scene(const std::filesystem::path& dir, const std::string& id) {
  for (const char* suffix : {"_mic.wav", "_lpb.wav", "_clean.wav", "_meta.txt"}) {
    const auto f = scene_file(dir, id, suffix);
    if (!std::filesystem::exists(f)) throw NotFound("missing scene file " + f.string());
  }
  const auto meta_path = scene_file(dir, id, "_meta.txt");
  std::ifstream in(meta_path);
  std::stringstream text;
  text << in.rdbuf();
  std::vector<std::pair<std::string, std::string>> kv;
  try {
    kv = parse_key_values(text.str());
  } catch (const InvalidArgument& e) {
    throw InvalidData(meta_path.string() + ": " + e.what());
  }
  std::optional<double> scale;
  for (const auto& [k, v] : kv) {
    if (k == "target_scale") scale = parse_double(k, v, meta_path.string());
  }
  if (!scale) throw InvalidData(meta_path.string() + ": target_scale is required");

  SceneQuad s;
  s.mic = read_wav(scene_file(dir, id, "_mic.wav"));
  s.loopback = read_wav(scene_file(dir, id, "_lpb.wav"));
  s.clean = read_wav(scene_file(dir, id, "_clean.wav"));
  const auto echo_path = scene_file(dir, id, "_echo.wav");
  if (std::filesystem::exists(echo_path)) s.echo = read_wav(echo_path);
  s.target_scale = Real(*scale);
  const std::size_t n = s.mic.size();
  if (s.loopback.size() != n || s.clean.size() != n || (s.echo.size() != 0 && s.echo.size() != n)) {
    throw InvalidData("scene " + id + " in " + dir.string() + ": signal lengths differ");
  }
  return s;
}

std::vector<std::string> list_scene_ids(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw NotFound("scene directory " + dir.string() + " not found");
  const std::string suffix = "_meta.txt";
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<NamedScene> load_scene_dir(const std::filesystem::path& dir) {
  std::vector<NamedScene> out;
  for (const auto& id : list_scene_ids(dir)) out.push_back({id, load_scene(dir, id)});
  return out;
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
