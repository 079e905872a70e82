#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cd3net/enhance.hpp"
#include "cd3net/errors.hpp"
#include "cd3net/model_io.hpp"
#include "cd3net/train.hpp"
#include "cd3net/wav.hpp"

using namespace cd3net;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, numerical = 3 };

struct GenArgs {
  std::string out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::optional<double> ser_db, snr_db;
  int delay_max = 256;
  double duration = 1.0;
  bool doubletalk = false;
};

struct TrainArgs {
  std::string config, scenes, val, out, history;
  std::size_t epochs = 1, batch = 1, accumulate = 1, max_steps = 0, per_epoch = 0;
  double alpha = 1, beta = 0, lr = 1e-3, weight_decay = 1e-6;
  std::vector<std::string> augment;
  std::uint64_t seed = 0;
};

std::vector<SceneQuad> load_pool(const std::string& dir) {
  std::vector<SceneQuad> out;
  for (auto& s : load_scene_dir(dir)) out.push_back(std::move(s.scene));
  if (out.empty()) throw NotFound("no scenes in " + dir);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
  if (!f) throw IoError("cannot write " + path);
}

int gen_scenes(const GenArgs& a) {
  PlanRanges r;
  r.duration = a.duration;
  r.delay_max = a.delay_max;
  if (a.ser_db) r.ser_lo = r.ser_hi = *a.ser_db;
  if (a.snr_db) r.snr_lo = r.snr_hi = *a.snr_db;
  r.doubletalk_prob = a.doubletalk ? 1.0 : 0.5;
  for (std::size_t i = 0; i < a.count; ++i) {
    const ScenePlan plan = random_plan(a.seed, i, r);
    char id[32];
    std::snprintf(id, sizeof id, "scene_%05zu", i);
    save_scene(a.out, id, make_scene(plan), plan);
  }
  std::cout << "wrote " << a.count << " scenes to " << a.out << "\n";
  return ok;
}

int train_cmd(const TrainArgs& a) {
  Cd3Net net(NetConfig::load(a.config));
  const auto pool = load_pool(a.scenes);
  const auto val = load_pool(a.val);
  TrainPlan plan;
  plan.epochs = a.epochs;
  plan.batch_size = a.batch;
  plan.accumulate = a.accumulate;
  plan.max_steps = a.max_steps;
  plan.scenes_per_epoch = a.per_epoch;
  plan.weights = {Real(a.alpha), Real(a.beta)};
  plan.lr0 = a.lr;
  plan.adam.weight_decay = a.weight_decay;
  plan.seed = a.seed;
  for (const auto& name : a.augment) {
    if (name == "shift") plan.augment.shift = true;
    else if (name == "scale") plan.augment.scale = true;
    else throw InvalidArgument("unknown augmentation '" + name + "' (shift|scale)");
  }
  const TrainResult r = train(plan, net, pool, val, [](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch << " train " << e.train_loss << " val " << e.val_loss
              << " lr " << e.lr << std::endl;
  });
  save_model(a.out, net);
  write_text(a.history.empty() ? (std::filesystem::path(a.out) / "history.tsv").string() : a.history,
             format_history(r.history));
  return ok;
}

int enhance_cmd(const std::string& model, const std::string& mic, const std::string& lpb,
                const std::string& out) {
  Cd3Net net = load_model(model);
  write_wav(out, enhance(read_wav(mic), read_wav(lpb), net));
  return ok;
}

int eval_cmd(const std::string& model, const std::string& dir, const std::string& report_path) {
  Cd3Net net = load_model(model);
  EvalReport report;
  for (const auto& id : list_scene_ids(dir)) {
    std::vector<NamedScene> one;
    try {
      one.push_back({id, load_scene(dir, id)});
    } catch (const DataError& e) {
      report.scenes.push_back({id, 0, 0, 0, 0, e.what()});
      continue;
    }
    const EvalReport r = evaluate(net, one);
    report.scenes.push_back(r.scenes.front());
  }
  write_text(report_path, report.to_tsv());
  if (report.scored() > 0) {
    std::cout << "si_sdr_gain mean " << report.si_sdr_gain().mean << " dB over " << report.scored()
              << " scenes\n";
  } else {
    std::cout << "no scenes scored\n";
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cd3net: joint echo cancellation, noise suppression and enhancement"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-scenes", "write synthetic scene directories");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--count", gen.count, "number of scenes")->required();
  g->add_option("--seed", gen.seed, "run seed")->required();
  g->add_option("--ser-db", gen.ser_db, "fixed signal-to-echo ratio (default: drawn in [-5, 10])");
  g->add_option("--snr-db", gen.snr_db, "fixed signal-to-noise ratio (default: drawn in [5, 25])");
  g->add_option("--delay-max", gen.delay_max, "largest echo delay in samples")->check(CLI::NonNegativeNumber);
  g->add_option("--duration", gen.duration, "scene length in seconds")->check(CLI::Range(0.5, 3600.0));
  g->add_flag("--doubletalk", gen.doubletalk, "every scene has both talkers (default: half are nearend-only)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model");
  t->add_option("--config", tr.config, "network config")->required();
  t->add_option("--scenes", tr.scenes, "training scene directory")->required();
  t->add_option("--val", tr.val, "validation scene directory")->required();
  t->add_option("--out", tr.out, "model output directory")->required();
  t->add_option("--epochs", tr.epochs)->required();
  t->add_option("--batch", tr.batch)->required();
  t->add_option("--alpha", tr.alpha, "SD-SDR weight")->required();
  t->add_option("--beta", tr.beta, "perceptual weight")->required();
  t->add_option("--augment", tr.augment, "shift,scale")->delimiter(',');
  t->add_option("--seed", tr.seed)->required();
  t->add_option("--lr", tr.lr, "initial learning rate");
  t->add_option("--weight-decay", tr.weight_decay);
  t->add_option("--accumulate", tr.accumulate, "batches per optimizer step");
  t->add_option("--max-steps", tr.max_steps, "stop after this many steps (0 = no limit)");
  t->add_option("--scenes-per-epoch", tr.per_epoch, "0 = whole pool");
  t->add_option("--history", tr.history, "history file (default MODEL/history.tsv)");

  std::string model, mic, lpb, out, scenes, report, config;
  auto* e = app.add_subcommand("enhance", "enhance one recording");
  e->add_option("--model", model)->required();
  e->add_option("--mic", mic)->required();
  e->add_option("--lpb", lpb)->required();
  e->add_option("--out", out)->required();

  auto* v = app.add_subcommand("eval", "score a model on a scene directory");
  v->add_option("--model", model)->required();
  v->add_option("--scenes", scenes)->required();
  v->add_option("--report", report)->required();

  auto* p = app.add_subcommand("param-count", "print the trainable parameter count");
  p->add_option("--config", config)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? ok : usage;
  }

  try {
    if (*g) return gen_scenes(gen);
    if (*t) return train_cmd(tr);
    if (*e) return enhance_cmd(model, mic, lpb, out);
    if (*v) return eval_cmd(model, scenes, report);
    if (*p) {
      std::cout << count_params(NetConfig::load(config)) << "\n";
      return ok;
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    switch (err.category()) {
      case Error::Category::invalid_argument: return usage;
      case Error::Category::data: return data;
      case Error::Category::numerical: return numerical;
    }
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return data;
  }
  return usage;
}
