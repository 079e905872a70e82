#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <complex>

#include "cd3net/enhance.hpp"
#include "cd3net/errors.hpp"
#include "cd3net/model_io.hpp"
#include "cd3net/train.hpp"
#include "cd3net/wav.hpp"

namespace py = pybind11;
using namespace cd3net;

namespace {

using RealArray = py::array_t<Real, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<Real>, py::array::c_style | py::array::forcecast>;

std::vector<Real> to_vector(const RealArray& a) {
  if (a.ndim() != 1) throw InvalidArgument("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

RealArray to_array(const std::vector<Real>& v) {
  RealArray out(py::ssize_t(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ComplexArray to_array(const ComplexTensor& z) {
  std::vector<py::ssize_t> shape(z.re.shape().begin(), z.re.shape().end());
  ComplexArray out(shape);
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < z.re.size(); ++i) o[i] = {z.re.data()[i], z.im.data()[i]};
  return out;
}

ComplexTensor to_complex_tensor(const ComplexArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<Real> re(a.size()), im(a.size());
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    re[i] = a.data()[i].real();
    im[i] = a.data()[i].imag();
  }
  return {Tensor::from(shape, std::move(re)), Tensor::from(shape, std::move(im))};
}

ComplexSpectrogram to_spec(const ComplexArray& a) {
  if (a.ndim() != 2 || a.shape(0) != py::ssize_t(kBins)) {
    throw InvalidArgument("expected a [257, K] complex spectrogram");
  }
  return to_spectrogram(to_complex_tensor(a));
}

py::dict scene_dict(const SceneQuad& s) {
  py::dict d;
  d["clean"] = to_array(s.clean.samples);
  d["mic"] = to_array(s.mic.samples);
  d["loopback"] = to_array(s.loopback.samples);
  d["echo"] = to_array(s.echo.samples);
  d["noise"] = to_array(s.noise.samples);
  d["target_scale"] = double(s.target_scale);
  return d;
}

py::dict metrics_dict(const SceneMetrics& m) {
  py::dict d;
  d["id"] = m.id;
  d["si_sdr_mic"] = m.si_sdr_mic;
  d["si_sdr_out"] = m.si_sdr_out;
  d["sdr_mic"] = m.sdr_mic;
  d["sdr_out"] = m.sdr_out;
  d["error"] = m.error;
  return d;
}

double scalar_loss(Tensor (*f)(const Tensor&, const Tensor&), const RealArray& est,
                   const RealArray& ref) {
  const auto e = to_vector(est), r = to_vector(ref);
  NoGradGuard guard;
  return double(f(Tensor::from({e.size()}, e), Tensor::from({r.size()}, r)).item());
}

Tensor neg_sd_sdr_default(const Tensor& e, const Tensor& r) { return neg_sd_sdr(e, r); }

}  // namespace

PYBIND11_MODULE(_cd3net, m) {
  m.doc() = "cD3Net echo cancellation and speech enhancement core";
  m.attr("sample_rate") = kSampleRate;
  m.attr("fft_size") = kFftSize;
  m.attr("hop") = kHop;
  m.attr("double_precision") = sizeof(Real) == 8;

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NotFound>(m, "NotFound", data.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("sqrt_hann", [](std::size_t n) { return to_array(sqrt_hann(n)); }, py::arg("n"));
  m.def("stft", [](const RealArray& x) {
    return to_array(to_complex(stft(TimeSignal(to_vector(x)))));
  }, py::arg("x"), "[N] samples -> [257, K] complex spectrogram (no centre padding)");
  m.def("istft", [](const ComplexArray& s) { return to_array(istft(to_spec(s)).samples); },
        py::arg("spec"));

  m.def("read_wav", [](const std::filesystem::path& p) { return to_array(read_wav(p).samples); });
  m.def("write_wav", [](const std::filesystem::path& p, const RealArray& x) {
    write_wav(p, TimeSignal(to_vector(x)));
  });

  m.def("stack_inputs", [](const ComplexArray& p, const ComplexArray& q) {
    return to_array(stack_inputs(to_complex_tensor(p), to_complex_tensor(q)));
  });
  m.def("apply_single_mask", [](const ComplexArray& p, const ComplexArray& a) {
    return to_array(apply_single_mask(to_complex_tensor(p), to_complex_tensor(a)));
  });
  m.def("apply_dual_mask", [](const ComplexArray& p, const ComplexArray& q, const ComplexArray& a,
                              const ComplexArray& b) {
    return to_array(apply_dual_mask(to_complex_tensor(p), to_complex_tensor(q),
                                    MaskPair{to_complex_tensor(a), to_complex_tensor(b)}));
  });
  m.def("oracle_echo_mask", [](const ComplexArray& e, const ComplexArray& q, std::optional<Real> floor) {
    const ComplexSpectrogram qs = to_spec(q);
    return to_array(oracle_echo_mask(to_spec(e), qs, floor ? *floor : default_oracle_floor(qs)));
  }, py::arg("echo"), py::arg("q"), py::arg("floor") = py::none());

  m.def("si_sdr", [](const RealArray& e, const RealArray& r) { return si_sdr(to_vector(e), to_vector(r)); });
  m.def("sdr", [](const RealArray& e, const RealArray& r) { return sdr(to_vector(e), to_vector(r)); });
  m.def("sd_sdr", [](const RealArray& e, const RealArray& r) { return sd_sdr(to_vector(e), to_vector(r)); });
  m.def("neg_sd_sdr", [](const RealArray& e, const RealArray& r) {
    return scalar_loss(neg_sd_sdr_default, e, r);
  });
  m.def("perceptual_loss", [](const RealArray& e, const RealArray& r) {
    return scalar_loss(perceptual_loss, e, r);
  });

  m.def("param_count", [](const std::filesystem::path& cfg) { return count_params(NetConfig::load(cfg)); },
        py::arg("config"));
  m.def("lr_trace", [](const std::vector<double>& losses, double lr0) {
    TrainState st;
    st.lr = lr0;
    std::vector<double> out;
    for (double l : losses) {
      lr_schedule(st, l);
      out.push_back(st.lr);
    }
    return out;
  }, py::arg("losses"), py::arg("lr0") = 1e-3);

  m.def("make_scene", [](std::uint64_t seed, double duration, double ser_db, double snr_db,
                         int delay, double clip_level, double rir_decay, const std::string& talk) {
    ScenePlan p;
    p.seed = seed;
    p.duration = duration;
    p.ser_db = ser_db;
    p.snr_db = snr_db;
    p.delay_samples = delay;
    p.clip_level = clip_level;
    p.rir_decay = rir_decay;
    p.talk = parse_talk_mode(talk);
    return scene_dict(make_scene(p));
  }, py::arg("seed") = 0, py::arg("duration") = 1.0, py::arg("ser_db") = 0.0,
     py::arg("snr_db") = kNoNoise, py::arg("delay") = 0, py::arg("clip_level") = 1.0,
     py::arg("rir_decay") = 0.0, py::arg("talk") = "doubletalk");
  m.def("random_scene", [](std::uint64_t seed, std::uint64_t index, double duration) {
    PlanRanges r;
    r.duration = duration;
    return scene_dict(make_scene(random_plan(seed, index, r)));
  }, py::arg("seed"), py::arg("index"), py::arg("duration") = 1.0);
  m.def("generate_scenes", [](const std::filesystem::path& dir, std::size_t count, std::uint64_t seed,
                              double duration) {
    PlanRanges r;
    r.duration = duration;
    for (std::size_t i = 0; i < count; ++i) {
      const ScenePlan plan = random_plan(seed, i, r);
      save_scene(dir, "scene_" + std::to_string(10000 + i).substr(1), make_scene(plan), plan);
    }
  }, py::arg("dir"), py::arg("count"), py::arg("seed"), py::arg("duration") = 1.0);

  py::class_<Cd3Net>(m, "Model")
      .def(py::init([](const std::filesystem::path& cfg) { return Cd3Net(NetConfig::load(cfg)); }),
           py::arg("config"))
      .def_static("load", [](const std::filesystem::path& dir) { return load_model(dir); })
      .def("save", [](Cd3Net& net, const std::filesystem::path& dir) { save_model(dir, net); })
      .def_property_readonly("param_count", &Cd3Net::param_count)
      .def_property_readonly("dual", [](const Cd3Net& n) { return n.config().mask_mode == MaskMode::dual; })
      .def("enhance", [](Cd3Net& net, const RealArray& mic, const RealArray& lpb) {
        const TimeSignal p(to_vector(mic)), q(to_vector(lpb));
        py::gil_scoped_release release;
        return enhance(p, q, net).samples;
      }, py::arg("mic"), py::arg("lpb"))
      .def("train", [](Cd3Net& net, const std::filesystem::path& train_dir,
                       const std::filesystem::path& val_dir, std::size_t epochs, std::size_t batch,
                       double alpha, double beta, double lr, std::uint64_t seed, std::size_t max_steps) {
        std::vector<SceneQuad> pool, val;
        for (auto& s : load_scene_dir(train_dir)) pool.push_back(std::move(s.scene));
        for (auto& s : load_scene_dir(val_dir)) val.push_back(std::move(s.scene));
        TrainPlan plan;
        plan.epochs = epochs;
        plan.batch_size = batch;
        plan.weights = {Real(alpha), Real(beta)};
        plan.lr0 = lr;
        plan.seed = seed;
        plan.max_steps = max_steps;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(plan, net, pool, val);
        }
        py::list history;
        for (const auto& e : r.history) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["train_loss"] = e.train_loss;
          d["val_loss"] = e.val_loss;
          d["lr"] = e.lr;
          history.append(d);
        }
        return history;
      }, py::arg("train_dir"), py::arg("val_dir"), py::arg("epochs") = 1, py::arg("batch") = 1,
         py::arg("alpha") = 1.0, py::arg("beta") = 0.0, py::arg("lr") = 1e-3, py::arg("seed") = 0,
         py::arg("max_steps") = 0)
      .def("evaluate", [](Cd3Net& net, const std::filesystem::path& dir) {
        const EvalReport r = evaluate(net, load_scene_dir(dir));
        py::list out;
        for (const auto& s : r.scenes) out.append(metrics_dict(s));
        return out;
      }, py::arg("scene_dir"));
}
