// Copyright 2026 The aedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aedit/edit_engine.hpp"
#include "aedit/errors.hpp"
#include "aedit/eval_clap.hpp"
#include "aedit/hashing.hpp"
#include "aedit/pipeline.hpp"
#include "aedit/rng.hpp"
#include "aedit/safetensors.hpp"

namespace py = pybind11;
using namespace aedit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> out(shape);
  std::copy(t.data.begin(), t.data.end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

AudioClip clip_from(const Array& samples, int sample_rate) {
  if (samples.ndim() != 1) throw ValidationError("audio samples must be one-dimensional");
  return {std::vector<double>(samples.data(), samples.data() + samples.size()), sample_rate};
}

py::array_t<double> samples_to_numpy(const AudioClip& clip) {
  py::array_t<double> out(static_cast<py::ssize_t>(clip.samples.size()));
  std::copy(clip.samples.begin(), clip.samples.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the aedit C++ core";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  py::class_<MelConfig>(m, "MelConfig")
      .def(py::init<>())
      .def_readwrite("sample_rate", &MelConfig::sample_rate)
      .def_readwrite("n_fft", &MelConfig::n_fft)
      .def_readwrite("hop", &MelConfig::hop)
      .def_readwrite("n_mels", &MelConfig::n_mels)
      .def_readwrite("fmin", &MelConfig::fmin)
      .def_readwrite("fmax", &MelConfig::fmax)
      .def_readwrite("log_floor", &MelConfig::log_floor)
      .def_readwrite("center", &MelConfig::center);

  m.def(
      "load_audio",
      [](const std::filesystem::path& path, int rate) {
        const AudioClip clip = load_audio(path, rate);
        return py::make_tuple(samples_to_numpy(clip), clip.sample_rate);
      },
      py::arg("path"), py::arg("sample_rate") = 16000, "Mono float64 samples resampled to `sample_rate`.");
  m.def(
      "save_wav",
      [](const std::filesystem::path& path, const Array& samples, int rate, const std::string& encoding) {
        if (encoding != "float32" && encoding != "pcm16") throw ValidationError("encoding must be float32 or pcm16");
        save_wav(path, clip_from(samples, rate), encoding == "pcm16" ? WavEncoding::pcm16 : WavEncoding::float32);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("encoding") = "float32");
  m.def(
      "mel_spectrogram",
      [](const Array& samples, int rate, const MelConfig& cfg) {
        return to_numpy(mel_spectrogram(clip_from(samples, rate), cfg).values);
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("config") = MelConfig{},
      "Natural-log mel energies, shape (n_mels, frames).");
  m.def("mel_filterbank", &mel_filterbank, py::arg("config") = MelConfig{});

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def(py::init([](int steps, double beta_start, double beta_end) {
             return NoiseSchedule(ScheduleConfig{steps, beta_start, beta_end});
           }),
           py::arg("steps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 2e-2)
      .def("alpha_bar", &NoiseSchedule::alpha_bar)
      .def("beta", &NoiseSchedule::beta)
      .def_property_readonly("steps", &NoiseSchedule::steps);
  m.def("ddim_timesteps", &ddim_timesteps, py::arg("start"), py::arg("num_steps"));

  m.def("spearman", &spearman);
  m.def(
      "select_eta",
      [](const std::vector<double>& etas, const std::vector<double>& text, const std::vector<double>& audio) {
        if (etas.size() != text.size() || etas.size() != audio.size())
          throw ValidationError("select_eta: etas, text and audio must have equal length");
        std::vector<ScoreReport> reports;
        for (std::size_t i = 0; i < etas.size(); ++i)
          reports.push_back(make_score_report(text[i], audio[i], etas[i], "external"));
        const auto [eta, best] = select_eta(reports);
        return py::make_tuple(eta, best.sum);
      },
      py::arg("etas"), py::arg("text"), py::arg("audio"), "Returns (eta, sum) maximising text + audio.");

  py::class_<ToyClapEmbedder>(m, "ToyClapEmbedder")
      .def(py::init<>())
      .def_property_readonly("id", &ToyClapEmbedder::id)
      .def(
          "embed_audio",
          [](const ToyClapEmbedder& e, const Array& samples, int rate) {
            return to_numpy(e.embed_audio(clip_from(samples, rate)).values);
          },
          py::arg("samples"), py::arg("sample_rate") = 16000)
      .def(
          "embed_text", [](const ToyClapEmbedder& e, const std::string& p) { return to_numpy(e.embed_text(p).values); },
          py::arg("prompt"))
      .def(
          "score",
          [](const ToyClapEmbedder& e, const Array& edited, const Array& original, const std::string& prompt,
             int rate) {
            const ScoreReport r = score_edit(e, clip_from(edited, rate), clip_from(original, rate), prompt, 0.0);
            return py::dict(py::arg("text") = r.text_clap, py::arg("audio") = r.audio_clap, py::arg("sum") = r.sum);
          },
          py::arg("edited"), py::arg("original"), py::arg("prompt"), py::arg("sample_rate") = 16000);

  m.def(
      "load_archive",
      [](const std::filesystem::path& path) {
        const ArrayArchive a = load_archive(path);
        py::dict arrays;
        for (const auto& [name, t] : a.arrays) arrays[py::str(name)] = to_numpy(t);
        return py::make_tuple(arrays, a.metadata);
      },
      py::arg("path"), "Returns (arrays, metadata).");
  m.def(
      "save_archive",
      [](const std::filesystem::path& path, const std::map<std::string, Array>& arrays,
         const std::map<std::string, std::string>& metadata) {
        ArrayArchive a;
        for (const auto& [name, arr] : arrays) a.arrays.emplace(name, from_numpy(arr));
        a.metadata = metadata;
        save_archive(path, a);
      },
      py::arg("path"), py::arg("arrays"), py::arg("metadata") = std::map<std::string, std::string>{});

  m.def("default_config", [] { return serialize_config(PipelineConfig{}); });
  m.def(
      "apply_overrides",
      [](const std::string& config_json, const Overrides& overrides) {
        PipelineConfig cfg = parse_config(config_json);
        apply_overrides(cfg, overrides);
        return serialize_config(cfg);
      },
      py::arg("config_json"), py::arg("overrides"));
  m.def(
      "edit",
      [](const std::string& config_json) {
        const PipelineConfig cfg = parse_config(config_json);
        py::gil_scoped_release release;
        return cmd_edit(cfg).to_json();
      },
      py::arg("config_json"));
  m.def(
      "sweep",
      [](const std::string& config_json) {
        const PipelineConfig cfg = parse_config(config_json);
        py::gil_scoped_release release;
        return cmd_sweep(cfg).to_json();
      },
      py::arg("config_json"));
  m.def(
      "inspect",
      [](const std::filesystem::path& manifest) {
        bool valid = false;
        std::string text = cmd_inspect(manifest, &valid);
        return py::make_tuple(text, valid);
      },
      py::arg("manifest_path"), "Returns (report text, all artifacts verified).");

  m.def("derive_seed", &derive_seed, py::arg("root"), py::arg("stream"));
  m.def("sha256_hex", &sha256_hex, py::arg("text"));
}
