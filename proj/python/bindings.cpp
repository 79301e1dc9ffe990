#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <optional>

#include "dfir/core/checkpoint.hpp"
#include "dfir/core/error.hpp"
#include "dfir/core/tensor_image.hpp"
#include "dfir/degrade/apply.hpp"
#include "dfir/degrade/spec.hpp"
#include "dfir/diffusion/schedule.hpp"
#include "dfir/distill/losses.hpp"
#include "dfir/eval/metrics.hpp"
#include "dfir/nets/train.hpp"
#include "dfir/pipeline/config.hpp"
#include "dfir/pipeline/pipeline.hpp"
#include "dfir/prompt/contrastive.hpp"

namespace py = pybind11;
using namespace dfir;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an H x W x 3 float array");
  Image im(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(im.pixels().data(), a.data(), im.size() * sizeof(float));
  return im;
}

FloatArray from_image(const Image& im) {
  FloatArray out({im.height(), im.width(), 3});
  std::memcpy(out.mutable_data(), im.pixels().data(), im.size() * sizeof(float));
  return out;
}

torch::Tensor to_tensor(const FloatArray& a) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

FloatArray from_tensor(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kFloat32).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  FloatArray out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<float>(), c.numel() * sizeof(float));
  return out;
}

py::object to_python(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }
json from_python(const py::object& o) {
  return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

pipeline::RunConfig resolve(const std::optional<std::string>& config_path, const std::string& preset,
                            const py::dict& overrides) {
  auto cfg = config_path ? pipeline::RunConfig::load(*config_path, preset) : pipeline::RunConfig::preset(preset);
  for (const auto& [k, v] : overrides) cfg.set(k.cast<std::string>(), from_python(py::reinterpret_borrow<py::object>(v)));
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Degradation synthesis, metrics, losses and pipeline stages";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);

  m.def(
      "psnr",
      [](const FloatArray& a, const FloatArray& b, bool luma, bool quantize) {
        return eval::psnr(to_image(a), to_image(b), {luma, quantize});
      },
      py::arg("a"), py::arg("b"), py::arg("luma") = false, py::arg("quantize") = false,
      "PSNR in dB of two H x W x 3 images in [0, 1]; inf when identical.");
  m.def(
      "ssim", [](const FloatArray& a, const FloatArray& b) { return eval::ssim(to_image(a), to_image(b)); },
      py::arg("a"), py::arg("b"), "Gaussian-window SSIM on luma.");

  m.def(
      "sample_spec",
      [](const std::string& profile, std::uint64_t seed) {
        return to_python(json(degrade::sample_spec(degrade::load_profile(profile), seed)));
      },
      py::arg("profile"), py::arg("seed"), "Draw a degradation spec from a profile ('builtin:web-rain' or a path).");
  m.def(
      "apply_degradation",
      [](const FloatArray& clean, const py::object& spec, std::uint64_t seed) {
        return from_image(
            degrade::apply_degradation(to_image(clean), from_python(spec).get<degrade::DegradationSpec>(), seed));
      },
      py::arg("clean"), py::arg("spec"), py::arg("seed"));

  m.def(
      "contrastive_loss",
      [](const FloatArray& q, const FloatArray& k, const FloatArray& negatives, double tau, bool negatives_only) {
        const auto form = negatives_only ? prompt::DenominatorForm::kNegativesOnly : prompt::DenominatorForm::kWithPositive;
        return prompt::contrastive_loss(to_tensor(q), to_tensor(k), to_tensor(negatives), tau, form).item<double>();
      },
      py::arg("q"), py::arg("k"), py::arg("negatives"), py::arg("tau") = prompt::kDefaultTemperature,
      py::arg("negatives_only") = false, "Batch-mean contrastive loss over unit-norm rows.");
  m.def(
      "kd_loss",
      [](const FloatArray& teacher, const FloatArray& student) {
        return distill::kd_loss(to_tensor(teacher), to_tensor(student)).item<double>();
      },
      py::arg("teacher_out"), py::arg("student_out"), "Mean squared difference of two outputs.");

  m.def(
      "alpha_bar",
      [](int t, int steps, double beta_start, double beta_end) {
        return diffusion::NoiseSchedule::linear(steps, beta_start, beta_end).alpha_bar(t);
      },
      py::arg("t"), py::arg("steps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02);
  m.def(
      "subsequence", [](int count, int steps) { return diffusion::NoiseSchedule::linear(steps).subsequence(count); },
      py::arg("count"), py::arg("steps") = 1000);
  m.def(
      "denoise_path",
      [](int count, double lambda, int steps) {
        const auto s = diffusion::NoiseSchedule::linear(steps);
        return s.denoise_path(s.subsequence(count), lambda);
      },
      py::arg("count"), py::arg("lambda_"), py::arg("steps") = 1000);
  m.def(
      "forward_diffuse",
      [](const FloatArray& z0, const FloatArray& eps, double alpha_bar) {
        return from_tensor(diffusion::forward_diffuse(to_tensor(z0), to_tensor(eps), alpha_bar));
      },
      py::arg("z0"), py::arg("eps"), py::arg("alpha_bar"));

  m.def(
      "restore",
      [](const std::filesystem::path& checkpoint, const FloatArray& image) {
        auto net = nets::load_restoration_net(Checkpoint::load(checkpoint));
        return from_image(dfir::to_image(nets::restore(net, dfir::to_tensor(to_image(image)))));
      },
      py::arg("checkpoint"), py::arg("image"), "Restore one H x W x 3 image with a teacher or student checkpoint.");
  m.def(
      "evaluate",
      [](const std::vector<std::filesystem::path>& checkpoints, const std::filesystem::path& manifest, bool allow_mixed) {
        py::list out;
        for (const auto& row : pipeline::evaluate_checkpoints(checkpoints, manifest, allow_mixed))
          out.append(to_python(json(row)));
        return out;
      },
      py::arg("checkpoints"), py::arg("manifest"), py::arg("allow_mixed") = false);

  m.def(
      "load_config",
      [](const std::optional<std::string>& path, const std::string& preset, const py::dict& overrides) {
        return to_python(resolve(path, preset, overrides).doc());
      },
      py::arg("path") = py::none(), py::arg("preset") = "smoke", py::arg("overrides") = py::dict(),
      "Validated configuration document.");
  m.def(
      "run_stage",
      [](const std::string& stage, const std::filesystem::path& run_dir, const std::optional<std::string>& config_path,
         const std::string& preset, const py::dict& overrides, bool force) {
        auto cfg = resolve(config_path, preset, overrides);
        pipeline::StageResult r;
        {
          py::gil_scoped_release release;
          pipeline::Pipeline p(cfg, run_dir, {force, false, nullptr});
          r = p.run_stage(stage);
        }
        py::dict d;
        d["stage"] = r.stage;
        d["up_to_date"] = r.up_to_date;
        d["training_steps"] = r.training_steps;
        d["seconds"] = r.seconds;
        std::vector<std::string> outputs;
        for (const auto& o : r.outputs) outputs.push_back(o.string());
        d["outputs"] = outputs;
        return d;
      },
      py::arg("stage"), py::arg("run_dir"), py::arg("config") = py::none(), py::arg("preset") = "smoke",
      py::arg("overrides") = py::dict(), py::arg("force") = false, "Run one pipeline stage in run_dir.");
}
