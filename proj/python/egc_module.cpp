#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "egc/archive.hpp"
#include "egc/error.hpp"
#include "egc/pipeline.hpp"

namespace py = pybind11;
using namespace egc;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

GrayImage to_image(const U8Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D uint8 image");
  GrayImage img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::memcpy(img.pixels.data(), a.data(), img.pixels.size());
  return img;
}

U8Array from_image(const GrayImage& img) {
  U8Array out({img.height, img.width});
  std::memcpy(out.mutable_data(), img.pixels.data(), img.pixels.size());
  return out;
}

Tensor to_tensor(const F32Array& a) {
  if (a.ndim() < 1 || a.ndim() > Shape::kMaxRank) throw ShapeError("expected an array of rank 1 to 4");
  std::vector<int> dims;
  for (py::ssize_t i = 0; i < a.ndim(); ++i) dims.push_back(static_cast<int>(a.shape(i)));
  return Tensor(Shape(dims), std::vector<float>(a.data(), a.data() + a.size()));
}

F32Array from_tensor(const Tensor& t) {
  const auto dims = t.shape().dims();
  std::vector<py::ssize_t> shape(dims.begin(), dims.end());
  F32Array out(shape);
  std::memcpy(out.mutable_data(), t.data().data(), t.size() * sizeof(float));
  return out;
}

ModelKind parse_kind(const std::string& name) {
  const auto k = model_kind_from_string(name);
  if (!k) throw ConfigError("unknown model kind '" + name + "'");
  return *k;
}

template <std::size_t N>
py::tuple names(const std::array<std::string_view, N>& list) {
  py::list out;
  for (const auto n : list) out.append(py::str(n.data(), n.size()));
  return py::tuple(out);
}

py::tuple detection_tuple(const Detection& d) { return py::make_tuple(d.x, d.y, d.w, d.h, d.score); }

DetectParams detect_params(double scale_factor, int min_neighbors, int min_size) {
  DetectParams p;
  p.scale_factor = scale_factor;
  p.min_neighbors = min_neighbors;
  p.min_size = min_size;
  return p;
}

}  // namespace

PYBIND11_MODULE(_egc, m) {
  m.doc() = "Emotion and gender classification engine";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<ShapeError>(m, "ShapeError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<ArchiveError>(m, "ArchiveError", error.ptr());

  m.attr("FACE_SIZE") = kFaceSize;
  m.attr("EMOTIONS") = names(kEmotionNames);
  m.attr("GENDERS") = names(kGenderNames);

  py::class_<Model>(m, "Model")
      .def_property_readonly("kind", [](const Model& self) { return std::string(to_string(self.kind())); })
      .def_property_readonly("class_count", &Model::class_count)
      .def_property_readonly("parameter_count",
                             [](const Model& self) {
                               std::size_t n = 0;
                               for (const auto& member : self.members()) n += member.parameter_count();
                               return n;
                             })
      .def(
          "predict", [](const Model& self, const F32Array& batch) { return from_tensor(self.predict(to_tensor(batch))); },
          py::arg("batch"), "[N,1,H,W] float32 -> [N,K] class probabilities");

  m.def(
      "build_model",
      [](const std::string& kind, int class_count, std::uint64_t seed, int input_size) {
        return build_model(parse_kind(kind), class_count, seed, input_size);
      },
      py::arg("kind"), py::arg("class_count"), py::arg("seed") = 7, py::arg("input_size") = kFaceSize);
  m.def("save_weights", &save_weights, py::arg("model"), py::arg("path"));
  m.def("load_weights", &load_weights, py::arg("path"), py::arg("input_size") = kFaceSize);
  m.def(
      "crc32",
      [](const py::bytes& data) {
        const std::string s = data;
        return crc32(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
      },
      py::arg("data"));

  m.def("read_pgm", [](const std::filesystem::path& p) { return from_image(read_pgm(p)); }, py::arg("path"));
  m.def(
      "write_pgm", [](const std::filesystem::path& p, const U8Array& a) { write_pgm(p, to_image(a)); },
      py::arg("path"), py::arg("image"));
  m.def(
      "preprocess",
      [](const U8Array& face) {
        return from_tensor(preprocess(resize_bilinear(to_image(face), kFaceSize, kFaceSize)));
      },
      py::arg("face"), "Resize a grayscale crop to 48x48 and scale it to [-1, 1] as [1,1,48,48]");

  py::class_<CascadeModel>(m, "Cascade")
      .def_property_readonly("window", [](const CascadeModel& c) { return py::make_tuple(c.window_w, c.window_h); })
      .def_property_readonly("stage_count", [](const CascadeModel& c) { return c.stages.size(); });
  m.def("load_cascade", &load_cascade, py::arg("path"));
  m.def(
      "detect_faces",
      [](const CascadeModel& cascade, const U8Array& image, double scale_factor, int min_neighbors, int min_size) {
        py::list out;
        for (const auto& d :
             detect_faces(cascade, to_image(image), detect_params(scale_factor, min_neighbors, min_size)))
          out.append(detection_tuple(d));
        return out;
      },
      py::arg("cascade"), py::arg("image"), py::arg("scale_factor") = 1.1, py::arg("min_neighbors") = 3,
      py::arg("min_size") = 30, "List of (x, y, w, h, score)");

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const Model& emotion, const Model& gender, const CascadeModel& cascade, double scale_factor,
                       int min_neighbors, int min_size) {
             return Pipeline(emotion.clone(), gender.clone(), cascade,
                             detect_params(scale_factor, min_neighbors, min_size));
           }),
           py::arg("emotion"), py::arg("gender"), py::arg("cascade"), py::arg("scale_factor") = 1.1,
           py::arg("min_neighbors") = 3, py::arg("min_size") = 30)
      .def(
          "process",
          [](const Pipeline& self, const U8Array& frame) {
            PipelineResult result;
            const GrayImage img = to_image(frame);
            {
              py::gil_scoped_release release;
              result = self.process(img);
            }
            py::list faces;
            for (const auto& f : result.faces) {
              py::dict face;
              face["box"] = detection_tuple(f.box);
              face["emotion"] = std::string(to_string(f.emotion.label));
              face["emotion_probs"] = std::vector<float>(f.emotion.probs.begin(), f.emotion.probs.end());
              face["gender"] = std::string(to_string(f.gender.label));
              face["gender_probs"] = std::vector<float>(f.gender.probs.begin(), f.gender.probs.end());
              faces.append(face);
            }
            return faces;
          },
          py::arg("frame"), "Detected faces with emotion and gender predictions");
}
