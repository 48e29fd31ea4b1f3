// Python bindings for the core operations: geo sampling, the mean-shift
// vegetation baseline, evaluation metrics, the convolutional estimators and
// Grad-CAM. Images cross the boundary as numpy uint8 arrays (H,W,3) and
// masks as uint8 (H,W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "greenview/errors.hpp"
#include "greenview/geo.hpp"
#include "greenview/gradcam.hpp"
#include "greenview/meanshift.hpp"
#include "greenview/metrics.hpp"
#include "greenview/nnet.hpp"
#include "greenview/pipeline.hpp"
#include "greenview/synth.hpp"
#include "greenview/util.hpp"

namespace py = pybind11;
using namespace greenview;

namespace {

RgbImage np_to_image(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) {
        throw ValidationError("expected an (H,W,3) uint8 array");
    }
    RgbImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::memcpy(img.pixels.data(), a.data(), img.pixels.size());
    return img;
}

py::array_t<uint8_t> image_to_np(const RgbImage& img) {
    py::array_t<uint8_t> a({img.height, img.width, 3});
    std::memcpy(a.mutable_data(), img.pixels.data(), img.pixels.size());
    return a;
}

BinaryMask np_to_mask(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw ValidationError("expected an (H,W) uint8 array");
    BinaryMask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    const uint8_t* p = a.data();
    for (size_t i = 0; i < m.flags.size(); ++i) m.flags[i] = p[i] ? 1 : 0;
    return m;
}

py::array_t<uint8_t> mask_to_np(const BinaryMask& m) {
    py::array_t<uint8_t> a({m.height, m.width});
    std::memcpy(a.mutable_data(), m.flags.data(), m.flags.size());
    return a;
}

MeanShiftParams ms_params(double h_s, double h_r, int min_region, int max_iters, double eps) {
    MeanShiftParams p;
    p.h_s = h_s;
    p.h_r = h_r;
    p.min_region = min_region;
    p.max_iters = max_iters;
    p.eps = eps;
    return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "street-level green view index estimation";

    py::register_exception<Error>(m, "GreenviewError");

    // ---- geo ---------------------------------------------------------------
    py::class_<SamplePoint>(m, "SamplePoint")
        .def_readonly("point_id", &SamplePoint::point_id)
        .def_readonly("lat", &SamplePoint::lat)
        .def_readonly("lon", &SamplePoint::lon)
        .def_readonly("way_id", &SamplePoint::way_id)
        .def_readonly("offset_m", &SamplePoint::offset_m)
        .def("__repr__", [](const SamplePoint& p) {
            return "SamplePoint(" + p.point_id + ", " + format_compact(p.lat) + ", " +
                   format_compact(p.lon) + ")";
        });

    m.def(
        "haversine_m",
        [](double lat1, double lon1, double lat2, double lon2) {
            return haversine_m({lat1, lon1}, {lat2, lon2});
        },
        py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"),
        "great-circle distance in meters (R = 6,371,000 m)");

    m.def(
        "sample_road_points",
        [](const std::string& osm_xml, double spacing_m,
           const std::vector<std::string>& highway_filter) {
            return sample_points(parse_osm_xml(osm_xml, highway_filter), spacing_m);
        },
        py::arg("osm_xml"), py::arg("spacing_m") = 1000.0,
        py::arg("highway_filter") = std::vector<std::string>{},
        "parse OSM XML and sample points along each highway way");

    // ---- raster ------------------------------------------------------------
    m.def("imread", [](const std::string& path) { return image_to_np(read_png_file(path)); },
          py::arg("path"));
    m.def(
        "imwrite",
        [](const std::string& path, const py::array_t<uint8_t, py::array::c_style |
                                                                    py::array::forcecast>& a) {
            if (a.ndim() == 2) {
                write_png_file(path, np_to_mask(a));
            } else {
                write_png_file(path, np_to_image(a));
            }
        },
        py::arg("path"), py::arg("array"));
    m.def("read_mask", [](const std::string& path) { return mask_to_np(read_mask_file(path)); },
          py::arg("path"));

    m.def(
        "rgb_to_luv",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
            LuvImage luv = rgb_to_luv(np_to_image(a));
            py::array_t<float> out({luv.height, luv.width, 3});
            std::memcpy(out.mutable_data(), luv.values.data(), luv.values.size() * sizeof(float));
            return out;
        },
        py::arg("image"), "sRGB -> CIE L*u*v* (D65), float32 (H,W,3)");

    // ---- mean shift ----------------------------------------------------------
    m.def(
        "meanshift_labels",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a, double h_s,
           double h_r, int min_region, int max_iters, double eps, unsigned parallelism) {
            RgbImage img = np_to_image(a);
            MeanShiftParams p = ms_params(h_s, h_r, min_region, max_iters, eps);
            Segmentation seg = fuse_regions(img, meanshift_filter(img, p, parallelism), p);
            py::array_t<int32_t> out({seg.height, seg.width});
            std::memcpy(out.mutable_data(), seg.labels.data(),
                        seg.labels.size() * sizeof(int32_t));
            return out;
        },
        py::arg("image"), py::arg("h_s") = 7.0, py::arg("h_r") = 6.5,
        py::arg("min_region") = 20, py::arg("max_iters") = 20, py::arg("eps") = 0.1,
        py::arg("parallelism") = 1, "dense region labels from mean-shift segmentation");

    m.def(
        "segment_vegetation",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a, double h_s,
           double h_r, int min_region, int max_iters, double eps, double t_dom, double t_excess,
           unsigned parallelism) {
            RgbImage img = np_to_image(a);
            GreenParams g;
            g.t_dom = t_dom;
            g.t_excess = t_excess;
            BinaryMask mask = segment_vegetation(
                img, ms_params(h_s, h_r, min_region, max_iters, eps), g, parallelism);
            return py::make_tuple(mask_to_np(mask), gvi_of_mask(mask));
        },
        py::arg("image"), py::arg("h_s") = 7.0, py::arg("h_r") = 6.5,
        py::arg("min_region") = 20, py::arg("max_iters") = 20, py::arg("eps") = 0.1,
        py::arg("t_dom") = 10.0, py::arg("t_excess") = 20.0, py::arg("parallelism") = 1,
        "(mask, gvi) from the unsupervised mean-shift baseline");

    m.def(
        "gvi_of_mask",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
            BinaryMask mask = np_to_mask(a);
            return gvi_of_mask(mask);
        },
        py::arg("mask"));

    // ---- metrics ---------------------------------------------------------------
    m.def(
        "eval_pair",
        [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& pred,
           const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& truth) {
            ImageEval e = eval_pair(np_to_mask(pred), np_to_mask(truth));
            py::dict d;
            d["tp"] = *e.tp;
            d["fp"] = *e.fp;
            d["fn"] = *e.fn;
            d["tn"] = *e.tn;
            d["iou"] = *e.iou;
            d["gvi_pred"] = e.gvi_pred;
            d["gvi_true"] = e.gvi_true;
            d["delta"] = e.delta;
            return d;
        },
        py::arg("pred"), py::arg("truth"),
        "confusion counts, vegetation IoU and GVI delta for one mask pair");

    m.def("pearson_r", &pearson_r, py::arg("pred"), py::arg("truth"));
    m.def(
        "error_band",
        [](std::vector<double> deltas, double lo, double hi) {
            auto band = error_band(std::move(deltas), lo, hi);
            return py::make_tuple(band.first, band.second);
        },
        py::arg("deltas"), py::arg("lo") = 0.05, py::arg("hi") = 0.95,
        "linear-interpolation quantiles of signed errors");

    // ---- neural nets ---------------------------------------------------------------
    py::class_<ConvNet>(m, "ConvNet")
        .def_static("load", &ConvNet::load, py::arg("path"))
        .def("save", &ConvNet::save, py::arg("path"))
        .def_property_readonly("param_count", &ConvNet::param_count)
        .def_property_readonly("input_size",
                               [](const ConvNet& n) {
                                   return py::make_tuple(n.config().input_h, n.config().input_w);
                               })
        .def_property_readonly("head",
                               [](const ConvNet& n) {
                                   return n.config().head == HeadKind::Regression
                                              ? "regression"
                                              : "segmentation";
                               })
        .def(
            "predict_gvi",
            [](const ConvNet& n,
               const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
                return predict_gvi(n, np_to_image(a));
            },
            py::arg("image"))
        .def(
            "predict_mask",
            [](const ConvNet& n,
               const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a) {
                return mask_to_np(predict_mask(n, np_to_image(a)));
            },
            py::arg("image"))
        .def(
            "grad_cam",
            [](const ConvNet& n,
               const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& a,
               int layer) {
                GradCamResult r = grad_cam(n, np_to_image(a), layer);
                py::array_t<float> heat({r.heatmap.height, r.heatmap.width});
                std::memcpy(heat.mutable_data(), r.heatmap.values.data(),
                            r.heatmap.values.size() * sizeof(float));
                return py::make_tuple(heat, r.prediction);
            },
            py::arg("image"), py::arg("layer") = -1,
            "(heatmap, prediction); heatmap values in [0,1] at image size");

    m.def(
        "train_on_manifest",
        [](const std::string& manifest, const std::string& head, const std::string& out_path,
           double lr, double momentum, int epochs, int batch_size, uint64_t seed, int input_h,
           int input_w, const std::vector<int>& channels) {
            NetConfig nc;
            nc.input_h = input_h;
            nc.input_w = input_w;
            nc.conv_channels = channels;
            nc.head = head == "segmentation" ? HeadKind::Segmentation : HeadKind::Regression;
            nc.init_seed = seed;
            TrainConfig tc;
            tc.learning_rate = lr;
            tc.momentum = momentum;
            tc.epochs = epochs;
            tc.batch_size = batch_size;
            tc.seed = seed;
            auto dataset = dataset_from_manifest(manifest, nc);
            ConvNet net(nc);
            TrainResult res = train(net, dataset, tc);
            net.save(out_path);
            return res.loss_curve;
        },
        py::arg("manifest"), py::arg("head"), py::arg("out_path"), py::arg("lr") = 0.01,
        py::arg("momentum") = 0.9, py::arg("epochs") = 10, py::arg("batch_size") = 16,
        py::arg("seed") = 1, py::arg("input_h") = 128, py::arg("input_w") = 128,
        py::arg("channels") = std::vector<int>{8, 16},
        "train an estimator on a labelled manifest; returns the loss curve");

    // ---- synthetic data ---------------------------------------------------------------
    m.def(
        "generate_synth_dataset",
        [](const std::string& dir, int n, uint64_t seed, int width, int height, int min_shapes,
           int max_shapes, bool distractors) {
            SynthOptions opt;
            opt.width = width;
            opt.height = height;
            opt.min_shapes = min_shapes;
            opt.max_shapes = max_shapes;
            opt.distractors = distractors;
            auto records = generate_synth_dataset(dir, n, seed, opt);
            std::vector<std::string> ids;
            ids.reserve(records.size());
            for (const auto& r : records) ids.push_back(r.image_id);
            return ids;
        },
        py::arg("dir"), py::arg("n"), py::arg("seed") = 7, py::arg("width") = 128,
        py::arg("height") = 128, py::arg("min_shapes") = 1, py::arg("max_shapes") = 3,
        py::arg("distractors") = false,
        "write a labelled synthetic dataset (images, masks, manifest.jsonl)");
}
