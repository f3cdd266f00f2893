// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "lsplit/bench.hpp"
#include "lsplit/config.hpp"
#include "lsplit/error.hpp"
#include "lsplit/image.hpp"
#include "lsplit/netsim.hpp"
#include "lsplit/node.hpp"
#include "lsplit/quant.hpp"
#include "lsplit/wire.hpp"

namespace py = pybind11;
using namespace lsplit;

namespace {

Bytes to_bytes(const py::bytes& b) {
    const std::string s = b;
    return Bytes(s.begin(), s.end());
}

py::bytes from_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Image to_image(const py::bytes& rgb, std::size_t width, std::size_t height) {
    Image img(width, height);
    const std::string s = rgb;
    if (s.size() != img.rgb.size()) throw Error(Errc::dimension, "rgb buffer does not match width * height * 3");
    std::copy(s.begin(), s.end(), img.rgb.begin());
    return img;
}

py::dict frame_dict(const wire::Frame& f) {
    py::dict d;
    d["type"] = wire::msg_type_name(f.type);
    d["dtype"] = static_cast<int>(f.dtype);
    d["session_id"] = f.session_id;
    d["step_index"] = f.step_index;
    d["dims"] = f.dims;
    if (f.quant) {
        d["quant"] = py::make_tuple(static_cast<int>(f.quant->bits), f.quant->scale, f.quant->zero_point);
    } else {
        d["quant"] = py::none();
    }
    d["payload"] = from_bytes(f.payload);
    return d;
}

wire::MsgType parse_type(const std::string& name) {
    for (std::size_t i = 0; i < wire::kMsgTypeCount; ++i) {
        const auto t = static_cast<wire::MsgType>(i);
        if (name == wire::msg_type_name(t)) return t;
    }
    throw Error(Errc::parameter, "unknown message type '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_lsplit, m) {
    m.doc() = "Bindings for the lsplit split-computing library.";
    py::register_exception<Error>(m, "LsplitError", PyExc_ValueError);

    // quantization
    m.def(
        "quantize",
        [](const std::vector<float>& values, int bits) {
            const auto q = quantize_affine(Tensor({values.size()}, values), bits);
            return py::make_tuple(from_bytes(q.packed), q.params.scale, q.params.zero_point);
        },
        py::arg("values"), py::arg("bits"));
    m.def(
        "dequantize",
        [](const py::bytes& packed, int bits, float scale, std::int32_t zero_point, std::size_t count) {
            const QuantParams p{static_cast<std::uint8_t>(bits), scale, zero_point};
            const Tensor t = dequantize_affine(to_bytes(packed), p, {count});
            return std::vector<float>(t.values().begin(), t.values().end());
        },
        py::arg("packed"), py::arg("bits"), py::arg("scale"), py::arg("zero_point"), py::arg("count"));
    m.def("float_to_half", &float_to_half);
    m.def("half_to_float", &half_to_float);

    // wire
    m.def(
        "encode_bytes_frame",
        [](const std::string& type, std::uint64_t session, std::uint32_t step, const py::bytes& payload) {
            const std::string s = payload;
            return from_bytes(wire::encode_frame(wire::make_bytes_frame(parse_type(type), session, step, s)));
        },
        py::arg("type"), py::arg("session"), py::arg("step"), py::arg("payload") = py::bytes());
    m.def(
        "encode_tensor_frame",
        [](const std::string& type, std::uint64_t session, std::uint32_t step, const std::vector<std::size_t>& shape,
           const std::vector<float>& values, const std::string& format) {
            const Tensor t(Shape(shape.begin(), shape.end()), values);
            return from_bytes(
                wire::encode_frame(wire::make_tensor_frame(parse_type(type), session, step, t, wire::parse_wire_format(format))));
        },
        py::arg("type"), py::arg("session"), py::arg("step"), py::arg("shape"), py::arg("values"),
        py::arg("format") = "fp32");
    m.def(
        "decode_frame",
        [](const py::bytes& data) -> py::dict {
            const auto d = wire::decode_frame(to_bytes(data));
            if (!d) throw Error(Errc::frame, wire::decode_error_name(d.error()));
            return frame_dict(d.frame());
        },
        py::arg("data"));
    m.def(
        "frame_values",
        [](const py::bytes& data) {
            const auto d = wire::decode_frame(to_bytes(data));
            if (!d) throw Error(Errc::frame, wire::decode_error_name(d.error()));
            const Tensor t = wire::frame_tensor(d.frame());
            return std::vector<float>(t.values().begin(), t.values().end());
        },
        py::arg("data"));

    // traffic and capture
    m.def("analytic_llm_traffic", &analytic_llm_traffic, py::arg("l_in"), py::arg("l_out"), py::arg("d"),
          py::arg("bytes_per_elem"), py::arg("caching"));
    m.def(
        "deliver",
        [](double bandwidth_bits_per_s, double rtt_s, std::size_t frame_bytes, double t_send) {
            return deliver(ChannelConfig{bandwidth_bits_per_s, rtt_s}, frame_bytes, t_send);
        },
        py::arg("bandwidth_bits_per_s"), py::arg("rtt_s"), py::arg("frame_bytes"), py::arg("t_send") = 0.0);
    m.def(
        "detect_plaintext_leak",
        [](const std::vector<py::bytes>& records, const py::bytes& secret) {
            CaptureLog log;
            for (const auto& r : records) log.record(0.0, Direction::uplink, to_bytes(r));
            std::vector<py::tuple> hits;
            for (const auto& h : detect_plaintext_leak(log, std::span<const std::uint8_t>(to_bytes(secret)))) {
                hits.push_back(py::make_tuple(h.record, h.offset, h.length, h.secret_offset));
            }
            return hits;
        },
        py::arg("records"), py::arg("secret"));

    // partitioning
    m.def(
        "plan_partition",
        [](std::size_t n, std::size_t local_layers) {
            const auto p = llm::plan_partition(n, local_layers);
            return py::make_tuple(p.x, p.y);
        },
        py::arg("n"), py::arg("local_layers"));

    // image metrics
    m.def(
        "psnr",
        [](const py::bytes& a, const py::bytes& b, std::size_t width, std::size_t height) {
            return psnr(to_image(a, width, height), to_image(b, width, height));
        },
        py::arg("a"), py::arg("b"), py::arg("width"), py::arg("height"));
    m.def(
        "ssim",
        [](const py::bytes& a, const py::bytes& b, std::size_t width, std::size_t height) {
            return ssim(to_image(a, width, height), to_image(b, width, height));
        },
        py::arg("a"), py::arg("b"), py::arg("width"), py::arg("height"));

    // end to end, JSON in and out
    m.def(
        "generate_json",
        [](const std::string& request, const std::string& settings_text) {
            const Settings s = parse_settings(settings_text);
            auto cloud = std::make_shared<CloudNode>(llm::build_toy_llm(s.llm), ldm::build_toy_ldm(s.ldm), s.session_idle_s);
            LocalNode local(s, cloud);
            Outcome o;
            {
                py::gil_scoped_release release;
                o = local.generate(experiment_from_json(nlohmann::json::parse(request), s.defaults));
            }
            auto j = to_json(o);
            j["capture"] = local.capture_json(o.session_id);
            return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        },
        py::arg("request"), py::arg("settings_text") = "");
    m.def(
        "benchmark_csv",
        [](const std::string& settings_text) {
            const Settings s = parse_settings(settings_text);
            py::gil_scoped_release release;
            return to_csv(run_benchmark(s));
        },
        py::arg("settings_text") = "");
    m.def("report_columns", &report_columns);
}
