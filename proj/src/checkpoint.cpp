#include "uap/binary_io.hpp"
#include "uap/diffnet.hpp"

#include <zlib.h>

#include <fstream>
#include <limits>

namespace uap {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    std::size_t done = 0;
    while (done < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, std::numeric_limits<uInt>::max()));
        crc = ::crc32(crc, bytes.data() + done, chunk);
        done += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw std::runtime_error("read error on " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw std::runtime_error("write error on " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_file(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace {

constexpr std::string_view kModelMagic = "DNET";
constexpr std::uint32_t kModelVersion = 1;

void put_shape(ByteWriter& w, const Shape& s) {
    w.u32(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) w.u32(static_cast<std::uint32_t>(d));
}

Shape get_shape(ByteReader& r, const char* what) {
    const auto rank = r.u32(what);
    if (rank == 0 || rank > 8) throw FormatError(std::string("implausible rank for ") + what, r.offset() - 4);
    Shape s(rank);
    for (auto& d : s) {
        d = r.u32(what);
        if (d == 0) throw FormatError(std::string("zero dimension in ") + what, r.offset() - 4);
    }
    return s;
}

template <typename M>
void put_values(ByteWriter& w, const M& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) w.f64(m.data()[i]);
}

template <typename M>
void get_values(ByteReader& r, M& m, const char* what) {
    r.need(static_cast<std::size_t>(m.size()) * 8, what);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64(what);
}

std::size_t get_dim(ByteReader& r, const char* what) {
    const auto v = r.u32(what);
    if (v == 0) throw FormatError(std::string("zero value for ") + what, r.offset() - 4);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Network& net) {
    ByteWriter w;
    w.bytes(kModelMagic);
    w.u32(kModelVersion);
    put_shape(w, net.input_shape());
    w.f64(net.input_scale());
    w.u32(static_cast<std::uint32_t>(net.num_classes()));
    for (double cw : net.class_weights()) w.f64(cw);
    w.u32(static_cast<std::uint32_t>(net.layers().size()));
    for (const auto& layer : net.layers()) {
        w.u8(static_cast<std::uint8_t>(layer_kind(layer)));
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            put_shape(w, d->in_shape);
            w.u32(static_cast<std::uint32_t>(d->out_size()));
            put_values(w, d->weights);
            put_values(w, d->bias);
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            for (auto v : {c->in_h, c->in_w, c->in_c, c->out_c, c->kernel, c->stride})
                w.u32(static_cast<std::uint32_t>(v));
            put_values(w, c->weights);
            put_values(w, c->bias);
        } else if (const auto* m = std::get_if<MaxPool2dLayer>(&layer)) {
            for (auto v : {m->in_h, m->in_w, m->channels, m->size, m->stride}) w.u32(static_cast<std::uint32_t>(v));
        } else if (const auto* s = std::get_if<SoftmaxLayer>(&layer)) {
            w.u32(static_cast<std::uint32_t>(s->classes));
        } else {
            put_shape(w, layer_input_shape(layer));
        }
    }
    w.seal();
    return std::move(w.buffer());
}

Network deserialize_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kModelMagic);
    const auto version = r.u32("version");
    if (version != kModelVersion)
        throw FormatError("unsupported model version " + std::to_string(version), r.offset() - 4);
    const Shape input_shape = get_shape(r, "input shape");
    const double input_scale = r.f64("input scale");
    const auto k = r.u32("class count");
    r.need(static_cast<std::size_t>(k) * 8, "class weights");
    std::vector<double> class_weights(k);
    for (auto& cw : class_weights) cw = r.f64("class weight");
    const auto layer_count = r.u32("layer count");
    std::vector<Layer> layers;
    for (std::uint32_t li = 0; li < layer_count; ++li) {
        const std::size_t tag_at = r.offset();
        const auto tag = r.u8("layer tag");
        switch (static_cast<LayerKind>(tag)) {
            case LayerKind::Dense: {
                DenseLayer d;
                d.in_shape = get_shape(r, "dense input shape");
                const auto out = get_dim(r, "dense units");
                r.need((out * shape_size(d.in_shape) + out) * 8, "dense weights");
                d.weights.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(shape_size(d.in_shape)));
                d.bias.resize(static_cast<Eigen::Index>(out));
                get_values(r, d.weights, "dense weights");
                get_values(r, d.bias, "dense bias");
                layers.emplace_back(std::move(d));
                break;
            }
            case LayerKind::Conv2d: {
                Conv2dLayer c;
                c.in_h = get_dim(r, "conv2d height");
                c.in_w = get_dim(r, "conv2d width");
                c.in_c = get_dim(r, "conv2d input channels");
                c.out_c = get_dim(r, "conv2d output channels");
                c.kernel = get_dim(r, "conv2d kernel");
                c.stride = get_dim(r, "conv2d stride");
                r.need((c.kernel * c.kernel * c.in_c * c.out_c + c.out_c) * 8, "conv2d weights");
                c.weights.resize(static_cast<Eigen::Index>(c.kernel * c.kernel * c.in_c),
                                 static_cast<Eigen::Index>(c.out_c));
                c.bias.resize(static_cast<Eigen::Index>(c.out_c));
                get_values(r, c.weights, "conv2d weights");
                get_values(r, c.bias, "conv2d bias");
                layers.emplace_back(std::move(c));
                break;
            }
            case LayerKind::Relu: layers.emplace_back(ReluLayer{get_shape(r, "relu shape")}); break;
            case LayerKind::MaxPool2d: {
                MaxPool2dLayer m;
                m.in_h = get_dim(r, "maxpool2d height");
                m.in_w = get_dim(r, "maxpool2d width");
                m.channels = get_dim(r, "maxpool2d channels");
                m.size = get_dim(r, "maxpool2d size");
                m.stride = get_dim(r, "maxpool2d stride");
                layers.emplace_back(m);
                break;
            }
            case LayerKind::Flatten: layers.emplace_back(FlattenLayer{get_shape(r, "flatten shape")}); break;
            case LayerKind::Softmax: layers.emplace_back(SoftmaxLayer{get_dim(r, "softmax classes")}); break;
            default: throw FormatError("unknown layer tag " + std::to_string(tag), tag_at);
        }
    }
    const std::size_t end_of_layers = r.offset();
    r.verify_seal();
    try {
        return Network(input_shape, std::move(layers), std::move(class_weights), input_scale);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("inconsistent checkpoint: ") + e.what(), end_of_layers);
    }
}

void save_model(const Network& net, const std::filesystem::path& path) { write_file(path, serialize_model(net)); }

Network load_model(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return deserialize_model(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string(), e);
    }
}

}  // namespace uap
