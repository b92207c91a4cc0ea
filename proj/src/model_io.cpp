#include "trodo/model_io.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace trodo {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'T', 'R', 'O', 'D', 'O', 'M', 'D', 'L'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("truncated payload: header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

json layer_to_json(const LayerSpec& l) {
    json j;
    j["kind"] = layer_kind_name(l.kind);
    switch (l.kind) {
        case LayerKind::Dense:
            j["in"] = l.in;
            j["out"] = l.out;
            break;
        case LayerKind::Conv2d:
            j["in_ch"] = l.in_ch;
            j["out_ch"] = l.out_ch;
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            break;
        case LayerKind::MaxPool2d:
            j["kernel"] = l.kernel;
            j["stride"] = l.stride;
            break;
        default:
            break;
    }
    return j;
}

LayerSpec layer_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") return LayerSpec::dense(j.at("in"), j.at("out"));
    if (kind == "conv2d")
        return LayerSpec::conv2d(j.at("in_ch"), j.at("out_ch"), j.at("kernel"), j.at("stride"),
                                 j.at("padding"));
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "maxpool2d") return LayerSpec::maxpool2d(j.at("kernel"), j.at("stride"));
    if (kind == "flatten") return LayerSpec::flatten();
    throw FormatError("unsupported layer kind '" + kind + "'");
}

json meta_to_json(const ModelMeta& m) {
    json j;
    j["num_classes"] = m.num_classes;
    j["input_shape"] = m.input_shape;
    j["seed"] = m.seed;
    if (m.provenance.is_trojaned()) {
        j["provenance"] = {{"kind", "trojaned"},
                           {"trigger_id", m.provenance.trigger_id},
                           {"mapping_id", m.provenance.mapping_id}};
    } else {
        j["provenance"] = {{"kind", "clean"}};
    }
    json tm;
    switch (m.training_mode.kind) {
        case TrainingMode::Kind::Standard:
            tm["kind"] = "standard";
            break;
        case TrainingMode::Kind::Adversarial:
            tm["kind"] = "adversarial";
            tm["pgd_steps"] = m.training_mode.pgd_steps;
            tm["eps_linf"] = m.training_mode.eps_linf;
            break;
        case TrainingMode::Kind::Adaptive:
            tm["kind"] = "adaptive";
            tm["variant"] = m.training_mode.variant;
            tm["lambda1"] = m.training_mode.lambda1;
            tm["lambda2"] = m.training_mode.lambda2;
            tm["lambda3"] = m.training_mode.lambda3;
            break;
    }
    j["training_mode"] = tm;
    return j;
}

ModelMeta meta_from_json(const json& j) {
    ModelMeta m;
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.input_shape = j.at("input_shape").get<std::vector<std::size_t>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& p = j.at("provenance");
    if (p.at("kind") == "trojaned") {
        m.provenance.kind = Provenance::Kind::Trojaned;
        m.provenance.trigger_id = p.at("trigger_id").get<std::string>();
        m.provenance.mapping_id = p.at("mapping_id").get<std::string>();
    }
    const json& tm = j.at("training_mode");
    const std::string tk = tm.at("kind").get<std::string>();
    if (tk == "adversarial") {
        m.training_mode.kind = TrainingMode::Kind::Adversarial;
        m.training_mode.pgd_steps = tm.at("pgd_steps").get<int>();
        m.training_mode.eps_linf = tm.at("eps_linf").get<double>();
    } else if (tk == "adaptive") {
        m.training_mode.kind = TrainingMode::Kind::Adaptive;
        m.training_mode.variant = tm.at("variant").get<int>();
        m.training_mode.lambda1 = tm.at("lambda1").get<double>();
        m.training_mode.lambda2 = tm.at("lambda2").get<double>();
        m.training_mode.lambda3 = tm.at("lambda3").get<double>();
    } else if (tk != "standard") {
        throw FormatError("unsupported training mode '" + tk + "'");
    }
    return m;
}

}  // namespace

void save_model(const ModelBundle& bundle, const std::string& path) {
    bundle.validate();
    json header;
    header["layers"] = json::array();
    for (const LayerSpec& l : bundle.spec) header["layers"].push_back(layer_to_json(l));
    header["meta"] = meta_to_json(bundle.meta);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    const std::string h = header.dump();
    write_u32(os, static_cast<std::uint32_t>(h.size()));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& layer : bundle.weights) {
        for (const Tensor& t : layer) {
            for (double v : t.data) {
                float f = static_cast<float>(v);
                static_assert(sizeof(float) == 4);
                os.write(reinterpret_cast<const char*>(&f), 4);
            }
        }
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

ModelBundle load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("bad magic");
    std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version));
    std::uint32_t hlen = read_u32(is);
    std::string h(hlen, '\0');
    is.read(h.data(), hlen);
    if (!is) throw FormatError("truncated payload: json header");

    json header;
    try {
        header = json::parse(h);
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed header: ") + e.what());
    }

    ModelBundle m;
    try {
        for (const json& lj : header.at("layers")) m.spec.push_back(layer_from_json(lj));
        m.meta = meta_from_json(header.at("meta"));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed header: ") + e.what());
    }

    // Reconstruct weight tensor shapes from the spec, then read the payload.
    for (const LayerSpec& l : m.spec) {
        std::vector<Tensor> w;
        if (l.kind == LayerKind::Dense) {
            w.emplace_back(std::vector<std::size_t>{l.out, l.in});
            w.emplace_back(std::vector<std::size_t>{l.out});
        } else if (l.kind == LayerKind::Conv2d) {
            w.emplace_back(std::vector<std::size_t>{l.out_ch, l.in_ch, l.kernel, l.kernel});
            w.emplace_back(std::vector<std::size_t>{l.out_ch});
        }
        m.weights.push_back(std::move(w));
    }
    for (auto& layer : m.weights) {
        for (Tensor& t : layer) {
            for (double& v : t.data) {
                float f;
                is.read(reinterpret_cast<char*>(&f), 4);
                if (!is) throw FormatError("truncated payload: weights");
                v = static_cast<double>(f);
            }
        }
    }
    m.validate();
    if (!m.weights.empty()) {
        char extra;
        if (is.read(&extra, 1)) throw FormatError("trailing bytes after weight payload");
    }
    return m;
}

}  // namespace trodo
