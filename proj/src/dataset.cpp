#include "trodo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "trodo/rng.hpp"

namespace trodo {

namespace {

using nlohmann::json;

void hsv_to_rgb(double h, double s, double v, double rgb[3]) {
    h = std::fmod(h, 360.0) / 60.0;
    const int i = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
        default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
    }
}

enum class Shape { Circle, Square, Triangle, Cross, Ring };

bool inside_shape(Shape shape, double dy, double dx, double r) {
    const double ady = std::fabs(dy), adx = std::fabs(dx);
    switch (shape) {
        case Shape::Circle:
            return dy * dy + dx * dx <= r * r;
        case Shape::Square:
            return ady <= r * 0.85 && adx <= r * 0.85;
        case Shape::Triangle:
            // upright triangle: below the apex, above the base
            return dy >= -r && dy <= r * 0.8 && adx <= (dy + r) * 0.55;
        case Shape::Cross:
            return (ady <= r * 0.3 && adx <= r) || (adx <= r * 0.3 && ady <= r);
        case Shape::Ring: {
            const double d2 = dy * dy + dx * dx;
            return d2 <= r * r && d2 >= (0.55 * r) * (0.55 * r);
        }
    }
    return false;
}

Tensor render_sample(std::size_t cls, std::size_t num_classes, std::size_t n, Rng& rng) {
    Tensor img({3, n, n});
    const double bg = rng.uniform(0.05, 0.25);
    for (double& v : img.data) v = bg;

    // hue carries no class information: the class lives in the spatial
    // structure (shape and scale), which the hard transforms can destroy
    const double hue = rng.uniform(0.0, 360.0);
    double rgb[3];
    hsv_to_rgb(hue, rng.uniform(0.75, 1.0), rng.uniform(0.65, 0.95), rgb);

    const Shape shape = static_cast<Shape>(cls % 5);
    const bool small = (cls / 5) % 2 == 1;  // classes 5..9 use a smaller scale
    const double size = static_cast<double>(n);
    const double cy = size / 2.0 + rng.uniform(-0.12, 0.12) * size;
    const double cx = size / 2.0 + rng.uniform(-0.12, 0.12) * size;
    const double r = (small ? rng.uniform(0.13, 0.18) : rng.uniform(0.27, 0.38)) * size;
    (void)num_classes;

    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            if (inside_shape(shape, static_cast<double>(y) - cy, static_cast<double>(x) - cx, r)) {
                for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
            }
        }
    }
    for (double& v : img.data) v += rng.normal(0.0, 0.03);
    img.clip(0.0, 1.0);
    // pixels are stored as float32 on disk; snap now so round trips are exact
    for (double& v : img.data) v = static_cast<double>(static_cast<float>(v));
    return img;
}

Dataset generate_split(std::size_t num_classes, std::size_t per_class, std::size_t image_size,
                       Rng& rng) {
    Dataset ds;
    ds.num_classes = num_classes;
    // interleave classes so labels are balanced and shuffled
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < per_class; ++i)
        for (std::size_t c = 0; c < num_classes; ++c) order.push_back(c);
    rng.shuffle(order);
    for (std::size_t cls : order) {
        ds.images.push_back(render_sample(cls, num_classes, image_size, rng));
        ds.labels.push_back(cls);
    }
    return ds;
}

}  // namespace

LabeledSplit generate_synthetic_dataset(std::size_t num_classes, std::size_t train_per_class,
                                        std::size_t test_per_class, std::size_t image_size,
                                        std::uint64_t seed) {
    if (num_classes < 2) throw ConfigError("dataset needs at least 2 classes");
    if (image_size < 8) throw ConfigError("degenerate image size");
    Rng rng(seed);
    LabeledSplit split;
    split.train = generate_split(num_classes, train_per_class, image_size, rng);
    split.test = generate_split(num_classes, test_per_class, image_size, rng);
    return split;
}

namespace {

constexpr char kMagic[8] = {'T', 'R', 'O', 'D', 'O', 'D', 'A', 'T'};
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

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
    if (ds.images.size() != ds.labels.size())
        throw ShapeError("dataset images/labels length mismatch");
    json header;
    header["num_images"] = ds.images.size();
    header["num_classes"] = ds.num_classes;
    header["image_shape"] = ds.images.empty() ? std::vector<std::size_t>{} : ds.images[0].shape;
    header["labels"] = ds.labels;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    const std::string h = header.dump();
    write_u32(os, static_cast<std::uint32_t>(h.size()));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Tensor& img : ds.images) {
        for (double v : img.data) {
            float f = static_cast<float>(v);
            os.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
    if (!os) throw IoError("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
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

    Dataset ds;
    std::size_t num_images;
    std::vector<std::size_t> shape;
    try {
        json header = json::parse(h);
        num_images = header.at("num_images").get<std::size_t>();
        ds.num_classes = header.at("num_classes").get<std::size_t>();
        shape = header.at("image_shape").get<std::vector<std::size_t>>();
        ds.labels = header.at("labels").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed header: ") + e.what());
    }
    if (ds.labels.size() != num_images) throw FormatError("label count mismatch");
    for (std::size_t lbl : ds.labels)
        if (lbl >= ds.num_classes) throw FormatError("label out of range");
    ds.images.reserve(num_images);
    for (std::size_t i = 0; i < num_images; ++i) {
        Tensor img(shape);
        for (double& v : img.data) {
            float f;
            is.read(reinterpret_cast<char*>(&f), 4);
            if (!is) throw FormatError("truncated payload: images");
            v = static_cast<double>(f);
        }
        ds.images.push_back(std::move(img));
    }
    return ds;
}

}  // namespace trodo
