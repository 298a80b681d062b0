#include "fmgan/image_io.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fmgan {

namespace {

uint8_t to_byte(float v) {
    float u = (v + 1.0f) * 0.5f * 255.0f;
    u = std::min(255.0f, std::max(0.0f, std::round(u)));
    return static_cast<uint8_t>(u);
}

float from_byte(uint8_t b) { return static_cast<float>(b) / 255.0f * 2.0f - 1.0f; }

void put_u16(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x & 0xff));
    v.push_back(static_cast<uint8_t>(x >> 8));
}
void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<uint8_t>((x >> (8 * i)) & 0xff));
}

}  // namespace

void write_bmp(const std::string& path, const Tensor& image) {
    FMGAN_CHECK(image.ndim() == 3 && (image.dim(0) == 1 || image.dim(0) == 3),
                "write_bmp: image must be [1|3, H, W], got " << shape_str(image.shape()));
    int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    int64_t row_bytes = (3 * w + 3) / 4 * 4;
    uint32_t pixel_bytes = static_cast<uint32_t>(row_bytes * h);
    uint32_t file_size = 54 + pixel_bytes;

    std::vector<uint8_t> out;
    out.reserve(file_size);
    out.push_back('B');
    out.push_back('M');
    put_u32(out, file_size);
    put_u32(out, 0);
    put_u32(out, 54);
    put_u32(out, 40);
    put_u32(out, static_cast<uint32_t>(w));
    put_u32(out, static_cast<uint32_t>(h));
    put_u16(out, 1);
    put_u16(out, 24);
    put_u32(out, 0);
    put_u32(out, pixel_bytes);
    put_u32(out, 2835);
    put_u32(out, 2835);
    put_u32(out, 0);
    put_u32(out, 0);

    const float* p = image.data();
    for (int64_t y = h - 1; y >= 0; --y) {
        size_t row_start = out.size();
        for (int64_t x = 0; x < w; ++x) {
            float r = p[0 * h * w + y * w + x];
            float g = c == 3 ? p[1 * h * w + y * w + x] : r;
            float b = c == 3 ? p[2 * h * w + y * w + x] : r;
            out.push_back(to_byte(b));
            out.push_back(to_byte(g));
            out.push_back(to_byte(r));
        }
        while (out.size() - row_start < static_cast<size_t>(row_bytes)) out.push_back(0);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    FMGAN_CHECK(f.good(), "write_bmp: cannot open " << path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    FMGAN_CHECK(f.good(), "write_bmp: write failed for " << path);
}

Tensor read_bmp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    FMGAN_CHECK(f.good(), "read_bmp: cannot open " << path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    FMGAN_CHECK(buf.size() >= 54 && buf[0] == 'B' && buf[1] == 'M',
                "read_bmp: " << path << " is not a BMP file");
    auto u32 = [&](size_t off) {
        return static_cast<uint32_t>(buf[off]) | (static_cast<uint32_t>(buf[off + 1]) << 8) |
               (static_cast<uint32_t>(buf[off + 2]) << 16) |
               (static_cast<uint32_t>(buf[off + 3]) << 24);
    };
    auto u16 = [&](size_t off) {
        return static_cast<uint16_t>(static_cast<uint32_t>(buf[off]) |
                                     (static_cast<uint32_t>(buf[off + 1]) << 8));
    };
    uint32_t data_off = u32(10);
    int32_t w = static_cast<int32_t>(u32(18));
    int32_t h = static_cast<int32_t>(u32(22));
    uint16_t bpp = u16(28);
    uint32_t compression = u32(30);
    FMGAN_CHECK(bpp == 24 && compression == 0,
                "read_bmp: " << path << " must be 24-bit uncompressed (got " << bpp << " bpp)");
    FMGAN_CHECK(w > 0 && h > 0, "read_bmp: " << path << " has bad dimensions");
    int64_t row_bytes = (3 * static_cast<int64_t>(w) + 3) / 4 * 4;
    FMGAN_CHECK(buf.size() >= data_off + static_cast<size_t>(row_bytes * h),
                "read_bmp: " << path << " is truncated");

    auto img = Tensor::zeros({3, h, w});
    float* p = img.data();
    for (int64_t y = 0; y < h; ++y) {
        const uint8_t* row = buf.data() + data_off + (h - 1 - y) * row_bytes;
        for (int64_t x = 0; x < w; ++x) {
            p[0 * h * w + y * w + x] = from_byte(row[3 * x + 2]);
            p[1 * h * w + y * w + x] = from_byte(row[3 * x + 1]);
            p[2 * h * w + y * w + x] = from_byte(row[3 * x + 0]);
        }
    }
    return img;
}

void write_image_grid(const std::string& path, const std::vector<Tensor>& images, int cols) {
    FMGAN_CHECK(!images.empty(), "write_image_grid: no images");
    FMGAN_CHECK(cols >= 1, "write_image_grid: cols must be >= 1");
    int64_t c = images[0].dim(0), h = images[0].dim(1), w = images[0].dim(2);
    int rows = static_cast<int>((images.size() + static_cast<size_t>(cols) - 1) /
                                static_cast<size_t>(cols));
    auto grid = Tensor::full({c, rows * h, cols * w}, -1.0f);
    float* pg = grid.data();
    for (size_t i = 0; i < images.size(); ++i) {
        FMGAN_CHECK(shape_eq(images[i].shape(), images[0].shape()),
                    "write_image_grid: image " << i << " shape differs");
        int ry = static_cast<int>(i) / cols;
        int rx = static_cast<int>(i) % cols;
        const float* ps = images[i].data();
        for (int64_t ch = 0; ch < c; ++ch) {
            for (int64_t y = 0; y < h; ++y) {
                std::memcpy(pg + ch * (rows * h) * (cols * w) + (ry * h + y) * (cols * w) + rx * w,
                            ps + ch * h * w + y * w, static_cast<size_t>(w) * sizeof(float));
            }
        }
    }
    write_bmp(path, grid);
}

namespace {
constexpr char kRawMagic[8] = {'F', 'M', 'T', 'E', 'N', 'S', '0', '1'};
}

void write_tensor_raw(const std::string& path, const Tensor& t) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    FMGAN_CHECK(f.good(), "write_tensor_raw: cannot open " << path);
    f.write(kRawMagic, 8);
    int64_t rank = t.ndim();
    f.write(reinterpret_cast<const char*>(&rank), 8);
    for (int i = 0; i < t.ndim(); ++i) {
        int64_t d = t.dim(i);
        f.write(reinterpret_cast<const char*>(&d), 8);
    }
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(float))));
    FMGAN_CHECK(f.good(), "write_tensor_raw: write failed for " << path);
}

Tensor read_tensor_raw(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    FMGAN_CHECK(f.good(), "read_tensor_raw: cannot open " << path);
    char magic[8];
    f.read(magic, 8);
    FMGAN_CHECK(f.good() && std::memcmp(magic, kRawMagic, 8) == 0,
                "read_tensor_raw: " << path << " has a bad header");
    int64_t rank = 0;
    f.read(reinterpret_cast<char*>(&rank), 8);
    FMGAN_CHECK(f.good() && rank >= 0 && rank <= 8, "read_tensor_raw: bad rank in " << path);
    Shape shape(static_cast<size_t>(rank));
    for (auto& d : shape) {
        f.read(reinterpret_cast<char*>(&d), 8);
        FMGAN_CHECK(f.good() && d > 0, "read_tensor_raw: bad dimension in " << path);
    }
    int64_t n = shape_numel(shape);
    std::vector<float> data(static_cast<size_t>(n));
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(n * static_cast<int64_t>(sizeof(float))));
    FMGAN_CHECK(f.good(), "read_tensor_raw: " << path << " is truncated");
    return Tensor::from_vec(std::move(shape), std::move(data));
}

void write_points_csv(const std::string& path, const Tensor& points) {
    FMGAN_CHECK(points.ndim() == 2 && points.dim(1) == 2,
                "write_points_csv: points must be [N, 2], got " << shape_str(points.shape()));
    FileSink sink(path);
    sink.write_line("x,y");
    const float* p = points.data();
    char buf[64];
    for (int64_t i = 0; i < points.dim(0); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g", static_cast<double>(p[2 * i]),
                      static_cast<double>(p[2 * i + 1]));
        sink.write_line(buf);
    }
    sink.close();
}

FileSink::FileSink(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    FMGAN_CHECK(f_ != nullptr, "FileSink: cannot open " << path);
}

FileSink::~FileSink() {
    if (f_) close();
}

void FileSink::write_line(const std::string& line) {
    FMGAN_CHECK(f_ != nullptr, "FileSink: writing to closed sink " << path_);
    std::fwrite(line.data(), 1, line.size(), f_);
    std::fputc('\n', f_);
}

void FileSink::close() {
    if (!f_) return;
    std::fflush(f_);
    ::fsync(fileno(f_));
    std::fclose(f_);
    f_ = nullptr;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    FMGAN_CHECK(f.good(), "cannot open " << path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    FMGAN_CHECK(f.good(), "cannot open " << path << " for writing");
    f << content;
    FMGAN_CHECK(f.good(), "write failed for " << path);
}

}  // namespace fmgan
