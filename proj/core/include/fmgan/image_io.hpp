#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "fmgan/tensor.hpp"

namespace fmgan {

// 24-bit uncompressed BMP. Images are [C, H, W] with C in {1, 3} and values
// in [-1, 1]; grayscale replicates into three channels on disk.
void write_bmp(const std::string& path, const Tensor& image);
// Returns [3, H, W] in [-1, 1].
Tensor read_bmp(const std::string& path);

// Tiles [C,H,W] images into one bitmap, row-major, `cols` per row.
void write_image_grid(const std::string& path, const std::vector<Tensor>& images, int cols);

// Raw tensor dump: magic, rank, dims (i64 LE), float32 data LE.
void write_tensor_raw(const std::string& path, const Tensor& t);
Tensor read_tensor_raw(const std::string& path);

// Points [N, 2] as "x,y" CSV lines with a header.
void write_points_csv(const std::string& path, const Tensor& points);

// Line-oriented text sink; close() flushes and fsyncs before returning.
class FileSink {
public:
    explicit FileSink(const std::string& path);
    ~FileSink();
    FileSink(const FileSink&) = delete;
    FileSink& operator=(const FileSink&) = delete;

    void write_line(const std::string& line);
    void close();
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::FILE* f_ = nullptr;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace fmgan
