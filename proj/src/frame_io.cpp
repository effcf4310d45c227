#include "crossgap/frame.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "crossgap/errors.hpp"
#include "crossgap/log.hpp"

namespace fs = std::filesystem;

namespace crossgap {

namespace {

void validate_config(const StreamConfig& cfg) {
    if (!(cfg.fps > 0)) throw DataError("stream fps must be > 0");
    if (cfg.decimation < 1) throw DataError("decimation factor must be >= 1");
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) continue;
        tok.push_back(static_cast<char>(c));
        while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') tok.push_back(static_cast<char>(in.get()));
        return tok;
    }
    throw DataError("truncated PGM header");
}

long pnm_int(std::istream& in, const char* what) {
    std::string tok = pnm_token(in);
    try {
        std::size_t pos = 0;
        long v = std::stol(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(std::string("malformed PGM ") + what + ": '" + tok + "'");
    }
}

Frame read_pgm_stream(std::istream& in, const std::string& name) {
    std::string magic = pnm_token(in);
    if (magic != "P5") throw DataError("not a binary PGM (P5): " + name);
    long w = pnm_int(in, "width");
    long h = pnm_int(in, "height");
    long maxval = pnm_int(in, "maxval");
    if (w <= 0 || h <= 0) throw DataError("bad PGM dimensions in " + name);
    if (maxval < 1 || maxval > 255) throw DataError("only 8-bit PGM supported (maxval <= 255): " + name);
    in.get();  // single whitespace after maxval

    Frame f;
    f.width = static_cast<int>(w);
    f.height = static_cast<int>(h);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw DataError("truncated PGM pixel data in " + name);
    f.luma.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) f.luma[i] = bytes[i] / 255.0f;
    return f;
}

class PgmDirStream : public FrameStream {
public:
    explicit PgmDirStream(const StreamConfig& cfg) : fps_(cfg.fps) {
        if (cfg.source == "-") throw DataError("PGM-dir source cannot be stdin");
        fs::path dir(cfg.source);
        if (!fs::is_directory(dir)) throw DataError("not a directory: " + cfg.source);
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            std::string ext = entry.path().extension().string();
            if (ext == ".pgm" || ext == ".PGM") files_.push_back(entry.path());
        }
        if (files_.empty()) throw DataError("no .pgm files in " + cfg.source);
        // Lexicographic filename order defines the frame index.
        std::sort(files_.begin(), files_.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
        Frame first = read_pgm(files_.front());
        width_ = first.width;
        height_ = first.height;
    }

    std::optional<Frame> next() override {
        if (pos_ >= files_.size()) return std::nullopt;
        Frame f = read_pgm(files_[pos_]);
        if (f.width != width_ || f.height != height_)
            throw DataError("frame dimension mismatch mid-stream: " + files_[pos_].string());
        f.index = static_cast<std::int64_t>(pos_);
        f.timestamp = static_cast<double>(pos_) / fps_;
        ++pos_;
        return f;
    }

    int width() const override { return width_; }
    int height() const override { return height_; }

private:
    std::vector<fs::path> files_;
    std::size_t pos_ = 0;
    double fps_;
    int width_ = 0;
    int height_ = 0;
};

// ---------------------------------------------------------------------------
// Y4M
// ---------------------------------------------------------------------------

class Y4mStream : public FrameStream {
public:
    explicit Y4mStream(const StreamConfig& cfg) : fps_(cfg.fps) {
        if (cfg.source == "-") {
            in_ = &std::cin;
        } else {
            file_.open(cfg.source, std::ios::binary);
            if (!file_) throw DataError("cannot open " + cfg.source);
            in_ = &file_;
        }
        std::string header;
        if (!std::getline(*in_, header)) throw DataError("empty Y4M stream");
        parse_header(header);
    }

    std::optional<Frame> next() override {
        std::string line;
        if (!std::getline(*in_, line)) return std::nullopt;
        if (line.rfind("FRAME", 0) != 0) throw DataError("malformed Y4M FRAME marker");
        Frame f;
        f.width = width_;
        f.height = height_;
        std::size_t ysize = static_cast<std::size_t>(width_) * height_;
        std::vector<unsigned char> bytes(ysize);
        in_->read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(ysize));
        if (in_->gcount() != static_cast<std::streamsize>(ysize)) throw DataError("truncated Y4M frame");
        if (chroma_size_ > 0) {
            in_->ignore(static_cast<std::streamsize>(chroma_size_));
            if (in_->gcount() != static_cast<std::streamsize>(chroma_size_))
                throw DataError("truncated Y4M chroma planes");
        }
        f.luma.resize(ysize);
        for (std::size_t i = 0; i < ysize; ++i) f.luma[i] = bytes[i] / 255.0f;
        f.index = index_;
        f.timestamp = static_cast<double>(index_) / fps_;
        ++index_;
        return f;
    }

    int width() const override { return width_; }
    int height() const override { return height_; }

private:
    void parse_header(const std::string& header) {
        if (header.rfind("YUV4MPEG2", 0) != 0) throw DataError("missing YUV4MPEG2 signature");
        std::istringstream ss(header.substr(9));
        std::string field;
        std::string colorspace = "420";
        while (ss >> field) {
            switch (field[0]) {
                case 'W': width_ = std::atoi(field.c_str() + 1); break;
                case 'H': height_ = std::atoi(field.c_str() + 1); break;
                case 'C': colorspace = field.substr(1); break;
                default: break;  // F/I/A/X tags carry no data we need
            }
        }
        if (width_ <= 0 || height_ <= 0) throw DataError("bad Y4M dimensions");
        if (colorspace.rfind("420", 0) == 0) {
            if (width_ % 2 != 0 || height_ % 2 != 0) throw DataError("odd dimensions with 4:2:0 chroma");
            chroma_size_ = 2 * static_cast<std::size_t>(width_ / 2) * (height_ / 2);
        } else if (colorspace == "mono") {
            chroma_size_ = 0;
        } else {
            throw DataError("unsupported Y4M colorspace: C" + colorspace);
        }
    }

    std::ifstream file_;
    std::istream* in_ = nullptr;
    double fps_;
    int width_ = 0;
    int height_ = 0;
    std::size_t chroma_size_ = 0;
    std::int64_t index_ = 0;
};

// ---------------------------------------------------------------------------
// RAW8: headerless width*height bytes per frame
// ---------------------------------------------------------------------------

class Raw8Stream : public FrameStream {
public:
    explicit Raw8Stream(const StreamConfig& cfg) : fps_(cfg.fps), width_(cfg.width), height_(cfg.height) {
        if (width_ <= 0 || height_ <= 0) throw DataError("RAW8 requires explicit width and height");
        if (cfg.source == "-") {
            in_ = &std::cin;
        } else {
            file_.open(cfg.source, std::ios::binary);
            if (!file_) throw DataError("cannot open " + cfg.source);
            in_ = &file_;
        }
    }

    std::optional<Frame> next() override {
        std::size_t n = static_cast<std::size_t>(width_) * height_;
        std::vector<unsigned char> bytes(n);
        in_->read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
        std::streamsize got = in_->gcount();
        if (got == 0) return std::nullopt;
        if (got != static_cast<std::streamsize>(n)) throw DataError("truncated RAW8 frame");
        Frame f;
        f.width = width_;
        f.height = height_;
        f.luma.resize(n);
        for (std::size_t i = 0; i < n; ++i) f.luma[i] = bytes[i] / 255.0f;
        f.index = index_;
        f.timestamp = static_cast<double>(index_) / fps_;
        ++index_;
        return f;
    }

    int width() const override { return width_; }
    int height() const override { return height_; }

private:
    std::ifstream file_;
    std::istream* in_ = nullptr;
    double fps_;
    int width_;
    int height_;
    std::int64_t index_ = 0;
};

class DecimatedStream : public FrameStream {
public:
    DecimatedStream(std::unique_ptr<FrameStream> inner, int k) : inner_(std::move(inner)), k_(k) {
        if (k_ < 1) throw DataError("decimation factor must be >= 1");
    }

    std::optional<Frame> next() override {
        while (auto f = inner_->next()) {
            if (f->index % k_ == 0) return f;
        }
        return std::nullopt;
    }

    int width() const override { return inner_->width(); }
    int height() const override { return inner_->height(); }

private:
    std::unique_ptr<FrameStream> inner_;
    int k_;
};

}  // namespace

std::unique_ptr<FrameStream> open_stream(const StreamConfig& cfg) {
    validate_config(cfg);
    std::unique_ptr<FrameStream> s;
    switch (cfg.format) {
        case StreamFormat::kPgmDir: s = std::make_unique<PgmDirStream>(cfg); break;
        case StreamFormat::kY4m: s = std::make_unique<Y4mStream>(cfg); break;
        case StreamFormat::kRaw8: s = std::make_unique<Raw8Stream>(cfg); break;
    }
    if (cfg.decimation > 1) s = decimate(std::move(s), cfg.decimation);
    return s;
}

std::unique_ptr<FrameStream> decimate(std::unique_ptr<FrameStream> stream, int k) {
    if (k == 1) return stream;
    return std::make_unique<DecimatedStream>(std::move(stream), k);
}

Frame read_pgm(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DataError("cannot open " + file.string());
    return read_pgm_stream(in, file.string());
}

void write_pgm(const fs::path& file, const Frame& frame) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + file.string());
    out << "P5\n" << frame.width << " " << frame.height << "\n255\n";
    std::vector<unsigned char> bytes(frame.luma.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        float v = std::clamp(frame.luma[i], 0.0f, 1.0f);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RuntimeError("short write to " + file.string());
}

void write_pgm_dir(const fs::path& dir, FrameStream& frames) {
    fs::create_directories(dir);
    char name[32];
    std::int64_t written = 0;
    while (auto f = frames.next()) {
        std::snprintf(name, sizeof(name), "frame_%08lld.pgm", static_cast<long long>(written));
        write_pgm(dir / name, *f);
        ++written;
    }
    log::info("wrote %lld frames to %s", static_cast<long long>(written), dir.c_str());
}

void write_y4m(const fs::path& file, const std::vector<Frame>& frames, double fps) {
    if (frames.empty()) throw DataError("no frames to write");
    std::ofstream out(file, std::ios::binary);
    if (!out) throw RuntimeError("cannot write " + file.string());
    long num = std::lround(fps * 1000.0);
    out << "YUV4MPEG2 W" << frames[0].width << " H" << frames[0].height << " F" << num << ":1000 Ip A1:1 Cmono\n";
    std::vector<unsigned char> bytes;
    for (const Frame& f : frames) {
        if (f.width != frames[0].width || f.height != frames[0].height)
            throw DataError("Y4M frames must share dimensions");
        out << "FRAME\n";
        bytes.resize(f.luma.size());
        for (std::size_t i = 0; i < bytes.size(); ++i)
            bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(f.luma[i], 0.0f, 1.0f) * 255.0f));
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    if (!out) throw RuntimeError("short write to " + file.string());
}

// ---------------------------------------------------------------------------
// QueuedStream
// ---------------------------------------------------------------------------

struct QueuedStream::Impl {
    std::unique_ptr<FrameStream> inner;
    BoundedQueue<Frame> queue;
    std::thread producer;
    std::atomic<bool> done{false};
    std::exception_ptr error;
    std::mutex error_mu;

    Impl(std::unique_ptr<FrameStream> s, std::size_t capacity) : inner(std::move(s)), queue(capacity) {}
};

QueuedStream::QueuedStream(std::unique_ptr<FrameStream> inner, std::size_t capacity)
    : impl_(std::make_unique<Impl>(std::move(inner), capacity)) {
    width_ = impl_->inner->width();
    height_ = impl_->inner->height();
    Impl* impl = impl_.get();
    impl->producer = std::thread([impl] {
        try {
            while (auto f = impl->inner->next()) {
                if (!impl->queue.push(std::move(*f))) break;  // consumer gone
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(impl->error_mu);
            impl->error = std::current_exception();
        }
        impl->queue.close();
    });
}

QueuedStream::~QueuedStream() {
    impl_->queue.close();
    if (impl_->producer.joinable()) impl_->producer.join();
}

std::optional<Frame> QueuedStream::next() {
    auto f = impl_->queue.pop();
    if (!f) {
        std::lock_guard<std::mutex> lock(impl_->error_mu);
        if (impl_->error) std::rethrow_exception(impl_->error);
    }
    return f;
}

}  // namespace crossgap
