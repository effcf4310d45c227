#ifndef CROSSGAP_FRAME_HPP
#define CROSSGAP_FRAME_HPP

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace crossgap {

// One grayscale frame. Luma is row-major, values in [0, 1].
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<float> luma;
    std::int64_t index = 0;  // ordinal in the original stream
    double timestamp = 0.0;  // seconds since stream start (= index / fps)

    float at(int x, int y) const { return luma[static_cast<std::size_t>(y) * width + x]; }
    float& at(int x, int y) { return luma[static_cast<std::size_t>(y) * width + x]; }
};

enum class StreamFormat { kPgmDir, kY4m, kRaw8 };

struct StreamConfig {
    std::string source;  // path; "-" means stdin (Y4M and RAW8 only)
    StreamFormat format = StreamFormat::kPgmDir;
    double fps = 8.0;    // must be > 0; timestamps are index / fps
    int decimation = 1;  // keep every k-th frame, k >= 1
    int width = 0;       // RAW8 only
    int height = 0;      // RAW8 only
};

// Pull-based frame source. next() returns nullopt at end of stream and throws
// DataError on malformed input. All frames of one stream share dimensions.
class FrameStream {
public:
    virtual ~FrameStream() = default;
    virtual std::optional<Frame> next() = 0;
    virtual int width() const = 0;
    virtual int height() const = 0;
};

std::unique_ptr<FrameStream> open_stream(const StreamConfig& cfg);

// Passes every k-th frame through; retained frames keep their original
// indices and timestamps.
std::unique_ptr<FrameStream> decimate(std::unique_ptr<FrameStream> stream, int k);

// Single-frame PGM I/O (binary P5, 8-bit).
Frame read_pgm(const std::filesystem::path& file);
void write_pgm(const std::filesystem::path& file, const Frame& frame);

// Writes frames as zero-padded .pgm files into dir (created if missing).
void write_pgm_dir(const std::filesystem::path& dir, FrameStream& frames);

// Mono Y4M writer; frames must share dimensions. fps is rounded to a
// rational with denominator 1000.
void write_y4m(const std::filesystem::path& file, const std::vector<Frame>& frames, double fps);

// Bounded blocking queue. push() blocks while full (backpressure) and
// returns false once closed; pop() blocks while empty and returns nullopt
// after close() once drained.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity = 8) : capacity_(capacity == 0 ? 1 : capacity) {}

    bool push(T value) {
        std::unique_lock<std::mutex> lock(mu_);
        not_full_.wait(lock, [this] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(value));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock<std::mutex> lock(mu_);
        not_empty_.wait(lock, [this] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T value = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return value;
    }

    void close() {
        std::lock_guard<std::mutex> lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable not_full_;
    std::condition_variable not_empty_;
    std::deque<T> items_;
    bool closed_ = false;
};

// Runs the wrapped stream's production on a dedicated thread feeding a
// bounded queue; next() consumes from the queue. No frame is dropped.
class QueuedStream : public FrameStream {
public:
    explicit QueuedStream(std::unique_ptr<FrameStream> inner, std::size_t capacity = 8);
    ~QueuedStream() override;

    std::optional<Frame> next() override;
    int width() const override { return width_; }
    int height() const override { return height_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int width_ = 0;
    int height_ = 0;
};

}  // namespace crossgap

#endif
