#include "fmgan/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

namespace fmgan {

void raise(const std::string& msg) { throw Error(msg); }

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

bool shape_eq(const Shape& a, const Shape& b) { return a == b; }

namespace {

int resolve_max_threads() {
    if (const char* env = std::getenv("FMGAN_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Minimal persistent pool. parallel_for hands each worker a fixed chunk of
// the index range, so output ownership is a pure function of n and the
// worker count at dispatch time, and every element is written exactly once.
class Pool {
public:
    explicit Pool(int workers) : stop_(false), job_id_(0), done_count_(0) {
        for (int i = 1; i < workers; ++i) {
            threads_.emplace_back([this, i] { worker_loop(i); });
        }
        workers_ = static_cast<int>(threads_.size()) + 1;
    }

    ~Pool() {
        {
            std::unique_lock<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(int parts, const std::function<void(int)>& part_body) {
        if (parts <= 1) {
            part_body(0);
            return;
        }
        {
            std::unique_lock<std::mutex> lk(mu_);
            body_ = &part_body;
            parts_ = parts;
            done_count_ = 0;
            ++job_id_;
        }
        cv_.notify_all();
        part_body(0);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this, parts] { return done_count_ == parts - 1; });
        body_ = nullptr;
    }

    int workers() const { return workers_; }

private:
    void worker_loop(int id) {
        uint64_t seen = 0;
        for (;;) {
            const std::function<void(int)>* body = nullptr;
            int parts = 0;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [this, &seen] { return stop_ || job_id_ != seen; });
                if (stop_) return;
                seen = job_id_;
                body = body_;
                parts = parts_;
            }
            if (body && id < parts) (*body)(id);
            {
                std::unique_lock<std::mutex> lk(mu_);
                ++done_count_;
            }
            done_cv_.notify_one();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    bool stop_;
    uint64_t job_id_;
    const std::function<void(int)>* body_ = nullptr;
    int parts_ = 0;
    int done_count_;
    int workers_ = 1;
};

Pool& pool() {
    static Pool p(resolve_max_threads());
    return p;
}

}  // namespace

int max_threads() {
    static int n = resolve_max_threads();
    return n;
}

void parallel_for(int64_t n, int64_t grain, const std::function<void(int64_t, int64_t)>& body) {
    if (n <= 0) return;
    int workers = max_threads();
    if (workers <= 1 || n <= grain) {
        body(0, n);
        return;
    }
    int64_t parts64 = std::min<int64_t>(workers, (n + grain - 1) / grain);
    int parts = static_cast<int>(std::max<int64_t>(1, parts64));
    if (parts == 1) {
        body(0, n);
        return;
    }
    int64_t chunk = (n + parts - 1) / parts;
    pool().run(parts, [&](int p) {
        int64_t begin = p * chunk;
        int64_t end = std::min<int64_t>(n, begin + chunk);
        if (begin < end) body(begin, end);
    });
}

}  // namespace fmgan
