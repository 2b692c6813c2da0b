#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

namespace maglive::detail {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class Plan {
public:
    template <typename Make>
    explicit Plan(Make&& make) {
        std::lock_guard lock(planner_mutex());
        plan_ = make();
    }
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;

    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_ = nullptr;
};

std::vector<std::complex<double>> c2c(const std::vector<std::complex<double>>& in, int sign) {
    const int n = static_cast<int>(in.size());
    std::vector<std::complex<double>> out(in.size());
    if (n == 0) return out;
    std::vector<std::complex<double>> buf(in);
    auto* ip = reinterpret_cast<fftw_complex*>(buf.data());
    auto* op = reinterpret_cast<fftw_complex*>(out.data());
    Plan plan([&] { return fftw_plan_dft_1d(n, ip, op, sign, FFTW_ESTIMATE); });
    plan.execute();
    return out;
}

}  // namespace

std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& in) {
    return c2c(in, FFTW_FORWARD);
}

std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& in) {
    auto out = c2c(in, FFTW_BACKWARD);
    const double scale = out.empty() ? 1.0 : 1.0 / static_cast<double>(out.size());
    for (auto& v : out) v *= scale;
    return out;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& in) {
    const int n = static_cast<int>(in.size());
    std::vector<std::complex<double>> out(in.size() / 2 + 1);
    if (n == 0) return {};
    std::vector<double> buf(in);
    auto* op = reinterpret_cast<fftw_complex*>(out.data());
    Plan plan([&] { return fftw_plan_dft_r2c_1d(n, buf.data(), op, FFTW_ESTIMATE); });
    plan.execute();
    return out;
}

std::vector<std::complex<double>> rfft_many(const std::vector<double>& frames, std::size_t n, std::size_t count) {
    const std::size_t bins = n / 2 + 1;
    std::vector<std::complex<double>> out(bins * count);
    if (n == 0 || count == 0) return out;
    std::vector<double> buf(frames);
    auto* op = reinterpret_cast<fftw_complex*>(out.data());
    const int len = static_cast<int>(n);
    Plan plan([&] {
        return fftw_plan_many_dft_r2c(1, &len, static_cast<int>(count), buf.data(), nullptr, 1, len, op, nullptr, 1,
                                      static_cast<int>(bins), FFTW_ESTIMATE);
    });
    plan.execute();
    return out;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, std::size_t n) {
    std::vector<double> out(n);
    if (n == 0) return out;
    std::vector<std::complex<double>> buf(n / 2 + 1);
    std::copy_n(spectrum.begin(), std::min(spectrum.size(), buf.size()), buf.begin());
    auto* ip = reinterpret_cast<fftw_complex*>(buf.data());
    Plan plan([&] { return fftw_plan_dft_c2r_1d(static_cast<int>(n), ip, out.data(), FFTW_ESTIMATE); });
    plan.execute();
    const double scale = 1.0 / static_cast<double>(n);
    for (double& v : out) v *= scale;
    return out;
}

}  // namespace maglive::detail
