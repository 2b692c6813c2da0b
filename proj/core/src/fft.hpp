#pragma once

#include <complex>
#include <vector>

namespace maglive::detail {

// Thin wrappers over FFTW (estimate-mode plans, fresh per call). Plan creation
// is serialized internally, execution is not.
std::vector<std::complex<double>> fft(const std::vector<std::complex<double>>& in);
std::vector<std::complex<double>> ifft(const std::vector<std::complex<double>>& in);  // scaled by 1/n

// Real input, returns the n/2 + 1 non-negative frequency bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& in);
// `count` contiguous real frames of length n; returns count * (n/2 + 1) bins.
std::vector<std::complex<double>> rfft_many(const std::vector<double>& frames, std::size_t n, std::size_t count);

// Inverse of rfft for a length-n real signal, scaled by 1/n.
std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum, std::size_t n);

}  // namespace maglive::detail
