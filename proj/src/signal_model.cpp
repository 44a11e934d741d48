#include "gscaec/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <numeric>

#include "gscaec/errors.hpp"
#include "gscaec/linalg.hpp"
#include "gscaec/rng.hpp"
#include "gscaec/wav.hpp"

namespace gscaec {
namespace {

constexpr std::int64_t kMaxPrototypeTicks = 100'000'000;

// Windowed-sinc lowpass with cutoff at 1/factor of Nyquist.
std::vector<double> interpolation_kernel(int factor) {
  if (factor == 1) return {1.0};
  const int half = 8 * factor;
  std::vector<double> g(2 * half + 1);
  for (int k = -half; k <= half; ++k) {
    const double x = static_cast<double>(k) / factor;
    const double sinc = k == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double t = static_cast<double>(k + half) / (2 * half);
    const double blackman = 0.42 - 0.5 * std::cos(2 * std::numbers::pi * t) +
                            0.08 * std::cos(4 * std::numbers::pi * t);
    g[k + half] = sinc * blackman;
  }
  return g;
}

void check_dims(const RegressorDims& d) {
  if (d.mics < 1 || d.bf_taps < 1 || d.aec_taps < 1)
    throw ConfigError(fmt::format("regressor dimensions must be positive (M={}, N_BF={}, N_AEC={})",
                                  d.mics, d.bf_taps, d.aec_taps));
}

}  // namespace

LemPlant gen_lem_plant(const PlantSpec& spec) {
  if (spec.mics < 1 || spec.taps < 1) throw ConfigError("plant needs at least one mic and one tap");
  if (spec.oversample < 1) throw ConfigError("oversampling factor must be >= 1");
  if (!(spec.t60 > 0) || !(spec.fs > 0)) throw ConfigError("T60 and fs must be positive");
  if (spec.mic_spacing < 0) throw ConfigError("mic spacing must be non-negative");
  const std::int64_t F = spec.oversample;
  if (static_cast<std::int64_t>(spec.taps) > kMaxPrototypeTicks / F)
    throw ConfigError(fmt::format("oversampled prototype too long ({} x {})", F, spec.taps));
  const std::int64_t ticks = F * spec.taps;

  const std::int64_t last_offset = static_cast<std::int64_t>(spec.mics - 1) * spec.mic_spacing;
  if (last_offset / F >= spec.taps)
    throw ConfigError(fmt::format("mic offset of {} ticks delays microphone {} past the last tap",
                                  last_offset, spec.mics - 1));

  const auto kernel = interpolation_kernel(spec.oversample);
  const auto klen = static_cast<std::int64_t>(kernel.size());
  auto rng = make_engine(spec.seed, Stream::plant);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> white(static_cast<std::size_t>(ticks + klen - 1));
  for (auto& w : white) w = normal(rng);

  const double decay = 3.0 * std::log(10.0) / (static_cast<double>(F) * spec.fs * spec.t60);
  std::vector<double> proto(static_cast<std::size_t>(ticks));
  for (std::int64_t i = 0; i < ticks; ++i) {
    double acc = 0.0;
    for (std::int64_t k = 0; k < klen; ++k) acc += kernel[k] * white[i + klen - 1 - k];
    proto[i] = acc * std::exp(-decay * static_cast<double>(i));
  }

  LemPlant plant{MatrixXd::Zero(spec.taps, spec.mics), spec.fs, spec.t60, spec.oversample};
  for (int m = 0; m < spec.mics; ++m) {
    const std::int64_t offset = static_cast<std::int64_t>(m) * spec.mic_spacing;
    const std::int64_t whole = offset / F;
    const std::int64_t phase = offset % F;
    for (std::int64_t k = whole; k < spec.taps; ++k) plant.H(k, m) = proto[F * (k - whole) + phase];
  }
  const double norm0 = plant.H.col(0).norm();
  if (!(norm0 > 0)) throw NumericalError("generated plant has a zero reference column");
  plant.H /= norm0;
  return plant;
}

MatrixXd steer_plant(const MatrixXd& H, std::span<const int> delays) {
  if (static_cast<Eigen::Index>(delays.size()) != H.cols())
    throw ConfigError(fmt::format("{} steering delays given for {} microphones", delays.size(),
                                  H.cols()));
  int max_delay = 0;
  for (int d : delays) {
    if (d < 0) throw ConfigError("steering delays must be non-negative");
    max_delay = std::max(max_delay, d);
  }
  MatrixXd out = MatrixXd::Zero(H.rows() + max_delay, H.cols());
  for (Eigen::Index m = 0; m < H.cols(); ++m) out.col(m).segment(delays[m], H.rows()) = H.col(m);
  return out;
}

MatrixXd build_modified_channel_matrix(const MatrixXd& H, int bf_taps) {
  if (bf_taps < 1) throw ConfigError("beamformer length must be >= 1");
  const Eigen::Index nh = H.rows(), m = H.cols();
  MatrixXd calH = MatrixXd::Zero(nh + bf_taps - 1, m * bf_taps);
  for (int l = 0; l < bf_taps; ++l) calH.block(l, l * m, nh, m) = H;
  return calH;
}

// ---------------------------------------------------------------------------

FarEndModel FarEndModel::ar1(double a1, double variance) {
  FarEndModel m;
  m.kind = FarEndKind::ar1;
  m.a1 = a1;
  m.variance = variance;
  return m;
}

FarEndModel FarEndModel::white(double variance) {
  FarEndModel m;
  m.kind = FarEndKind::white;
  m.variance = variance;
  return m;
}

FarEndModel FarEndModel::file(const std::string& path) {
  FarEndModel m;
  m.kind = FarEndKind::file;
  m.path = path;
  auto wav = read_wav_pcm16(path);
  if (wav.samples.empty()) throw ConfigError(fmt::format("WAV file '{}' has no samples", path));
  const double power = std::inner_product(wav.samples.begin(), wav.samples.end(),
                                          wav.samples.begin(), 0.0) /
                       static_cast<double>(wav.samples.size());
  if (!(power > 0)) throw ConfigError(fmt::format("WAV file '{}' is silent", path));
  const double g = 1.0 / std::sqrt(power);
  for (auto& s : wav.samples) s *= g;
  m.samples = std::make_shared<const std::vector<double>>(std::move(wav.samples));
  return m;
}

FarEndModel FarEndModel::sequence(std::vector<double> samples) {
  if (samples.empty()) throw ConfigError("far-end sequence is empty");
  FarEndModel m;
  m.kind = FarEndKind::file;
  m.samples = std::make_shared<const std::vector<double>>(std::move(samples));
  m.start = 0;
  return m;
}

VectorXd far_end_autocorrelation(const FarEndModel& model, int lags) {
  if (!model.has_closed_form())
    throw ConfigError("far-end model has no closed-form autocorrelation; estimate it from samples");
  VectorXd r = VectorXd::Zero(lags);
  if (lags == 0) return r;
  if (model.kind == FarEndKind::white) {
    r(0) = model.variance;
    return r;
  }
  if (!(std::abs(model.a1) < 1)) throw ConfigError("AR(1) pole must satisfy |a1| < 1");
  double v = model.variance;
  for (int k = 0; k < lags; ++k) {
    r(k) = v;
    v *= -model.a1;
  }
  return r;
}

FarEndSource::FarEndSource(FarEndModel model, std::uint64_t seed)
    : model_(std::move(model)),
      rng_(make_engine(seed, Stream::far_end)),
      walk_rng_(make_engine(seed, Stream::nonstationarity)) {
  if (model_.kind == FarEndKind::ar1 && !(std::abs(model_.a1) < 1))
    throw ConfigError("AR(1) pole must satisfy |a1| < 1");
  if (model_.variance < 0) throw ConfigError("far-end variance must be non-negative");
  if (model_.kind == FarEndKind::file) {
    if (!model_.samples || model_.samples->empty())
      throw ConfigError("file far-end model has no samples loaded");
    if (model_.start) {
      file_pos_ = *model_.start % model_.samples->size();
    } else {
      auto off = make_engine(seed, Stream::file_offset);
      file_pos_ = static_cast<std::size_t>(off() % model_.samples->size());
    }
  }
}

double FarEndSource::next() {
  double u = 0.0;
  switch (model_.kind) {
    case FarEndKind::white:
      u = std::sqrt(model_.variance) * normal_(rng_);
      break;
    case FarEndKind::ar1:
      if (!started_) {
        u = std::sqrt(model_.variance) * normal_(rng_);  // stationary start
        started_ = true;
      } else {
        const double sz = std::sqrt(model_.variance * (1.0 - model_.a1 * model_.a1));
        u = -model_.a1 * prev_ + sz * normal_(rng_);
      }
      prev_ = u;
      break;
    case FarEndKind::file: {
      const auto& s = *model_.samples;
      u = std::sqrt(model_.variance) * s[file_pos_];
      file_pos_ = (file_pos_ + 1) % s.size();
      break;
    }
  }
  if (model_.eta > 0) {
    log_power_ += model_.eta * normal_(walk_rng_);
    u *= std::exp(0.5 * log_power_);
  }
  return u;
}

std::vector<double> gen_far_end(const FarEndModel& model, std::size_t n_samples,
                                std::uint64_t seed) {
  if (n_samples < 1) throw ConfigError("need at least one far-end sample");
  FarEndSource src(model, seed);
  std::vector<double> out(n_samples);
  for (auto& u : out) u = src.next();
  return out;
}

// ---------------------------------------------------------------------------

std::int64_t warmup_length(int plant_taps, const RegressorDims& dims) {
  return std::max<std::int64_t>(plant_taps + dims.bf_taps, dims.aec_taps);
}

RegressorStream::RegressorStream(MatrixXd H, FarEndModel far_end, NearEndModel near_end,
                                 RegressorDims dims, std::uint64_t seed)
    : H_(std::move(H)),
      dims_(dims),
      far_(std::move(far_end), seed),
      noise_rng_(make_engine(seed, Stream::noise)),
      interferer_rng_(make_engine(seed, Stream::interferer)) {
  check_dims(dims_);
  if (H_.cols() != dims_.mics)
    throw ConfigError(fmt::format("plant has {} columns but {} microphones were requested",
                                  H_.cols(), dims_.mics));
  ext_len_ = static_cast<int>(H_.rows()) + dims_.bf_taps - 1;
  if (dims_.aec_taps > ext_len_)
    throw ConfigError(fmt::format("N_AEC = {} exceeds N_h + N_BF - 1 = {}", dims_.aec_taps,
                                  ext_len_));
  u_line_ = VectorXd::Zero(ext_len_);
  snapshot_ = VectorXd::Zero(dims_.mics);
  b_ = VectorXd::Zero(dims_.size());
  set_near_end(std::move(near_end));
}

void RegressorStream::set_plant(MatrixXd H) {
  if (H.rows() != H_.rows() || H.cols() != H_.cols())
    throw ConfigError("replacement plant must keep the same tap count and microphone count");
  H_ = std::move(H);
}

void RegressorStream::set_near_end(NearEndModel near_end) {
  if (near_end.noise_var < 0) throw ConfigError("noise variance must be non-negative");
  if (near_end.interferer) {
    const auto& it = *near_end.interferer;
    if (it.power < 0) throw ConfigError("interferer power must be non-negative");
    if (!(std::abs(it.a1) < 1)) throw ConfigError("interferer AR(1) pole must satisfy |a1| < 1");
    if (static_cast<int>(it.delays.size()) != dims_.mics)
      throw ConfigError("interferer needs one arrival delay per microphone");
    int max_delay = 0;
    for (int d : it.delays) {
      if (d < 0) throw ConfigError("interferer delays must be non-negative");
      max_delay = std::max(max_delay, d);
    }
    s_line_ = VectorXd::Zero(max_delay + 1);
    interferer_started_ = false;
  }
  near_ = std::move(near_end);
}

const VectorXd& RegressorStream::next() {
  const int M = dims_.mics;
  const auto nh = H_.rows();

  std::copy_backward(u_line_.data(), u_line_.data() + ext_len_ - 1, u_line_.data() + ext_len_);
  u_line_(0) = far_.next();

  snapshot_.noalias() = H_.transpose() * u_line_.head(nh);
  if (near_.noise_var > 0) {
    const double sn = std::sqrt(near_.noise_var);
    for (int m = 0; m < M; ++m) snapshot_(m) += sn * normal_(noise_rng_);
  }
  if (near_.interferer) {
    const auto& it = *near_.interferer;
    const auto len = s_line_.size();
    std::copy_backward(s_line_.data(), s_line_.data() + len - 1, s_line_.data() + len);
    const double z = normal_(interferer_rng_);
    double s = std::sqrt(it.power) * z;  // stationary start
    if (interferer_started_)
      s = -it.a1 * s_line_(std::min<Eigen::Index>(1, len - 1)) +
          std::sqrt(it.power * (1 - it.a1 * it.a1)) * z;
    interferer_started_ = true;
    s_line_(0) = s;
    for (int m = 0; m < M; ++m) snapshot_(m) += s_line_(it.delays[m]);
  }

  b_.head(dims_.aec_taps) = -u_line_.head(dims_.aec_taps);
  double* xw = b_.data() + dims_.aec_taps;
  const int bf = dims_.bf_size();
  std::copy_backward(xw, xw + bf - M, xw + bf);
  std::copy(snapshot_.data(), snapshot_.data() + M, xw);
  ++n_;
  return b_;
}

MatrixXd analytic_Rbb(const FarEndModel& far_end, const MatrixXd& calH,
                      const NearEndModel& near_end, const RegressorDims& dims) {
  check_dims(dims);
  const Eigen::Index L = calH.rows();
  const int na = dims.aec_taps, nw = dims.bf_size(), M = dims.mics;
  if (calH.cols() != nw)
    throw ConfigError(fmt::format("modified channel matrix has {} columns, expected M*N_BF = {}",
                                  calH.cols(), nw));
  if (na > L)
    throw ConfigError(fmt::format("N_AEC = {} exceeds N_h + N_BF - 1 = {}", na, L));
  if (near_end.noise_var < 0) throw ConfigError("noise variance must be non-negative");

  const MatrixXd Ruu = linalg::toeplitz(far_end_autocorrelation(far_end, static_cast<int>(L)));
  MatrixXd R(na + nw, na + nw);
  R.topLeftCorner(na, na) = Ruu.topLeftCorner(na, na);
  const MatrixXd RuH = Ruu * calH;
  R.topRightCorner(na, nw) = -RuH.topRows(na);
  R.bottomLeftCorner(nw, na) = R.topRightCorner(na, nw).transpose();
  MatrixXd Rxx = calH.transpose() * RuH;
  Rxx.diagonal().array() += near_end.noise_var;
  if (near_end.interferer) {
    const auto& it = *near_end.interferer;
    if (static_cast<int>(it.delays.size()) != M)
      throw ConfigError("interferer needs one arrival delay per microphone");
    const double c = -it.a1;
    for (int k = 0; k < dims.bf_taps; ++k)
      for (int m = 0; m < M; ++m)
        for (int l = 0; l < dims.bf_taps; ++l)
          for (int mm = 0; mm < M; ++mm) {
            const int lag = std::abs((k + it.delays[m]) - (l + it.delays[mm]));
            Rxx(k * M + m, l * M + mm) += it.power * std::pow(c, lag);
          }
  }
  R.bottomRightCorner(nw, nw) = Rxx;
  return linalg::symmetrize(R);
}

MatrixXd sample_Rbb(RegressorStream& stream, std::int64_t n_samples) {
  if (n_samples < 1) throw ConfigError("need at least one sample for covariance estimation");
  const int n = stream.dims().size();
  MatrixXd acc = MatrixXd::Zero(n, n);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const VectorXd& b = stream.next();
    acc.selfadjointView<Eigen::Lower>().rankUpdate(b);
  }
  MatrixXd full = acc.selfadjointView<Eigen::Lower>();
  return full / static_cast<double>(n_samples);
}

}  // namespace gscaec
