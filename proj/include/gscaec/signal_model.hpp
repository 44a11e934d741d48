#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gscaec {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Loudspeaker-enclosure-microphone plant
// ---------------------------------------------------------------------------

struct PlantSpec {
  int mics = 2;
  int taps = 128;
  double fs = 8000.0;
  double t60 = 0.016;     // seconds
  int oversample = 5;     // prototype ticks per output sample
  int mic_spacing = 1;    // inter-microphone offset, in prototype ticks
  std::uint64_t seed = 1;

  bool operator==(const PlantSpec&) const = default;
};

/// Echo impulse responses, one column per microphone.
struct LemPlant {
  MatrixXd H;
  double fs = 0;
  double t60 = 0;
  int oversample = 1;

  int taps() const { return static_cast<int>(H.rows()); }
  int mics() const { return static_cast<int>(H.cols()); }
};

/// Spatially correlated exponentially decaying responses.
///
/// A band-limited Gaussian prototype is drawn at `oversample` times the
/// output rate and shaped by the envelope exp(-3 ln10 t / T60) (60 dB energy
/// decay over T60). Microphone m reads the prototype with a delay of
/// m * mic_spacing ticks: the delay modulo `oversample` selects the
/// decimation phase and every full `oversample` ticks carries into one
/// whole-sample delay of that column. All columns share the scale that gives
/// column 0 unit energy.
LemPlant gen_lem_plant(const PlantSpec& spec);

/// Delays column m of H by delays[m] samples (presteering). The result has
/// taps + max(delays) rows.
MatrixXd steer_plant(const MatrixXd& H, std::span<const int> delays);

/// Block-shift matrix mapping the extended far-end vector onto the stacked
/// echo window: column block l holds H moved down by l rows.
/// Size (N_h + N_BF - 1) x (M * N_BF).
MatrixXd build_modified_channel_matrix(const MatrixXd& H, int bf_taps);

// ---------------------------------------------------------------------------
// Signals
// ---------------------------------------------------------------------------

enum class FarEndKind { ar1, white, file };

struct FarEndModel {
  FarEndKind kind = FarEndKind::ar1;
  double a1 = -0.9;       // u[n] = -a1 u[n-1] + z[n]
  double variance = 1.0;
  std::string path;       // file kind only
  double eta = 0.0;       // log-power random-walk increment std (0 = stationary)
  std::shared_ptr<const std::vector<double>> samples;  // file kind, unit power
  std::optional<std::size_t> start;  // file kind: first index (default: seed-derived)

  static FarEndModel ar1(double a1, double variance = 1.0);
  static FarEndModel white(double variance = 1.0);
  /// Loads a PCM16 mono WAV and normalizes it to unit power.
  static FarEndModel file(const std::string& path);
  /// Replays `samples` as given (no normalization) from index 0, cyclically.
  static FarEndModel sequence(std::vector<double> samples);

  bool has_closed_form() const { return kind != FarEndKind::file && eta == 0.0; }
};

/// r[k] = E{u[n] u[n-k]}, k = 0..lags-1. Throws ConfigError for models with
/// no closed form (file input, nonstationary power).
VectorXd far_end_autocorrelation(const FarEndModel& model, int lags);

/// Near-end interferer: an AR(1) source reaching microphone m delays[m]
/// samples late.
struct Interferer {
  double power = 1.0;
  double a1 = -0.9;
  std::vector<int> delays;

  bool operator==(const Interferer&) const = default;
};

struct NearEndModel {
  double noise_var = 1e-2;  // per-microphone white noise
  std::optional<Interferer> interferer;
};

/// Sample-by-sample far-end generator.
class FarEndSource {
 public:
  FarEndSource(FarEndModel model, std::uint64_t seed);
  double next();

 private:
  FarEndModel model_;
  std::mt19937_64 rng_;
  std::mt19937_64 walk_rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double prev_ = 0.0;
  bool started_ = false;
  std::size_t file_pos_ = 0;
  double log_power_ = 0.0;
};

std::vector<double> gen_far_end(const FarEndModel& model, std::size_t n_samples,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Stacked regressor b[n] = [-u_hc[n]; x_w[n]]
// ---------------------------------------------------------------------------

struct RegressorDims {
  int mics = 2;
  int bf_taps = 16;
  int aec_taps = 128;

  int bf_size() const { return mics * bf_taps; }
  int size() const { return aec_taps + mics * bf_taps; }
  bool operator==(const RegressorDims&) const = default;
};

/// Number of leading samples during which the delay lines are still filling.
std::int64_t warmup_length(int plant_taps, const RegressorDims& dims);

/// Streams b[n] for one realization. Delay lines start at zero. x_w is
/// snapshot-major (all microphones at lag 0, then lag 1, ...).
class RegressorStream {
 public:
  RegressorStream(MatrixXd H, FarEndModel far_end, NearEndModel near_end, RegressorDims dims,
                  std::uint64_t seed);

  const VectorXd& next();

  /// Swaps the plant; delay lines keep their contents.
  void set_plant(MatrixXd H);
  void set_near_end(NearEndModel near_end);

  /// [u[n], ..., u[n - (N_h + N_BF - 2)]] for the most recent sample.
  VectorXd extended_far_end() const { return u_line_.head(ext_len_); }
  const VectorXd& current() const { return b_; }
  std::int64_t index() const { return n_; }
  const RegressorDims& dims() const { return dims_; }

 private:
  MatrixXd H_;
  NearEndModel near_;
  RegressorDims dims_;
  FarEndSource far_;
  std::mt19937_64 noise_rng_;
  std::mt19937_64 interferer_rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  int ext_len_ = 0;
  VectorXd u_line_;
  VectorXd s_line_;  // interferer source history
  bool interferer_started_ = false;
  VectorXd snapshot_;
  VectorXd b_;
  std::int64_t n_ = 0;
};

/// Closed-form E{b b^T} for AR(1)/white far-end input: Toeplitz AEC block,
/// calH^T R_uu calH + R_rr beamformer block and -S R_uu calH cross block.
MatrixXd analytic_Rbb(const FarEndModel& far_end, const MatrixXd& calH,
                      const NearEndModel& near_end, const RegressorDims& dims);

/// Sample estimate (1/n) sum b b^T drawn from `stream`.
MatrixXd sample_Rbb(RegressorStream& stream, std::int64_t n_samples);

}  // namespace gscaec
