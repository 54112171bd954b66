#include "lifas/augment.hpp"

#include <string>

namespace lifas {

namespace {

float fill_value(const Eigen::MatrixXf& values, MaskFill fill) {
  return fill == MaskFill::mean ? values.mean() : values.minCoeff();
}

}  // namespace

void AugmentPolicy::validate() const {
  if (freq_mask_param < 0 || time_mask_param < 0 || n_freq_masks < 0 || n_time_masks < 0)
    throw Error(Error::Code::bad_argument, "AugmentPolicy: parameters must be >= 0");
}

Spectrogram freq_mask(const Spectrogram& spec, const AugmentPolicy& policy, std::uint64_t rng_seed) {
  policy.validate();
  const Index n_rows = spec.values.rows();
  if (policy.freq_mask_param > n_rows)
    throw Error(Error::Code::bad_argument,
                "freq_mask: F=" + std::to_string(policy.freq_mask_param) + " exceeds " +
                    std::to_string(n_rows) + " mel rows");
  Spectrogram out = spec;
  const float fill = fill_value(spec.values, policy.mask_fill);
  Rng rng(rng_seed);
  for (int m = 0; m < policy.n_freq_masks; ++m) {
    const Index width = rng.uniform_int(0, policy.freq_mask_param);
    const Index start = rng.uniform_int(0, n_rows - width);
    if (width > 0) out.values.middleRows(start, width).setConstant(fill);
  }
  return out;
}

Spectrogram time_mask(const Spectrogram& spec, const AugmentPolicy& policy, std::uint64_t rng_seed) {
  policy.validate();
  const Index n_cols = spec.values.cols();
  if (policy.time_mask_param > n_cols)
    throw Error(Error::Code::bad_argument,
                "time_mask: T=" + std::to_string(policy.time_mask_param) + " exceeds " +
                    std::to_string(n_cols) + " frames");
  Spectrogram out = spec;
  const float fill = fill_value(spec.values, policy.mask_fill);
  Rng rng(rng_seed);
  for (int m = 0; m < policy.n_time_masks; ++m) {
    const Index width = rng.uniform_int(0, policy.time_mask_param);
    const Index start = rng.uniform_int(0, n_cols - width);
    if (width > 0) out.values.middleCols(start, width).setConstant(fill);
  }
  return out;
}

Spectrogram augment(const Spectrogram& spec, const AugmentPolicy& policy, std::uint64_t rng_seed) {
  Spectrogram out = freq_mask(spec, policy, mix_seed(rng_seed, 0x66));
  return time_mask(out, policy, mix_seed(rng_seed, 0x74));
}

}  // namespace lifas
