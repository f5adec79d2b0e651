#include "vqrank/synthetic.hpp"

#include <cmath>
#include <string>

#include "vqrank/errors.hpp"
#include "vqrank/rng.hpp"

namespace vqr {

namespace {

constexpr std::uint64_t kGeometryStream = 0x6e6f6d65;
constexpr std::uint64_t kRecordStream = 0x7265636f;
constexpr std::size_t kSpliceSegments = 3;

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (double& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::size_t other_topic(Rng& rng, std::size_t a, std::size_t b) {
  for (;;) {
    const auto t = static_cast<std::size_t>(rng.below(kTopicCount));
    if (t != a && t != b) return t;
  }
}

// center + noise, optionally shifted along a defect direction.
void emit_row(Rng& rng, const std::vector<double>& center, double noise,
              const std::vector<double>* shift, double shift_scale, float* out) {
  const double sigma = noise / std::sqrt(static_cast<double>(center.size()));
  for (std::size_t k = 0; k < center.size(); ++k) {
    double v = center[k] + sigma * rng.normal();
    if (shift) v += shift_scale * (*shift)[k];
    out[k] = static_cast<float>(v);
  }
}

std::vector<double> blend(const std::vector<double>& a, const std::vector<double>& b, double s) {
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = (1.0 - s) * a[k] + s * b[k];
  return out;
}

}  // namespace

bool DefectFlags::has(Defect d) const {
  switch (d) {
    case Defect::kIncoherence:
      return incoherence;
    case Defect::kTextMismatch:
      return text_mismatch;
    case Defect::kVisualDefect:
      return visual_defect;
    case Defect::kTextDefect:
      return text_defect;
  }
  return false;
}

void SynthConfig::validate() const {
  if (n_records == 0) throw ConfigError("synth: n_records must be positive");
  if (text_dim == 0 || frame_dim == 0) throw ConfigError("synth: embedding dimensions must be positive");
  if (frames < 1 || frames > kMaxFrames) {
    throw ConfigError("synth: frames must lie in 1.." + std::to_string(kMaxFrames));
  }
  for (const double p : defect_probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("synth: defect probabilities must lie in [0, 1]");
  }
  if (!(defect_magnitude > 0.0)) throw ConfigError("synth: defect magnitude must be positive");
  if (!(noise >= 0.0)) throw ConfigError("synth: noise must be non-negative");
}

Grade assign_grade(const DefectFlags& flags, bool mild) {
  switch (flags.count()) {
    case 0:
      return Grade::kExcellent;
    case 1:
      return mild ? Grade::kGood : Grade::kFair;
    default:
      return Grade::kBad;
  }
}

SynthGeometry make_geometry(const SynthConfig& config) {
  Rng rng(derive_seed(config.seed, kGeometryStream));
  SynthGeometry g;
  for (std::size_t t = 0; t < kTopicCount; ++t) g.frame_centroids.push_back(random_unit(rng, config.frame_dim));
  for (std::size_t t = 0; t < kTopicCount; ++t) g.text_centroids.push_back(random_unit(rng, config.text_dim));
  g.visual_direction = random_unit(rng, config.frame_dim);
  g.text_direction = random_unit(rng, config.text_dim);
  return g;
}

SyntheticCorpus generate_corpus(const SynthConfig& config) {
  config.validate();
  const SynthGeometry geo = make_geometry(config);
  const std::size_t m = config.frames;
  const std::size_t df = config.frame_dim;
  const std::size_t dt = config.text_dim;

  SyntheticCorpus out;
  out.records.reserve(config.n_records);
  for (std::size_t i = 0; i < config.n_records; ++i) {
    Rng rng(derive_seed(config.seed, kRecordStream, i));
    const auto topic = static_cast<std::size_t>(rng.below(kTopicCount));

    DefectFlags flags;
    flags.incoherence = rng.bernoulli(config.defect_probabilities[0]);
    flags.text_mismatch = rng.bernoulli(config.defect_probabilities[1]);
    flags.visual_defect = rng.bernoulli(config.defect_probabilities[2]);
    flags.text_defect = rng.bernoulli(config.defect_probabilities[3]);
    const bool mild_coin = rng.bernoulli(0.5);
    const bool mild = flags.count() == 1 && mild_coin;
    const double severity = mild ? 0.5 : 1.0;
    const double shift = severity * config.defect_magnitude;

    const std::vector<double>& center = geo.frame_centroids[topic];
    std::vector<std::vector<double>> segment_centers{center};
    if (flags.incoherence) {
      std::size_t prev = topic;
      for (std::size_t s = 1; s < kSpliceSegments; ++s) {
        const std::size_t t = other_topic(rng, topic, prev);
        segment_centers.push_back(blend(center, geo.frame_centroids[t], severity));
        prev = t;
      }
    }

    VideoRecord r;
    r.id = "synth-" + std::to_string(i);
    r.frame_embeddings = Tensor<float>(Shape{m, df});
    const std::vector<double>* visual = flags.visual_defect ? &geo.visual_direction : nullptr;
    for (std::size_t j = 0; j < m; ++j) {
      // Contiguous splice segments: frames [0, m/3) stay on topic.
      const std::size_t seg = flags.incoherence ? (j * kSpliceSegments) / m : 0;
      emit_row(rng, segment_centers[seg], config.noise, visual, shift,
               r.frame_embeddings.data().data() + j * df);
    }
    r.cover_embeddings = Tensor<float>(Shape{kCoverCount, df});
    for (std::size_t c = 0; c < kCoverCount; ++c) {
      emit_row(rng, center, config.noise, visual, shift, r.cover_embeddings.data().data() + c * df);
    }

    std::vector<double> text_center = geo.text_centroids[topic];
    if (flags.text_mismatch) {
      const std::size_t t = other_topic(rng, topic, topic);
      text_center = blend(text_center, geo.text_centroids[t], severity);
    }
    r.text_embedding = Tensor<float>(Shape{dt});
    emit_row(rng, text_center, config.noise, flags.text_defect ? &geo.text_direction : nullptr, shift,
             r.text_embedding.data().data());

    r.grade = assign_grade(flags, mild);
    out.records.push_back(std::move(r));
    out.flags.push_back(flags);
    out.mild.push_back(mild);
    out.topics.push_back(topic);
  }
  return out;
}

}  // namespace vqr
