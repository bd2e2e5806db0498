#include <json.hpp>

#include <cmath>
#include <fstream>
#include <limits>

#include "byte_io.hpp"
#include "formeq/features.hpp"

namespace formeq {

using nlohmann::json;

void write_vcf1(const std::filesystem::path& path, const FeatureSequence& seq) {
  if (seq.dim() > std::numeric_limits<std::uint32_t>::max() ||
      seq.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InputError("vcf1: sequence too large");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("vcf1: cannot create " + path.string());
  out.write("VCF1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(seq.dim()));
  detail::put_u32(out, static_cast<std::uint32_t>(seq.size()));
  for (Eigen::Index f = 0; f < seq.size(); ++f) {
    for (Eigen::Index d = 0; d < seq.dim(); ++d) detail::put_f32(out, static_cast<float>(seq.frames(d, f)));
  }
  json meta = {{"kind", to_string(seq.kind)},
               {"frame_shift", seq.frame_shift},
               {"frame_length", seq.frame_length},
               {"sample_rate", seq.sample_rate},
               {"alpha", seq.alpha},
               {"order", seq.order}};
  if (seq.kind == FeatureKind::pairs) meta["source_dim"] = seq.source_dim;
  const std::string blob = meta.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw InputError("vcf1: write failed for " + path.string());
}

FeatureSequence read_vcf1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("vcf1: cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "VCF1") {
    throw InputError("vcf1: bad magic in " + path.string());
  }
  const std::uint32_t dim = detail::get_u32(in);
  const std::uint32_t count = detail::get_u32(in);
  FeatureSequence seq;
  seq.frames.resize(dim, count);
  for (std::uint32_t f = 0; f < count; ++f) {
    for (std::uint32_t d = 0; d < dim; ++d) {
      const float v = detail::get_f32(in);
      if (!std::isfinite(v)) throw InputError("vcf1: non-finite value in " + path.string());
      seq.frames(d, f) = v;
    }
  }
  const std::uint32_t length = detail::get_u32(in);
  std::string blob(length, '\0');
  if (!in.read(blob.data(), length)) throw InputError("vcf1: truncated metadata in " + path.string());
  json meta;
  try {
    meta = json::parse(blob);
    seq.kind = feature_kind_from_string(meta.at("kind").get<std::string>());
    seq.frame_shift = meta.at("frame_shift").get<double>();
    seq.sample_rate = meta.at("sample_rate").get<double>();
    seq.alpha = meta.at("alpha").get<double>();
    seq.order = meta.at("order").get<int>();
    seq.frame_length = meta.value("frame_length", kDefaultFrameLength);
    seq.source_dim = meta.value("source_dim", 0);
  } catch (const json::exception& e) {
    throw InputError("vcf1: bad metadata in " + path.string() + ": " + e.what());
  }
  if (!(seq.frame_shift > 0)) throw InputError("vcf1: frame_shift must be positive");
  if (seq.kind == FeatureKind::pairs && (seq.source_dim <= 0 || seq.source_dim >= seq.dim())) {
    throw InputError("vcf1: pairs file needs 0 < source_dim < dim");
  }
  return seq;
}

}  // namespace formeq
