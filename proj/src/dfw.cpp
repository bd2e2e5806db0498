#include "formeq/dfw.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace formeq {

namespace {

// Piecewise-linear interpolation through (x_k, y_k); clamps outside the knots.
template <typename X, typename Y>
double interpolate(const std::vector<WarpAnchor>& anchors, double f, X x, Y y) {
  if (f <= x(anchors.front())) return y(anchors.front());
  if (f >= x(anchors.back())) return y(anchors.back());
  const auto hi = std::upper_bound(anchors.begin(), anchors.end(), f,
                                   [&](double v, const WarpAnchor& a) { return v < x(a); });
  const auto lo = hi - 1;
  return y(*lo) + (f - x(*lo)) * (y(*hi) - y(*lo)) / (x(*hi) - x(*lo));
}

bool insert_anchor(std::vector<WarpAnchor>& accepted, const WarpAnchor& c, double nyquist) {
  if (!(c.in > 0.0 && c.in < nyquist && c.out > 0.0 && c.out < nyquist)) return false;
  const auto pos = std::lower_bound(accepted.begin(), accepted.end(), c.in,
                                    [](const WarpAnchor& a, double v) { return a.in < v; });
  // Endpoints are pinned, so pos is always an interior insertion point.
  const auto& right = *pos;
  const auto& left = *(pos - 1);
  if (!(left.in < c.in && c.in < right.in && left.out < c.out && c.out < right.out)) return false;
  accepted.insert(pos, c);
  return true;
}

}  // namespace

WarpFunction::WarpFunction(std::vector<WarpAnchor> anchors, double nyquist)
    : anchors_(std::move(anchors)), nyquist_(nyquist) {
  if (!(nyquist_ > 0.0)) throw InputError("warp: nyquist must be positive");
  if (anchors_.size() < 2) throw InputError("warp: need at least the two endpoints");
  if (anchors_.front() != WarpAnchor{0.0, 0.0} || anchors_.back() != WarpAnchor{nyquist_, nyquist_}) {
    throw InputError("warp: endpoints must be (0,0) and (nyquist,nyquist)");
  }
  for (std::size_t k = 1; k < anchors_.size(); ++k) {
    if (!(anchors_[k - 1].in < anchors_[k].in && anchors_[k - 1].out < anchors_[k].out)) {
      throw InputError("warp: anchors must be strictly increasing");
    }
  }
}

WarpFunction WarpFunction::identity(double nyquist) {
  return WarpFunction({{0.0, 0.0}, {nyquist, nyquist}}, nyquist);
}

double WarpFunction::operator()(double f) const {
  return interpolate(anchors_, f, [](const WarpAnchor& a) { return a.in; },
                     [](const WarpAnchor& a) { return a.out; });
}

double WarpFunction::inverse(double f) const {
  return interpolate(anchors_, f, [](const WarpAnchor& a) { return a.out; },
                     [](const WarpAnchor& a) { return a.in; });
}

bool WarpFunction::is_identity() const {
  return std::all_of(anchors_.begin(), anchors_.end(), [](const WarpAnchor& a) { return a.in == a.out; });
}

WarpFunction build_warp(const FormantFrame& from, const FormantFrame& to, double nyquist) {
  if (!from.valid || !to.valid) throw InputError("build_warp: both formant frames must be valid");
  if (from.formants.size() != to.formants.size()) throw InputError("build_warp: formant count mismatch");

  std::vector<WarpAnchor> accepted{{0.0, 0.0}, {nyquist, nyquist}};
  for (std::size_t k = 0; k < from.formants.size(); ++k) {
    insert_anchor(accepted, {from.formants[k].frequency, to.formants[k].frequency}, nyquist);
  }
  std::vector<WarpAnchor> edges;
  for (std::size_t k = 0; k < from.formants.size(); ++k) {
    const auto& a = from.formants[k];
    const auto& b = to.formants[k];
    edges.push_back({a.frequency - 0.5 * a.bandwidth, b.frequency - 0.5 * b.bandwidth});
    edges.push_back({a.frequency + 0.5 * a.bandwidth, b.frequency + 0.5 * b.bandwidth});
  }
  std::stable_sort(edges.begin(), edges.end(), [](const WarpAnchor& l, const WarpAnchor& r) { return l.in < r.in; });
  for (const auto& e : edges) insert_anchor(accepted, e, nyquist);
  return WarpFunction(std::move(accepted), nyquist);
}

Eigen::VectorXd apply_dfw(const Eigen::Ref<const Eigen::VectorXd>& log_spectrum, const WarpFunction& w) {
  if (w.is_identity()) return log_spectrum;
  const Eigen::Index bins = log_spectrum.size();
  if (bins < 2) return log_spectrum;
  const double last = static_cast<double>(bins - 1);
  Eigen::VectorXd out(bins);
  for (Eigen::Index k = 0; k < bins; ++k) {
    const double f = w.nyquist() * static_cast<double>(k) / last;
    const double pos = std::clamp(w.inverse(f) / w.nyquist() * last, 0.0, last);
    const auto i0 = std::min(static_cast<Eigen::Index>(pos), bins - 2);
    const double frac = pos - static_cast<double>(i0);
    out(k) = log_spectrum(i0) + frac * (log_spectrum(i0 + 1) - log_spectrum(i0));
  }
  return out;
}

WarpFunction invert_warp(const WarpFunction& w) {
  std::vector<WarpAnchor> swapped;
  swapped.reserve(w.anchors().size());
  for (const auto& a : w.anchors()) swapped.push_back({a.out, a.in});
  return WarpFunction(std::move(swapped), w.nyquist());
}

void write_warp_csv(std::ostream& out, const WarpFunction& w) {
  out << "f_in,f_out\n";
  char line[96];
  for (const auto& a : w.anchors()) {
    std::snprintf(line, sizeof(line), "%.6f,%.6f\n", a.in, a.out);
    out << line;
  }
}

EqualizedPair equalize_pair(const AlignedPair& pair, const WarpedCepstrum& cepstrum, double nyquist,
                            InvalidFormantPolicy policy) {
  EqualizedPair result;
  result.melcd_before = mel_cd(pair.src_mcep, pair.tgt_mcep);
  if (pair.skip_warp) {
    if (policy == InvalidFormantPolicy::drop) {
      result.outcome = EqualizeOutcome::rejected;
      return result;
    }
    result.outcome = EqualizeOutcome::identity;
    result.target = pair.tgt_mcep;
    result.melcd_after = result.melcd_before;
    return result;
  }
  const WarpFunction w = build_warp(pair.tgt_formants, pair.src_formants, nyquist);
  if (w.is_identity()) {
    result.outcome = EqualizeOutcome::equalized;
    result.target = pair.tgt_mcep;
    result.melcd_after = result.melcd_before;
    return result;
  }
  Eigen::VectorXd warped = cepstrum.analyze(apply_dfw(pair.tgt_logspec, w));
  warped(0) = pair.tgt_mcep(0);
  const double after = mel_cd(pair.src_mcep, warped);
  if (after > result.melcd_before) {
    result.outcome = EqualizeOutcome::rejected;
    return result;
  }
  result.outcome = EqualizeOutcome::equalized;
  result.target = std::move(warped);
  result.melcd_after = after;
  return result;
}

CorpusEqualization equalize_corpus(const std::vector<AlignedPair>& pairs, const WarpedCepstrum& cepstrum,
                                   double nyquist, InvalidFormantPolicy policy) {
  std::vector<EqualizedPair> results;
  results.reserve(pairs.size());
  for (const auto& p : pairs) results.push_back(equalize_pair(p, cepstrum, nyquist, policy));

  CorpusEqualization out;
  auto& report = out.report;
  double before = 0.0, after = 0.0;
  for (const auto& r : results) {
    before += r.melcd_before;
    switch (r.outcome) {
      case EqualizeOutcome::equalized: ++report.equalized; break;
      case EqualizeOutcome::identity: ++report.identity; break;
      case EqualizeOutcome::rejected: ++report.rejected; break;
    }
    if (r.outcome != EqualizeOutcome::rejected) after += r.melcd_after;
    out.outcomes.push_back(r.outcome);
  }
  if (!pairs.empty()) report.mean_melcd_before = before / static_cast<double>(pairs.size());
  if (report.retained() > 0) report.mean_melcd_after = after / static_cast<double>(report.retained());

  const Eigen::Index dim = cepstrum.order() + 1;
  const auto kept = static_cast<Eigen::Index>(report.retained());
  out.source.resize(dim, kept);
  out.target.resize(dim, kept);
  out.raw_target.resize(dim, kept);
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (results[i].outcome == EqualizeOutcome::rejected) continue;
    out.source.col(col) = pairs[i].src_mcep;
    out.target.col(col) = results[i].target;
    out.raw_target.col(col) = pairs[i].tgt_mcep;
    out.target_formants.push_back(pairs[i].tgt_formants);
    ++col;
  }
  return out;
}

void write_equalization_report(std::ostream& out, const EqualizationReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "{\"equalized\":%zu,\"identity\":%zu,\"rejected\":%zu,"
                "\"mean_melcd_before\":%.17g,\"mean_melcd_after\":%.17g}\n",
                report.equalized, report.identity, report.rejected, report.mean_melcd_before,
                report.mean_melcd_after);
  out << buf;
}

}  // namespace formeq
