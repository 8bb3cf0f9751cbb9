#include "lsalign/inference.hpp"

#include <fstream>
#include <sstream>

#include "lsalign/alignment.hpp"
#include "lsalign/error.hpp"
#include "lsalign/io.hpp"
#include "lsalign/parallel.hpp"

namespace lsalign {

Prediction score_feature(std::span<const double> v, const SubspaceView& target, double tau) {
  if (target.size() == 0) fail(ErrorCode::EmptyLabelSpace, "target label space is empty");
  if (!(tau > 0.0)) fail(ErrorCode::BadConfig, "tau must be positive");
  const auto aligned = score(v, target.embeddings);
  Prediction out;
  out.cosines = aligned.c;
  out.scores.resize(aligned.n);
  for (std::size_t j = 0; j < aligned.n; ++j) {
    out.scores[j] = sigmoid(aligned.c[j] / tau);
    if (aligned.c[j] > aligned.c[out.argmax]) out.argmax = j;
  }
  return out;
}

Prediction predict(const ToyModel& model, std::span<const float> raw_feature,
                   const SubspaceView& target, double tau) {
  if (target.embeddings.cols() != model.dim) {
    fail(ErrorCode::DimMismatch, "target label space has dim " +
                                     std::to_string(target.embeddings.cols()) +
                                     ", model projects to " + std::to_string(model.dim));
  }
  return score_feature(model.project(raw_feature), target, tau);
}

std::vector<Detection> predict_batch(const ToyModel& model, const Shard& shard,
                                     const SubspaceView& target, double tau,
                                     double score_threshold) {
  std::vector<Prediction> preds(shard.instances.size());
  parallel_for(preds.size(), [&](std::size_t i) {
    preds[i] = predict(model, shard.instances[i].raw_feature, target, tau);
  });
  std::vector<Detection> dets;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    const double s = p.scores[p.argmax];
    if (s < score_threshold) continue;
    const auto& inst = shard.instances[i];
    dets.push_back({inst.image_id, inst.box, p.argmax, target.label_ids[p.argmax], s});
  }
  return dets;
}

void write_detections(std::span<const Detection> dets, const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& d : dets) {
    out << nlohmann::json{{"image_id", d.image_id},
                          {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}},
                          {"label", d.label},
                          {"label_id", d.label_id},
                          {"score", d.score}}
               .dump()
        << '\n';
  }
  io::write_text(path, out.str());
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::MissingFile, path.string());
  std::vector<Detection> dets;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto rec = nlohmann::json::parse(line);
      const auto box = rec.at("box").get<std::vector<double>>();
      if (box.size() != 4) fail(ErrorCode::ParseError, path.string() + ": box needs 4 values");
      dets.push_back({rec.at("image_id").get<std::uint64_t>(),
                      {box[0], box[1], box[2], box[3]},
                      rec.at("label").get<std::size_t>(),
                      rec.at("label_id").get<std::string>(),
                      rec.at("score").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return dets;
}

}  // namespace lsalign
