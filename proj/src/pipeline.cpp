#include "symlabel/pipeline.hpp"

#include <map>
#include <set>

#include "symlabel/error.hpp"
#include "symlabel/parallel.hpp"

namespace symlabel {

std::vector<TrainingSample> make_training_set(const Dataset& dataset, const std::vector<FrameRecord>& frames,
                                              LabelMode mode, const std::vector<PoseLabelSet>& labels,
                                              const std::vector<Rotation>& symmetries, int crop_size,
                                              int image_size, int jobs) {
  std::map<std::string, const PoseLabelSet*> by_id;
  if (mode == LabelMode::kPseudo) {
    // Labels may cover other splits of the same dataset; those are skipped.
    std::set<std::string> known;
    for (const auto& f : dataset.frames()) known.insert(f.id);
    for (const auto& s : labels) {
      if (!known.count(s.frame_id)) fail(ErrorKind::kData, "label for unknown frame '" + s.frame_id + "'");
      if (!s.labels.empty()) by_id[s.frame_id] = &s;
    }
  }
  if (mode == LabelMode::kAnalytic) require(!symmetries.empty(), "analytic labels need a symmetry set");

  std::vector<const FrameRecord*> used;
  for (const auto& f : frames)
    if (mode != LabelMode::kPseudo || by_id.count(f.id)) used.push_back(&f);

  std::vector<TrainingSample> out(used.size());
  parallel_for(used.size(), jobs, [&](std::size_t i) {
    const FrameRecord& rec = *used[i];
    TrainingSample& s = out[i];
    s.frame_id = rec.id;
    s.image = crop_frame(dataset.load(rec), crop_size, image_size);
    switch (mode) {
      case LabelMode::kPseudo:
        for (const auto& l : by_id.at(rec.id)->labels) s.labels.push_back(l.pose.rotation);
        break;
      case LabelMode::kSingle:
        s.labels = {rec.gt_pose.rotation};
        break;
      case LabelMode::kAnalytic:
        s.labels = symmetric_orientations(rec.gt_pose.rotation, symmetries);
        break;
    }
  });
  if (out.empty()) fail(ErrorKind::kData, "no training frames with labels");
  return out;
}

std::vector<ValidationSample> make_eval_set(const Dataset& dataset, const std::vector<FrameRecord>& frames,
                                            const std::vector<Rotation>& symmetries, int crop_size, int image_size,
                                            int jobs) {
  require(!symmetries.empty(), "evaluation needs at least the identity symmetry");
  std::vector<ValidationSample> out(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) {
    const FrameRecord& rec = frames[i];
    out[i].frame_id = rec.id;
    out[i].image = crop_frame(dataset.load(rec), crop_size, image_size);
    out[i].gt = symmetric_orientations(rec.gt_pose.rotation, symmetries);
  });
  return out;
}

}  // namespace symlabel
