#pragma once

#include <array>
#include <string_view>

namespace condvc {

// Training stages in execution order: four progressive pretraining steps
// followed by multi-frame finetuning.
enum class StageId { kMe, kReconstruction, kContextualCoding, kAll, kFinetune };

inline constexpr std::array<StageId, 5> kAllStages{StageId::kMe, StageId::kReconstruction,
                                                   StageId::kContextualCoding, StageId::kAll,
                                                   StageId::kFinetune};

std::string_view to_string(StageId stage);
StageId parse_stage(std::string_view name);
int stage_index(StageId stage);

}  // namespace condvc
