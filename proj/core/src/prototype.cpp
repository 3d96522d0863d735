#include "ptcmil/prototype.hpp"

#include "ptcmil/error.hpp"

namespace ptcmil {

ScoreHead ScoreHead::create(const std::string& prefix, int dim, Rng& rng, ParamRegistry& reg) {
  ScoreHead head;
  head.proj = Linear::create(prefix, dim, 1, rng, reg);
  return head;
}

Tensor ScoreHead::operator()(const Tensor& tokens) const {
  return proj(tokens);
}

std::vector<RefinedCluster> local_refine(const ClusterPartition& part,
                                         const Tensor& refined_prompts,
                                         const Tensor& refined_tokens,
                                         const EncoderLayer& local_layer) {
  if (refined_prompts.rows() != part.cluster_count) {
    throw ShapeError("local_refine: prompt rows " + refined_prompts.shape_str() + " do not match partition with " +
                     std::to_string(part.cluster_count) + " clusters");
  }
  if (refined_prompts.cols() != refined_tokens.cols()) {
    throw ShapeError("local_refine: prompt dim " + refined_prompts.shape_str() + " does not match token dim " +
                     refined_tokens.shape_str());
  }
  std::vector<RefinedCluster> out;
  out.reserve(static_cast<std::size_t>(part.cluster_count));
  for (int c = 0; c < part.cluster_count; ++c) {
    RefinedCluster rc;
    rc.cluster = c;
    rc.member_indices = part.groups[static_cast<std::size_t>(c)];
    rc.empty = rc.member_indices.empty();
    Tensor prompt_row = gather_rows(refined_prompts, {c});
    if (rc.empty) {
      rc.prompt = local_layer(prompt_row);
    } else {
      Tensor block = concat_rows({prompt_row, gather_rows(refined_tokens, rc.member_indices)});
      Tensor refined = local_layer(block);
      rc.prompt = gather_rows(refined, {0});
      std::vector<int> member_rows(rc.member_indices.size());
      for (std::size_t i = 0; i < member_rows.size(); ++i) member_rows[i] = static_cast<int>(i) + 1;
      rc.members = gather_rows(refined, member_rows);
    }
    out.push_back(rc);
  }
  return out;
}

Tensor merge(const Tensor& members, const Tensor& scores) {
  if (scores.cols() != 1) throw ShapeError("merge: scores must be a column, got " + scores.shape_str());
  if (scores.rows() != members.rows()) {
    throw ShapeError("merge: " + std::to_string(members.rows()) + " members but " + std::to_string(scores.rows()) +
                     " scores");
  }
  Tensor weights = row_softmax(transpose(scores));  // 1 x Nc
  return matmul(weights, members);
}

}  // namespace ptcmil
