#pragma once

#include <string_view>

// Versioned prompt assets (assets/prompts/*.v1.txt), embedded at build time.
namespace citecheck::prompts {

extern const std::string_view transcription;
extern const std::string_view boundary_repair;
extern const std::string_view semantic_audit;
extern const std::string_view paraphrase_system;
extern const std::string_view paraphrase_user;
extern const std::string_view cluster_system;
extern const std::string_view cluster_user;
extern const std::string_view distill_system;
extern const std::string_view distill_user;
extern const std::string_view relation_system;
extern const std::string_view relation_user;
extern const std::string_view grader_system;
extern const std::string_view grader_user;
extern const std::string_view lrm_system;
extern const std::string_view lrm_user;
extern const std::string_view taxonomy_system;
extern const std::string_view taxonomy_user;
extern const std::string_view disambiguation_system;
extern const std::string_view disambiguation_user;

// Block of numbered claim placeholders in cluster_user, replaced by the
// rendered claim list.
inline constexpr std::string_view kClusterClaimSlot = "1) {c_1}\n2) {c_2}\n...\nm) {c_m}";
// Block of bulleted claim placeholders in distill_user.
inline constexpr std::string_view kDistillClaimSlot = "- {c_a}\n- {c_b}\n...";

}  // namespace citecheck::prompts
