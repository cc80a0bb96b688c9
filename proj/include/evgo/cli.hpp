#pragma once

#include <string>

namespace evgo {

// Exit codes: 0 success, 1 input/schema error, 2 numerical failure.
int cmd_simulate(const std::string& scene_path, const std::string& out_dir, long long seed_override,
                 int threads);
int cmd_optimize(const std::string& manifest_path, const std::string& config_path,
                 const std::string& out_dir, int threads);
int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_dir);
int cmd_sync(const std::string& manifest_path, const std::string& mode,
             const std::string& config_path, const std::string& out_dir);

}  // namespace evgo
