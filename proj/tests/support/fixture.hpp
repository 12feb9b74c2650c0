#pragma once

#include "core/pipeline.hpp"
#include "synthetic.hpp"

namespace wxtest {

// Runs the full pipeline on a fresh synthetic dataset and returns the
// bundle directory. Kept small so each test binary can afford one.
inline fs::path synthetic_bundle(const std::string& name, std::size_t trees = 60, std::uint64_t seed = 42) {
  auto dir = scratch_dir(name);
  auto files = write_synthetic(dir / "raw");
  auto config = write_config(dir, files, dir / "bundle", 3, trees, seed);
  wxskill::Diagnostics diag;
  wxskill::pipeline::pipeline_run(wxskill::pipeline::load_pipeline_config(config), diag);
  return dir / "bundle";
}

}  // namespace wxtest
