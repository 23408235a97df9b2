// Copyright 2026 The snn-rmp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SNN_RMP_CLI_HPP_
#define SNN_RMP_CLI_HPP_

#include <ostream>

namespace snn_rmp {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,    // unexpected failure
  kExitUsage = 2,       // bad arguments or config
  kExitData = 3,        // dataset or other I/O failure
  kExitNumeric = 4,     // non-finite loss
  kExitCheckpoint = 5,  // unreadable, corrupt or mismatched checkpoint
};

// snn-rmp {train|eval|analyze|gen-data} [--config PATH] [--set K=V]... [flags]
//
// Metric lines go to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace snn_rmp

#endif  // SNN_RMP_CLI_HPP_
