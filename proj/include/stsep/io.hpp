#pragma once

// Persistence: the binary/CSV matrix format, JSON checkpoints and configs,
// and CSV reports.
//
// Binary matrix layout (all integers and floats little-endian):
//
//   offset  size  field
//   0       8     magic "STSEPMAT"
//   8       4     uint32 version (= 1)
//   12      4     uint32 flags: bit0 row-major payload, bit1 grid present,
//                 bit2 times present
//   16      8     uint64 rows
//   24      8     uint64 cols
//   32      8     uint64 grid rows (0 when absent)
//   40      8     uint64 grid cols (0 when absent)
//   48      8*rows*cols  float64 payload
//   ...     8*rows       float64 times (only with bit2)
//
// CSV files (".csv" extension) hold one subject per line. Lines starting
// with '#' are directives: "# grid: HxW" and "# times: first-column", the
// latter meaning column 0 carries the observed times.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "stsep/model.hpp"
#include "stsep/optim.hpp"
#include "stsep/synth.hpp"

namespace stsep {

namespace fs = std::filesystem;
using Json = nlohmann::json;

inline constexpr char kMatrixMagic[8] = {'S', 'T', 'S', 'E', 'P', 'M', 'A', 'T'};
inline constexpr std::uint32_t kMatrixVersion = 1;
inline constexpr const char* kVersion = "0.1.0";

/// Dispatches on the extension: ".csv" is text, anything else binary.
DataMatrix ReadMatrix(const fs::path& path);
void WriteMatrix(const DataMatrix& data, const fs::path& path);

DataMatrix ReadMatrixBinary(const fs::path& path);
void WriteMatrixBinary(const DataMatrix& data, const fs::path& path);
DataMatrix ReadMatrixCsv(const fs::path& path);
void WriteMatrixCsv(const DataMatrix& data, const fs::path& path);

Json LoadJson(const fs::path& path);
void SaveJson(const Json& j, const fs::path& path);

/// 64-bit FNV-1a of the file contents, as 16 hex digits.
std::string FileDigest(const fs::path& path);

Json ToJson(const Matrix& m);
Matrix MatrixFromJson(const Json& j);
Json ToJson(const Vector& v);
Vector VectorFromJson(const Json& j);

Json ToJson(const GridGeometry& g);
GridGeometry GridFromJson(const Json& j);
Json ToJson(const Hyperparams& hp);
Hyperparams HyperparamsFromJson(const Json& j, Hyperparams defaults = {});
Json ToJson(const FitConfig& cfg);
FitConfig FitConfigFromJson(const Json& j, FitConfig defaults = {});
Json ToJson(const SynthConfig& cfg);
SynthConfig SynthConfigFromJson(const Json& j);
Json ToJson(const GroundTruth& gt);
GroundTruth GroundTruthFromJson(const Json& j);
Json ToJson(const ModelState& st);
ModelState StateFromJson(const Json& j);

struct Checkpoint {
  ModelState state;
  Hyperparams hp;
  std::uint64_t seed = 0;
};

Json ToJson(const Checkpoint& ck);
Checkpoint CheckpointFromJson(const Json& j);
void SaveCheckpoint(const Checkpoint& ck, const fs::path& path);
Checkpoint LoadCheckpoint(const fs::path& path);

/// iteration, loglik, constraint, kl_spatial, kl_omega, kl_weights, total
void WriteTraceCsv(const std::vector<ElboBreakdown>& trace, const fs::path& path);

/// Writes a header row then one row per entry, values formatted with %.17g.
void WriteCsv(const fs::path& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows);
std::string FormatDouble(double v);

}  // namespace stsep
