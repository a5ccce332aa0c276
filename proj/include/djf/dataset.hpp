#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "djf/jpeg_sim.hpp"
#include "djf/rng.hpp"

namespace djf {

enum class Alignment { Aligned, Shifted, Mixed };

const char* alignment_name(Alignment a);
Alignment alignment_from_name(const std::string& s);

/// QF1 grid used for the training sets at a given QF2.
std::vector<int> default_qf1_set(int qf2);

struct DatasetSpec {
    int B = 64;
    int qf2 = 95;
    std::vector<int> qf1_set;  // empty -> default_qf1_set(qf2)
    Alignment alignment = Alignment::Aligned;
    int train_count = 20000;
    int val_count = 6000;
    std::uint64_t seed = 1;

    void validate() const;
    std::vector<int> effective_qf1_set() const {
        return qf1_set.empty() ? default_qf1_set(qf2) : qf1_set;
    }
};

enum class Split : std::uint8_t { Train = 0, Val = 1 };

struct PatchRecord {
    std::uint64_t offset = 0;
    Split split = Split::Train;
    int label = 0;  // 0 single, 1 double
    int qf1 = 0;    // 0 when single compressed
    int qf2 = 0;
    int r = 0, c = 0;  // grid shift; (0,0) for aligned/single
    int source_id = 0;
};

struct LabeledPatch {
    Patch patch;
    int label = 0;
    int qf1 = 0, qf2 = 0;
    int r = 0, c = 0;
    int source_id = 0;
};

struct DatasetManifest {
    int version = 1;
    DatasetSpec spec;
    std::string blob_name;
    std::vector<PatchRecord> records;
    int skipped_small_images = 0;
};

/// In-memory dataset: manifest plus the raw patch blob.
class Dataset {
public:
    const DatasetManifest& manifest() const { return manifest_; }
    std::size_t size() const { return manifest_.records.size(); }
    const PatchRecord& record(std::size_t i) const { return manifest_.records[i]; }
    Patch patch(std::size_t i) const;

    std::vector<std::size_t> split_indices(Split s) const;
    /// Indices grouped by (qf1, qf2); single-compressed records key as (0, qf2).
    std::map<std::pair<int, int>, std::vector<std::size_t>> pair_groups(
        Split s) const;

    friend Dataset load_dataset(const std::string& manifest_path);
    friend void write_dataset(const Dataset& ds, const std::string& manifest_path);
    friend Dataset build_dataset(const DatasetSpec& spec,
                                 const std::string& corpus_dir);

private:
    DatasetManifest manifest_;
    std::vector<std::uint8_t> blob_;
};

/// Sorted list of supported image files under a directory.
std::vector<std::string> list_corpus(const std::string& corpus_dir);

/// Uniformly random crop. Throws if the source is smaller than B x B.
struct CropResult {
    Patch patch;
    int row0 = 0, col0 = 0;
};
CropResult random_crop(const Patch& source, int B, Rng& rng);

LabeledPatch make_single(const Patch& patch, int qf2);
LabeledPatch make_double(const Patch& source, int qf1, int qf2, bool shifted,
                         int B, Rng& rng);

/// Builds a balanced, source-disjoint dataset from a corpus directory.
Dataset build_dataset(const DatasetSpec& spec, const std::string& corpus_dir);

/// Writes manifest (line-delimited text) and blob (raw patches) to
/// manifest_path and manifest_path + ".blob".
void write_dataset(const Dataset& ds, const std::string& manifest_path);
Dataset load_dataset(const std::string& manifest_path);

}  // namespace djf
