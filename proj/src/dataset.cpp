#include "djf/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "djf/image_io.hpp"

namespace djf {

const char* alignment_name(Alignment a) {
    switch (a) {
        case Alignment::Aligned: return "aligned";
        case Alignment::Shifted: return "shifted";
        case Alignment::Mixed: return "mixed";
    }
    return "?";
}

Alignment alignment_from_name(const std::string& s) {
    if (s == "aligned") return Alignment::Aligned;
    if (s == "shifted") return Alignment::Shifted;
    if (s == "mixed") return Alignment::Mixed;
    throw std::invalid_argument("unknown alignment '" + s + "'");
}

std::vector<int> default_qf1_set(int qf2) {
    if (qf2 == 95) return {60, 70, 80, 90, 98};
    return {50, 60, 70, 80, 90};
}

void DatasetSpec::validate() const {
    if (B < 8 || B % 8 != 0)
        throw std::invalid_argument("dataset: B must be a positive multiple of 8");
    if (qf2 < 1 || qf2 > 100)
        throw std::invalid_argument("dataset: qf2 out of [1,100]");
    for (int q : effective_qf1_set())
        if (q < 1 || q > 100)
            throw std::invalid_argument("dataset: qf1 out of [1,100]");
    if (train_count < 0 || val_count < 0 || train_count + val_count == 0)
        throw std::invalid_argument("dataset: counts must be non-negative, not both 0");
    if (train_count % 2 != 0 || val_count % 2 != 0)
        throw std::invalid_argument("dataset: per-split counts must be even (balanced classes)");
}

Patch Dataset::patch(std::size_t i) const {
    const PatchRecord& rec = manifest_.records.at(i);
    const int B = manifest_.spec.B;
    Patch p(B, B);
    std::copy_n(blob_.begin() + static_cast<std::ptrdiff_t>(rec.offset),
                static_cast<std::size_t>(B) * B, p.pix.begin());
    return p;
}

std::vector<std::size_t> Dataset::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest_.records.size(); ++i)
        if (manifest_.records[i].split == s) out.push_back(i);
    return out;
}

std::map<std::pair<int, int>, std::vector<std::size_t>> Dataset::pair_groups(
    Split s) const {
    std::map<std::pair<int, int>, std::vector<std::size_t>> out;
    for (std::size_t i : split_indices(s)) {
        const auto& r = manifest_.records[i];
        out[{r.qf1, r.qf2}].push_back(i);
    }
    return out;
}

std::vector<std::string> list_corpus(const std::string& corpus_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(corpus_dir))
        throw std::runtime_error("corpus directory not found: " + corpus_dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(corpus_dir))
        if (e.is_regular_file() && is_supported_image(e.path().string()))
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("no .pgm/.png images in corpus: " + corpus_dir);
    return files;
}

CropResult random_crop(const Patch& source, int B, Rng& rng) {
    if (source.rows < B || source.cols < B)
        throw std::invalid_argument("random_crop: source " + std::to_string(source.rows) +
                                    "x" + std::to_string(source.cols) +
                                    " smaller than crop " + std::to_string(B));
    CropResult res;
    res.row0 = (source.rows == B) ? 0 : rng.uniform_int(0, source.rows - B);
    res.col0 = (source.cols == B) ? 0 : rng.uniform_int(0, source.cols - B);
    res.patch = Patch(B, B);
    for (int r = 0; r < B; ++r)
        for (int c = 0; c < B; ++c)
            res.patch.at(r, c) = source.at(res.row0 + r, res.col0 + c);
    return res;
}

LabeledPatch make_single(const Patch& patch, int qf2) {
    LabeledPatch lp;
    lp.patch = compress_decompress(patch, qf2);
    lp.label = 0;
    lp.qf2 = qf2;
    return lp;
}

LabeledPatch make_double(const Patch& source, int qf1, int qf2, bool shifted,
                         int B, Rng& rng) {
    QFPair pair;
    pair.qf1 = qf1;
    pair.qf2 = qf2;
    pair.shifted = shifted;
    DoubleCompressResult res = double_compress(source, pair, B, rng);
    LabeledPatch lp;
    lp.patch = std::move(res.patch);
    lp.label = 1;
    lp.qf1 = res.qf1;
    lp.qf2 = res.qf2;
    lp.r = res.r;
    lp.c = res.c;
    return lp;
}

namespace {

struct SourcePool {
    std::vector<int> ids;  // indices into the corpus
};

}  // namespace

Dataset build_dataset(const DatasetSpec& spec, const std::string& corpus_dir) {
    spec.validate();
    const auto files = list_corpus(corpus_dir);
    std::vector<Patch> images(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) images[i] = load_image(files[i]);

    Rng master(spec.seed);

    // Source-disjoint split assignment.
    std::vector<int> order(files.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    master.shuffle(order.begin(), order.end());
    const long total = spec.train_count + spec.val_count;
    std::size_t n_val_src =
        (spec.val_count == 0)
            ? 0
            : std::max<std::size_t>(1, order.size() * spec.val_count / total);
    if (spec.train_count == 0) n_val_src = order.size();
    if (spec.train_count > 0 && n_val_src >= order.size())
        throw std::runtime_error("insufficient corpus: need at least 2 images for disjoint splits");
    SourcePool pools[2];
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < n_val_src ? pools[1] : pools[0]).ids.push_back(order[i]);

    Dataset ds;
    ds.manifest_.spec = spec;
    const auto qf1s = spec.effective_qf1_set();
    const int nq = static_cast<int>(qf1s.size());
    const int B = spec.B;
    const std::size_t patch_bytes = static_cast<std::size_t>(B) * B;
    int skipped = 0;
    std::uint64_t global_idx = 0;

    for (int si = 0; si < 2; ++si) {
        const Split split = (si == 0) ? Split::Train : Split::Val;
        const int count = (si == 0) ? spec.train_count : spec.val_count;
        if (count == 0) continue;
        const SourcePool& pool = pools[si];
        int h1_seen = 0;
        for (int i = 0; i < count; ++i, ++global_idx) {
            Rng rec_rng = master.split(global_idx);
            const int label = i % 2;  // interleave H0/H1, exactly balanced
            bool shifted = false;
            int qf1 = 0;
            if (label == 1) {
                const int j = h1_seen++;
                qf1 = qf1s[j % nq];
                switch (spec.alignment) {
                    case Alignment::Aligned: shifted = false; break;
                    case Alignment::Shifted: shifted = true; break;
                    case Alignment::Mixed: shifted = ((j / nq) % 2) == 1; break;
                }
            }
            const int need = (label == 1 && shifted) ? B + 7 : B;

            // pick a usable source image
            const Patch* src = nullptr;
            int source_id = -1;
            for (std::size_t attempt = 0; attempt < pool.ids.size(); ++attempt) {
                int id = pool.ids[rec_rng.uniform_index(pool.ids.size())];
                if (images[id].rows >= need && images[id].cols >= need) {
                    src = &images[id];
                    source_id = id;
                    break;
                }
                ++skipped;
            }
            if (!src)
                throw std::runtime_error(
                    "insufficient corpus: no image of at least " +
                    std::to_string(need) + "x" + std::to_string(need) + " in the " +
                    std::string(si == 0 ? "train" : "val") + " pool (requested " +
                    std::to_string(count) + " patches)");

            CropResult crop = random_crop(*src, need, rec_rng);
            LabeledPatch lp = (label == 0)
                                  ? make_single(crop.patch, spec.qf2)
                                  : make_double(crop.patch, qf1, spec.qf2, shifted,
                                                B, rec_rng);
            PatchRecord rec;
            rec.offset = ds.blob_.size();
            rec.split = split;
            rec.label = lp.label;
            rec.qf1 = lp.qf1;
            rec.qf2 = spec.qf2;
            rec.r = lp.r;
            rec.c = lp.c;
            rec.source_id = source_id;
            ds.manifest_.records.push_back(rec);
            ds.blob_.insert(ds.blob_.end(), lp.patch.pix.begin(), lp.patch.pix.end());
            (void)patch_bytes;
        }
    }
    ds.manifest_.skipped_small_images = skipped;
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& manifest_path) {
    const std::string blob_path = manifest_path + ".blob";
    {
        std::ofstream blob(blob_path, std::ios::binary);
        if (!blob) throw std::runtime_error("cannot write " + blob_path);
        blob.write(reinterpret_cast<const char*>(ds.blob_.data()),
                   static_cast<std::streamsize>(ds.blob_.size()));
    }
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot write " + manifest_path);
    const auto& m = ds.manifest_;
    out << "djf-dataset v1\n";
    out << "B " << m.spec.B << "\n";
    out << "qf2 " << m.spec.qf2 << "\n";
    out << "alignment " << alignment_name(m.spec.alignment) << "\n";
    out << "qf1_set";
    for (int q : m.spec.effective_qf1_set()) out << " " << q;
    out << "\n";
    out << "train " << m.spec.train_count << "\n";
    out << "val " << m.spec.val_count << "\n";
    out << "seed " << m.spec.seed << "\n";
    out << "blob " << std::filesystem::path(blob_path).filename().string() << "\n";
    out << "records " << m.records.size() << "\n";
    for (const auto& r : m.records)
        out << (r.split == Split::Train ? "train" : "val") << " " << r.label << " "
            << r.qf1 << " " << r.qf2 << " " << r.r << " " << r.c << " "
            << r.source_id << " " << r.offset << "\n";
}

Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open " + manifest_path);
    std::string line;
    if (!std::getline(in, line) || line != "djf-dataset v1")
        throw std::runtime_error(manifest_path + ": not a djf-dataset v1 manifest");
    Dataset ds;
    auto& m = ds.manifest_;
    std::size_t n_records = 0;
    std::string blob_name;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "B") ss >> m.spec.B;
        else if (key == "qf2") ss >> m.spec.qf2;
        else if (key == "alignment") {
            std::string v;
            ss >> v;
            m.spec.alignment = alignment_from_name(v);
        } else if (key == "qf1_set") {
            int q;
            m.spec.qf1_set.clear();
            while (ss >> q) m.spec.qf1_set.push_back(q);
        } else if (key == "train") ss >> m.spec.train_count;
        else if (key == "val") ss >> m.spec.val_count;
        else if (key == "seed") ss >> m.spec.seed;
        else if (key == "blob") ss >> blob_name;
        else if (key == "records") {
            ss >> n_records;
            break;
        } else
            throw std::runtime_error(manifest_path + ": unknown manifest key '" + key + "'");
    }
    m.blob_name = blob_name;
    m.records.reserve(n_records);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string split;
        PatchRecord r;
        int label;
        ss >> split >> label >> r.qf1 >> r.qf2 >> r.r >> r.c >> r.source_id >> r.offset;
        if (!ss) throw std::runtime_error(manifest_path + ": malformed record line");
        r.split = (split == "train") ? Split::Train : Split::Val;
        r.label = label;
        m.records.push_back(r);
    }
    if (m.records.size() != n_records)
        throw std::runtime_error(manifest_path + ": record count mismatch");

    const std::string blob_path =
        (std::filesystem::path(manifest_path).parent_path() / blob_name).string();
    std::ifstream blob(blob_path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open " + blob_path);
    ds.blob_.assign(std::istreambuf_iterator<char>(blob),
                    std::istreambuf_iterator<char>());
    const std::size_t expect =
        m.records.size() * static_cast<std::size_t>(m.spec.B) * m.spec.B;
    if (ds.blob_.size() != expect)
        throw std::runtime_error(blob_path + ": blob size mismatch");
    return ds;
}

}  // namespace djf
