#pragma once
// Many-to-one label remapping onto the 19 shared organ classes.
//
// Mapping file: plain text, one "source,target,name" row per line, '#'
// starts a comment. `name` labels the target class and may be left empty on
// rows that repeat a target. Background (0) maps to 0 unless listed.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pedseg/volume.hpp"

namespace pedseg {

inline constexpr int kNumClasses = 19;

enum class UnmappedPolicy { to_background, error };

class ClassMapping {
public:
    ClassMapping() = default;

    // Throws MappingError on a duplicate source, RangeError on a target
    // outside [0, 19] or a negative source.
    void add(int source, int target, std::string_view name = {});

    // Source -> target, or -1 when the source is not listed.
    int target_of(int source) const;

    const std::map<int, int>& entries() const { return entries_; }
    // Name of target class t in [1, 19]; "class_<t>" when never named.
    std::string target_name(int target) const;
    // True when every target in [1, 19] has at least one source.
    bool is_complete() const;

    UnmappedPolicy unmapped_policy = UnmappedPolicy::error;

    static ClassMapping identity();

private:
    std::map<int, int> entries_;
    std::array<std::string, kNumClasses + 1> names_;
};

ClassMapping parse_mapping(std::string_view text, UnmappedPolicy policy = UnmappedPolicy::error);
ClassMapping load_mapping(const std::filesystem::path& path, UnmappedPolicy policy = UnmappedPolicy::error);

// Path of the shipped default mapping (editable; see the file header).
std::filesystem::path default_mapping_path();

struct RemapReport {
    std::size_t unmapped_voxels = 0;
    std::vector<int> unmapped_labels;  // ascending
};

// Output num_classes is 19. Throws LabelDomainError listing the offending
// labels when a label is unmapped under UnmappedPolicy::error.
LabelVolume remap(const LabelVolume& volume, const ClassMapping& mapping, RemapReport* report = nullptr);

}  // namespace pedseg
