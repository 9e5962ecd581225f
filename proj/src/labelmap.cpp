#include "pedseg/labelmap.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "pedseg/error.hpp"

namespace pedseg {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

int parse_int(std::string_view field, std::size_t line_no) {
    field = trim(field);
    int value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw MappingError("mapping line " + std::to_string(line_no) + ": '" + std::string(field) +
                           "' is not an integer");
    return value;
}

}  // namespace

void ClassMapping::add(int source, int target, std::string_view name) {
    if (source < 0) throw RangeError("mapping source " + std::to_string(source) + " is negative");
    if (target < 0 || target > kNumClasses)
        throw RangeError("mapping target " + std::to_string(target) + " outside [0, 19]");
    if (!entries_.emplace(source, target).second)
        throw MappingError("duplicate mapping source " + std::to_string(source));
    if (target > 0 && !name.empty() && names_[target].empty()) names_[target] = std::string(name);
}

int ClassMapping::target_of(int source) const {
    const auto it = entries_.find(source);
    return it == entries_.end() ? -1 : it->second;
}

std::string ClassMapping::target_name(int target) const {
    if (target >= 1 && target <= kNumClasses && !names_[target].empty()) return names_[target];
    return "class_" + std::to_string(target);
}

bool ClassMapping::is_complete() const {
    std::array<bool, kNumClasses + 1> hit{};
    for (const auto& [source, target] : entries_) hit[target] = true;
    for (int t = 1; t <= kNumClasses; ++t) {
        if (!hit[t]) return false;
    }
    return true;
}

ClassMapping ClassMapping::identity() {
    ClassMapping m;
    for (int i = 0; i <= kNumClasses; ++i) m.add(i, i);
    return m;
}

ClassMapping parse_mapping(std::string_view text, UnmappedPolicy policy) {
    ClassMapping mapping;
    mapping.unmapped_policy = policy;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto eol = text.find('\n');
        std::string_view line = text.substr(0, eol);
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const auto c1 = line.find(',');
        if (c1 == std::string_view::npos)
            throw MappingError("mapping line " + std::to_string(line_no) + ": expected source,target[,name]");
        const auto rest = line.substr(c1 + 1);
        const auto c2 = rest.find(',');
        const int source = parse_int(line.substr(0, c1), line_no);
        const int target = parse_int(rest.substr(0, c2), line_no);
        const std::string_view name = c2 == std::string_view::npos ? std::string_view{} : trim(rest.substr(c2 + 1));
        try {
            mapping.add(source, target, name);
        } catch (const MappingError& e) {
            throw MappingError("mapping line " + std::to_string(line_no) + ": " + e.what());
        } catch (const RangeError& e) {
            throw RangeError("mapping line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return mapping;
}

ClassMapping load_mapping(const std::filesystem::path& path, UnmappedPolicy policy) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mapping file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_mapping(ss.str(), policy);
}

std::filesystem::path default_mapping_path() {
    return std::filesystem::path(PEDSEG_DATA_DIR) / "class_mapping_19.csv";
}

LabelVolume remap(const LabelVolume& volume, const ClassMapping& mapping, RemapReport* report) {
    // Dense lookup over the labels that can occur; -1 marks unmapped.
    const int max_label = volume.num_classes();
    std::vector<int> lut(static_cast<std::size_t>(max_label) + 1, -1);
    for (int l = 0; l <= max_label; ++l) lut[l] = mapping.target_of(l);
    if (lut[0] < 0) lut[0] = 0;

    const auto in = volume.labels();
    std::vector<std::uint16_t> out(in.size());
    std::vector<std::size_t> unmapped_count(lut.size(), 0);
    for (std::size_t n = 0; n < in.size(); ++n) {
        const int t = lut[in[n]];
        if (t < 0) {
            ++unmapped_count[in[n]];
            out[n] = 0;
        } else {
            out[n] = static_cast<std::uint16_t>(t);
        }
    }

    RemapReport local;
    for (std::size_t l = 0; l < unmapped_count.size(); ++l) {
        if (unmapped_count[l] == 0) continue;
        local.unmapped_voxels += unmapped_count[l];
        local.unmapped_labels.push_back(static_cast<int>(l));
    }
    if (!local.unmapped_labels.empty() && mapping.unmapped_policy == UnmappedPolicy::error) {
        std::string list;
        for (int l : local.unmapped_labels) list += (list.empty() ? "" : ",") + std::to_string(l);
        throw LabelDomainError("unmapped labels: " + list);
    }
    if (report) *report = std::move(local);
    return LabelVolume(volume.grid(), std::move(out), kNumClasses);
}

}  // namespace pedseg
