#pragma once

#include <cstdint>
#include <string>

#include "linkforge/corpus.hpp"

namespace linkforge::report {

// Renders a linking tree as one self-contained HTML page: trunk vignettes in
// course order, leaves nested beneath them with kind badges and 200-character
// excerpts. No external resources; byte-deterministic for fixed inputs. The
// page embeds the tool version, the seed, and an FNV-1a checksum of
// `tree_json_text`. Throws DataError when the tree references objects the
// bundle does not contain.
std::string render_tree_html(const corpus::CourseBundle& bundle, const corpus::LinkingTree& tree,
                             const std::string& tree_json_text, std::uint64_t seed);

}  // namespace linkforge::report
