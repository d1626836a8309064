#pragma once

#include <string>
#include <string_view>

namespace catnet {

/// Porter stemmer (the classic 1980 five-step suffix stripper). Lowercase
/// ASCII input expected; words shorter than three letters pass through.
std::string porter_stem(std::string_view word);

}  // namespace catnet
